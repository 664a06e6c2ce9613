"""Explicit state-space generation and steady-state solution."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from ..semantics import CompiledModel
from ..syntax import ConcreteModel
from .solution import AnalysisError, AnalysisSolution, NonConvergence

log = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 5_000_000


class StateSpaceExceeded(AnalysisError):
    def __init__(self, max_states: int):
        self.max_states = max_states
        super().__init__(f"more than {max_states} reachable states; use the fluid or ssa engine")


class ReducibleChain(AnalysisError):
    pass


@dataclass
class CTMC:
    """Population CTMC.

    ``states`` rows are count vectors in lexicographic order.  The COO
    triplets ``src``/``dst``/``rate``/``label`` (plus the transition
    class ``klass``) keep one entry per enabled
    transition class (self-loops included); ``generator`` merges them and
    drops self-loops.  ``action_rates[a][s]`` is the total rate of
    ``a``-labelled transitions leaving state ``s``.
    """

    compiled: CompiledModel
    states: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    label: np.ndarray
    klass: np.ndarray
    generator: sp.csr_matrix
    action_rates: dict[str, np.ndarray]

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def action_labels(self) -> list[str]:
        return [self.compiled.actions[i] for i in self.label]

    def index(self, state) -> int:
        key = tuple(int(v) for v in state)
        lo, hi = 0, len(self.states)
        while lo < hi:
            mid = (lo + hi) // 2
            if tuple(self.states[mid]) < key:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(self.states) or tuple(self.states[lo]) != key:
            raise KeyError(f"state {key} is not reachable")
        return lo


def _compiled(model) -> CompiledModel:
    return model if isinstance(model, CompiledModel) else CompiledModel(model)


def build_ctmc(model: ConcreteModel | CompiledModel, max_states: int = DEFAULT_MAX_STATES) -> CTMC:
    """Breadth-first generation of the reachable population states."""
    cm = _compiled(model)
    action_index = {a: i for i, a in enumerate(cm.actions)}
    class_action = [action_index[c.action] for c in cm.classes]
    moves = [c.moves for c in cm.classes]
    rates_fn = cm.rates

    start = cm.initial_state()
    index = {start: 0}
    order = [start]
    queue = deque([start])
    src, dst, rate, label, klass = [], [], [], [], []
    while queue:
        x = queue.popleft()
        i = index[x]
        for c, r in enumerate(rates_fn(x)):
            if r <= 0.0:
                continue
            y = list(x)
            for s, d in moves[c]:
                y[s] -= 1
                y[d] += 1
            y = tuple(y)
            j = index.get(y)
            if j is None:
                if len(order) >= max_states:
                    raise StateSpaceExceeded(max_states)
                j = index[y] = len(order)
                order.append(y)
                queue.append(y)
            src.append(i)
            dst.append(j)
            rate.append(r)
            label.append(class_action[c])
            klass.append(c)

    n = len(order)
    perm = sorted(range(n), key=order.__getitem__)
    new_index = np.empty(n, dtype=np.int64)
    new_index[perm] = np.arange(n)
    states = np.array([order[p] for p in perm], dtype=np.int64).reshape(n, cm.n_vars)
    src = new_index[np.array(src, dtype=np.int64)]
    dst = new_index[np.array(dst, dtype=np.int64)]
    rate = np.array(rate, dtype=float)
    label = np.array(label, dtype=np.int64)
    klass = np.array(klass, dtype=np.int64)

    off = src != dst
    q = sp.coo_matrix((rate[off], (src[off], dst[off])), shape=(n, n)).tocsr()
    q.sum_duplicates()
    out = np.asarray(q.sum(axis=1)).ravel()
    generator = (q - sp.diags(out)).tocsr()

    action_rates = {}
    for a, k in action_index.items():
        mask = label == k
        action_rates[a] = np.bincount(src[mask], weights=rate[mask], minlength=n)
    log.debug("built CTMC with %d states and %d transitions", n, len(rate))
    return CTMC(cm, states, src, dst, rate, label, klass, generator, action_rates)


def dense_steady_state(generator) -> np.ndarray:
    """Direct solve of ``pi Q = 0, sum(pi) = 1`` on a dense copy of ``Q``."""
    q = generator.toarray() if sp.issparse(generator) else np.asarray(generator, dtype=float)
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(len(a))
    b[-1] = 1.0
    return np.linalg.solve(a, b)


def gauss_seidel(generator: sp.spmatrix, tol: float = 1e-10, max_iter: int = 100_000, omega: float = 0.7, pi0=None):
    """Under-relaxed Gauss-Seidel on ``Q^T pi = 0`` with renormalisation.

    Each iterate is ``(1 - omega) * pi + omega * GS(pi)``; plain sweeps
    (``omega=1``) can cycle forever on the nearly periodic chains that
    request/response models produce.  Returns ``(pi, iterations, residual)``
    with residual the infinity norm of ``pi Q``.
    """
    a = sp.csr_matrix(generator.T)
    n = a.shape[0]
    lower = sp.tril(a, format="csc")
    upper = sp.triu(a, k=1, format="csr")
    lu = splu(lower, permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    pi = np.full(n, 1.0 / n) if pi0 is None else np.asarray(pi0, dtype=float).copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        sweep = np.abs(lu.solve(-(upper @ pi)))
        sweep /= sweep.sum()
        pi = (1.0 - omega) * pi + omega * sweep
        residual = float(np.abs(a @ pi).max())
        if residual < tol:
            return pi, it, residual
    raise NonConvergence(f"Gauss-Seidel did not reach residual {tol} in {max_iter} sweeps (last {residual:.3g})")


def power_iteration(generator: sp.spmatrix, tol: float = 1e-10, max_iter: int = 2_000_000, pi0=None):
    """Power method on the uniformised chain ``P = I + Q / (1.02 * max exit rate)``."""
    n = generator.shape[0]
    lam = 1.02 * float(np.abs(generator.diagonal()).max())
    a = sp.csr_matrix(generator.T)
    p = (sp.identity(n, format="csr") + a / lam).tocsr()
    pi = np.full(n, 1.0 / n) if pi0 is None else np.asarray(pi0, dtype=float).copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        pi = p @ pi
        if it % 20 == 0:
            pi /= pi.sum()
            residual = float(np.abs(a @ pi).max())
            if residual < tol:
                return pi, it, residual
    raise NonConvergence(f"power iteration did not reach residual {tol} in {max_iter} steps (last {residual:.3g})")


def is_irreducible(ctmc: CTMC) -> bool:
    if ctmc.size == 1:
        return True
    ncomp, _ = connected_components(ctmc.generator, directed=True, connection="strong")
    return ncomp == 1


def solution_from_distribution(ctmc: CTMC, pi: np.ndarray, method: str = "ctmc", **diagnostics) -> AnalysisSolution:
    cm = ctmc.compiled
    populations = pi @ ctmc.states
    class_tp = np.bincount(ctmc.klass, weights=pi[ctmc.src] * ctmc.rate, minlength=len(cm.classes))
    throughput, by_group = cm.throughput_tables(class_tp)
    diag = {"states": ctmc.size, "transitions": len(ctmc.rate), "pi_sum": float(pi.sum()), **diagnostics}
    return AnalysisSolution(method, list(cm.states), populations, throughput, diag, group_throughput=by_group)


def steady_state(ctmc: CTMC, tol: float = 1e-10, method: str = "auto", max_iter: int = 100_000) -> AnalysisSolution:
    """Stationary distribution of an irreducible CTMC.

    ``method`` is ``gauss-seidel``, ``power``, ``dense`` or ``auto``
    (Gauss-Seidel, then power iteration, then a dense solve for chains of
    at most 5000 states).
    """
    if not is_irreducible(ctmc):
        raise ReducibleChain("CTMC is not irreducible on its reachable set")
    q = ctmc.generator
    if ctmc.size == 1:
        pi, iterations, solver = np.ones(1), 0, "trivial"
    elif method == "dense":
        pi, iterations, solver = dense_steady_state(q), 0, "dense"
    elif method == "power":
        pi, iterations, _ = power_iteration(q, tol)
        solver = "power"
    elif method in ("auto", "gauss-seidel"):
        try:
            pi, iterations, _ = gauss_seidel(q, tol, max_iter)
            solver = "gauss-seidel"
        except NonConvergence:
            if method != "auto":
                raise
            log.warning("Gauss-Seidel stalled; trying power iteration")
            try:
                pi, iterations, _ = power_iteration(q, tol)
                solver = "power"
            except NonConvergence:
                if ctmc.size > 5000:
                    raise
                pi, iterations, solver = dense_steady_state(q), 0, "dense"
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    residual = float(np.abs(q.T @ pi).max())
    return solution_from_distribution(ctmc, pi, "ctmc", solver=solver, iterations=iterations, residual=residual)
