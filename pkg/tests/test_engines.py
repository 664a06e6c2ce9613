import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import concrete, small_instance
from oracles import two_state_model_text
from pepaflow.analysis import (
    ReducibleChain,
    StateSpaceExceeded,
    build_ctmc,
    dense_steady_state,
    fluid_system,
    integrate_fluid,
    simulate_ssa,
    solve_fluid,
    steady_state,
)
from pepaflow.analysis.ctmc import gauss_seidel, power_iteration

TWO_CYCLES = "P1 = (a, 1).P2; P2 = (b, 2).P1; Q1 = (c, 3).Q2; Q2 = (d, 4).Q1; system = P1[1] <> Q1[1];"


def two_state(a=1.0, b=3.0, n=1):
    return concrete(f"P1 = (a, {a}).P2; P2 = (b, {b}).P1; system = P1[{n}];")


# -- ctmc ---------------------------------------------------------------------


def test_product_space_of_independent_cycles():
    c = build_ctmc(concrete(TWO_CYCLES))
    assert c.size == 4
    q = c.generator.toarray()
    assert np.count_nonzero(q - np.diag(np.diag(q))) == 8
    assert len(c.src) == 8


def test_two_state_generator_rows():
    c = build_ctmc(two_state())
    q = c.generator.toarray()
    # states are count vectors (P1, P2) in lexicographic order: (0,1) then (1,0)
    assert c.states.tolist() == [[0, 1], [1, 0]]
    assert q.tolist() == [[-3.0, 3.0], [1.0, -1.0]]


@pytest.mark.parametrize("a, b, p1", [(1.0, 1.0, 0.5), (1.0, 3.0, 0.75)])
def test_two_state_balance(a, b, p1):
    sol = steady_state(build_ctmc(two_state(a, b)))
    assert sol.population("P1") == pytest.approx(p1, abs=1e-10)
    assert sol.throughput["a"] == pytest.approx(p1 * a, abs=1e-10)
    assert sol.throughput["a"] == pytest.approx(sol.throughput["b"], abs=1e-10)


def test_population_of_cycles_is_binomial_mean():
    sol = steady_state(build_ctmc(two_state(1.0, 3.0, n=6)))
    assert sol.population("P1") == pytest.approx(6 * 0.75, rel=1e-9)


def test_state_space_limit_is_enforced():
    with pytest.raises(StateSpaceExceeded):
        build_ctmc(two_state(n=50), max_states=10)


def test_absorbing_chain_is_reducible():
    m = concrete("P = (a, 1).Q; Q = (b, 1).Q; system = P[1];")
    with pytest.raises(ReducibleChain):
        steady_state(build_ctmc(m))


@pytest.mark.parametrize("arch_id", ["proposed-pdu", "fiveg-pdu"])
def test_iterative_solvers_agree_with_dense(arch_id):
    q = build_ctmc(small_instance(arch_id, 1).compiled).generator
    dense = dense_steady_state(q)
    for solver in (gauss_seidel, power_iteration):
        pi = solver(q, 1e-12)[0]
        assert np.abs(pi - dense).max() < 1e-9
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("arch_id", ["proposed-pdu", "fiveg-pdu", "proposed-mobility", "fiveg-mobility"])
def test_builtins_have_positive_completion_rate(arch_id):
    inst = small_instance(arch_id, 1)
    sol = steady_state(build_ctmc(inst.compiled))
    assert sol.action_throughput(inst.procedure.completion_action, inst.procedure.completion_group) > 0


# -- fluid --------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 20), st.floats(0.1, 20), st.integers(1, 10_000))
def test_isolated_cycle_fixed_point(r, s, n):
    sol = solve_fluid(two_state(r, s, n))
    assert sol.population("P1") == pytest.approx(n * s / (r + s), rel=1e-7)
    assert sol.population("P2") == pytest.approx(n * r / (r + s), rel=1e-7)
    assert sol.diagnostics["settled"]


def test_start_at_fixed_point_is_stationary():
    odes = fluid_system(two_state(2.0, 3.0, 10))
    x0 = np.array([6.0, 4.0])
    assert np.abs(odes.drift(x0)).max() < 1e-12
    sol = integrate_fluid(odes, x0)
    assert np.allclose(sol.populations, x0, atol=1e-9)
    assert sol.diagnostics["time"] == pytest.approx(0.0, abs=1e-6)


def test_fluid_min_law_bottleneck():
    # 100 clients, one server of rate 5: throughput capped at 5
    text = "C = (req, 1).(think, 1).C; S = (req, 5).S; system = C[100] <req> S[1];"
    sol = solve_fluid(concrete(text))
    assert sol.throughput["req"] == pytest.approx(5.0, rel=1e-7)


def test_fluid_pdu_saturation_value():
    inst = small_instance("proposed-pdu", 300)
    sol = solve_fluid(inst.compiled)
    assert sol.diagnostics["settled"]
    assert sol.throughput["rep_pduse"] == pytest.approx(300 / 113, rel=1e-6)


# -- ssa ----------------------------------------------------------------------


def test_ssa_replay_is_bitwise_identical():
    cm = small_instance("proposed-pdu", 2).compiled
    a = simulate_ssa(cm, 60, 10, seed=7, replications=3)
    b = simulate_ssa(cm, 60, 10, seed=7, replications=3)
    assert np.array_equal(a.populations, b.populations)
    assert a.throughput == b.throughput
    c = simulate_ssa(cm, 60, 10, seed=8, replications=3)
    assert not np.array_equal(a.populations, c.populations)


def test_ssa_two_state_estimate():
    sol = simulate_ssa(concrete(two_state_model_text(1.0, 2.0, 1)), 2000, 100, seed=3, replications=20)
    exact = 2.0 / 3.0
    assert abs(sol.throughput["think"] - exact) < 3 * sol.throughput_ci("think")
    assert sol.throughput_ci("think") < 0.05


def test_ssa_single_replication_has_infinite_halfwidth():
    sol = simulate_ssa(two_state(), 50, 0, seed=1, replications=1)
    assert sol.throughput_ci("a") == np.inf


@pytest.mark.parametrize("horizon, warmup, reps", [(10, 10, 2), (10, -1, 2), (10, 0, 0)])
def test_ssa_argument_checks(horizon, warmup, reps):
    with pytest.raises(ValueError):
        simulate_ssa(two_state(), horizon, warmup, replications=reps)
