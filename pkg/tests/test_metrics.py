import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import concrete
from oracles import two_state_model_text
from pepaflow.analysis import AnalysisSolution, build_ctmc, steady_state
from pepaflow.metrics import (
    MetricError,
    MetricSeries,
    MetricPoint,
    ProcedureSpec,
    ProcessorGroup,
    measure,
    procedure_rate,
    productivity,
    response_factor,
    response_time,
    saturation_point,
    scalability,
    system_utilization,
    utilization,
)
from pepaflow.semantics import LocalState

UE = ProcedureSpec("complete", "Think", {"Think"})


@pytest.fixture(scope="module")
def ue_cycle():
    return steady_state(build_ctmc(concrete(two_state_model_text(1.0, 2.0, 1))))


def test_procedure_rate_two_state(ue_cycle):
    assert procedure_rate(ue_cycle, UE) == pytest.approx(2 / 3, abs=1e-10)


def test_little_law_two_state(ue_cycle):
    assert response_time(ue_cycle, UE) == pytest.approx(0.5, abs=1e-10)


def test_processor_utilization_from_balance():
    sol = steady_state(build_ctmc(concrete("Idle = (start, 1).Busy; Busy = (done, 3).Idle; system = Idle[1];")))
    group = ProcessorGroup("P", "Idle", {"Busy"}, 1)
    assert utilization(sol, group) == pytest.approx(0.25, abs=1e-10)


def test_never_busy_processor_has_zero_utilization():
    states = [LocalState("P", "P", 0), LocalState("P", "Pb", 1)]
    sol = AnalysisSolution("fluid", states, np.array([2.0, 0.0]), {})
    assert utilization(sol, ProcessorGroup("P", "P", {"Pb"}, 2)) == 0.0
    with pytest.raises(MetricError, match="no local state Px"):
        utilization(sol, ProcessorGroup("P", "P", {"Px"}, 2))


def test_zero_throughput_response_time_is_an_error():
    sol = steady_state(build_ctmc(concrete("U = (go, 1).U; V = (complete, 1).V; system = U[1] <> V[1];")))
    spec = ProcedureSpec("nothing", "U", {"U"})
    with pytest.raises(KeyError):
        response_time(sol, spec)
    sol.throughput["complete"] = 0.0
    with pytest.raises(MetricError, match="zero throughput"):
        response_time(sol, ProcedureSpec("complete", "U", {"U"}))


@pytest.mark.parametrize("t, U, T, target, C", [(10, 1, 2.0, 2.0, 5.0), (100, 0.5, 0.0, 1.0, 200.0)])
def test_productivity_examples(t, U, T, target, C):
    assert productivity(t, U, T, target) == pytest.approx(C)


def test_response_factor_at_target():
    assert response_factor(3.0, 3.0) == 0.5


def test_scalability_examples():
    assert scalability(4.0, 4.0) == 1.0
    assert scalability(1.5, 3.0) == 2.0
    with pytest.raises(MetricError):
        scalability(0.0, 1.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_productivity_linear_in_throughput(t, k, U, T, target):
    assert productivity(k * t, U, T, target) == pytest.approx(k * productivity(t, U, T, target), rel=1e-12)


@given(st.floats(0, 1e4), st.floats(1e-6, 1e4))
def test_response_factor_range(T, target):
    r = response_factor(T, target)
    assert 0 < r <= 1


def test_system_utilization_is_capacity_weighted():
    groups = [ProcessorGroup("a", "A", {"x"}, 1), ProcessorGroup("b", "B", {"x"}, 3)]
    assert system_utilization([1.0, 0.2], groups) == pytest.approx((1.0 + 0.6) / 4)


def test_measure_bundles_point(ue_cycle):
    p = measure(ue_cycle, 1, UE, [ProcessorGroup("P", "Think", {"Busy"}, 1)], target_T=0.5)
    assert p.throughput == pytest.approx(2 / 3)
    assert p.response_time == pytest.approx(0.5)
    assert p.utilization["P"] == pytest.approx(1 / 3)
    assert p.productivity == pytest.approx((2 / 3) * 0.5 / (1 / 3))


def test_saturation_of_kinked_series():
    n = np.arange(0, 40_001, 1000.0)
    t = np.minimum(n, 10_000) * 0.01
    sat = saturation_point((n, t))
    assert sat.reached and sat.n == 10_000
    assert str(sat) == "10000"


def test_linear_series_is_not_saturated():
    n = np.arange(1, 50.0)
    sat = saturation_point((n, 3 * n))
    assert not sat.reached and str(sat) == "not reached"


def test_saturation_accepts_metric_series():
    s = MetricSeries()
    for n in range(1, 8):
        s.append(MetricPoint(n, min(n, 4), math.nan, {}, 0.5))
    assert saturation_point(s).n == 4


@pytest.mark.parametrize("n, t", [([1, 2], [1, 2]), ([1, 1, 2], [1, 2, 3]), ([1, 2, 3], [2, 2, 2])])
def test_saturation_input_checks(n, t):
    with pytest.raises(MetricError):
        saturation_point((n, t))


@given(st.integers(3, 30), st.floats(0.1, 10), st.data())
def test_saturation_of_clipped_linear(k, slope, data):
    n = np.arange(1, 41, dtype=float)
    t = slope * np.minimum(n, k)
    assert saturation_point((n, t)).n == k
