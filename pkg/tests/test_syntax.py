import pytest

from pepaflow.parser import parse_model
from pepaflow.syntax import (
    BindingError,
    Constant,
    Cooperation,
    Population,
    action_alphabet,
    bind_parameters,
    free_names,
    rename_population,
    validate_model,
)


def kinds(text):
    return sorted(v.kind for v in validate_model(parse_model(text)))


def test_clean_model_has_empty_report():
    report = validate_model(parse_model("P = (a, 1).Q; Q = (b, 2).P; system = P[3];"))
    assert report.ok and len(report) == 0 and bool(report)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("P = (a, 1).Q; system = P[1];", ["undefined"]),
        ("P = (a, 1).P; system = R[1];", ["undefined"]),
        ("P = Q; Q = P; system = P[1];", ["unguarded", "unguarded"]),
        ("P = P + (a, 1).P; system = P[1];", ["unguarded"]),
        ("P = (a, 0).P; system = P[1];", ["rate"]),
        ("P = (a, 1).P; Q = (b, 1).Q; system = P[1] <b> Q[1];", ["cooperation"]),
        ("P = (a, infty).P; Q = (a, infty).Q; system = P[1] <a> Q[1];", ["passive"]),
    ],
)
def test_violations_are_reported_as_data(text, expected):
    assert kinds(text) == expected


def test_passive_against_active_is_fine():
    assert kinds("P = (a, infty).P; Q = (a, 2).Q; system = P[1] <a> Q[1];") == []


def test_passive_hidden_by_unsynchronised_interleaving_is_flagged_higher_up():
    text = "P = (a, infty).P; Q = (a, infty).Q; R = (a, infty).R; system = (P[1] <> Q[1]) <a> R[1];"
    assert kinds(text) == ["passive"]


def test_alphabet_follows_constants():
    m = parse_model("P = (a, 1).Q; Q = (b, 1).P + (c, 1).Q; system = P[1];")
    assert action_alphabet(Constant("P"), m) == {"a", "b", "c"}


def test_free_names_and_binding():
    m = parse_model("mu = 3; P = (a, lam).(b, mu).P; system = P[n*k];")
    assert free_names(m) == ({"lam"}, {"n", "k"})
    c = bind_parameters(m, {"lam": 2.0, "n": 3, "k": 2.0})
    assert c.populations() == [("P", 6)]
    assert c.definitions["P"].rate.value == 2.0
    assert c.definitions["P"].continuation.rate.value == 3.0


@pytest.mark.parametrize("values, message", [({"n": 1}, "unbound rate lam"), ({"lam": 1}, "unbound count n"),
                                             ({"lam": -1, "n": 1}, "positive"), ({"lam": 1, "n": 0}, ">= 1")])
def test_binding_errors(values, message):
    m = parse_model("P = (a, lam).P; system = P[n];")
    with pytest.raises(BindingError, match=message):
        bind_parameters(m, values)


def test_rename_population_splits_leaf():
    m = parse_model("U = (a, 1).U; S = (a, 1).S; system = U[5] <a> S[1];")
    out = rename_population(m.system, "U", [1, 4])
    assert out.left == Cooperation(
        Population(Constant("U"), out.left.left.count), frozenset(), Population(Constant("U"), out.left.right.count)
    )
    assert [p.count.factors for p in (out.left.left, out.left.right)] == [(1,), (4,)]
    assert rename_population(m.system, "U", [0, 5]).left.count.factors == (5,)
