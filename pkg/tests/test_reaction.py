import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracp.grid import build_grid
from fracp.reaction import (ReactionError, check_table, eval_F, eval_df, eval_f, make_reaction, truncate,
                            verify_hypotheses)


@pytest.fixture
def power():
    return make_reaction("power", 2.0, q=4.0)


def test_power_values(power):
    assert eval_f(power, 2.0) == 8.0
    assert eval_F(power, 2.0) == 4.0
    assert eval_f(truncate(power, "plus"), -3.0) == 0.0
    assert eval_f(truncate(power, "minus"), -3.0) == -27.0


def test_logpower_primitive():
    spec = make_reaction("logpower", 2.0, q=4.0)
    assert eval_F(spec, math.e) == pytest.approx(math.e ** 2 / 4, rel=1e-14)
    assert eval_F(spec, math.e) == pytest.approx(1.84726, abs=1e-5)


@pytest.mark.parametrize("kind", ["power", "logpower", "linear"])
def test_zero_at_origin(kind):
    spec = make_reaction(kind, 2.0, q=4.0)
    assert eval_F(spec, 0.0) == 0.0 and eval_f(spec, 0.0) == 0.0


def test_truncation_rules(power):
    plus, minus = truncate(power, "plus"), truncate(power, "minus")
    assert eval_f(plus, -1.0) == 0.0 and eval_f(plus, 1.0) == eval_f(power, 1.0)
    t = np.linspace(0, 5, 11)
    assert np.all(eval_F(minus, t) == 0.0)
    with pytest.raises(ReactionError):
        truncate(plus, "plus")


def test_bad_exponent():
    with pytest.raises(ReactionError):
        make_reaction("power", 2.0, q=12.0, p_star=10.0)
    with pytest.raises(ReactionError):
        make_reaction("power", 2.0, q=1.5)


@pytest.mark.parametrize("kind,p", [("power", 2.0), ("power", 1.5), ("logpower", 2.0), ("logpower", 3.0)])
def test_primitive_consistency(kind, p, rng):
    spec = make_reaction(kind, p, q=p + 1.5)
    for t in rng.uniform(-20, 20, 100):
        d = 1e-5 * max(1.0, abs(t))
        fd = (eval_F(spec, t + d) - eval_F(spec, t - d)) / (2 * d)
        assert fd == pytest.approx(eval_f(spec, t), rel=1e-5, abs=1e-9)


def test_derivative_consistency(rng):
    spec = make_reaction("logpower", 2.0, q=4.0)
    for t in rng.uniform(-5, 5, 50):
        d = 1e-6 * max(1.0, abs(t))
        fd = (eval_f(spec, t + d) - eval_f(spec, t - d)) / (2 * d)
        assert fd == pytest.approx(eval_df(spec, t), rel=1e-5, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(-1e3, 1e3).filter(lambda v: v != 0))
def test_truncation_identity(t):
    spec = make_reaction("power", 2.0, q=3.3)
    plus, minus = truncate(spec, "plus"), truncate(spec, "minus")
    assert eval_f(plus, t) + eval_f(minus, t) == pytest.approx(eval_f(spec, t), rel=1e-15)
    if t >= 0:
        assert eval_f(plus, t) * t >= 0


@settings(max_examples=100, deadline=None)
@given(t=st.floats(-1e3, 1e3))
def test_power_odd(t):
    spec = make_reaction("power", 2.0, q=4.0)
    assert eval_f(spec, -t) == -eval_f(spec, t)
    assert eval_F(spec, -t) == eval_F(spec, t)


def test_verify_power_passes():
    g = build_grid(0, 1, 16, 0.4, 2)
    rep = verify_hypotheses(make_reaction("power", 2.0, q=4.0, r=4.0, p_star=g.p_star), g)
    assert rep.all_pass, rep.to_dict()
    assert rep.beta == pytest.approx(0.5)
    assert rep.ar_condition == "holds"


def test_verify_linear_fails_h2():
    g = build_grid(0, 1, 16, 0.4, 2)
    rep = verify_hypotheses(make_reaction("linear", 2.0, p_star=g.p_star), g)
    assert rep.h2.status == "fail" and rep.h2.witnesses
    assert not rep.all_pass


def test_verify_logpower_passes_without_ar():
    g = build_grid(0, 1, 16, 0.4, 2)
    rep = verify_hypotheses(make_reaction("logpower", 2.0, q=4.0, p_star=g.p_star, s=0.4), g)
    assert rep.all_pass, rep.to_dict()
    assert rep.ar_condition == "violated"


def test_fail_verdicts_carry_witnesses():
    g = build_grid(0, 1, 16, 0.4, 2)
    rep = verify_hypotheses(make_reaction("linear", 2.0, p_star=g.p_star), g)
    for v in rep.verdicts.values():
        if v.status == "fail":
            assert v.witnesses


def test_custom_table(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("t,f\n-2,-4\n0,0\n1,0.5\n3,4.5\n")
    spec = make_reaction("custom-table", 2.0, table_path=path)
    assert eval_f(spec, 0.5) == pytest.approx(0.25)
    # trapezoid primitive of the piecewise linear table
    assert eval_F(spec, 1.0) == pytest.approx(0.25)
    assert eval_F(spec, 3.0) == pytest.approx(0.25 + 5.0)
    assert eval_F(spec, -2.0) == pytest.approx(4.0)


def test_table_needs_origin():
    with pytest.raises(ReactionError):
        check_table((-1.0, 1.0), (-1.0, 1.0))
