from types import SimpleNamespace

import numpy as np
import pytest

from conftest import setup
from fracp.audit import (INCOMPLETE_FLAG, brute_force_inventory, classify_sign, hessian_p2, morse_index,
                         poincare_hopf_audit, weak_residual_test)
from fracp.eigen import dense_spectrum_p2, principal_eigenpair
from fracp.reaction import make_reaction
from fracp.solver import make_critical_point, solve_constant_sign

TOL = 1e-8


@pytest.fixture(scope="module")
def small():
    g, k, spec = setup(n=64)
    pair = principal_eigenpair(g, k)
    up, um = solve_constant_sign(g, k, spec, tol=TOL, e1=pair.e1)
    return g, k, spec, pair, up, um


def fake(index, degenerate=False, sign="sign-changing"):
    return SimpleNamespace(morse_index=index, degenerate_flag=degenerate, sign_class=sign, value=1.0,
                           residual=0.0, label="")


def test_classify_sign(small):
    g, k, _, pair, _, _ = small
    assert classify_sign(np.zeros(g.n), k.ds) == ("zero", 0.0)
    cls, ratio = classify_sign(pair.e1, k.ds)
    assert cls == "positive" and ratio > 0
    flipped = pair.e1.copy()
    flipped[10] *= -1
    assert classify_sign(flipped, k.ds)[0] == "sign-changing"
    assert classify_sign(-pair.e1, k.ds) == ("negative", pytest.approx(ratio))


def test_sign_threshold_ignores_roundoff(small):
    g, k, _, pair, _, _ = small
    u = pair.e1.copy()
    u[0] = -1e-12 * u.max()
    assert classify_sign(u, k.ds)[0] == "positive"


def test_hessian_at_origin(small):
    g, k, spec, pair, _, _ = small
    H = hessian_p2(g, k, spec, np.zeros(g.n))
    assert np.array_equal(H, H.T)
    np.testing.assert_allclose(H, k.form2, rtol=0, atol=1e-14 * np.abs(k.form2).max())
    # Phi(u) = u^T B u / 2 near 0, so the Hessian is B and its bottom eigenvalue is lambda1 h
    smallest = np.linalg.eigvalsh(H)[0]
    assert smallest == pytest.approx(dense_spectrum_p2(g, k, 1)[0] * g.h, rel=1e-10)
    assert smallest == pytest.approx(pair.lambda1 * g.h, rel=1e-8)


def test_p2_gate():
    g, k, spec = setup(n=16, p=1.5, q=2.5)
    with pytest.raises(ValueError):
        hessian_p2(g, k, spec, np.zeros(g.n))
    with pytest.raises(ValueError):
        morse_index(g, k, spec, np.zeros(g.n))


def test_indices_of_known_points(small):
    g, k, spec, _, up, um = small
    assert morse_index(g, k, spec, np.zeros(g.n)) == (0, False)
    assert morse_index(g, k, spec, up) == (1, False)
    assert morse_index(g, k, spec, um) == (1, False)


def test_audit_three_points_flags_incomplete():
    rep = poincare_hopf_audit([fake(0, sign="zero"), fake(1, sign="positive"), fake(1, sign="negative")])
    assert rep.signed_sum == -1 and rep.ph_verdict == "fail" and INCOMPLETE_FLAG in rep.notes


def test_audit_four_points_passes():
    rep = poincare_hopf_audit([fake(0, sign="zero"), fake(1), fake(1), fake(2)])
    assert rep.signed_sum == 0 and rep.passed
    assert rep.signed_sum == sum((-1) ** row.morse_index for row in rep.index_table)


def test_audit_empty_and_degenerate():
    assert poincare_hopf_audit([]).ph_verdict.startswith("inconclusive")
    assert poincare_hopf_audit([fake(0), fake(1, degenerate=True)]).ph_verdict.startswith("inconclusive")


def test_audit_flags_unexpected_index():
    rep = poincare_hopf_audit([fake(0, sign="zero"), fake(2, sign="positive"), fake(1, sign="negative")])
    assert any("differs from predicted" in note for note in rep.notes)


def test_audit_deterministic_under_tiny_perturbation(small):
    g, k, spec, _, up, um = small

    def table(shift):
        inv = [make_critical_point(g, k, spec, u + shift, 1e-6) for u in (np.zeros(g.n), up.state, um.state)]
        rep = poincare_hopf_audit(inv, g, k, spec)
        return [(r.morse_index, r.degenerate) for r in rep.index_table]

    assert table(0.0) == table(1e-12)


def test_weak_residual(small, rng):
    g, k, spec, pair, up, _ = small
    assert weak_residual_test(g, k, spec, up.state) <= 10 * TOL
    lin = make_reaction("linear", 2.0, c0=pair.lambda1)
    assert weak_residual_test(g, k, lin, pair.e1) <= 10 * 1e-10
    assert weak_residual_test(g, k, spec, rng.standard_normal(g.n)) > 1e-3


def test_weak_residual_bounded_by_residual(small, rng):
    g, k, spec, _, _, _ = small
    u = rng.standard_normal(g.n)
    assert weak_residual_test(g, k, spec, u, trial_count=64) <= make_critical_point(g, k, spec, u, 1.0).residual


@pytest.mark.parametrize("n", [2, 3])
def test_brute_force_count_matches_degree_at_infinity(n):
    # Phi -> -infinity in every direction, so grad Phi has degree (-1)^n on a large sphere
    g, k, spec = setup(n=n)
    inv = brute_force_inventory(g, k, spec, starts=1500, seed=1)
    signed = sum((-1) ** morse_index(g, k, spec, u)[0] for u in inv)
    assert signed == (-1) ** n
