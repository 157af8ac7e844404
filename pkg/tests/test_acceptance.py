"""Acceptance criteria 1-10, each at its stated tolerance.

A summary with one PASS/FAIL line per criterion is printed at the end of the run.
"""

import json

import numpy as np
import pytest
from scipy.linalg import eigh

from conftest import record, setup
from fracp.audit import brute_force_inventory, classify_sign, morse_index
from fracp.cli import main
from fracp.eigen import dense_spectrum_p2, principal_eigenpair
from fracp.energy import apply_operator, grad_phi, phi, residual, seminorm_p
from fracp.solver import ring_radius, ring_states

TOL = 1e-8


def load_state(out, name):
    return np.loadtxt(out / f"{name}.csv", delimiter=",", skiprows=1)[:, 1]


def l2(g, u):
    return np.sqrt(g.h * np.sum(u ** 2))


def test_criterion_1_gradient_consistency(rng):
    worst = {}
    for p, rtol in ((1.5, 1e-4), (2.0, 1e-6), (3.0, 1e-6)):
        g, k, spec = setup(n=16, s=0.3, p=p, q=p + 1.5)
        errs = []
        for _ in range(100 if p == 2.0 else 34):
            u = rng.standard_normal(g.n)
            gr = grad_phi(g, k, spec, u)
            fd = np.empty(g.n)
            for i in range(g.n):
                d = 1e-6 * max(1.0, abs(u[i]))
                e = np.zeros(g.n)
                e[i] = d
                fd[i] = (phi(g, k, spec, u + e) - phi(g, k, spec, u - e)) / (2 * d)
            errs.append(np.linalg.norm(fd - gr) / np.linalg.norm(gr))
        worst[p] = (max(errs), rtol)
    ok = all(e <= t for e, t in worst.values())
    record(1, ok, "max rel err " + ", ".join(f"p={p}: {e:.1e} (tol {t:g})" for p, (e, t) in worst.items()))
    assert ok


def test_criterion_2_cone_inequality(rng):
    worst = -np.inf
    for p in (1.5, 2.0, 3.0):
        g, k, _ = setup(n=64, s=0.3, p=p, q=p + 1)
        for _ in range(200 // 3 + 1):
            u = rng.standard_normal(g.n) * rng.uniform(0.1, 10)
            Au = apply_operator(g, k, u)
            up, um = np.maximum(u, 0), np.maximum(-u, 0)
            scale = max(1.0, seminorm_p(g, k, u))
            worst = max(worst, (seminorm_p(g, k, up) - Au @ up) / scale,
                        (seminorm_p(g, k, um) + Au @ um) / scale)
    ok = worst <= 1e-12
    record(2, ok, f"max scaled slack {worst:.2e} over 201 states (must be <= 1e-12)")
    assert ok


def test_criterion_3_eigen_oracle():
    rows, ok = [], True
    for n in (64, 128, 256):
        for s in (0.25, 0.5, 0.75):
            g, k, _ = setup(n=n, s=s)
            pair = principal_eigenpair(g, k)
            lam = eigh(k.form2, np.eye(n) * g.h, eigvals_only=True, subset_by_index=[0, 1])
            rel = abs(pair.lambda1 - lam[0]) / lam[0]
            cls, hopf = classify_sign(pair.e1, k.ds)
            good = rel <= 1e-8 and cls == "positive" and hopf > 0 and lam[1] - lam[0] > 0
            ok &= good
            rows.append(rel)
    record(3, ok, f"9 (n, s) cases, max rel diff {max(rows):.1e}; e1 positive, gap > 0")
    assert ok


def test_criterion_4_ring(rng):
    g, k, spec = setup(n=256, s=0.5)
    lam = principal_eigenpair(g, k).lambda1
    rho = ring_radius(g, k, spec, lam)
    states = ring_states(g, k, 500, rng) * rng.uniform(0, 1, (500, 1)) * rho
    vals = np.array([phi(g, k, spec, u) for u in states])
    ratio = np.max(np.abs(states) / k.ds)
    bad = int(np.sum(vals < 0))
    ok = bad == 0 and ratio <= rho * (1 + 1e-12)
    record(4, ok, f"rho={rho:.4g}, {bad} violations in 500 states, min Phi {vals.min():.3e}")
    assert ok


def test_criterion_5_superlinear_ray():
    g, k, spec = setup(n=256, s=0.5)
    e1 = principal_eigenpair(g, k).e1
    vals = np.array([phi(g, k, spec, 2.0 ** j * e1) for j in range(41)])
    k0 = next(j for j in range(41) if np.all(vals[j:] < 0) and np.all(np.diff(vals[j:]) < 0))
    ok = k0 <= 20
    record(5, ok, f"Phi(2^k e1) negative and decreasing from k0={k0}")
    assert ok


def test_criterion_6_constant_sign(reference_run):
    out, rep = reference_run["out"], reference_run["report"]
    g, k, spec = setup(n=256, s=0.5)
    up, um = load_state(out, "u_plus"), load_state(out, "u_minus")
    cls, hopf = classify_sign(up, k.ds)
    cls_m, _ = classify_sign(um, k.ds)
    res = max(residual(g, k, spec, up), residual(g, k, spec, um))
    sym = l2(g, up + um) / l2(g, up)
    wall = sum(rep["wall_times"].values())
    ok = (cls == "positive" and hopf > 0 and phi(g, k, spec, up) > 0 and res <= 2e-8
          and cls_m == "negative" and sym <= 1e-5 and wall <= 120)
    record(6, ok, f"u+ {cls}, hopf {hopf:.3g}, Phi {phi(g, k, spec, up):.6g}, residual {res:.1e}, "
                  f"|u- + u+|/|u+| = {sym:.1e}, solve {wall:.1f}s")
    assert ok


def test_criterion_7_third_solution(reference_run):
    out, rep = reference_run["out"], reference_run["report"]
    g, k, spec = setup(n=256, s=0.5)
    assert reference_run["code"] == 0
    up, um, ut = (load_state(out, n) for n in ("u_plus", "u_minus", "u_third"))
    scale = l2(g, up)
    dist = min(l2(g, ut) / scale, l2(g, ut - up) / scale, l2(g, ut - um) / scale)
    res = residual(g, k, spec, ut)
    third = next(cp for cp in rep["critical_points"] if cp["label"] == "u_third")
    level_ok = True
    if third["level"] is not None:
        level_ok = third["level"] >= max(phi(g, k, spec, up), phi(g, k, spec, um)) - 1e-8
    ok = reference_run["code"] == 0 and dist > 1e-2 and res <= 1e-8 and level_ok
    record(7, ok, f"exit {reference_run['code']}, min rel distance {dist:.3g}, residual {res:.1e}, "
                  f"{third['sign_class']}, Phi {third['value']:.6g}")
    assert ok


def test_criterion_8_morse_indices(reference_run):
    out, rep = reference_run["out"], reference_run["report"]
    g, k, spec = setup(n=256, s=0.5)
    got = [morse_index(g, k, spec, u) for u in (np.zeros(g.n), load_state(out, "u_plus"),
                                                load_state(out, "u_minus"))]
    discrepancies = [n for n in rep["audit"]["notes"] if "differs" in n]
    ok = got == [(0, False), (1, False), (1, False)] and not discrepancies
    record(8, ok, f"(index, degenerate) at 0, u+, u-: {got}; flagged discrepancies: {len(discrepancies)}")
    assert ok


def test_criterion_9_poincare_hopf_echo(reference_run, tmp_path):
    out, cfg = reference_run["out"], reference_run["config"]
    code_full = main(["audit", "--config", str(cfg), "--inventory", str(out), "--out", str(tmp_path / "full")])
    full = json.loads((tmp_path / "full" / "audit.json").read_text())["audit"]
    partial = tmp_path / "partial"
    partial.mkdir()
    for name in ("u_plus.csv", "u_minus.csv"):
        (partial / name).write_bytes((out / name).read_bytes())
    code_part = main(["audit", "--config", str(cfg), "--inventory", str(partial), "--out", str(partial)])
    part = json.loads((partial / "audit.json").read_text())["audit"]
    echo_ok = code_part == 5 and part["signed_sum"] == -1 and code_full == 0 and full["signed_sum"] == 0
    record(9, echo_ok, f"audit {{0,u+,u-}}: exit {code_part}, sum {part['signed_sum']}; "
                       f"with u~: exit {code_full}, sum {full['signed_sum']}")
    assert echo_ok


def test_criterion_9_brute_force_inventory():
    g, k, spec = setup(n=4, s=0.5)
    inv = brute_force_inventory(g, k, spec, starts=10_000, seed=2024)
    idx = [morse_index(g, k, spec, u) for u in inv]
    signed = sum((-1) ** i for i, _ in idx)
    degenerate = any(d for _, d in idx)
    ok = signed == 0 and not degenerate
    record(9, ok, f"n=4 brute force: {len(inv)} critical points, signed index sum {signed:+d} (required 0)")
    assert ok


def test_criterion_10_determinism(reference_run, tmp_path):
    first, cfg = reference_run["out"], reference_run["config"]
    second = tmp_path / "again"
    assert main(["solve", "--config", str(cfg), "--out", str(second), "--threads", "1"]) == reference_run["code"]
    names = sorted(p.name for p in first.glob("*.csv"))
    same_csv = names == sorted(p.name for p in second.glob("*.csv")) and all(
        (first / n).read_bytes() == (second / n).read_bytes() for n in names)
    a = json.loads((first / "report.json").read_text())
    b = json.loads((second / "report.json").read_text())
    a.pop("wall_times")
    b.pop("wall_times")
    ok = same_csv and a == b
    record(10, ok, f"{len(names)} CSV files byte-identical: {same_csv}; report.json equal: {a == b}")
    assert ok
