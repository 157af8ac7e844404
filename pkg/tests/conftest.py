import json
from pathlib import Path

import numpy as np
import pytest

from fracp.cli import main
from fracp.grid import build_grid, kernel_weights
from fracp.reaction import make_reaction

REFERENCE = {
    "domain": {"a": 0.0, "b": 1.0, "n": 256},
    "exponents": {"p": 2.0, "s": 0.5},
    "reaction": {"kind": "power", "q": 4.0},
    "solver": {"tol": 1e-8, "seed": 20240531},
    "outputs": {"dir": "out", "emit_traces": True},
}


def write_config(path: Path, **groups) -> Path:
    cfg = json.loads(json.dumps(REFERENCE))
    for name, values in groups.items():
        cfg[name].update(values)
    path.write_text(json.dumps(cfg, indent=2))
    return path


def setup(n=32, s=0.5, p=2.0, q=4.0, kind="power", a=0.0, b=1.0):
    g = build_grid(a, b, n, s, p, strict=False)
    k = kernel_weights(g)
    if kind in ("power", "logpower") and not q < g.p_star:
        q = 0.5 * (p + g.p_star)
    spec = make_reaction(kind, p, q=q, p_star=g.p_star, s=s)
    return g, k, spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_run(tmp_path_factory):
    """One full solve of the reference configuration, shared across tests."""
    root = tmp_path_factory.mktemp("reference")
    cfg = write_config(root / "run.json")
    out = root / "out"
    code = main(["solve", "--config", str(cfg), "--out", str(out), "--threads", "1"])
    report = json.loads((out / "report.json").read_text())
    return {"code": code, "out": out, "config": cfg, "report": report}


# criterion number -> list of (ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
