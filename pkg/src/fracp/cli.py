"""Command line driver: ``fracp {eigen,verify,solve,audit} --config run.json``.

Exit codes: 0 ok, 1 bad config or stale inventory, 2 nonconvergence,
3 hypothesis failure or inconclusive audit, 4 only u_+/- found,
5 inventory incomplete.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fracp.audit import poincare_hopf_audit
from fracp.eigen import EigenNonconvergence, principal_eigenpair
from fracp.grid import GridError, build_grid, kernel_weights
from fracp.reaction import ReactionError, make_reaction, verify_hypotheses
from fracp.solver import (MultistartConfig, NoThirdSolution, SolverError, make_critical_point,
                          ring_estimate, solve_constant_sign, third_solution)

log = logging.getLogger("fracp")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY, EXIT_TWO_ONLY, EXIT_INCOMPLETE = range(6)

DEFAULTS = {
    "domain": {"a": 0.0, "b": 1.0, "n": 256},
    "exponents": {"p": 2.0, "s": 0.5},
    "reaction": {"kind": "power", "q": 4.0, "r": None, "c0": 1.0, "table_path": None},
    "solver": {"tol": 1e-8, "max_iter": 2000, "path_nodes": 21, "multistart_count": 64,
               "seed": 20240531, "phi_floor": -1e8, "strategy_a": True},
    "outputs": {"dir": "fracp_out", "emit_traces": False},
}

REPORT_KEYS = ("config", "lambda1", "eigen_residual", "eta_ring_estimate", "ring_radius",
               "c_plus_estimate", "c_minus_estimate", "critical_points", "audit", "hypotheses",
               "wall_times")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    raw: dict
    source: Path
    grid: object = field(repr=False, default=None)
    reaction: object = field(repr=False, default=None)

    def group(self, name):
        return self.raw[name]

    @property
    def tol(self) -> float:
        return float(self.raw["solver"]["tol"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["outputs"]["dir"])


def _line_of(text: str, key: str, after: int = 0) -> int:
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for m in pat.finditer(text):
        line = text.count("\n", 0, m.start()) + 1
        if line >= after:
            return line
    return 1


def _number(value, where, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return int(value) if integer else float(value)


def load_config(path) -> RunConfig:
    """Parse and validate a run config; every error names the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    raw = {}
    for group, defaults in DEFAULTS.items():
        given = data.get(group, {})
        gline = _line_of(text, group)
        if not isinstance(given, dict):
            raise ConfigError(f"{path}:{gline}: group '{group}' must be an object")
        for key in given:
            if key not in defaults:
                raise ConfigError(f"{path}:{_line_of(text, key, gline)}: unknown key '{group}.{key}'")
        raw[group] = {**defaults, **given}
    for group in data:
        if group not in DEFAULTS:
            raise ConfigError(f"{path}:{_line_of(text, group)}: unknown key '{group}'")

    def where(group, key):
        return f"{path}:{_line_of(text, key, _line_of(text, group))}: {group}.{key}"

    dom, ex, rx, sv = raw["domain"], raw["exponents"], raw["reaction"], raw["solver"]
    for key in ("a", "b"):
        dom[key] = _number(dom[key], where("domain", key))
    dom["n"] = _number(dom["n"], where("domain", "n"), integer=True)
    for key in ("p", "s"):
        ex[key] = _number(ex[key], where("exponents", key))
    for key in ("tol", "phi_floor"):
        sv[key] = _number(sv[key], where("solver", key))
    for key in ("max_iter", "path_nodes", "multistart_count", "seed"):
        sv[key] = _number(sv[key], where("solver", key), integer=True)
    if sv["tol"] <= 0:
        raise ConfigError(f"{where('solver', 'tol')} must be positive")
    if sv["max_iter"] < 1:
        raise ConfigError(f"{where('solver', 'max_iter')} must be >= 1")
    if sv["path_nodes"] < 5 or sv["path_nodes"] % 2 == 0:
        raise ConfigError(f"{where('solver', 'path_nodes')} must be odd and >= 5")
    if sv["multistart_count"] < 0:
        raise ConfigError(f"{where('solver', 'multistart_count')} must be >= 0")
    if not 0 <= sv["seed"] < 2 ** 64:
        raise ConfigError(f"{where('solver', 'seed')} must fit in 64 unsigned bits")
    for key in ("strategy_a",):
        if not isinstance(sv[key], bool):
            raise ConfigError(f"{where('solver', key)}: expected true or false")
    if not isinstance(raw["outputs"]["emit_traces"], bool):
        raise ConfigError(f"{where('outputs', 'emit_traces')}: expected true or false")
    if not isinstance(raw["outputs"]["dir"], str):
        raise ConfigError(f"{where('outputs', 'dir')}: expected a path string")

    try:
        grid = build_grid(dom["a"], dom["b"], dom["n"], ex["s"], ex["p"], strict=False)
    except GridError as exc:
        raise ConfigError(f"{path}:{_line_of(text, 'domain')}: {exc}") from None
    try:
        table = rx["table_path"]
        if table is not None:
            table = Path(table)
            if not table.is_absolute():
                table = path.parent / table
        reaction = make_reaction(rx["kind"], grid.p, q=rx["q"], r=rx["r"], c0=rx["c0"],
                                 table_path=table, p_star=grid.p_star, s=grid.s)
    except (ReactionError, TypeError, OSError) as exc:
        raise ConfigError(f"{path}:{_line_of(text, 'reaction')}: {exc}") from None
    return RunConfig(raw=raw, source=path, grid=grid, reaction=reaction)


# -- output helpers ------------------------------------------------------------

def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(obj)
    return obj


def write_csv(path: Path, header: str, columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def read_state_csv(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_trace(path: Path, trace) -> None:
    rows = [row[:4] for row in trace if len(row) >= 4]
    if rows:
        write_csv(path, "iter,phi,residual,cerami", np.array(rows, dtype=float).T)


def empty_report(cfg: RunConfig) -> dict:
    report = dict.fromkeys(REPORT_KEYS)
    report["config"] = cfg.raw
    report["critical_points"] = []
    report["wall_times"] = {}
    return report


def write_report(out: Path, report: dict, name: str = "report.json") -> None:
    (out / name).write_text(json.dumps(_clean(report), indent=2) + "\n")


def point_summary(cp, with_index: bool) -> dict:
    return {
        "label": cp.label,
        "value": cp.value,
        "residual": cp.residual,
        "tol": cp.tol,
        "converged": bool(cp.converged),
        "sign_class": cp.sign_class,
        "hopf_ratio": cp.hopf_ratio,
        "morse_index": cp.morse_index if with_index else None,
        "degenerate": bool(cp.degenerate_flag) if with_index else None,
        "level": cp.level,
        "defects": list(cp.defects),
        "notes": list(cp.notes),
    }


def _timer(sink: dict):
    @contextmanager
    def timed(name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            sink[name] = time.perf_counter() - t0

    return timed


# -- commands ------------------------------------------------------------------

def _prepare(cfg: RunConfig, out) -> Path:
    out = Path(out) if out is not None else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eigen(cfg: RunConfig, out=None, threads: int = 1) -> int:
    out = _prepare(cfg, out)
    report = empty_report(cfg)
    timed = _timer(report["wall_times"])
    g = cfg.grid
    with timed("eigen"):
        k = kernel_weights(g)
        try:
            pair = principal_eigenpair(g, k)
        except EigenNonconvergence as exc:
            log.error("%s", exc)
            report["eigen_residual"] = exc.residual
            write_report(out, report)
            return EXIT_NONCONVERGED
    report["lambda1"], report["eigen_residual"] = pair.lambda1, pair.residual
    write_csv(out / "eigen.csv", "x,e1,e1_over_ds", (g.x, pair.e1, pair.e1 / k.ds))
    write_report(out, report)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out=None, threads: int = 1) -> int:
    out = _prepare(cfg, out)
    report = empty_report(cfg)
    with _timer(report["wall_times"])("verify"):
        hyp = verify_hypotheses(cfg.reaction, cfg.grid)
    report["hypotheses"] = hyp.to_dict()
    write_report(out, report)
    for name, v in hyp.verdicts.items():
        log.info("%s: %s %s", name, v.status, v.detail)
    if hyp.ar_condition != "holds":
        log.info("Ambrosetti-Rabinowitz condition violated (informational)")
    return EXIT_OK if hyp.all_pass else EXIT_VERIFY


def cmd_solve(cfg: RunConfig, out=None, threads: int = 1) -> int:
    out = _prepare(cfg, out)
    report = empty_report(cfg)
    timed = _timer(report["wall_times"])
    g, spec = cfg.grid, cfg.reaction
    sv = cfg.raw["solver"]
    tol = cfg.tol
    traces = cfg.raw["outputs"]["emit_traces"]
    with_index = g.p == 2.0

    with timed("verify"):
        hyp = verify_hypotheses(spec, g)
    report["hypotheses"] = hyp.to_dict()
    if not hyp.all_pass:
        log.error("hypotheses not satisfied; not solving")
        write_report(out, report)
        return EXIT_VERIFY
    with timed("eigen"):
        k = kernel_weights(g)
        try:
            pair = principal_eigenpair(g, k)
        except EigenNonconvergence as exc:
            log.error("%s", exc)
            write_report(out, report)
            return EXIT_NONCONVERGED
    report["lambda1"], report["eigen_residual"] = pair.lambda1, pair.residual
    write_csv(out / "eigen.csv", "x,e1,e1_over_ds", (g.x, pair.e1, pair.e1 / k.ds))
    with timed("ring"):
        rho, eta = ring_estimate(g, k, spec, pair.lambda1, seed=sv["seed"] % 2 ** 32)
    report["ring_radius"], report["eta_ring_estimate"] = rho, eta

    zero = make_critical_point(g, k, spec, np.zeros(g.n), tol, label="zero")
    inventory = [zero]
    with timed("constant_sign"):
        try:
            run = solve_constant_sign(g, k, spec, tol=tol, e1=pair.e1, m=sv["path_nodes"],
                                      max_iter=sv["max_iter"], full_result=True)
        except SolverError as exc:
            log.error("%s", exc)
            write_report(out, report)
            return EXIT_NONCONVERGED
    report["c_plus_estimate"], report["c_minus_estimate"] = run.mp_plus.level, run.mp_minus.level
    for cp, name in ((run.plus, "u_plus"), (run.minus, "u_minus")):
        write_csv(out / f"{name}.csv", "x,u,u_over_ds", (g.x, cp.state, cp.state / k.ds))
        if traces:
            write_trace(out / f"trace_{name}.csv", cp.trace)
        inventory.append(cp)
    if not (run.plus.converged and run.minus.converged):
        log.error("constant-sign solutions not converged: %s %s", run.plus.defects, run.minus.defects)
        _finish(report, inventory, g, k, spec, with_index, out, timed)
        return EXIT_NONCONVERGED

    ms = MultistartConfig(count=sv["multistart_count"], seed=sv["seed"], strategy_a=sv["strategy_a"],
                          path_nodes=sv["path_nodes"], max_iter=sv["max_iter"], workers=threads)
    found = True
    with timed("third_solution"):
        try:
            third = third_solution(g, k, spec, run.plus, run.minus, tol=tol, multistart_cfg=ms,
                                   log=log.debug)
            third.label = "u_third"
        except NoThirdSolution as exc:
            log.warning("%s", exc)
            found = False
    if found:
        write_csv(out / "u_third.csv", "x,u,u_over_ds", (g.x, third.state, third.state / k.ds))
        if traces:
            write_trace(out / "trace_u_third.csv", third.trace)
        inventory.append(third)
    _finish(report, inventory, g, k, spec, with_index, out, timed)
    return EXIT_OK if found else EXIT_TWO_ONLY


def _finish(report, inventory, g, k, spec, with_index, out, timed):
    if with_index:
        with timed("audit"):
            audit = poincare_hopf_audit(inventory, g, k, spec)
        report["audit"] = audit.to_dict()
        for note in audit.notes:
            log.warning("audit: %s", note)
    else:
        report["audit"] = {"index_table": [], "signed_sum": None,
                           "ph_verdict": "inconclusive: p != 2", "notes": []}
    report["critical_points"] = [point_summary(cp, with_index) for cp in inventory]
    write_report(out, report)


def cmd_audit(cfg: RunConfig, inventory_dir, out=None, threads: int = 1) -> int:
    out = _prepare(cfg, out)
    g, spec, tol = cfg.grid, cfg.reaction, cfg.tol
    k = kernel_weights(g)
    report = {"config": cfg.raw, "inventory_dir": str(inventory_dir)}
    inventory = [make_critical_point(g, k, spec, np.zeros(g.n), tol, label="zero")]
    files = sorted(Path(inventory_dir).glob("u_*.csv"))
    for path in files:
        try:
            x, u = read_state_csv(path)
        except (OSError, ValueError) as exc:
            log.error("%s: unreadable (%s)", path, exc)
            return EXIT_CONFIG
        if x.shape != g.x.shape or not np.allclose(x, g.x, rtol=0, atol=1e-12 * g.diam):
            log.error("%s: grid does not match the config", path)
            return EXIT_CONFIG
        cp = make_critical_point(g, k, spec, u, tol, label=path.stem)
        if cp.residual > tol:
            log.error("%s: stale state, residual %.3e > tol %.3e", path, cp.residual, tol)
            return EXIT_CONFIG
        inventory.append(cp)
    if g.p != 2.0:
        report["audit"] = {"ph_verdict": "inconclusive: p != 2"}
        write_report(out, report, "audit.json")
        return EXIT_VERIFY
    audit = poincare_hopf_audit(inventory, g, k, spec)
    report["audit"] = audit.to_dict()
    report["critical_points"] = [point_summary(cp, True) for cp in inventory]
    write_report(out, report, "audit.json")
    log.info("signed sum %d: %s", audit.signed_sum, audit.ph_verdict)
    for note in audit.notes:
        log.warning("audit: %s", note)
    if audit.passed:
        return EXIT_OK
    if audit.ph_verdict == "fail":
        return EXIT_INCOMPLETE
    return EXIT_VERIFY


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("eigen", "principal eigenpair"), ("verify", "sampled hypothesis check"),
                        ("solve", "full pipeline"), ("audit", "Poincare-Hopf audit of saved states")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides outputs.dir)")
        p.add_argument("--threads", type=int, default=None, help="worker cap (overrides FRACP_THREADS)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "audit":
            p.add_argument("--inventory", type=Path, default=None,
                           help="directory with u_*.csv files (default: the output directory)")
    return parser


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get("FRACP_THREADS", "1")))
    except ValueError:
        return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    threads = _threads(args.threads)
    try:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=threads)
    except ImportError:
        limiter = nullcontext()
    with limiter:
        if args.command == "audit":
            out = args.out if args.out is not None else cfg.out_dir
            inv = args.inventory if args.inventory is not None else out
            return cmd_audit(cfg, inv, out, threads)
        command = {"eigen": cmd_eigen, "verify": cmd_verify, "solve": cmd_solve}[args.command]
        return command(cfg, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
