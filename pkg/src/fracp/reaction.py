"""Reaction terms f(x, t), their primitives, sign truncations and a sampled
checker for the growth hypotheses (i)-(iv).

Built-in kinds are autonomous; the ``x`` argument is accepted and ignored so
that callers keep the Caratheodory signature ``f(x, t)``.

Kinds
-----
power        f(t) = |t|^(q-2) t
logpower     F(t) = |t|^q ln|t| / q on |t| < 1 and |t|^p ln|t| / q on |t| >= 1
linear       f(t) = c0 t  (not superlinear; a control case for the checks)
custom-table piecewise-linear f through user nodes, linear extrapolation,
             F by exact trapezoid integration
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

KINDS = ("power", "logpower", "linear", "custom-table")
MODES = ("full", "plus", "minus")


class ReactionError(ValueError):
    pass


@dataclass(frozen=True)
class ReactionSpec:
    kind: str
    p: float
    q: float = 4.0
    r: float | None = None
    c0: float = 1.0
    mode: str = "full"
    table_t: tuple = field(default=(), repr=False)
    table_f: tuple = field(default=(), repr=False)

    @property
    def growth_exponent(self) -> float:
        return self.q if self.r is None else self.r

    @property
    def h3_exponent(self) -> float:
        """Exponent in the quotient (f t - p F)/|t|^e used by hypothesis (iii).

        For logpower ``f t - p F = |t|^p / q`` on ``|t| >= 1``, so the exponent is p.
        """
        if self.kind == "logpower":
            return self.p
        return self.q


def make_reaction(kind: str, p: float, q: float = 4.0, r: float | None = None,
                  c0: float = 1.0, table_path: str | Path | None = None,
                  p_star: float = math.inf, s: float | None = None) -> ReactionSpec:
    """Validated full-mode reaction.

    ``r`` defaults to ``q`` for power and linear, and for logpower to the
    middle of the admissible window ``(p, min(p + p^2 s, p*))`` when ``s`` is
    given (see :func:`default_logpower_r`).
    """
    if kind not in KINDS:
        raise ReactionError(f"unknown reaction kind {kind!r}; expected one of {KINDS}")
    if not p > 1.0:
        raise ReactionError(f"need p > 1, got {p}")
    if c0 <= 0:
        raise ReactionError(f"need c0 > 0, got {c0}")
    tt: tuple = ()
    ff: tuple = ()
    if kind in ("power", "logpower"):
        if not p < q < p_star:
            raise ReactionError(f"{kind} reaction needs p < q < p*_s, got p={p}, q={q}, p*_s={p_star}")
        if r is None and kind == "power":
            r = q
        elif r is None and s is not None:
            r = default_logpower_r(p, s, p_star)
    elif kind == "linear":
        if r is None:
            r = q
    else:
        if table_path is None:
            raise ReactionError("custom-table reaction needs table_path")
        tt, ff = load_table(table_path)
    if r is not None and not r > 1.0:
        raise ReactionError(f"need r > 1, got {r}")
    return ReactionSpec(kind=kind, p=float(p), q=float(q), r=None if r is None else float(r),
                        c0=float(c0), table_t=tt, table_f=ff)


def default_logpower_r(p: float, s: float, p_star: float) -> float:
    hi = min(p + p * p * s, p_star)
    return 0.5 * (p + hi)


def load_table(path) -> tuple[tuple, tuple]:
    """Read a two-column ``t,f`` CSV; t strictly increasing and containing (0, 0)."""
    ts, fs = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "t":
                continue
            if len(row) != 2:
                raise ReactionError(f"{path}:{lineno}: expected two columns t,f")
            try:
                ts.append(float(row[0]))
                fs.append(float(row[1]))
            except ValueError as exc:
                raise ReactionError(f"{path}:{lineno}: {exc}") from None
    return check_table(ts, fs)


def check_table(ts, fs) -> tuple[tuple, tuple]:
    t = np.asarray(ts, dtype=float)
    f = np.asarray(fs, dtype=float)
    if t.size < 2:
        raise ReactionError("table needs at least two rows")
    if np.any(np.diff(t) <= 0):
        raise ReactionError("table t column must be strictly increasing")
    zero = np.flatnonzero(t == 0.0)
    if zero.size != 1 or f[zero[0]] != 0.0:
        raise ReactionError("table must contain the row t=0, f=0")
    return tuple(t.tolist()), tuple(f.tolist())


def truncate(spec: ReactionSpec, mode: str) -> ReactionSpec:
    """``plus``: f(t^+); ``minus``: f(-t^-). Only a full spec can be truncated."""
    if mode not in ("plus", "minus"):
        raise ReactionError(f"truncation mode must be plus or minus, got {mode!r}")
    if spec.mode != "full":
        raise ReactionError(f"spec is already truncated ({spec.mode})")
    return replace(spec, mode=mode)


def with_mode(spec: ReactionSpec, mode: str) -> ReactionSpec:
    return spec if spec.mode == mode else replace(spec, mode=mode)


# -- raw (untruncated) evaluations, vectorized -------------------------------

def _table_arrays(spec):
    return np.asarray(spec.table_t), np.asarray(spec.table_f)


def _table_f(spec, t):
    tt, ff = _table_arrays(spec)
    out = np.interp(t, tt, ff)
    lo, hi = t < tt[0], t > tt[-1]
    if np.any(lo):
        slope = (ff[1] - ff[0]) / (tt[1] - tt[0])
        out[lo] = ff[0] + slope * (t[lo] - tt[0])
    if np.any(hi):
        slope = (ff[-1] - ff[-2]) / (tt[-1] - tt[-2])
        out[hi] = ff[-1] + slope * (t[hi] - tt[-1])
    return out


def _table_F(spec, t):
    tt, ff = _table_arrays(spec)
    # extend the node list so every query lies inside, then integrate exactly
    lo = min(tt[0], float(np.min(t, initial=0.0)))
    hi = max(tt[-1], float(np.max(t, initial=0.0)))
    nodes = np.concatenate(([lo] if lo < tt[0] else [], tt, [hi] if hi > tt[-1] else []))
    vals = _table_f(spec, nodes.copy())
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes))))
    cum -= cum[np.flatnonzero(nodes == 0.0)[0]]
    k = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
    dt = t - nodes[k]
    slope = (vals[k + 1] - vals[k]) / (nodes[k + 1] - nodes[k])
    return cum[k] + vals[k] * dt + 0.5 * slope * dt * dt


def _raw_f(spec, t):
    a = np.abs(t)
    if spec.kind == "power":
        return a ** (spec.q - 2.0) * t
    if spec.kind == "linear":
        return spec.c0 * t
    if spec.kind == "logpower":
        q, p = spec.q, spec.p
        out = np.zeros_like(t)
        small = (a > 0) & (a < 1)
        big = a >= 1
        out[small] = a[small] ** (q - 2.0) * t[small] * (np.log(a[small]) + 1.0 / q)
        out[big] = a[big] ** (p - 2.0) * t[big] * (p * np.log(a[big]) + 1.0) / q
        return out
    return _table_f(spec, t)


def _raw_F(spec, t):
    a = np.abs(t)
    if spec.kind == "power":
        return a ** spec.q / spec.q
    if spec.kind == "linear":
        return 0.5 * spec.c0 * t * t
    if spec.kind == "logpower":
        q, p = spec.q, spec.p
        out = np.zeros_like(t)
        small = (a > 0) & (a < 1)
        big = a >= 1
        out[small] = a[small] ** q * np.log(a[small]) / q
        out[big] = a[big] ** p * np.log(a[big]) / q
        return out
    return _table_F(spec, t)


def _raw_df(spec, t):
    a = np.abs(t)
    if spec.kind == "power":
        return (spec.q - 1.0) * a ** (spec.q - 2.0)
    if spec.kind == "linear":
        return np.full_like(t, spec.c0)
    if spec.kind == "logpower":
        q, p = spec.q, spec.p
        out = np.zeros_like(t)
        small = (a > 0) & (a < 1)
        big = a >= 1
        la = np.log(a[small])
        out[small] = a[small] ** (q - 2.0) * ((q - 1.0) * (la + 1.0 / q) + 1.0)
        lb = np.log(a[big])
        out[big] = a[big] ** (p - 2.0) * ((p - 1.0) * (p * lb + 1.0) + p) / q
        return out
    step = 1e-6 * np.maximum(1.0, a)
    return (_table_f(spec, t + step) - _table_f(spec, t - step)) / (2.0 * step)


def _truncated_arg(spec, t):
    if spec.mode == "plus":
        return np.maximum(t, 0.0)
    if spec.mode == "minus":
        return np.minimum(t, 0.0)
    return t


def _as_array(t):
    return np.array(t, dtype=float, ndmin=1, copy=True)


def eval_f(spec: ReactionSpec, t, x=None):
    """f_mode(x, t); scalar in, scalar out."""
    arr = _as_array(t)
    out = _raw_f(spec, _truncated_arg(spec, arr))
    return out if np.ndim(t) else float(out[0])


def eval_F(spec: ReactionSpec, t, x=None):
    """Primitive F_mode(x, t) = int_0^t f_mode(x, tau) dtau."""
    arr = _as_array(t)
    out = _raw_F(spec, _truncated_arg(spec, arr))
    return out if np.ndim(t) else float(out[0])


def eval_df(spec: ReactionSpec, t, x=None):
    """t-derivative of f_mode (analytic for built-ins, central differences for tables)."""
    arr = _as_array(t)
    out = _raw_df(spec, _truncated_arg(spec, arr))
    if spec.mode == "plus":
        out = np.where(arr >= 0, out, 0.0)
    elif spec.mode == "minus":
        out = np.where(arr <= 0, out, 0.0)
    return out if np.ndim(t) else float(out[0])


# -- sampled hypothesis checks ------------------------------------------------

@dataclass(frozen=True)
class SampleConfig:
    t_min: float = 1e-6
    t_max: float = 1e6
    per_decade: int = 20
    h2_threshold: float = 1.0
    h4_tol: float = 1e-3

    def magnitudes(self) -> np.ndarray:
        decades = math.log10(self.t_max / self.t_min)
        count = int(round(decades * self.per_decade)) + 1
        return np.logspace(math.log10(self.t_min), math.log10(self.t_max), count)


@dataclass
class Verdict:
    status: str  # pass | fail | inconclusive
    estimate: float | None = None
    witnesses: list = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "estimate": self.estimate,
            "witnesses": [[float(t), float(v)] for t, v in self.witnesses],
            "detail": self.detail,
        }


@dataclass
class HypothesisReport:
    h1: Verdict
    h2: Verdict
    h3: Verdict
    h4: Verdict
    t_range: tuple
    beta: float | None
    T: float | None
    h3_exponent: float
    ar_condition: str

    @property
    def verdicts(self) -> dict:
        return {"H1": self.h1, "H2": self.h2, "H3": self.h3, "H4": self.h4}

    @property
    def all_pass(self) -> bool:
        return all(v.status == "pass" for v in self.verdicts.values())

    def to_dict(self) -> dict:
        out = {k: v.to_dict() for k, v in self.verdicts.items()}
        out.update(
            t_range=[float(self.t_range[0]), float(self.t_range[1])],
            beta=self.beta,
            T=self.T,
            h3_exponent=self.h3_exponent,
            ar_condition=self.ar_condition,
            all_pass=self.all_pass,
        )
        return out


def _both_sides(mags):
    return [mags, -mags]


def _check_h1(spec, grid, mags):
    r = spec.growth_exponent
    worst = None
    growing = []
    c_hat = 0.0
    for t in _both_sides(mags):
        ratio = np.abs(eval_f(spec, t)) / (1.0 + np.abs(t) ** (r - 1.0))
        k = int(np.argmax(ratio))
        if ratio[k] > c_hat:
            c_hat, worst = float(ratio[k]), (t[k], ratio[k])
        # compare the last sample with the one a decade earlier
        top, prev = ratio[-1], ratio[-1 - max(1, len(mags) // 12)]
        if top > 1.5 * prev and top > 0:
            growing.append((t[-1], top))
    if not np.isfinite(c_hat):
        return Verdict("fail", c_hat, [worst], "growth quotient not finite")
    if not (spec.p < r < grid.p_star):
        return Verdict("fail", c_hat, [worst], f"declared r={r:g} outside (p, p*_s)=({spec.p:g}, {grid.p_star:g})")
    if growing:
        return Verdict("fail", c_hat, growing, f"|f|/(1+|t|^(r-1)) still growing at |t|={mags[-1]:g}")
    if c_hat > spec.c0 * (1.0 + 1e-9):
        return Verdict("fail", c_hat, [worst], f"sampled constant {c_hat:.6g} exceeds c0={spec.c0:g}")
    return Verdict("pass", c_hat, [], "")


def _check_h2(spec, cfg, mags):
    p = spec.p
    tail = mags >= mags[-1] * 1e-3
    T_vals = []
    fails, weak = [], []
    est = math.inf
    for t in _both_sides(mags):
        ratio = eval_F(spec, t) / np.abs(t) ** p
        rt = ratio[tail]
        est = min(est, float(rt[-1]))
        gain = rt[-1] - rt[0]
        if gain <= 1e-9 * max(1.0, abs(rt[-1])):
            fails.append((t[-1], rt[-1]))
            continue
        incr = np.diff(ratio) > 0
        # first index after which the quotient keeps increasing
        bad = np.flatnonzero(~incr)
        start = bad[-1] + 1 if bad.size else 0
        T_vals.append(float(abs(t[min(start, len(t) - 1)])))
        if not np.all(np.diff(rt) > 0) or gain < cfg.h2_threshold or rt[-1] < cfg.h2_threshold:
            weak.append((t[-1], rt[-1]))
    if fails:
        return Verdict("fail", est, fails, "F/|t|^p does not increase at large |t|")
    if weak:
        return Verdict("inconclusive", est, weak, "F/|t|^p increasing but growth below threshold")
    return Verdict("pass", est, [], f"increasing beyond T={max(T_vals):.3g}")


def _check_h3(spec, grid, mags):
    p, e, r = spec.p, spec.h3_exponent, spec.growth_exponent
    big = mags >= 1.0
    Ts, betas, fails, weak = [], [], [], []
    for t in _both_sides(mags[big]):
        ratio = (eval_f(spec, t) * t - p * eval_F(spec, t)) / np.abs(t) ** e
        nonpos = np.flatnonzero(ratio <= 0)
        if nonpos.size and nonpos[-1] == len(t) - 1:
            fails.append((t[-1], ratio[-1]))
            continue
        start = nonpos[-1] + 1 if nonpos.size else 0
        Ts.append(float(abs(t[start])))
        betas.append(float(ratio[start:].min()))
        last = ratio[-max(1, len(t) // 2):]
        if ratio[-1] < 0.5 * last.max():
            weak.append((t[-1], ratio[-1]))
    lower = (r - p) / grid.ps
    window = lower < e < grid.p_star
    beta = min(betas) if betas else None
    T = max(Ts) if Ts else None
    if fails:
        return Verdict("fail", beta, fails, "(f t - pF)/|t|^e not eventually positive"), beta, T
    if not window:
        wit = [(mags[-1], beta if beta is not None else 0.0)]
        return Verdict("fail", beta, wit, f"exponent {e:g} outside window ({lower:g}, {grid.p_star:g})"), beta, T
    if weak:
        return Verdict("inconclusive", beta, weak, "quotient decays toward 0 at large |t|"), beta, T
    return Verdict("pass", beta, [], f"beta={beta:.6g} for |t|>T={T:.3g}"), beta, T


def _check_h4(spec, cfg, mags):
    p = spec.p
    low = mags <= mags[0] * 100.0
    worst, rising = 0.0, []
    for t in _both_sides(mags[low]):
        ratio = np.abs(eval_f(spec, t)) / np.abs(t) ** (p - 1.0)
        worst = max(worst, float(ratio.max()))
        # the quotient must shrink toward t -> 0
        if ratio[0] >= ratio[-1] and ratio[0] > cfg.h4_tol:
            rising.append((t[0], ratio[0]))
    if rising:
        return Verdict("fail", worst, rising, "f/|t|^(p-1) does not tend to 0")
    if worst > cfg.h4_tol:
        return Verdict("inconclusive", worst, [], f"quotient decreasing but above tol {cfg.h4_tol:g}")
    return Verdict("pass", worst, [], "")


def _ar_condition(spec, mags):
    """'holds' when f t / F - p stays bounded away from 0 on the tail."""
    tail = mags[mags >= mags[-1] * 1e-3]
    status = "holds"
    for t in _both_sides(tail):
        F = eval_F(spec, t)
        if np.any(F <= 0):
            return "violated"
        excess = eval_f(spec, t) * t / F - spec.p
        if excess.min() <= 0:
            return "violated"
        if excess[-1] < 0.9 * excess[0]:
            status = "violated"
    return status


def verify_hypotheses(spec: ReactionSpec, grid, sample_cfg: SampleConfig | None = None) -> HypothesisReport:
    """Sampled verdicts for hypotheses (i)-(iv) plus the Ambrosetti-Rabinowitz flag.

    Limits at 0 and infinity are never extrapolated: when the samples cannot
    separate the behaviour the verdict is ``inconclusive``.
    """
    if spec.mode != "full":
        raise ReactionError("verify_hypotheses expects a full (untruncated) reaction")
    cfg = sample_cfg or SampleConfig()
    mags = cfg.magnitudes()
    h1 = _check_h1(spec, grid, mags)
    h2 = _check_h2(spec, cfg, mags)
    h3, beta, T = _check_h3(spec, grid, mags)
    h4 = _check_h4(spec, cfg, mags)
    return HypothesisReport(h1=h1, h2=h2, h3=h3, h4=h4, t_range=(cfg.t_min, cfg.t_max),
                            beta=beta, T=T, h3_exponent=spec.h3_exponent,
                            ar_condition=_ar_condition(spec, mags))


def small_amplitude_radius(spec: ReactionSpec, eps: float, t_max: float = 1e3, count: int = 4001) -> float:
    """Largest sampled delta with |F(t)| <= eps |t|^p for all sampled |t| <= delta."""
    mags = np.logspace(-8, math.log10(t_max), count)
    ok = np.ones_like(mags, dtype=bool)
    for t in (mags, -mags):
        ok &= np.abs(eval_F(spec, t)) <= eps * np.abs(t) ** spec.p
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(mags[-1])
    if bad[0] == 0:
        return 0.0
    return float(mags[bad[0] - 1])
