"""Critical point search for Phi and its sign truncations.

descend             preconditioned gradient descent (BB steps, Armijo) to a local minimizer
find_low_point      doubling along a ray until the energy is below -1
mountain_pass       elastic string between two low points, then a ray-max refinement of the
                    highest node (plus a Newton polish when p >= 2)
solve_constant_sign the Phi_+ and Phi_- mountain passes giving u_+ and u_-
third_solution      mountain pass between u_+ and u_-, then seeded multistart of a
                    nodal-set descent with deflated Newton polish

All step directions are preconditioned by :class:`fracp.energy.Preconditioner`.
Near convergence a damped Newton polish takes over: exact Hessian for p >= 2,
the floored lagged-diffusivity matrix for 1 < p < 2.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import brentq, minimize

from fracp.audit import classify_sign
from fracp.energy import Preconditioner, hessian, seminorm_p
from fracp.reaction import eval_F, eval_df, eval_f, small_amplitude_radius, with_mode

ROUNDOFF = 16.0 * np.finfo(float).eps


class SolverError(RuntimeError):
    def __init__(self, message, state=None, residual=None, trace=None):
        super().__init__(message)
        self.state = state
        self.residual = residual
        self.trace = trace or []


class UnboundedDescent(SolverError):
    """Energy fell below the configured floor: Phi is unbounded from below."""


class Nonconvergence(SolverError):
    pass


class PathCollapse(SolverError):
    pass


class SuperlinearityNotVisible(SolverError):
    pass


class NoThirdSolution(SolverError):
    pass


class _PullBack(Exception):
    pass


@dataclass
class CriticalPoint:
    state: np.ndarray
    value: float
    residual: float
    sign_class: str
    hopf_ratio: float
    tol: float
    morse_index: int | None = None
    degenerate_flag: bool = False
    converged: bool = True
    label: str = ""
    level: float | None = None
    defects: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    trace: list = field(default_factory=list, repr=False)


@dataclass
class MountainPassResult:
    endpoint_low: np.ndarray
    level: float
    path: list
    critical: CriticalPoint
    iterations: int
    converged: bool = True
    refined: bool = False
    endpoint_max: bool = False


@dataclass
class MultistartConfig:
    count: int = 64
    seed: int = 20240531
    strategy_a: bool = True
    path_nodes: int = 21
    max_iter: int = 2000
    workers: int = 1
    smoothing: float = 1.0 / 12.0


class Functional:
    """Phi_mode on a fixed grid with cached preconditioner."""

    def __init__(self, g, k, spec):
        self.g, self.k, self.spec = g, k, spec
        self.prec = Preconditioner(g, k)
        self.evals = 0

    def evaluate(self, u):
        """Value, gradient and a magnitude scale for rounding-aware comparisons."""
        g, k, spec = self.g, self.k, self.spec
        self.evals += 1
        p, h = g.p, g.h
        E = seminorm_p(g, k, u)
        if p == 2.0:
            Au = k.form2 @ u
        else:
            diff = u[:, None] - u[None, :]
            Au = 2.0 * np.sum(k.W * np.abs(diff) ** (p - 1.0) * np.sign(diff), axis=1)
            Au += 2.0 * h * k.rho * np.abs(u) ** (p - 1.0) * np.sign(u)
        F = eval_F(spec, u)
        val = E / p - h * float(np.sum(F))
        mag = E / p + h * float(np.sum(np.abs(F)))
        return val, Au - h * eval_f(spec, u), mag

    def value(self, u) -> float:
        return self.evaluate(u)[0]

    def residual(self, gr) -> float:
        return float(np.linalg.norm(gr) / math.sqrt(self.g.n))

    def trace_row(self, it, u, val, res):
        E = seminorm_p(self.g, self.k, u)
        return (it, val, res, (1.0 + E ** (1.0 / self.g.p)) * res)

    def direction(self, u, gr):
        self.prec.update(u)
        return -self.prec.solve(gr)

    def bb_step(self, s, y, fallback):
        if self.prec.adaptive:
            return 1.0
        sy = float(s @ y)
        if sy <= 0:
            return fallback
        return min(float(s @ (self.k.form2 @ s)) / sy, 4.0)


def l2_norm(g, u) -> float:
    return math.sqrt(g.h * float(np.sum(np.asarray(u) ** 2)))


def make_critical_point(g, k, spec, u, tol, label="", trace=None, converged=None) -> CriticalPoint:
    fn = Functional(g, k, spec)
    val, gr, _ = fn.evaluate(np.asarray(u, dtype=float))
    res = fn.residual(gr)
    sign, hopf = classify_sign(u, k.ds)
    return CriticalPoint(state=np.asarray(u, dtype=float).copy(), value=val, residual=res,
                         sign_class=sign, hopf_ratio=hopf, tol=tol, label=label,
                         converged=(res <= tol) if converged is None else converged,
                         trace=trace or [])


def _accept(val_t, val, slope, step, c, mag, res_t, res):
    if val_t <= val + c * step * slope:
        return True
    # energy differences below rounding: fall back to the residual
    return val_t <= val + ROUNDOFF * mag and res_t < res


# -- descent -----------------------------------------------------------------

def descend(g, k, spec, u0, tol: float = 1e-8, max_iter: int = 5000, phi_floor: float = -1e8,
            armijo_c: float = 1e-4) -> CriticalPoint:
    """Gradient descent on Phi_mode from ``u0`` until the residual is at most ``tol``.

    Raises :class:`UnboundedDescent` when the energy drops below ``phi_floor``
    and :class:`Nonconvergence` after ``max_iter`` iterations; both carry the trace.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    fn = Functional(g, k, spec)
    u = np.array(u0, dtype=float)
    val, gr, mag = fn.evaluate(u)
    res = fn.residual(gr)
    trace = [fn.trace_row(0, u, val, res)]
    alpha = 1.0
    for it in range(1, max_iter + 1):
        if res <= tol:
            break
        d = fn.direction(u, gr)
        slope = float(gr @ d)
        step = alpha
        while True:
            t = u + step * d
            val_t, gr_t, mag_t = fn.evaluate(t)
            res_t = fn.residual(gr_t)
            if _accept(val_t, val, slope, step, armijo_c, max(mag, mag_t), res_t, res):
                break
            step *= 0.5
            if step < 1e-14:
                raise Nonconvergence(f"descent line search stalled at iteration {it} "
                                     f"(residual {res:.3e})", u, res, trace)
        alpha = fn.bb_step(t - u, gr_t - gr, min(1.0, 2.0 * step))
        u, val, gr, mag, res = t, val_t, gr_t, mag_t, res_t
        trace.append(fn.trace_row(it, u, val, res))
        if val < phi_floor:
            raise UnboundedDescent(f"unbounded descent: Phi = {val:.3e} below floor {phi_floor:g}",
                                   u, res, trace)
    else:
        if res > tol:
            raise Nonconvergence(f"descent not converged in {max_iter} iterations (residual {res:.3e})",
                                 u, res, trace)
    return make_critical_point(g, k, spec, u, tol, label="descent", trace=trace)


# -- low point -----------------------------------------------------------------

def find_low_point(g, k, spec, e1, threshold: float = -1.0, max_doublings: int = 40):
    """ubar = tau e1 with Phi_mode(ubar) < threshold, tau doubling from 1.

    Returns (ubar, trace) where trace lists (tau, Phi(tau e1)).
    """
    fn = Functional(g, k, spec)
    e1 = np.asarray(e1, dtype=float)
    trace = []
    tau = 1.0
    for _ in range(max_doublings + 1):
        val = fn.value(tau * e1)
        trace.append((tau, val))
        if val < threshold:
            return tau * e1, trace
        tau *= 2.0
    raise SuperlinearityNotVisible(
        f"superlinearity not visible at this scale: Phi(tau e1) >= {threshold} up to tau = 2^{max_doublings}",
        trace=trace)


# -- ring around the origin -----------------------------------------------------

def ring_radius(g, k, spec, lambda1: float) -> float:
    """rho such that max_i |u_i|/ds_i <= rho forces Phi(u) >= E(u)/(2p) >= 0.

    Uses |F(t)| <= lambda1/(2p) |t|^p on the sampled small-amplitude range and
    h sum |u_i|^p <= E(u)/lambda1.
    """
    delta = small_amplitude_radius(spec, lambda1 / (2.0 * g.p))
    return delta / float(np.max(k.ds))


def ring_states(g, k, count: int, rng):
    """Random smooth states shaped like d^s, normalized to max_i |u_i|/ds_i = 1."""
    out = np.empty((count, g.n))
    for i in range(count):
        z = gaussian_filter1d(rng.standard_normal(g.n), sigma=max(1.0, rng.uniform(0.0, 0.2) * g.n),
                              mode="constant")
        out[i] = z * k.ds / float(np.max(np.abs(z)))
    return out


def ring_estimate(g, k, spec, lambda1: float, count: int = 1000, seed: int = 0):
    """(rho, eta): sampled min of Phi_+ over states with E(u)^(1/p) = rho.

    rho = delta lambda1^(1/p), the seminorm of delta e1, with delta from the
    small-amplitude bound used by :func:`ring_radius`.
    """
    plus = spec if spec.mode == "plus" else with_mode(spec, "plus")
    delta = small_amplitude_radius(plus, lambda1 / (2.0 * g.p))
    rho = delta * lambda1 ** (1.0 / g.p)
    fn = Functional(g, k, plus)
    eta = math.inf
    for z in ring_states(g, k, count, np.random.default_rng(seed)):
        u = z * (rho / seminorm_p(g, k, z) ** (1.0 / g.p))
        eta = min(eta, fn.value(u))
    return rho, eta


# -- Newton polish (p >= 2 only) ------------------------------------------------

def _deflation(g, u, known, shift):
    """Deflation factor m(u) and grad(m)/m for known roots ``known``."""
    a = g.p - 1.0
    m = 1.0
    dlog = np.zeros_like(u)
    for w in known:
        x = u - w
        r = math.sqrt(float(x @ x) / g.n)
        if r == 0.0:
            return math.inf, dlog
        mw = r ** (-a) + shift
        m *= mw
        dlog += (-a * r ** (-a - 2.0) * x / g.n) / mw
    return m, dlog


def deflated_gradient(g, k, spec, u, known, shift: float = 1.0):
    """grad Phi(u) multiplied by prod_w (||u - w||^-(p-1) + shift)."""
    fn = Functional(g, k, spec)
    _, gr, _ = fn.evaluate(np.asarray(u, dtype=float))
    m, _ = _deflation(g, np.asarray(u, dtype=float), known, shift)
    return m * gr


def newton_matrix(g, k, spec, u, prec=None) -> np.ndarray:
    """Hessian of Phi for p >= 2; for p < 2 the lagged-diffusivity matrix minus h diag f'.

    The p < 2 matrix is the Hessian with |u_i - u_j|^(p-2) floored at a rounding
    level, so damped steps with it still settle the non-Lipschitz modes.
    """
    if g.p >= 2.0:
        return hessian(g, k, spec, u)
    prec = prec or Preconditioner(g, k)
    return prec.matrix(u) - np.diag(g.h * eval_df(spec, u))


def newton_polish(g, k, spec, u0, tol, max_iter: int = 60, known=(), shift: float = 1.0):
    """Damped (optionally deflated) Newton iteration on grad Phi."""
    fn = Functional(g, k, spec)
    u = np.array(u0, dtype=float)
    _, gr, _ = fn.evaluate(u)
    res = fn.residual(gr)
    trace = []
    for it in range(max_iter):
        trace.append((it, res))
        if res <= tol:
            return u, res, trace
        H = newton_matrix(g, k, spec, u, fn.prec)
        try:
            delta = -sla.solve(H, gr, assume_a="sym")
        except (sla.LinAlgError, ValueError):
            break
        m, dlog = _deflation(g, u, known, shift) if known else (1.0, None)
        if known:
            denom = 1.0 - float(dlog @ delta)
            if denom == 0.0 or not math.isfinite(m):
                break
            delta = delta / denom
        merit = m * res

        def trial(lam):
            t = u + lam * delta
            _, gr_t, _ = fn.evaluate(t)
            res_t = fn.residual(gr_t)
            m_t = _deflation(g, t, known, shift)[0] if known else 1.0
            return m_t * res_t, lam, t, gr_t, res_t

        if g.p < 2.0:
            # Hoelder modes overshoot by (p-2)/(p-1) under a full step; a step
            # of p-1 lands them, so take the best of a few candidates
            best = min((trial(lam) for lam in (1.0, g.p - 1.0, 0.5, 0.25, 0.125, 0.0625)),
                       key=lambda c: c[0])
            if not best[0] < (1.0 - 1e-4 * best[1]) * merit:
                break
            _, lam, t, gr_t, res_t = best
        else:
            lam = 1.0
            while lam >= 1e-6:
                cand, _, t, gr_t, res_t = trial(lam)
                if cand < (1.0 - 1e-4 * lam) * merit or res_t <= tol:
                    break
                lam *= 0.5
            else:
                break
        u, gr, res = t, gr_t, res_t
    if res <= tol:
        return u, res, trace
    raise Nonconvergence(f"Newton polish stalled (residual {res:.3e})", u, res, trace)


# -- mountain pass -------------------------------------------------------------

def _reparametrize(g, nodes):
    seg = np.sqrt(g.h * np.sum(np.diff(nodes, axis=0) ** 2, axis=1))
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    total = arc[-1]
    m = nodes.shape[0]
    if total / (m - 1) < 1e-12:
        raise PathCollapse("path collapsed: adjacent nodes closer than 1e-12")
    target = np.linspace(0.0, total, m)
    idx = np.clip(np.searchsorted(arc, target, side="right") - 1, 0, m - 2)
    span = np.where(seg[idx] > 0, seg[idx], 1.0)
    w = np.clip((target - arc[idx]) / span, 0.0, 1.0)
    out = (1.0 - w)[:, None] * nodes[idx] + w[:, None] * nodes[idx + 1]
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _relax_string(fn, nodes, sweeps, change_tol, armijo_c=1e-4):
    g = fn.g
    m = nodes.shape[0]
    steps = np.ones(m)
    vals = np.array([fn.value(u) for u in nodes])
    done = 0
    floor = max(vals[0], vals[-1])
    for sweep in range(sweeps):
        old = nodes.copy()
        # nodes below both endpoints cannot carry the pass; moving them only
        # lets them run off where Phi is unbounded below
        spacing = math.sqrt(g.h * float(np.sum((nodes[1] - nodes[0]) ** 2)))
        for j in range(1, m - 1):
            u = nodes[j]
            val, gr, mag = fn.evaluate(u)
            if val <= floor:
                continue
            d = fn.direction(u, gr)
            # drop the component along the path (in the preconditioner metric)
            tang = nodes[j + 1] - nodes[j - 1]
            Pt = fn.prec.matrix(u) @ tang
            tPt = float(tang @ Pt)
            if tPt > 0:
                d = d - (float(d @ Pt) / tPt) * tang
            slope = float(gr @ d)
            if not slope < 0:
                continue
            step = min(1.0, 2.0 * steps[j], 0.5 * spacing / max(l2_norm(g, d), 1e-300))
            while step >= 1e-10:
                t = u + step * d
                val_t = fn.value(t)
                if val_t <= val + armijo_c * step * slope:
                    nodes[j], steps[j] = t, step
                    break
                step *= 0.5
        nodes = _reparametrize(g, nodes)
        done = sweep + 1
        scale = max(max(l2_norm(g, u) for u in old), 1e-300)
        change = max(l2_norm(g, a - b) for a, b in zip(nodes, old)) / scale
        if change < change_tol:
            break
    vals = np.array([fn.value(u) for u in nodes])
    return nodes, vals, done


def _ray_max(fn, base, v, tau=1.0):
    """Maximize Phi(base + tau v) over tau > 0; returns (tau, w, val, grad, mag)."""

    def slope(t):
        _, gr, _ = fn.evaluate(base + t * v)
        return float(gr @ v)

    s1 = slope(tau)
    if s1 > 0:
        lo, hi = tau, 2.0 * tau
        while slope(hi) > 0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e12:
                raise _PullBack()
    else:
        lo, hi = 0.5 * tau, tau
        while slope(lo) <= 0:
            lo, hi = 0.5 * lo, lo
            if lo < 1e-12:
                raise _PullBack()
    t = brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    w = base + t * v
    val, gr, mag = fn.evaluate(w)
    return t, w, val, gr, mag


def _ray_refine(fn, base, w0, level, tol, max_iter, armijo_c=1e-4, newton_switch=1e-5):
    """Descend over rays from ``base``, keeping each iterate at its ray maximum.

    Staying on ray maxima is the pull-back that keeps the iterate on the pass.
    """
    g = fn.g
    _, w, val, gr, mag = _ray_max(fn, base, w0 - base)
    res = fn.residual(gr)
    trace = [fn.trace_row(0, w, val, res)]
    alpha = 1.0
    for it in range(1, max_iter + 1):
        if res <= tol:
            return w, res, trace, True
        if res <= newton_switch:
            try:
                u, res_n, _ = newton_polish(g, fn.k, fn.spec, w, tol)
                trace.append(fn.trace_row(len(trace), u, fn.value(u), res_n))
                return u, res_n, trace, True
            except Nonconvergence:
                newton_switch = 0.0
        if level > 0 and val < 0.9 * level:
            raise _PullBack()
        d = fn.direction(w, gr)
        slope = float(gr @ d)
        step = alpha
        while True:
            try:
                _, w_t, val_t, gr_t, mag_t = _ray_max(fn, base, w + step * d - base)
                res_t = fn.residual(gr_t)
                if _accept(val_t, val, slope, step, armijo_c, max(mag, mag_t), res_t, res):
                    break
            except _PullBack:
                pass
            step *= 0.5
            if step < 1e-14:
                return w, res, trace, False
        alpha = fn.bb_step(w_t - w, gr_t - gr, min(1.0, 2.0 * step))
        w, val, gr, mag, res = w_t, val_t, gr_t, mag_t, res_t
        trace.append(fn.trace_row(it, w, val, res))
    return w, res, trace, res <= tol


def mountain_pass(g, k, spec, end0, end1, m: int = 21, tol: float = 1e-8, max_iter: int = 2000,
                  string_sweeps: int = 200, string_tol: float = 1e-4) -> MountainPassResult:
    """Mountain-pass critical point of Phi_mode between ``end0`` and ``end1``.

    ``end0`` should be the local minimizer (rays of the refinement start there).
    The returned path is the relaxed string with its highest node replaced by
    the refined critical point, and ``level`` is the largest value on it.
    """
    if m < 5 or m % 2 == 0:
        raise ValueError("path node count m must be odd and >= 5")
    fn = Functional(g, k, spec)
    end0 = np.asarray(end0, dtype=float)
    end1 = np.asarray(end1, dtype=float)
    ts = np.linspace(0.0, 1.0, m)
    nodes = (1.0 - ts)[:, None] * end0 + ts[:, None] * end1
    low = end1 if fn.value(end1) <= fn.value(end0) else end0
    refined = False
    iterations = 0
    while True:
        nodes, vals, sweeps = _relax_string(fn, nodes, string_sweeps, string_tol)
        iterations += sweeps
        jmax = int(np.argmax(vals))
        level = float(vals[jmax])
        if jmax in (0, nodes.shape[0] - 1):
            cp = make_critical_point(g, k, spec, nodes[jmax], tol, label="path endpoint")
            return MountainPassResult(endpoint_low=low, level=level, path=list(nodes), critical=cp,
                                      iterations=iterations, converged=cp.converged,
                                      refined=refined, endpoint_max=True)
        try:
            w, res, trace, ok = _ray_refine(fn, end0, nodes[jmax], level, tol, max_iter)
        except _PullBack:
            if refined:
                w, ok, trace = nodes[jmax], False, []
            else:
                mid = 0.5 * (nodes[1:] + nodes[:-1])
                fine = np.empty((2 * nodes.shape[0] - 1, g.n))
                fine[0::2], fine[1::2] = nodes, mid
                nodes, refined = fine, True
                continue
        iterations += len(trace)
        cp = make_critical_point(g, k, spec, w, tol, label="mountain pass", trace=trace)
        cp.converged = ok and cp.residual <= tol
        nodes[jmax] = cp.state
        vals[jmax] = cp.value
        level = float(np.max(vals))
        cp.level = level
        return MountainPassResult(endpoint_low=low, level=level, path=list(nodes), critical=cp,
                                  iterations=iterations, converged=cp.converged, refined=refined)


# -- constant sign solutions -----------------------------------------------------

@dataclass
class ConstantSignRun:
    plus: CriticalPoint
    minus: CriticalPoint
    mp_plus: MountainPassResult
    mp_minus: MountainPassResult
    low_plus: np.ndarray
    low_minus: np.ndarray


def _sign_checks(g, k, spec_full, cp, sign, tol, sign_tol):
    u = cp.state
    scale = float(np.max(np.abs(u)))
    wrong = np.maximum(-sign * u, 0.0)
    if scale == 0.0 or float(np.max(wrong)) > sign_tol * scale:
        cp.defects.append("sign cleanup failed")
    ratio = float(np.min(sign * u / k.ds))
    if not ratio > 0:
        cp.defects.append("Hopf ratio not positive")
    full = make_critical_point(g, k, spec_full, u, 2.0 * tol)
    cp.residual = full.residual
    cp.value = full.value
    cp.sign_class, cp.hopf_ratio = full.sign_class, full.hopf_ratio
    if not cp.value > 0:
        cp.defects.append("Phi not positive")
    if full.residual > 2.0 * tol:
        cp.defects.append("full-Phi residual above 2 tol")
        cp.converged = False


def solve_constant_sign(g, k, spec_full, tol: float = 1e-8, e1=None, m: int = 21, max_iter: int = 2000,
                        sign_tol: float = 1e-6, full_result: bool = False):
    """u_+ and u_- from the Phi_+ and Phi_- mountain passes between 0 and a low point.

    Returns ``(u_plus, u_minus)`` or, with ``full_result``, a :class:`ConstantSignRun`.
    """
    if spec_full.mode != "full":
        raise ValueError("solve_constant_sign expects the full reaction")
    if e1 is None:
        from fracp.eigen import principal_eigenpair

        e1 = principal_eigenpair(g, k).e1
    zero = np.zeros(g.n)
    out = {}
    for mode, sign in (("plus", 1.0), ("minus", -1.0)):
        spec = with_mode(spec_full, mode)
        low, _ = find_low_point(g, k, spec, sign * np.asarray(e1))
        mp = mountain_pass(g, k, spec, zero, low, m=m, tol=tol, max_iter=max_iter)
        cp = mp.critical
        cp.label = f"u_{mode}"
        _sign_checks(g, k, spec_full, cp, sign, tol, sign_tol)
        out[mode] = (cp, mp, low)
    run = ConstantSignRun(plus=out["plus"][0], minus=out["minus"][0], mp_plus=out["plus"][1],
                          mp_minus=out["minus"][1], low_plus=out["plus"][2], low_minus=out["minus"][2])
    if full_result:
        return run
    return run.plus, run.minus


# -- third solution --------------------------------------------------------------

def relative_distance(g, u, w, scale) -> float:
    return l2_norm(g, np.asarray(u) - np.asarray(w)) / scale


def is_distinct(g, u, known, scale, threshold: float = 1e-2) -> bool:
    return all(relative_distance(g, u, w, scale) > threshold for w in known)


def random_sign_changing_state(rng, g, k, scale, smoothing: float = 1.0 / 12.0):
    """Smoothed white noise times d^s, sign-changing, with L^2 norm ``scale``."""
    while True:
        z = gaussian_filter1d(rng.standard_normal(g.n), sigma=max(1.0, smoothing * g.n), mode="constant")
        z = z * k.ds
        if np.any(z > 0) and np.any(z < 0):
            return z * (scale / l2_norm(g, z))


def _nodal_project(fn, v, ab=(1.0, 1.0)):
    """Scale positive and negative parts separately to maximize Phi(a v+ - b v-)."""
    vp, vm = np.maximum(v, 0.0), np.maximum(-v, 0.0)
    if not np.any(vp) or not np.any(vm):
        return None

    def neg(x):
        a, b = np.exp(x)
        val, gr, _ = fn.evaluate(a * vp - b * vm)
        return -val, -np.array([a * float(gr @ vp), -b * float(gr @ vm)])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = minimize(neg, np.log(np.asarray(ab, dtype=float)), jac=True, method="BFGS",
                       options={"gtol": 1e-13, "maxiter": 200})
    a, b = np.exp(sol.x)
    if not (np.isfinite(a) and np.isfinite(b)) or -sol.fun <= 0:
        return None
    return a * vp - b * vm


def _nodal_descent(fn, v0, tol, max_iter, known, armijo_c=1e-4, newton_switch=1e-5):
    """Steepest descent on the set where both signed parts sit at their ray maxima."""
    g = fn.g
    w = _nodal_project(fn, v0)
    if w is None:
        return None, math.inf, "projection failed", []
    val, gr, mag = fn.evaluate(w)
    res = fn.residual(gr)
    trace = [fn.trace_row(0, w, val, res)]
    alpha = 1.0
    for it in range(1, max_iter + 1):
        if res <= tol:
            return w, res, "nodal descent", trace
        if res <= newton_switch:
            try:
                u, r, _ = newton_polish(g, fn.k, fn.spec, w, tol, known=known)
                trace.append(fn.trace_row(it, u, fn.value(u), r))
                return u, r, "nodal descent + deflated Newton", trace
            except Nonconvergence:
                newton_switch = 0.0
        d = fn.direction(w, gr)
        slope = float(gr @ d)
        step = alpha
        while True:
            t = _nodal_project(fn, w + step * d)
            if t is not None:
                val_t, gr_t, mag_t = fn.evaluate(t)
                res_t = fn.residual(gr_t)
                if _accept(val_t, val, slope, step, armijo_c, max(mag, mag_t), res_t, res):
                    break
            step *= 0.5
            if step < 1e-14:
                return w, res, "nodal descent stalled", trace
        alpha = fn.bb_step(t - w, gr_t - gr, min(1.0, 2.0 * step))
        w, val, gr, mag, res = t, val_t, gr_t, mag_t, res_t
        trace.append(fn.trace_row(it, w, val, res))
    return w, res, "nodal descent max_iter", trace


def _multistart_one(g, k, spec, v0, tol, max_iter, known):
    fn = Functional(g, k, spec)
    u, res, how, trace = _nodal_descent(fn, v0, tol, max_iter, known)
    if u is None or res > tol:
        try:
            u, res, _ = newton_polish(g, k, spec, v0 if u is None else u, tol, known=known)
            how = "deflated Newton"
            trace.append(fn.trace_row(len(trace), u, fn.value(u), res))
        except Nonconvergence:
            pass
    return u, res, how, trace


def third_solution(g, k, spec_full, u_plus, u_minus, tol: float = 1e-8,
                   multistart_cfg: MultistartConfig | None = None, log=None) -> CriticalPoint:
    """A critical point of the full Phi distinct from 0, u_+ and u_-.

    Strategy A: mountain pass between u_+ and u_-. Strategy B: seeded
    multistart from random sign-changing states. Raises
    :class:`NoThirdSolution` when both come back empty; this never asserts
    that no further solution exists.
    """
    cfg = multistart_cfg or MultistartConfig()
    up = getattr(u_plus, "state", u_plus)
    um = getattr(u_minus, "state", u_minus)
    known = [np.zeros(g.n), np.asarray(up), np.asarray(um)]
    scale = l2_norm(g, up)
    if scale == 0.0:
        raise ValueError("u_plus must be nonzero")
    attempts = []

    def accept(u, res, label):
        if u is None or res > tol:
            return None
        if not is_distinct(g, u, known, scale):
            return None
        cp = make_critical_point(g, k, spec_full, u, tol, label=label)
        return cp if cp.residual <= tol else None

    if cfg.strategy_a:
        try:
            mp = mountain_pass(g, k, spec_full, known[1], known[2], m=cfg.path_nodes, tol=tol,
                               max_iter=cfg.max_iter)
            cp = accept(mp.critical.state, mp.critical.residual, "strategy A")
            how = "path maximum at an endpoint" if mp.endpoint_max else "mountain pass"
            attempts.append(f"A: {how}, residual {mp.critical.residual:.3e}")
            if cp is not None:
                cp.level, cp.trace, cp.notes = mp.level, mp.critical.trace, attempts
                return cp
        except SolverError as exc:
            attempts.append(f"A: {exc}")
    rng = np.random.default_rng(np.uint64(cfg.seed))
    starts = [random_sign_changing_state(rng, g, k, scale, cfg.smoothing) for _ in range(cfg.count)]
    workers = max(1, int(cfg.workers))
    for lo in range(0, len(starts), workers):
        chunk = list(range(lo, min(lo + workers, len(starts))))
        if workers == 1:
            results = [_multistart_one(g, k, spec_full, starts[i], tol, cfg.max_iter, known) for i in chunk]
        else:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(lambda i: _multistart_one(g, k, spec_full, starts[i], tol,
                                                                cfg.max_iter, known), chunk))
        for i, (u, res, how, trace) in zip(chunk, results):
            attempts.append(f"B{i}: {how}, residual {res:.3e}")
            if log:
                log(attempts[-1])
            cp = accept(u, res, f"strategy B start {i} ({how})")
            if cp is not None:
                cp.trace, cp.notes = trace, attempts
                return cp
    raise NoThirdSolution("no third solution found at this resolution", trace=attempts)
