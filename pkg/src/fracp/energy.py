"""Discrete Gagliardo energy, the fractional p-Laplacian, and the functionals
Phi, Phi_+ and Phi_- with their gradients.

With the pair weights W and exterior weights rho of :mod:`fracp.grid`,

    E(u)   = sum_{i != j} W_ij |u_i - u_j|^p + 2 h sum_i rho_i |u_i|^p
    A(u)_i = 2 sum_j W_ij phi_p(u_i - u_j) + 2 h rho_i phi_p(u_i)   (= grad E/p)
    Phi(u) = E(u)/p - h sum_i F(u_i)

where phi_p(t) = |t|^(p-2) t. At p = 2 everything goes through the dense
form matrix ``k.form2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from fracp.reaction import eval_F, eval_f


@dataclass(frozen=True)
class EnergyReport:
    value: float
    grad_norm: float
    cerami: float
    seminorm_p: float


def phi_p(t, p: float):
    return np.abs(t) ** (p - 1.0) * np.sign(t)


def _check(g, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n,):
        raise ValueError(f"state has shape {u.shape}, grid expects ({g.n},)")
    return u


def seminorm_p(g, k, u) -> float:
    # sum of nonnegative terms: no cancellation, unlike u @ form2 @ u
    u = _check(g, u)
    p = g.p
    diff = np.abs(u[:, None] - u[None, :])
    pair = diff * diff if p == 2.0 else diff ** p
    interior = float(np.sum(k.W * pair))
    return interior + 2.0 * g.h * float(np.sum(k.rho * np.abs(u) ** p))


def apply_operator(g, k, u) -> np.ndarray:
    """Exact gradient of E(u)/p."""
    u = _check(g, u)
    p = g.p
    if p == 2.0:
        return k.form2 @ u
    diff = u[:, None] - u[None, :]
    return 2.0 * np.sum(k.W * phi_p(diff, p), axis=1) + 2.0 * g.h * k.rho * phi_p(u, p)


def phi(g, k, spec, u) -> float:
    u = _check(g, u)
    return seminorm_p(g, k, u) / g.p - g.h * float(np.sum(eval_F(spec, u)))


def grad_phi(g, k, spec, u) -> np.ndarray:
    u = _check(g, u)
    return apply_operator(g, k, u) - g.h * eval_f(spec, u)


def value_and_grad(g, k, spec, u):
    """Phi and its gradient sharing one pass over the pair matrix."""
    u = _check(g, u)
    p, h = g.p, g.h
    if p == 2.0:
        Au = k.form2 @ u
        E = seminorm_p(g, k, u)
    else:
        diff = u[:, None] - u[None, :]
        ad = np.abs(diff)
        pw = ad ** (p - 1.0)
        E = float(np.sum(k.W * pw * ad)) + 2.0 * h * float(np.sum(k.rho * np.abs(u) ** p))
        Au = 2.0 * np.sum(k.W * pw * np.sign(diff), axis=1) + 2.0 * h * k.rho * phi_p(u, p)
    val = E / p - h * float(np.sum(eval_F(spec, u)))
    return val, Au - h * eval_f(spec, u)


def residual(g, k, spec, u) -> float:
    """Euclidean norm of grad Phi divided by sqrt(n)."""
    gr = grad_phi(g, k, spec, u)
    return float(np.linalg.norm(gr) / np.sqrt(g.n))


def cerami_quantity(g, k, spec, u) -> float:
    E = seminorm_p(g, k, u)
    return (1.0 + max(E, 0.0) ** (1.0 / g.p)) * residual(g, k, spec, u)


def energy_report(g, k, spec, u) -> EnergyReport:
    E = seminorm_p(g, k, u)
    val, gr = value_and_grad(g, k, spec, u)
    gn = float(np.linalg.norm(gr) / np.sqrt(g.n))
    return EnergyReport(value=val, grad_norm=gn, cerami=(1.0 + E ** (1.0 / g.p)) * gn, seminorm_p=E)


def hessian(g, k, spec, u) -> np.ndarray:
    """Hessian of Phi, defined for p >= 2 (p = 2 is the exact C^2 case)."""
    u = _check(g, u)
    p, h = g.p, g.h
    if p < 2.0:
        raise ValueError("Phi is only C^1 for p < 2; no Hessian")
    from fracp.reaction import eval_df

    if p == 2.0:
        H = np.array(k.form2, dtype=float)
    else:
        ad = np.abs(u[:, None] - u[None, :]) ** (p - 2.0)
        M = 2.0 * (p - 1.0) * k.W * ad
        H = -M
        H[np.diag_indices(g.n)] = M.sum(axis=1) + 2.0 * (p - 1.0) * h * k.rho * np.abs(u) ** (p - 2.0)
    H[np.diag_indices(g.n)] -= h * eval_df(spec, u)
    return H


class Preconditioner:
    """Riesz-map preconditioner for gradient steps.

    For p >= 2 this is the fixed p = 2 form matrix. For 1 < p < 2 it is the
    lagged-diffusivity matrix (p-1) * [weighted graph Laplacian + tail], with
    pair weights W_ij max(|u_i - u_j|, eps)^(p-2) frozen at the current
    iterate. Only the metric depends on u; no second derivative is used.
    """

    def __init__(self, g, k, eps_rel: float = 1e-15):
        self.g, self.k = g, k
        self.eps_rel = eps_rel
        self.adaptive = g.p < 2.0
        self._fixed = None if self.adaptive else sla.cho_factor(k.form2)
        self._factor = self._fixed

    def matrix(self, u, eps_rel: float | None = None) -> np.ndarray:
        g, k, p = self.g, self.k, self.g.p
        if not self.adaptive:
            return k.form2
        scale = max(float(np.max(np.abs(u))), 1e-300)
        eps = (self.eps_rel if eps_rel is None else eps_rel) * scale
        ad = np.maximum(np.abs(u[:, None] - u[None, :]), eps) ** (p - 2.0)
        Wl = 2.0 * (p - 1.0) * k.W * ad
        M = -Wl
        M[np.diag_indices(g.n)] = Wl.sum(axis=1) + 2.0 * (p - 1.0) * g.h * k.rho * np.maximum(np.abs(u), eps) ** (p - 2.0)
        return M

    def update(self, u) -> None:
        if not self.adaptive:
            return
        eps = self.eps_rel
        while True:
            try:
                self._factor = sla.cho_factor(self.matrix(u, eps))
                return
            except sla.LinAlgError:
                if eps > 1e-3:
                    raise
                eps *= 1e3

    def solve(self, r) -> np.ndarray:
        return sla.cho_solve(self._factor, r)
