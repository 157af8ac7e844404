"""Principal eigenpair of the discrete fractional p-Laplacian.

Minimizes the Rayleigh quotient E(u) / (h sum |u_i|^p) by preconditioned
gradient descent with Armijo backtracking (Barzilai-Borwein step lengths when
the metric is fixed). After every step the iterate is replaced by its modulus,
which never raises the quotient, and renormalized in L^p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from fracp.energy import Preconditioner, apply_operator, phi_p, seminorm_p

# relative slack for comparing quotients that agree to rounding
ROUNDOFF = 16.0 * np.finfo(float).eps


class EigenNonconvergence(RuntimeError):
    def __init__(self, message, state, residual, history):
        super().__init__(message)
        self.state = state
        self.residual = residual
        self.history = history


@dataclass
class EigenPair:
    lambda1: float
    e1: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list, repr=False)


def lp_mass(g, u) -> float:
    return g.h * float(np.sum(np.abs(u) ** g.p))


def rayleigh(g, k, u) -> float:
    u = np.asarray(u, dtype=float)
    mass = lp_mass(g, u)
    if mass == 0.0:
        raise ValueError("Rayleigh quotient undefined at u = 0")
    return seminorm_p(g, k, u) / mass


def normalize(g, u):
    return u / lp_mass(g, u) ** (1.0 / g.p)


def eigen_residual(g, k, u, lam) -> float:
    r = apply_operator(g, k, u) - lam * g.h * phi_p(u, g.p)
    return float(np.linalg.norm(r) / np.sqrt(g.n))


def principal_eigenpair(g, k, tol: float = 1e-10, max_iter: int = 5000, u0=None,
                        armijo_c: float = 1e-4) -> EigenPair:
    """Descend the Rayleigh quotient from ``u0`` (default: the boundary weight d^s).

    Stops once a step lowers the quotient by less than ``tol`` (relative) and
    the eigen-residual is at most ``tol``. The recorded quotient history is
    non-increasing up to rounding.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p, h = g.p, g.h
    prec = Preconditioner(g, k)
    u = np.abs(np.array(k.ds if u0 is None else u0, dtype=float))
    if not np.any(u):
        raise ValueError("initial guess must be nonzero")
    u = normalize(g, u)
    lam = rayleigh(g, k, u)
    res = eigen_residual(g, k, u, lam)
    history = [lam]
    # mass is 1 after normalization, so grad R = p (A u - lam h phi_p(u))
    grad = p * (apply_operator(g, k, u) - lam * h * phi_p(u, p))
    alpha = 1.0 / p
    for it in range(1, max_iter + 1):
        prec.update(u)
        d = -prec.solve(grad)
        slope = float(grad @ d)
        step = alpha
        while True:
            trial = np.abs(u + step * d)
            if np.any(trial):
                trial = normalize(g, trial)
                lam_t = rayleigh(g, k, trial)
                res_t = eigen_residual(g, k, trial, lam_t)
                if lam_t <= lam + armijo_c * step * slope:
                    break
                # below rounding the quotient cannot rank trials; use the residual
                if lam_t <= lam * (1.0 + ROUNDOFF) and res_t < res:
                    break
            step *= 0.5
            if step < 1e-14:
                raise EigenNonconvergence(
                    f"line search stalled at iteration {it} (residual {res:.3e})", u, res, history)
        decrease = lam - lam_t
        grad_t = p * (apply_operator(g, k, trial) - lam_t * h * phi_p(trial, p))
        if prec.adaptive:
            alpha = 1.0 / p
        else:
            s = trial - u
            sy = float(s @ (grad_t - grad))
            alpha = float(s @ (k.form2 @ s)) / sy if sy > 0 else 2.0 * step
        u, lam, grad, res = trial, lam_t, grad_t, res_t
        history.append(lam)
        if decrease < tol * max(1.0, lam) and res <= tol:
            return EigenPair(lambda1=lam, e1=u, residual=res, iterations=it, history=history)
    raise EigenNonconvergence(f"principal eigenpair not converged in {max_iter} iterations "
                              f"(residual {res:.3e})", u, res, history)


def dense_spectrum_p2(g, k, count: int, vectors: bool = False):
    """Smallest ``count`` eigenvalues of B v = lambda h v (ascending)."""
    if g.p != 2.0:
        raise ValueError("dense spectrum only defined at p = 2")
    if not 1 <= count <= g.n:
        raise ValueError(f"need 1 <= count <= n, got {count}")
    vals, vecs = sla.eigh(k.form2, subset_by_index=[0, count - 1])
    vals = vals / g.h
    if vectors:
        return vals, vecs
    return vals


def spectral_gap_p2(g, k) -> float:
    vals = dense_spectrum_p2(g, k, 2)
    return float(vals[1] - vals[0])
