"""Global solver for the trust-region subproblem.

Minimizes ``m(s) = g's + 0.5 s'Hs`` subject to ``||s|| <= delta`` for a
symmetric, possibly indefinite ``H``. A step ``s*`` is a global minimizer if
and only if there is ``lam >= 0`` with

1) (H + lam I) s* = -g
2) lam (delta - ||s*||) = 0
3) H + lam I positive semidefinite

The multiplier is found from the eigendecomposition of ``H`` by a bracketed
root search on the secular equation ``1/||s(lam)|| = 1/delta``. When ``g`` has
no component along the eigenspace of the most negative eigenvalue (the hard
case) the step is completed with a boundary eigenvector component.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .errors import DFOTRValidationError, NonFiniteInputError

logger = logging.getLogger(__name__)


class TrustRegionSolution(NamedTuple):
    step: np.ndarray
    predicted_reduction: float
    multiplier: float
    hard_case: bool


def _step_for(lam: float, eigvals: np.ndarray, ghat: np.ndarray) -> np.ndarray:
    return -ghat / (eigvals + lam)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(v) > 1e-14)
    if nonzero.size and v[nonzero[0]] < 0:
        return -v
    return v


def solve_trust_region(g: np.ndarray, H: np.ndarray, delta: float) -> TrustRegionSolution:
    """Solve ``min g's + 0.5 s'Hs  s.t. ||s|| <= delta`` globally.

    Args:
        g: Model gradient, shape ``(d,)``.
        H: Symmetric model Hessian, shape ``(d, d)``.
        delta: Trust-region radius.

    Returns:
        TrustRegionSolution with the step, the predicted reduction ``-m(s*)``,
        the multiplier ``lam`` of the optimality conditions, and whether the
        hard case occurred.

    Raises:
        NonFiniteInputError: If ``g``, ``H`` or ``delta`` contain NaN/Inf.
        DFOTRValidationError: If ``delta <= 0`` or the shapes disagree.
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    H = np.asarray(H, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H)) and np.isfinite(delta)):
        raise NonFiniteInputError("trust-region subproblem inputs must be finite")
    if delta <= 0:
        raise DFOTRValidationError(f"delta must be positive, got {delta}")
    d = g.size
    if H.shape != (d, d):
        raise DFOTRValidationError(f"Hessian shape {H.shape} does not match d={d}")

    H = 0.5 * (H + H.T)
    eigvals, V = eigh(H)
    ghat = V.T @ g
    gnorm = float(np.linalg.norm(g))
    lam_min = float(eigvals[0])
    hscale = max(1.0, float(np.max(np.abs(eigvals))))
    eig_tol = 1e-12 * hscale
    g_tol = 1e-12 * max(1.0, gnorm)

    # Interior Newton step when H is positive definite.
    if lam_min > eig_tol:
        s_hat = _step_for(0.0, eigvals, ghat)
        if np.linalg.norm(s_hat) <= delta:
            return _finish(V @ s_hat, g, H, 0.0, False)

    lo = max(0.0, -lam_min)
    leading = np.abs(eigvals - lam_min) <= eig_tol
    hard_candidate = lam_min <= eig_tol and np.all(np.abs(ghat[leading]) <= g_tol)

    if hard_candidate:
        # Norm of the step at lam = -lam_min with the leading eigenspace removed.
        denom = eigvals[~leading] + lo
        partial = np.zeros(d)
        partial[~leading] = -ghat[~leading] / denom
        pnorm = float(np.linalg.norm(partial))
        if pnorm <= delta:
            if lam_min >= -eig_tol:
                # Positive semidefinite H: the pseudo-inverse step is optimal.
                return _finish(V @ partial, g, H, 0.0, False)
            z = _canonical_sign(V[:, int(np.flatnonzero(leading)[0])])
            step = _complete_to_boundary(V @ partial, z, delta)
            logger.debug("Trust-region hard case: lam=%.6e", lo)
            return _finish(step, g, H, lo, True)

    def secular(lam: float) -> float:
        return 1.0 / delta - 1.0 / np.linalg.norm(_step_for(lam, eigvals, ghat))

    a = lo
    if np.any(eigvals + a <= 0.0):
        a = lo + max(1e-14 * max(1.0, lo), np.finfo(float).tiny)
    if secular(a) <= 0.0:
        # ||s|| <= delta right next to lo: numerically the hard case.
        partial = V @ _step_for(a, eigvals, ghat)
        if lam_min >= -eig_tol:
            return _finish(partial, g, H, a, False)
        z = _canonical_sign(V[:, 0])
        return _finish(_complete_to_boundary(partial, z, delta), g, H, lo, True)

    hi = _upper_bracket(secular, lo, gnorm / delta)
    lam = brentq(secular, a, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    step = V @ _step_for(lam, eigvals, ghat)
    norm = float(np.linalg.norm(step))
    if norm > delta:
        step *= delta / norm
    return _finish(step, g, H, float(lam), False)


def _upper_bracket(secular, lo: float, width: float) -> float:
    """Return ``hi > lo`` with ``secular(hi) < 0``.

    ``lo + ||g||/delta`` is a bracket in exact arithmetic; rounding can put the
    step norm back onto the boundary, so the bound is pushed out until the
    sign change is visible.
    """
    hi = (lo + width) * (1.0 + 1e-8) + np.finfo(float).tiny
    for _ in range(200):
        if secular(hi) < 0.0:
            return hi
        hi = 2.0 * hi + np.finfo(float).tiny
    raise DFOTRValidationError("could not bracket the trust-region multiplier")


def _complete_to_boundary(p: np.ndarray, z: np.ndarray, delta: float) -> np.ndarray:
    """Return ``p + tau z`` with ``tau >= 0`` and ``||p + tau z|| = delta``."""
    pz = float(p @ z)
    slack = max(delta**2 - float(p @ p), 0.0)
    tau = -pz + np.sqrt(pz**2 + slack)
    return p + tau * z


def _finish(
    step: np.ndarray, g: np.ndarray, H: np.ndarray, lam: float, hard: bool
) -> TrustRegionSolution:
    value = float(g @ step + 0.5 * step @ H @ step)
    return TrustRegionSolution(
        step=step, predicted_reduction=max(0.0, -value), multiplier=lam, hard_case=hard
    )


__all__ = ["TrustRegionSolution", "solve_trust_region"]
