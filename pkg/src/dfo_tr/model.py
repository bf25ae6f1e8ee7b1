"""Quadratic interpolation models built from the interpolation set."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import InterpolationSet, as_point, is_duplicate
from .errors import DegenerateGeometryError, DFOTRValidationError, EmptySetError

logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e14

Regime = Literal["linear", "min_frobenius", "full"]


@dataclass(frozen=True)
class QuadraticModel:
    """Local surrogate ``f + g's + 0.5 s'Hs`` with ``s = w - center``."""

    center: np.ndarray
    f: float
    g: np.ndarray
    H: np.ndarray
    regime: Regime = "full"

    @property
    def dim(self) -> int:
        return self.center.size

    def __call__(self, w: np.ndarray) -> float:
        return evaluate_model(self, w)


def evaluate_model(model: QuadraticModel, w: np.ndarray) -> float:
    """Value of the model at ``w``.

    Raises:
        DFOTRValidationError: If ``w`` does not match the model dimension.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != model.dim:
        raise DFOTRValidationError(
            f"dimension mismatch: model has {model.dim}, point has {w.size}"
        )
    s = w - model.center
    return float(model.f + model.g @ s + 0.5 * s @ model.H @ s)


def _quadratic_terms(Y: np.ndarray) -> np.ndarray:
    """Monomial columns 0.5*y_k^2 (diagonal) and y_k*y_l (k < l)."""
    d = Y.shape[1]
    cols = []
    for k in range(d):
        cols.append(0.5 * Y[:, k] ** 2)
        for col in range(k + 1, d):
            cols.append(Y[:, k] * Y[:, col])
    return np.column_stack(cols) if cols else np.empty((Y.shape[0], 0))


def _unpack_hessian(h: np.ndarray, d: int) -> np.ndarray:
    H = np.zeros((d, d))
    idx = 0
    for k in range(d):
        H[k, k] = h[idx]
        idx += 1
        for col in range(k + 1, d):
            H[k, col] = H[col, k] = h[idx]
            idx += 1
    return H


def _linear_fit(Y: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g, *_ = np.linalg.lstsq(Y, r, rcond=None)
    return g, np.zeros((Y.shape[1], Y.shape[1]))


def _min_frobenius_fit(Y: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ||H||_F subject to g'y_i + 0.5 y_i'Hy_i = r_i.

    The Hessian is ``sum_i lambda_i y_i y_i'`` where ``(lambda, g)`` solves
    ``[[A, Y], [Y', 0]] [lambda; g] = [r; 0]`` with ``A_ij = 0.5 (y_i'y_j)^2``.
    Rank-deficient systems take the minimum-norm least-squares solution.
    """
    n, d = Y.shape
    A = 0.5 * (Y @ Y.T) ** 2
    kkt = np.zeros((n + d, n + d))
    kkt[:n, :n] = A
    kkt[:n, n:] = Y
    kkt[n:, :n] = Y.T
    rhs = np.concatenate([r, np.zeros(d)])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    lam, g = sol[:n], sol[n:]
    H = (Y.T * lam) @ Y
    return g, H


def _full_fit(Y: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, Regime]:
    d = Y.shape[1]
    M = np.hstack([Y, _quadratic_terms(Y)])
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
        # Drop the point carrying the near-null left singular direction.
        U, _, _ = np.linalg.svd(M)
        offending = int(np.argmax(np.abs(U[:, -1])))
        logger.warning(
            "Singular full interpolation system (cond=%.3e); "
            "dropping point %d and falling back to minimum-Frobenius model",
            cond,
            offending,
        )
        keep = np.arange(Y.shape[0]) != offending
        g, H = _min_frobenius_fit(Y[keep], r[keep])
        return g, H, "min_frobenius"
    if M.shape[0] == M.shape[1]:
        coef = np.linalg.solve(M, r)
    else:
        coef, *_ = np.linalg.lstsq(M, r, rcond=None)
    return coef[:d], _unpack_hessian(coef[d:], d), "full"


def build_model(
    points: InterpolationSet,
    center: np.ndarray,
    center_value: float,
    scale: float | None = None,
) -> QuadraticModel:
    """Fit the quadratic surrogate around ``center``.

    The regime follows the set size ``m`` (the center counted once):
    ``m < d + 1`` gives a minimum-norm linear model, ``m`` below full quadratic
    capacity gives minimum-Frobenius-norm Hessian interpolation, and a full set
    solves the monomial system. Displacements are divided by ``scale`` (the
    trust-region radius when the solver calls this; the largest displacement
    otherwise) before solving.

    Raises:
        EmptySetError: If no point besides the center is available.
        DegenerateGeometryError: If all displacements vanish numerically.
    """
    d = points.dim
    center = as_point(center, d)
    X = points.points()
    F = points.values()
    usable = np.array([not is_duplicate(p, center) for p in X], dtype=bool)
    if not usable.any():
        raise EmptySetError("interpolation set holds no point besides the center")

    Y = X[usable] - center
    r = F[usable] - center_value
    tol = 1e-12 * max(1.0, float(np.max(np.abs(center))))
    if float(np.max(np.abs(Y))) <= tol:
        raise DegenerateGeometryError("all interpolation displacements are zero")

    if scale is None or not scale > 0.0:
        scale = float(np.max(np.linalg.norm(Y, axis=1)))
    Yh = Y / scale

    m = Y.shape[0] + 1
    capacity = (d + 1) * (d + 2) // 2
    regime: Regime
    if m < d + 1:
        g_hat, H_hat = _linear_fit(Yh, r)
        regime = "linear"
    elif m < capacity:
        g_hat, H_hat = _min_frobenius_fit(Yh, r)
        regime = "min_frobenius"
    else:
        g_hat, H_hat, regime = _full_fit(Yh, r)

    g = g_hat / scale
    H = H_hat / scale**2
    H = 0.5 * (H + H.T)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise DegenerateGeometryError("interpolation system produced non-finite model")

    logger.debug("Built %s model from m=%d points (scale=%.3e)", regime, m, scale)
    return QuadraticModel(center=center, f=float(center_value), g=g, H=H, regime=regime)


__all__ = ["QuadraticModel", "build_model", "evaluate_model"]
