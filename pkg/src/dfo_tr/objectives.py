"""Objective functions: empirical and expected AUC, benchmarks, pairwise hinge loss."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import FunctionObjective, as_point
from .data import LabeledDataset, subsample_classes
from .errors import DegenerateDirectionError, DFOTRValidationError

logger = logging.getLogger(__name__)

DEGENERATE_VARIANCE = 1e-300
PSD_TOL = 1e-10


def _class_scores(w: np.ndarray, data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    data.require_both_classes()
    return data.scores(as_point(w, data.dim))


def auc(w: np.ndarray, data: LabeledDataset) -> float:
    """Fraction of positive-negative pairs with ``w'x+ > w'x-``.

    Ties count 0. Negative scores are sorted once and each positive score is
    located by binary search, so the pair count is exact in O(N log N).

    Raises:
        EmptyClassError: If either class is empty.
    """
    pos, neg = _class_scores(w, data)
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    wins = int(np.sum(below, dtype=np.int64))
    return wins / (pos.size * neg.size)


@dataclass(frozen=True, eq=False)
class GaussianPairSpec:
    """Joint normal law of a positive/negative pair ``(X1, X2)``.

    ``Sigma21`` is ``Sigma12.T``; the assembled 2d x 2d covariance must be
    positive semidefinite.
    """

    mu1: np.ndarray
    mu2: np.ndarray
    Sigma11: np.ndarray
    Sigma22: np.ndarray
    Sigma12: np.ndarray | None = None

    def __post_init__(self):
        mu1 = np.asarray(self.mu1, dtype=float).reshape(-1)
        mu2 = np.asarray(self.mu2, dtype=float).reshape(-1)
        d = mu1.size
        if mu2.size != d:
            raise DFOTRValidationError(f"mean lengths differ: {d} vs {mu2.size}")
        blocks = {}
        for name in ("Sigma11", "Sigma22", "Sigma12"):
            value = getattr(self, name)
            if value is None:
                block = np.zeros((d, d))
            else:
                block = np.atleast_2d(np.asarray(value, dtype=float))
            if block.shape != (d, d):
                raise DFOTRValidationError(f"{name} has shape {block.shape}, expected {(d, d)}")
            blocks[name] = block
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)
        for name, block in blocks.items():
            object.__setattr__(self, name, block)

        cov = self.covariance
        if not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T, atol=PSD_TOL):
            raise DFOTRValidationError("joint covariance must be finite and symmetric")
        lowest = float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[0])
        if lowest < -PSD_TOL * max(1.0, float(np.max(np.abs(cov)))):
            raise DFOTRValidationError(
                f"joint covariance is not positive semidefinite (min eigenvalue {lowest:.3e})"
            )

    @property
    def dim(self) -> int:
        return self.mu1.size

    @property
    def covariance(self) -> np.ndarray:
        return np.block([[self.Sigma11, self.Sigma12], [self.Sigma12.T, self.Sigma22]])

    @property
    def mean_gap(self) -> np.ndarray:
        return self.mu1 - self.mu2

    @property
    def difference_covariance(self) -> np.ndarray:
        """Covariance of ``X1 - X2``."""
        return self.Sigma11 + self.Sigma22 - self.Sigma12 - self.Sigma12.T


def _standardized_margin(w: np.ndarray, spec: GaussianPairSpec) -> tuple[float, float, np.ndarray]:
    w = as_point(w, spec.dim)
    C = spec.difference_covariance
    Cw = C @ w
    var = float(w @ Cw)
    if not var > DEGENERATE_VARIANCE:
        raise DegenerateDirectionError(
            f"variance of w'(X1 - X2) is {var:.3e}; expected AUC is undefined"
        )
    mu = float(w @ spec.mean_gap)
    return mu, math.sqrt(var), Cw


def expected_auc_gaussian(w: np.ndarray, spec: GaussianPairSpec) -> float:
    """Expected AUC ``Phi(mu_Z / sigma_Z)`` for ``Z = w'(X1 - X2)``.

    Raises:
        DegenerateDirectionError: If ``sigma_Z^2 <= 1e-300`` (``w = 0`` included).
    """
    mu, sigma, _ = _standardized_margin(w, spec)
    return float(0.5 * erfc(-(mu / sigma) / math.sqrt(2.0)))


def expected_auc_gaussian_grad(w: np.ndarray, spec: GaussianPairSpec) -> np.ndarray:
    """Gradient of :func:`expected_auc_gaussian` with respect to ``w``."""
    mu, sigma, Cw = _standardized_margin(w, spec)
    t = mu / sigma
    density = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return density * (spec.mean_gap / sigma - mu * Cw / sigma**3)


def sample_gaussian_pairs(
    spec: GaussianPairSpec, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` joint pairs; returns arrays ``X1`` and ``X2`` of shape ``(n, d)``."""
    joint = rng.multivariate_normal(
        np.concatenate([spec.mu1, spec.mu2]), spec.covariance, size=n, method="eigh"
    )
    return joint[:, : spec.dim], joint[:, spec.dim :]


def sample_gaussian_dataset(
    spec: GaussianPairSpec, n_pos: int, n_neg: int, rng: np.random.Generator
) -> LabeledDataset:
    """Draw positives from ``N(mu1, Sigma11)`` and negatives from ``N(mu2, Sigma22)``.

    Classes are drawn independently, so the empirical AUC estimates the
    expected AUC of a spec whose ``Sigma12`` is zero.
    """
    if n_pos < 1 or n_neg < 1:
        raise DFOTRValidationError("both classes need at least one example")
    positives = rng.multivariate_normal(spec.mu1, spec.Sigma11, size=n_pos, method="eigh")
    negatives = rng.multivariate_normal(spec.mu2, spec.Sigma22, size=n_neg, method="eigh")
    return LabeledDataset.from_dense(positives, negatives)


# Benchmarks


def branin(w: np.ndarray) -> float:
    x1, x2 = as_point(w, 2)
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return float((x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10)


def camelback(w: np.ndarray) -> float:
    """Six-hump camel function."""
    x1, x2 = as_point(w, 2)
    return float((4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + (4 * x2**2 - 4) * x2**2)


_HARTMANN_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_HARTMANN_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)
_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def hartmann6(w: np.ndarray) -> float:
    x = as_point(w, 6)
    inner = np.sum(_HARTMANN_A * (x - _HARTMANN_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN_ALPHA * np.exp(-inner)))


@dataclass(frozen=True)
class Benchmark:
    """A benchmark function with its known optimum and reporting checkpoints."""

    name: str
    fn: Callable[[np.ndarray], float]
    dim: int
    f_opt: float
    minimizer: tuple[float, ...]
    box: tuple[tuple[float, float], ...]
    checkpoints: tuple[int, ...]

    @property
    def budget(self) -> int:
        return self.checkpoints[-1]

    def objective(self) -> FunctionObjective:
        return FunctionObjective(self.fn, self.dim, name=self.name)

    def gap(self, value: float) -> float:
        return value - self.f_opt


BENCHMARKS: dict[str, Benchmark] = {
    "branin": Benchmark(
        name="branin",
        fn=branin,
        dim=2,
        f_opt=0.39788735772973816,
        minimizer=(math.pi, 2.275),
        box=((-5.0, 10.0), (0.0, 15.0)),
        checkpoints=(1, 5, 11, 100),
    ),
    "camelback": Benchmark(
        name="camelback",
        fn=camelback,
        dim=2,
        f_opt=-1.0316284534898774,
        minimizer=(0.08984201368301331, -0.7126564032704135),
        box=((-3.0, 3.0), (-2.0, 2.0)),
        checkpoints=(1, 10, 21, 100),
    ),
    "hartmann6": Benchmark(
        name="hartmann6",
        fn=hartmann6,
        dim=6,
        f_opt=-3.32236801141551,
        minimizer=(0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054),
        box=((0.0, 1.0),) * 6,
        checkpoints=(1, 25, 64, 250),
    ),
}


# Pairwise hinge surrogate


def _hinge_terms(
    w: np.ndarray, data: LabeledDataset
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus per-example active-pair counts.

    Pair ``(i, j)`` is active when ``1 - a_i + b_j > 0`` with ``a = X+ w`` and
    ``b = X- w``. Sorting ``b`` and taking suffix sums gives every positive's
    contribution with one binary search; sorting ``a`` does the same for the
    negatives' counts.
    """
    a, b = _class_scores(w, data)
    b_sorted = np.sort(b)
    suffix = np.concatenate([np.cumsum(b_sorted[::-1])[::-1], [0.0]])
    first_active = np.searchsorted(b_sorted, a - 1.0, side="right")
    pos_counts = b.size - first_active
    loss = float(np.sum(pos_counts * (1.0 - a) + suffix[first_active]))
    loss /= a.size * b.size

    a_sorted = np.sort(a)
    neg_counts = np.searchsorted(a_sorted, b + 1.0, side="left")
    return max(loss, 0.0), pos_counts.astype(float), neg_counts.astype(float)


def pairwise_hinge_loss(w: np.ndarray, data: LabeledDataset) -> float:
    """Mean of ``max(0, 1 - w'(x+ - x-))`` over all positive-negative pairs.

    Raises:
        EmptyClassError: If either class is empty.
    """
    loss, _, _ = _hinge_terms(w, data)
    return loss


def pairwise_hinge_grad(w: np.ndarray, data: LabeledDataset) -> np.ndarray:
    """Gradient of :func:`pairwise_hinge_loss` (a subgradient at kinks)."""
    _, pos_counts, neg_counts = _hinge_terms(w, data)
    grad = -(data.positives.T @ pos_counts) + data.negatives.T @ neg_counts
    return np.asarray(grad, dtype=float).reshape(-1) / (data.n_pos * data.n_neg)


def pairwise_hinge_loss_and_grad(w: np.ndarray, data: LabeledDataset) -> tuple[float, np.ndarray]:
    loss, pos_counts, neg_counts = _hinge_terms(w, data)
    grad = -(data.positives.T @ pos_counts) + data.negatives.T @ neg_counts
    return loss, np.asarray(grad, dtype=float).reshape(-1) / (data.n_pos * data.n_neg)


# Objective adapters


class AUCObjective:
    """Empirical AUC of a dataset, optionally estimated on class subsamples.

    The value is maximized; wrap in :class:`dfo_tr.core.Negated` for the solver.
    """

    supports_subsampling = True

    def __init__(self, data: LabeledDataset):
        data.require_both_classes()
        self.data = data

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def class_sizes(self) -> tuple[int, int]:
        return self.data.n_pos, self.data.n_neg

    def evaluate(self, w: np.ndarray) -> float:
        return auc(w, self.data)

    def evaluate_sampled(
        self, w: np.ndarray, sizes: tuple[int, int], rng: np.random.Generator
    ) -> float:
        n_pos, n_neg = sizes
        return auc(w, subsample_classes(self.data, n_pos, n_neg, rng))


class GaussianAUCObjective:
    """Expected AUC under a :class:`GaussianPairSpec`.

    ``degenerate_value``, when set, is returned instead of raising at
    directions with vanishing variance.
    """

    supports_subsampling = False

    def __init__(self, spec: GaussianPairSpec, degenerate_value: float | None = None):
        self.spec = spec
        self.degenerate_value = degenerate_value

    @property
    def dim(self) -> int:
        return self.spec.dim

    def evaluate(self, w: np.ndarray) -> float:
        try:
            return expected_auc_gaussian(w, self.spec)
        except DegenerateDirectionError:
            if self.degenerate_value is None:
                raise
            logger.debug("Degenerate direction; returning %s", self.degenerate_value)
            return self.degenerate_value


__all__ = [
    "AUCObjective",
    "BENCHMARKS",
    "Benchmark",
    "GaussianAUCObjective",
    "GaussianPairSpec",
    "auc",
    "branin",
    "camelback",
    "expected_auc_gaussian",
    "expected_auc_gaussian_grad",
    "hartmann6",
    "pairwise_hinge_grad",
    "pairwise_hinge_loss",
    "pairwise_hinge_loss_and_grad",
    "sample_gaussian_dataset",
    "sample_gaussian_pairs",
]
