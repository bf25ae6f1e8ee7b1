"""Shared domain types and the objective-function contract."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import DFOTRValidationError

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-12


def as_point(coords: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Convert ``coords`` into a validated 1-D float array.

    Raises:
        DFOTRValidationError: If the vector is empty, not finite, or its
            length differs from ``dim``.
    """
    point = np.array(coords, dtype=float).reshape(-1)
    if point.size == 0:
        raise DFOTRValidationError("point must have at least one coordinate")
    if dim is not None and point.size != dim:
        raise DFOTRValidationError(
            f"dimension mismatch: expected {dim}, got {point.size}"
        )
    if not np.all(np.isfinite(point)):
        raise DFOTRValidationError(f"point has non-finite coordinates: {point}")
    return point


def is_duplicate(p: np.ndarray, q: np.ndarray) -> bool:
    """Two points coincide when ||p - q||_inf <= 1e-12 * max(1, ||p||_inf)."""
    scale = max(1.0, float(np.max(np.abs(p))))
    return float(np.max(np.abs(p - q))) <= DUPLICATE_TOL * scale


class EvaluatedPoint(BaseModel):
    """A parameter vector paired with its (possibly averaged) objective value."""

    model_config = ConfigDict(frozen=True)

    coords: tuple[float, ...]
    value: float
    eval_count: int = 1

    @field_validator("coords")
    @classmethod
    def _finite_coords(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not v:
            raise ValueError("coords must not be empty")
        if not all(math.isfinite(c) for c in v):
            raise ValueError("coords must be finite")
        return v

    @field_validator("value")
    @classmethod
    def _finite_value(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"value must be finite, got {v}")
        return v

    @field_validator("eval_count")
    @classmethod
    def _positive_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("eval_count must be at least 1")
        return v

    @classmethod
    def of(cls, point: np.ndarray, value: float, eval_count: int = 1) -> EvaluatedPoint:
        return cls(
            coords=tuple(float(c) for c in point), value=float(value), eval_count=eval_count
        )

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def averaged_with(self, fresh_value: float, rule: str = "running") -> EvaluatedPoint:
        """Fold one more evaluation at the same point into the stored value.

        ``running`` keeps the mean of every evaluation so far; ``pairwise``
        halves the distance to the fresh value.
        """
        if rule == "pairwise":
            value = 0.5 * (self.value + fresh_value)
        else:
            value = (self.value * self.eval_count + fresh_value) / (self.eval_count + 1)
        return self.model_copy(update={"value": value, "eval_count": self.eval_count + 1})


class InterpolationSet:
    """Bounded set of evaluated points feeding the quadratic model.

    Capacity is ``(d + 1)(d + 2) / 2``, the number of coefficients of a full
    quadratic in ``d`` variables. Members are pairwise distinct.
    """

    def __init__(self, dim: int, members: Sequence[EvaluatedPoint] = ()):
        if dim < 1:
            raise DFOTRValidationError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self.capacity = (dim + 1) * (dim + 2) // 2
        self._members: list[EvaluatedPoint] = []
        for member in members:
            if not self.add(member):
                raise DFOTRValidationError(
                    f"duplicate interpolation point {member.coords}"
                )

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[EvaluatedPoint]:
        return iter(self._members)

    def __getitem__(self, index: int) -> EvaluatedPoint:
        return self._members[index]

    @property
    def members(self) -> list[EvaluatedPoint]:
        return list(self._members)

    @property
    def is_full(self) -> bool:
        return len(self._members) >= self.capacity

    def points(self) -> np.ndarray:
        """Member coordinates as an ``(m, d)`` array."""
        if not self._members:
            return np.empty((0, self.dim))
        return np.array([m.coords for m in self._members], dtype=float)

    def values(self) -> np.ndarray:
        return np.array([m.value for m in self._members], dtype=float)

    def index_of(self, point: np.ndarray) -> int | None:
        for i, member in enumerate(self._members):
            if is_duplicate(member.point, point):
                return i
        return None

    def contains(self, point: np.ndarray) -> bool:
        return self.index_of(point) is not None

    def add(self, member: EvaluatedPoint) -> bool:
        """Insert ``member``; returns False for duplicates or when full."""
        if member.dim != self.dim:
            raise DFOTRValidationError(
                f"dimension mismatch: expected {self.dim}, got {member.dim}"
            )
        if self.is_full or self.contains(member.point):
            return False
        self._members.append(member)
        return True

    def replace(self, index: int, member: EvaluatedPoint) -> bool:
        """Put ``member`` at ``index``; returns False if it duplicates another member."""
        for i, other in enumerate(self._members):
            if i != index and is_duplicate(other.point, member.point):
                return False
        self._members[index] = member
        return True

    def update(self, index: int, member: EvaluatedPoint) -> None:
        """Overwrite the stored evaluation at ``index`` (same coordinates)."""
        self._members[index] = member

    def distances(self, center: np.ndarray) -> np.ndarray:
        if not self._members:
            return np.empty(0)
        return np.linalg.norm(self.points() - center, axis=1)

    def farthest_index(self, center: np.ndarray) -> int:
        return int(np.argmax(self.distances(center)))

    def discard_far(self, center: np.ndarray, radius: float, keep: int) -> int:
        """Drop members at distance ``>= radius`` from ``center``.

        The member at ``center`` is never dropped. When fewer than two members
        would survive, the ``keep`` nearest members are retained instead.
        Returns the number of discarded members.
        """
        dist = self.distances(center)
        survivors = [
            m
            for m, r in zip(self._members, dist, strict=True)
            if r < radius or is_duplicate(m.point, center)
        ]
        if len(survivors) < 2:
            order = np.argsort(dist, kind="stable")[:keep]
            survivors = [self._members[i] for i in sorted(order)]
        dropped = len(self._members) - len(survivors)
        self._members = survivors
        return dropped

    def copy(self) -> InterpolationSet:
        clone = InterpolationSet(self.dim)
        clone._members = list(self._members)
        return clone


@dataclass(frozen=True)
class TrustRegionState:
    """Current iterate, radius and counters of a run.

    ``best`` is the lowest value evaluated so far; in the deterministic solver
    it coincides with ``center``.
    """

    center: EvaluatedPoint
    radius: float
    best: EvaluatedPoint
    iteration: int = 0
    evals_used: int = 0
    # Consecutive iterations whose rejected candidate left the set unchanged.
    stalls: int = 0

    def __post_init__(self):
        if not self.radius > 0.0:
            raise DFOTRValidationError(f"radius must be positive, got {self.radius}")

    @property
    def best_value(self) -> float:
        return self.best.value


@runtime_checkable
class Objective(Protocol):
    """Black-box objective contract: minimized by the solver."""

    @property
    def dim(self) -> int: ...

    @property
    def supports_subsampling(self) -> bool: ...

    def evaluate(self, w: np.ndarray) -> float: ...


@runtime_checkable
class SubsampledObjective(Objective, Protocol):
    """Objective that can be estimated on per-class subsamples."""

    @property
    def class_sizes(self) -> tuple[int, int]: ...

    def evaluate_sampled(
        self, w: np.ndarray, sizes: tuple[int, int], rng: np.random.Generator
    ) -> float: ...


class FunctionObjective:
    """Wrap a plain callable ``f(w) -> float`` as an objective."""

    supports_subsampling = False

    def __init__(self, fn: Callable[[np.ndarray], float], dim: int, name: str | None = None):
        self._fn = fn
        self._dim = dim
        self.name = name or getattr(fn, "__name__", "objective")

    @property
    def dim(self) -> int:
        return self._dim

    def evaluate(self, w: np.ndarray) -> float:
        return float(self._fn(as_point(w, self._dim)))


class Negated:
    """Turn a maximization objective into a minimization one."""

    def __init__(self, inner: Objective):
        self.inner = inner

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def supports_subsampling(self) -> bool:
        return self.inner.supports_subsampling

    @property
    def class_sizes(self) -> tuple[int, int]:
        return self.inner.class_sizes  # type: ignore[attr-defined]

    def evaluate(self, w: np.ndarray) -> float:
        return -self.inner.evaluate(w)

    def evaluate_sampled(
        self, w: np.ndarray, sizes: tuple[int, int], rng: np.random.Generator
    ) -> float:
        return -self.inner.evaluate_sampled(w, sizes, rng)  # type: ignore[attr-defined]


class TimedObjective:
    """Accumulate wall time and call counts spent inside an objective."""

    def __init__(self, inner: Objective):
        self.inner = inner
        self.eval_seconds = 0.0
        self.calls = 0

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def supports_subsampling(self) -> bool:
        return self.inner.supports_subsampling

    @property
    def class_sizes(self) -> tuple[int, int]:
        return self.inner.class_sizes  # type: ignore[attr-defined]

    def evaluate(self, w: np.ndarray) -> float:
        start = time.perf_counter()
        try:
            return self.inner.evaluate(w)
        finally:
            self.eval_seconds += time.perf_counter() - start
            self.calls += 1

    def evaluate_sampled(
        self, w: np.ndarray, sizes: tuple[int, int], rng: np.random.Generator
    ) -> float:
        start = time.perf_counter()
        try:
            return self.inner.evaluate_sampled(w, sizes, rng)  # type: ignore[attr-defined]
        finally:
            self.eval_seconds += time.perf_counter() - start
            self.calls += 1


__all__ = [
    "EvaluatedPoint",
    "FunctionObjective",
    "InterpolationSet",
    "Negated",
    "Objective",
    "SubsampledObjective",
    "TimedObjective",
    "TrustRegionState",
    "as_point",
    "is_duplicate",
]
