"""The DFO-TR main loop and its subsampled (stochastic) variant."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import SampleSchedule, SolverConfig
from .core import (
    EvaluatedPoint,
    InterpolationSet,
    Objective,
    TrustRegionState,
    as_point,
    is_duplicate,
)
from .errors import (
    DegenerateGeometryError,
    DFOTRValidationError,
    EmptySetError,
)
from .model import build_model
from .trsub import solve_trust_region

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("iter", "rho", "delta", "f_candidate", "f_best", "accepted", "m", "n_pos", "n_neg")
ZERO_REDUCTION_TOL = 1e-14

StopReason = Literal["budget", "radius", "converged"]


class IterationRecord(BaseModel):
    """One iteration of the trust-region loop."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    iteration: int
    candidate: tuple[float, ...]
    f_candidate: float
    f_best: float
    rho: float
    delta_before: float
    delta_after: float
    accepted: bool
    m_size: int
    sample_size_pos: int = 0
    sample_size_neg: int = 0
    evals_used: int = 0


class RunHistory(BaseModel):
    """Ordered record of a run.

    ``evaluations`` lists every objective value in evaluation order (the
    initial interpolation set included), ``sample_sizes`` the number of data
    points each evaluation used (0 when the objective was evaluated in full).
    ``final`` is the last iterate, ``best`` the lowest value ever evaluated.
    Subsampled runs also keep ``confirmed``: among centers whose value was
    re-estimated on a fresh sample, the one with the lowest averaged value.
    """

    records: list[IterationRecord] = []
    best: EvaluatedPoint
    final: EvaluatedPoint
    confirmed: EvaluatedPoint | None = None
    config: SolverConfig | None = None
    schedule: SampleSchedule | None = None
    evaluations: list[float] = []
    sample_sizes: list[int] = []
    stop_reason: StopReason = "budget"

    model_config = ConfigDict(ser_json_inf_nan="constants")

    @property
    def evals_used(self) -> int:
        return len(self.evaluations)

    @property
    def reported(self) -> EvaluatedPoint:
        """``confirmed`` when the run re-estimated any center, otherwise ``final``."""
        return self.confirmed or self.final

    def best_after(self, n_evals: int) -> float:
        """Lowest value seen within the first ``n_evals`` evaluations."""
        if n_evals < 1 or not self.evaluations:
            raise DFOTRValidationError("no evaluations in the requested prefix")
        return min(self.evaluations[:n_evals])

    def best_trace(self) -> list[float]:
        return list(np.minimum.accumulate(self.evaluations)) if self.evaluations else []

    def to_csv(self) -> str:
        """Serialize the iteration records as LF-terminated CSV.

        The solver configuration and stop reason precede the table as
        ``# key: value`` comment lines.
        """
        buffer = io.StringIO()
        if self.config is not None:
            for key, value in self.config.to_dict().items():
                buffer.write(f"# {key}: {value!r}\n")
        if self.schedule is not None:
            for key, value in asdict(self.schedule).items():
                buffer.write(f"# schedule_{key}: {value!r}\n")
        buffer.write(f"# stop_reason: {self.stop_reason}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.records:
            writer.writerow(
                [
                    rec.iteration,
                    repr(rec.rho),
                    repr(rec.delta_before),
                    repr(rec.f_candidate),
                    repr(rec.f_best),
                    int(rec.accepted),
                    rec.m_size,
                    rec.sample_size_pos,
                    rec.sample_size_neg,
                ]
            )
        return buffer.getvalue()


def sample_schedule(
    k: int,
    N: int,
    N_pos: int,
    N_neg: int,
    schedule: SampleSchedule | None = None,
) -> int:
    """Per-class sample size at iteration ``k``.

    ``min(N, max(k*floor(50 N/(N_pos+N_neg)) + floor(1000 N/(N_pos+N_neg)),
    floor(0.1 N)))`` with the constants taken from ``schedule``; never below 1.

    Raises:
        DFOTRValidationError: For nonpositive sizes, negative ``k`` or a class
            size that is neither ``N_pos`` nor ``N_neg``.
    """
    schedule = schedule or SampleSchedule()
    if k < 0:
        raise DFOTRValidationError(f"iteration index must be non-negative, got {k}")
    if N <= 0 or N_pos <= 0 or N_neg <= 0:
        raise DFOTRValidationError(
            f"class sizes must be positive, got N={N}, N_pos={N_pos}, N_neg={N_neg}"
        )
    if N not in (N_pos, N_neg):
        raise DFOTRValidationError(f"N={N} is neither N_pos={N_pos} nor N_neg={N_neg}")
    total = N_pos + N_neg
    growth = k * ((schedule.slope * N) // total) + (schedule.base * N) // total
    floor_size = math.floor(Fraction(str(schedule.min_fraction)) * N)
    return max(1, min(N, max(growth, floor_size)))


def radius_update(
    rho: float, delta: float, m: int, dim: int, config: SolverConfig
) -> tuple[float, bool]:
    """Apply the acceptance and radius rules.

    Returns ``(new_delta, accepted)``: ``rho >= eta1`` accepts and expands,
    ``eta0 <= rho < eta1`` accepts and keeps the radius, ``rho < eta0`` rejects
    and shrinks only when the set holds more than ``d + 1`` points.
    """
    if rho >= config.eta1:
        return config.gamma2 * delta, True
    if rho >= config.eta0:
        return delta, True
    if m > dim + 1:
        return config.gamma1 * delta, False
    return delta, False


@dataclass
class RunContext:
    """Random streams, schedule and evaluation trace shared by one run."""

    objective: Objective
    config: SolverConfig
    rng: np.random.Generator
    sample_rng: np.random.Generator
    schedule: SampleSchedule | None = None
    values: list[float] = field(default_factory=list)
    sample_sizes: list[int] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        objective: Objective,
        config: SolverConfig,
        schedule: SampleSchedule | None = None,
    ) -> RunContext:
        geometry_seed, sampling_seed = np.random.SeedSequence(config.seed).spawn(2)
        return cls(
            objective=objective,
            config=config,
            rng=np.random.default_rng(geometry_seed),
            sample_rng=np.random.default_rng(sampling_seed),
            schedule=schedule,
        )

    @property
    def stochastic(self) -> bool:
        return self.schedule is not None

    def sizes(self, k: int) -> tuple[int, int]:
        if self.schedule is None:
            return 0, 0
        n_pos, n_neg = self.objective.class_sizes  # type: ignore[attr-defined]
        return (
            sample_schedule(k, n_pos, n_pos, n_neg, self.schedule),
            sample_schedule(k, n_neg, n_pos, n_neg, self.schedule),
        )

    def evaluate(self, w: np.ndarray, k: int) -> tuple[float, int, int]:
        n_pos, n_neg = self.sizes(k)
        if self.schedule is None:
            value = float(self.objective.evaluate(w))
        else:
            value = float(
                self.objective.evaluate_sampled(  # type: ignore[attr-defined]
                    w, (n_pos, n_neg), self.sample_rng
                )
            )
        if not math.isfinite(value):
            raise DFOTRValidationError(f"objective returned non-finite value at {w}")
        self.values.append(value)
        self.sample_sizes.append(n_pos + n_neg)
        return value, n_pos, n_neg


def _uniform_in_ball(rng: np.random.Generator, center: np.ndarray, radius: float, n: int) -> np.ndarray:
    d = center.size
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / d)
    return center + directions * radii[:, None]


def initialize(
    objective: Objective,
    w0: Sequence[float] | np.ndarray,
    config: SolverConfig,
    context: RunContext | None = None,
) -> tuple[InterpolationSet, TrustRegionState]:
    """Evaluate ``w0`` and ``d + 1`` points drawn uniformly from B(w0, delta0).

    The state's center is the best point of the set, ties broken toward ``w0``.
    Fewer random points are drawn when the budget cannot afford ``d + 2``
    evaluations.
    """
    ctx = context or RunContext.create(objective, config)
    d = objective.dim
    w0 = as_point(w0, d)
    iset = InterpolationSet(d)

    value, _, _ = ctx.evaluate(w0, 0)
    start = EvaluatedPoint.of(w0, value)
    iset.add(start)
    center = start

    n_random = max(0, min(d + 1, config.max_evals - 1))
    for w in _uniform_in_ball(ctx.rng, w0, config.delta0, n_random):
        value, _, _ = ctx.evaluate(w, 0)
        member = EvaluatedPoint.of(w, value)
        iset.add(member)
        if value < center.value:
            center = member

    state = TrustRegionState(
        center=center,
        radius=config.delta0,
        best=center,
        iteration=0,
        evals_used=1 + n_random,
    )
    logger.debug(
        "Initialized interpolation set: m=%d, f(center)=%.6g", len(iset), center.value
    )
    return iset, state


def step(
    state: TrustRegionState,
    iset: InterpolationSet,
    objective: Objective,
    config: SolverConfig,
    context: RunContext | None = None,
) -> tuple[TrustRegionState, InterpolationSet, IterationRecord]:
    """Run one iteration: exactly one new objective evaluation.

    The input set is left untouched; the updated set is returned.
    """
    if len(iset) == 0:
        raise DFOTRValidationError("interpolation set must not be empty")
    ctx = context or RunContext.create(objective, config)
    d = iset.dim
    k = state.iteration + 1
    delta = state.radius
    wk = state.center.point
    fk = state.center.value

    iset = iset.copy()
    iset.discard_far(wk, config.theta * delta, keep=d + 1)

    degenerate = False
    predicted = 0.0
    try:
        model = build_model(iset, wk, fk, scale=delta)
        solution = solve_trust_region(model.g, model.H, delta)
        candidate = wk + solution.step
        predicted = solution.predicted_reduction
    except (EmptySetError, DegenerateGeometryError) as e:
        logger.warning("Model construction failed (%s); taking a random step", e)
        degenerate = True
        direction = ctx.rng.standard_normal(d)
        candidate = wk + delta * direction / np.linalg.norm(direction)

    value, n_pos, n_neg = ctx.evaluate(candidate, k)
    new_point = EvaluatedPoint.of(candidate, value)

    if degenerate or predicted <= ZERO_REDUCTION_TOL * max(1.0, abs(fk)):
        rho = -math.inf
    else:
        rho = (fk - value) / predicted

    if len(iset) < iset.capacity:
        changed = iset.add(new_point)
    elif rho >= config.eta0 or degenerate:
        changed = iset.replace(iset.farthest_index(wk), new_point)
    else:
        # After stall_limit dropped candidates in a row the farthest member goes anyway.
        dist = iset.distances(wk)
        closer = np.linalg.norm(candidate - wk) < dist.max()
        if closer or state.stalls >= config.stall_limit:
            changed = iset.replace(int(np.argmax(dist)), new_point)
        else:
            changed = False
    stalls = 0 if changed else state.stalls + 1

    if degenerate:
        delta_after, accepted = config.gamma1 * delta, value < fk
    else:
        delta_after, accepted = radius_update(rho, delta, len(iset), d, config)

    center = new_point if accepted else state.center
    best = new_point if value < state.best.value else state.best
    new_state = TrustRegionState(
        center=center,
        radius=delta_after,
        best=best,
        iteration=k,
        evals_used=state.evals_used + 1,
        stalls=stalls,
    )
    record = IterationRecord(
        iteration=k,
        candidate=new_point.coords,
        f_candidate=value,
        f_best=best.value,
        rho=rho,
        delta_before=delta,
        delta_after=delta_after,
        accepted=accepted,
        m_size=len(iset),
        sample_size_pos=n_pos,
        sample_size_neg=n_neg,
        evals_used=new_state.evals_used,
    )
    logger.debug(
        "iter=%d rho=%.4g delta=%.4g->%.4g f=%.8g accepted=%s m=%d",
        k,
        rho,
        delta,
        delta_after,
        value,
        accepted,
        len(iset),
    )
    return new_state, iset, record


def _resample_center(
    state: TrustRegionState, iset: InterpolationSet, ctx: RunContext
) -> TrustRegionState:
    """Average one fresh subsampled evaluation into the center's stored value."""
    fresh, _, _ = ctx.evaluate(state.center.point, state.iteration)
    rule = ctx.schedule.averaging if ctx.schedule else "pairwise"
    center = state.center.averaged_with(fresh, rule)
    index = iset.index_of(center.point)
    if index is not None:
        iset.update(index, center)
    best = state.best
    if fresh < best.value:
        best = EvaluatedPoint.of(center.point, fresh)
    logger.debug(
        "Resampled center: stored %.6g, fresh %.6g -> %.6g",
        state.center.value,
        fresh,
        center.value,
    )
    return TrustRegionState(
        center=center,
        radius=state.radius,
        best=best,
        iteration=state.iteration,
        evals_used=state.evals_used + 1,
        stalls=state.stalls,
    )


def _run(
    objective: Objective,
    w0: Sequence[float] | np.ndarray,
    config: SolverConfig,
    ctx: RunContext,
) -> RunHistory:
    iset, state = initialize(objective, w0, config, ctx)
    records: list[IterationRecord] = []
    stop_reason: StopReason = "budget"
    confirmed: EvaluatedPoint | None = None
    while state.evals_used < config.max_evals:
        if state.radius < config.delta_min:
            stop_reason = "radius"
            break
        state, iset, record = step(state, iset, objective, config, ctx)
        records.append(record)
        if (
            ctx.stochastic
            and record.rho < config.eta0
            and state.evals_used < config.max_evals
        ):
            state = _resample_center(state, iset, ctx)
            center = state.center
            if (
                confirmed is None
                or is_duplicate(confirmed.point, center.point)
                or center.value < confirmed.value
            ):
                confirmed = center

    logger.info(
        "Run finished after %d evaluations (%s): best=%.8g",
        state.evals_used,
        stop_reason,
        state.best.value,
    )
    return RunHistory(
        records=records,
        best=state.best,
        final=state.center,
        confirmed=confirmed,
        config=config,
        schedule=ctx.schedule,
        evaluations=list(ctx.values),
        sample_sizes=list(ctx.sample_sizes),
        stop_reason=stop_reason,
    )


def minimize(
    objective: Objective,
    w0: Sequence[float] | np.ndarray,
    config: SolverConfig,
) -> RunHistory:
    """Minimize ``objective`` from ``w0`` with the deterministic DFO-TR loop.

    Runs until ``config.max_evals`` evaluations (initialization included) are
    spent or the radius drops below ``config.delta_min``.
    """
    logger.info("Starting DFO-TR: dim=%d budget=%d", objective.dim, config.max_evals)
    return _run(objective, w0, config, RunContext.create(objective, config))


def minimize_stochastic(
    objective: Objective,
    w0: Sequence[float] | np.ndarray,
    config: SolverConfig,
    schedule: SampleSchedule | None = None,
) -> RunHistory:
    """Minimize with per-class subsampled evaluations.

    Every evaluation at iteration ``k`` uses ``sample_schedule(k, ...)`` points
    per class. After each iteration with ``rho < eta0`` the center is
    re-evaluated on a fresh sample and its stored value averaged; that
    evaluation counts against the budget. ``RunHistory.reported`` is the point
    such a run reports.
    """
    if not objective.supports_subsampling:
        raise DFOTRValidationError("objective does not support subsampled evaluation")
    schedule = schedule or SampleSchedule()
    logger.info(
        "Starting stochastic DFO-TR: dim=%d budget=%d", objective.dim, config.max_evals
    )
    return _run(objective, w0, config, RunContext.create(objective, config, schedule))


__all__ = [
    "CSV_COLUMNS",
    "IterationRecord",
    "RunContext",
    "RunHistory",
    "initialize",
    "minimize",
    "minimize_stochastic",
    "radius_update",
    "sample_schedule",
    "step",
]
