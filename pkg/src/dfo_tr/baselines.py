"""Comparison methods: uniform random search and pairwise hinge-loss descent."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import EvaluatedPoint, Objective, as_point
from .data import LabeledDataset
from .errors import DFOTRValidationError
from .objectives import auc, pairwise_hinge_loss, pairwise_hinge_loss_and_grad
from .solver import IterationRecord, RunHistory, StopReason

logger = logging.getLogger(__name__)

Box = Sequence[tuple[float, float]]


def validate_box(box: Box, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(lo, hi)`` arrays for a per-dimension box.

    Raises:
        DFOTRValidationError: If a bound is not finite, ``lo >= hi`` somewhere,
            or the box dimension differs from ``dim``.
    """
    bounds = np.asarray(box, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] == 0:
        raise DFOTRValidationError(f"box must be a list of (lo, hi) pairs, got {box!r}")
    if dim is not None and bounds.shape[0] != dim:
        raise DFOTRValidationError(
            f"box has {bounds.shape[0]} dimensions, objective has {dim}"
        )
    lo, hi = bounds[:, 0], bounds[:, 1]
    if not (np.all(np.isfinite(bounds)) and np.all(lo < hi)):
        raise DFOTRValidationError(f"invalid box {box!r}: need finite lo < hi")
    return lo, hi


def random_search(objective: Objective, box: Box, budget: int, seed: int = 0) -> RunHistory:
    """Evaluate ``budget`` i.i.d. uniform draws from ``box``.

    Each draw becomes one record; ``f_best`` is the running minimum.
    """
    lo, hi = validate_box(box, objective.dim)
    if budget < 1:
        raise DFOTRValidationError(f"budget must be at least 1, got {budget}")
    rng = np.random.default_rng(seed)
    logger.info("Starting random search: dim=%d budget=%d", objective.dim, budget)

    records: list[IterationRecord] = []
    values: list[float] = []
    best: EvaluatedPoint | None = None
    last: EvaluatedPoint | None = None
    for i in range(1, budget + 1):
        w = lo + (hi - lo) * rng.random(lo.size)
        value = float(objective.evaluate(w))
        if not math.isfinite(value):
            raise DFOTRValidationError(f"objective returned non-finite value at {w}")
        last = EvaluatedPoint.of(w, value)
        improved = best is None or value < best.value
        if improved:
            best = last
        values.append(value)
        records.append(
            IterationRecord(
                iteration=i,
                candidate=last.coords,
                f_candidate=value,
                f_best=best.value,
                rho=math.nan,
                delta_before=0.0,
                delta_after=0.0,
                accepted=improved,
                m_size=0,
                evals_used=i,
            )
        )
    logger.info("Random search finished: best=%.8g", best.value)
    return RunHistory(
        records=records,
        best=best,
        final=last,
        evaluations=values,
        sample_sizes=[0] * budget,
    )


@dataclass(frozen=True)
class StepSizePolicy:
    """Fixed initial step, halved on loss increase."""

    initial_step: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 60
    rel_tol: float = 1e-8

    def __post_init__(self):
        if not self.initial_step > 0:
            raise DFOTRValidationError("initial_step must be positive")
        if not 0 < self.shrink < 1:
            raise DFOTRValidationError("shrink must lie in (0, 1)")
        if self.max_halvings < 0 or self.rel_tol < 0:
            raise DFOTRValidationError("max_halvings and rel_tol must be non-negative")


def hinge_gd(
    data: LabeledDataset,
    policy: StepSizePolicy | None = None,
    budget: int = 100,
    w0: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, RunHistory]:
    """Full-gradient descent on the pairwise hinge loss.

    Every iterate (``w0`` included) costs one AUC evaluation against
    ``budget``; the history stores ``-AUC`` so it reads like a minimization
    run. Each step starts from ``policy.initial_step`` and is halved until
    the loss does not increase. Stops on the budget, a zero gradient, or a
    relative loss change below ``policy.rel_tol``.

    Returns:
        The final iterate and its run history. The ``delta`` column of the
        history holds the accepted step length.
    """
    policy = policy or StepSizePolicy()
    if budget < 1:
        raise DFOTRValidationError(f"budget must be at least 1, got {budget}")
    data.require_both_classes()
    w = np.zeros(data.dim) if w0 is None else as_point(w0, data.dim)

    loss, grad = pairwise_hinge_loss_and_grad(w, data)
    first = EvaluatedPoint.of(w, -auc(w, data))
    best = first
    values = [first.value]
    records = [
        IterationRecord(
            iteration=0,
            candidate=first.coords,
            f_candidate=first.value,
            f_best=first.value,
            rho=math.nan,
            delta_before=0.0,
            delta_after=0.0,
            accepted=True,
            m_size=0,
            evals_used=1,
        )
    ]
    stop_reason: StopReason = "budget"
    iteration = 0
    while len(values) < budget:
        if loss == 0.0 or not np.any(grad):
            stop_reason = "converged"
            break
        t = policy.initial_step
        trial = w - t * grad
        trial_loss = pairwise_hinge_loss(trial, data)
        halvings = 0
        while trial_loss > loss and halvings < policy.max_halvings:
            t *= policy.shrink
            trial = w - t * grad
            trial_loss = pairwise_hinge_loss(trial, data)
            halvings += 1
        if trial_loss > loss:
            logger.debug("Backtracking exhausted at loss %.12g", loss)
            stop_reason = "converged"
            break

        iteration += 1
        change = abs(loss - trial_loss) / max(abs(loss), np.finfo(float).tiny)
        w = trial
        loss, grad = pairwise_hinge_loss_and_grad(w, data)
        current = EvaluatedPoint.of(w, -auc(w, data))
        if current.value < best.value:
            best = current
        values.append(current.value)
        records.append(
            IterationRecord(
                iteration=iteration,
                candidate=current.coords,
                f_candidate=current.value,
                f_best=best.value,
                rho=math.nan,
                delta_before=t,
                delta_after=t,
                accepted=True,
                m_size=0,
                evals_used=len(values),
            )
        )
        logger.debug(
            "hinge iter=%d loss=%.10g step=%.3g auc=%.6f", iteration, loss, t, -current.value
        )
        if change < policy.rel_tol:
            stop_reason = "converged"
            break

    logger.info(
        "Hinge descent finished after %d iterations (%s): loss=%.8g",
        iteration,
        stop_reason,
        loss,
    )
    history = RunHistory(
        records=records,
        best=best,
        final=EvaluatedPoint.of(w, values[-1]),
        evaluations=values,
        sample_sizes=[0] * len(values),
        stop_reason=stop_reason,
    )
    return w, history


__all__ = ["StepSizePolicy", "hinge_gd", "random_search", "validate_box"]
