"""LIBSVM parsing, feature scaling, stratified folds and class subsampling."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .config import ScalingMode
from .errors import DFOTRValidationError, EmptyClassError, ParseError

logger = logging.getLogger(__name__)

POSITIVE_TOKENS = ("+1", "1")


@dataclass(frozen=True)
class SparseVector:
    """Sparse feature vector with 1-based, strictly increasing indices."""

    indices: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise DFOTRValidationError("indices and values must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:], strict=False)):
            raise DFOTRValidationError("indices must be strictly increasing")
        if self.indices and self.indices[0] < 1:
            raise DFOTRValidationError("indices are 1-based")
        if not all(math.isfinite(v) for v in self.values):
            raise DFOTRValidationError("values must be finite")

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices, self.values, strict=True))


def _to_csr(vectors: list[SparseVector], dim: int) -> sp.csr_matrix:
    indptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    for vec in vectors:
        cols.extend(i - 1 for i in vec.indices)
        vals.extend(vec.values)
        indptr.append(len(cols))
    return sp.csr_matrix(
        (np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr)),
        shape=(len(vectors), dim),
    )


def _rows(matrix: sp.csr_matrix) -> list[SparseVector]:
    rows = []
    for i in range(matrix.shape[0]):
        start, end = matrix.indptr[i], matrix.indptr[i + 1]
        order = np.argsort(matrix.indices[start:end], kind="stable")
        idx = matrix.indices[start:end][order]
        val = matrix.data[start:end][order]
        keep = val != 0.0
        rows.append(
            SparseVector(
                indices=tuple(int(j) + 1 for j in idx[keep]),
                values=tuple(float(v) for v in val[keep]),
            )
        )
    return rows


@dataclass(frozen=True)
class LabeledDataset:
    """Feature vectors split into the positive set and the negative set.

    Each class is stored as a CSR matrix of shape ``(N_class, dim)``; scores
    ``w'x`` are sparse dot products.
    """

    dim: int
    positives: sp.csr_matrix
    negatives: sp.csr_matrix

    def __post_init__(self):
        for name in ("positives", "negatives"):
            matrix = getattr(self, name)
            if matrix.shape[1] != self.dim:
                raise DFOTRValidationError(
                    f"{name} have {matrix.shape[1]} columns, expected {self.dim}"
                )

    @classmethod
    def from_vectors(
        cls,
        positives: list[SparseVector],
        negatives: list[SparseVector],
        dim: int | None = None,
    ) -> LabeledDataset:
        max_index = max(
            (v.indices[-1] for v in [*positives, *negatives] if v.indices), default=0
        )
        dim = max_index if dim is None else dim
        if max_index > dim:
            raise DFOTRValidationError(f"feature index {max_index} exceeds dim {dim}")
        return cls(dim=dim, positives=_to_csr(positives, dim), negatives=_to_csr(negatives, dim))

    @classmethod
    def from_dense(cls, positives: np.ndarray, negatives: np.ndarray) -> LabeledDataset:
        positives = np.atleast_2d(np.asarray(positives, dtype=float))
        negatives = np.atleast_2d(np.asarray(negatives, dtype=float))
        if positives.shape[1] != negatives.shape[1]:
            raise DFOTRValidationError("classes must share the feature dimension")
        return cls(
            dim=positives.shape[1],
            positives=sp.csr_matrix(positives),
            negatives=sp.csr_matrix(negatives),
        )

    @property
    def n_pos(self) -> int:
        return self.positives.shape[0]

    @property
    def n_neg(self) -> int:
        return self.negatives.shape[0]

    @property
    def size(self) -> int:
        return self.n_pos + self.n_neg

    def require_both_classes(self) -> None:
        if self.n_pos < 1 or self.n_neg < 1:
            raise EmptyClassError(
                f"both classes must be nonempty, got N_pos={self.n_pos}, N_neg={self.n_neg}"
            )

    def scores(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X_pos @ w, X_neg @ w)``."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.size != self.dim:
            raise DFOTRValidationError(
                f"dimension mismatch: dataset has {self.dim}, w has {w.size}"
            )
        return self.positives @ w, self.negatives @ w

    def positive_vectors(self) -> list[SparseVector]:
        return _rows(self.positives)

    def negative_vectors(self) -> list[SparseVector]:
        return _rows(self.negatives)

    def take(self, pos_index: np.ndarray, neg_index: np.ndarray) -> LabeledDataset:
        return LabeledDataset(
            dim=self.dim,
            positives=self.positives[pos_index],
            negatives=self.negatives[neg_index],
        )

    def swapped(self) -> LabeledDataset:
        """Same data with the class labels exchanged."""
        return LabeledDataset(dim=self.dim, positives=self.negatives, negatives=self.positives)

    def stats(self) -> dict[str, float]:
        """Dimension, size and class ratio N_neg / N_pos."""
        ratio = self.n_neg / self.n_pos if self.n_pos else math.inf
        return {"d": self.dim, "N": self.size, "ratio": ratio}


def _parse_number(token: str, line_no: int, what: str) -> float:
    try:
        value = float(token.replace("−", "-"))
    except ValueError:
        raise ParseError(line_no, f"non-numeric {what} {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(line_no, f"non-finite {what} {token!r}")
    return value


def parse_libsvm(
    stream: TextIO | Iterable[str],
    positive_label: str | None = None,
    dim: int | None = None,
) -> LabeledDataset:
    """Parse ``<label> <idx>:<val> ...`` lines into a labeled dataset.

    Text after ``#`` is ignored, as are blank lines. With two distinct labels
    the numerically larger one is positive (so ``+1``/``1`` against ``-1`` or
    ``0``). A single label is positive only if it is ``+1``/``1``. With
    ``positive_label`` given, examples carrying it are positive and all other
    labels negative (one-vs-rest), so multi-class files are accepted.

    Raises:
        ParseError: With the 1-based line number for non-numeric fields,
            nonincreasing or non-positive indices, or a third distinct label.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    target = None
    if positive_label is not None:
        target = _parse_number(str(positive_label), 0, "positive label")

    labels: list[float] = []
    first_token: dict[float, str] = {}
    vectors: list[SparseVector] = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _parse_number(tokens[0], line_no, "label")
        if target is None and label not in first_token and len(first_token) == 2:
            raise ParseError(line_no, f"more than two distinct labels (found {tokens[0]!r})")
        first_token.setdefault(label, tokens[0])

        indices: list[int] = []
        values: list[float] = []
        for token in tokens[1:]:
            idx_text, sep, val_text = token.partition(":")
            if not sep:
                raise ParseError(line_no, f"feature {token!r} is not of the form idx:val")
            try:
                idx = int(idx_text)
            except ValueError:
                raise ParseError(line_no, f"non-integer index {idx_text!r}") from None
            if idx < 1:
                raise ParseError(line_no, f"index {idx} is not positive")
            if indices and idx <= indices[-1]:
                raise ParseError(
                    line_no, f"indices not increasing ({indices[-1]} then {idx})"
                )
            indices.append(idx)
            values.append(_parse_number(val_text, line_no, "value"))
        labels.append(label)
        vectors.append(SparseVector(tuple(indices), tuple(values)))

    if target is not None:
        is_positive = [label == target for label in labels]
    elif len(first_token) == 2:
        top = max(first_token)
        is_positive = [label == top for label in labels]
    else:
        only = next(iter(first_token.values()), "")
        is_positive = [only in POSITIVE_TOKENS or only.lstrip("+") == "1"] * len(labels)

    positives = [v for v, p in zip(vectors, is_positive, strict=True) if p]
    negatives = [v for v, p in zip(vectors, is_positive, strict=True) if not p]
    data = LabeledDataset.from_vectors(positives, negatives, dim=dim)
    logger.debug(
        "Parsed LIBSVM data: N_pos=%d N_neg=%d dim=%d", data.n_pos, data.n_neg, data.dim
    )
    return data


def load_libsvm(
    path: str | Path, positive_label: str | None = None, dim: int | None = None
) -> LabeledDataset:
    """Parse a LIBSVM file from disk."""
    path = Path(path)
    logger.info("Loading LIBSVM dataset %s", path)
    with open(path, encoding="utf-8") as f:
        return parse_libsvm(f, positive_label=positive_label, dim=dim)


def serialize_libsvm(data: LabeledDataset) -> str:
    """Write ``data`` in LIBSVM format (positives ``+1`` first, then ``-1``)."""
    lines = []
    for label, vectors in (("+1", data.positive_vectors()), ("-1", data.negative_vectors())):
        for vec in vectors:
            features = " ".join(f"{i}:{v!r}" for i, v in vec.entries)
            lines.append(f"{label} {features}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def scale_to_unit_interval(data: LabeledDataset, mode: ScalingMode = "minmax") -> LabeledDataset:
    """Rescale every feature over the pooled examples of both classes.

    ``minmax`` maps each dimension affinely onto [-1, 1]; ``standardize``
    shifts to mean 0 and scales to unit (population) variance. Dimensions
    without spread are set to 0. ``none`` returns ``data`` unchanged.
    """
    if mode == "none":
        return data
    if mode not in ("minmax", "standardize"):
        raise DFOTRValidationError(f"unknown scaling mode {mode!r}")
    if data.size == 0:
        raise DFOTRValidationError("cannot scale an empty dataset")

    pooled = sp.vstack([data.positives, data.negatives]).toarray()
    if mode == "minmax":
        lo = pooled.min(axis=0)
        spread = pooled.max(axis=0) - lo
        safe = np.where(spread > 0, spread, 1.0)
        scaled = np.where(spread > 0, 2.0 * (pooled - lo) / safe - 1.0, 0.0)
    else:
        mean = pooled.mean(axis=0)
        std = pooled.std(axis=0)
        safe = np.where(std > 0, std, 1.0)
        scaled = np.where(std > 0, (pooled - mean) / safe, 0.0)

    positives = sp.csr_matrix(scaled[: data.n_pos])
    negatives = sp.csr_matrix(scaled[data.n_pos :])
    logger.debug("Scaled %d examples with mode=%s", data.size, mode)
    return LabeledDataset(dim=data.dim, positives=positives, negatives=negatives)


@dataclass(frozen=True)
class FoldPlan:
    """Stratified fold assignment of every example, per class."""

    k: int
    positive_folds: np.ndarray
    negative_folds: np.ndarray
    seed: int

    def sizes(self, fold: int) -> tuple[int, int]:
        return (
            int(np.sum(self.positive_folds == fold)),
            int(np.sum(self.negative_folds == fold)),
        )


def make_folds(data: LabeledDataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Assign examples to ``k`` folds, stratified by class.

    Each class is shuffled and dealt round-robin, so every fold holds within
    one example of ``N_class / k`` per class. The negatives' deal starts where
    the positives' stopped, keeping fold totals balanced as well.

    Raises:
        DFOTRValidationError: If a class has fewer than ``k`` examples.
    """
    if k < 2:
        raise DFOTRValidationError(f"k must be at least 2, got {k}")
    if data.n_pos < k or data.n_neg < k:
        raise DFOTRValidationError(
            f"each class needs at least k={k} examples "
            f"(N_pos={data.n_pos}, N_neg={data.n_neg})"
        )
    rng = np.random.default_rng(seed)
    positive_folds = np.empty(data.n_pos, dtype=np.int64)
    positive_folds[rng.permutation(data.n_pos)] = np.arange(data.n_pos) % k
    offset = data.n_pos % k
    negative_folds = np.empty(data.n_neg, dtype=np.int64)
    negative_folds[rng.permutation(data.n_neg)] = (np.arange(data.n_neg) + offset) % k
    return FoldPlan(k=k, positive_folds=positive_folds, negative_folds=negative_folds, seed=seed)


def select_folds(data: LabeledDataset, plan: FoldPlan, folds: int | Iterable[int]) -> LabeledDataset:
    """Examples whose fold lies in ``folds``."""
    wanted = np.atleast_1d(np.asarray(list(folds) if not isinstance(folds, int) else [folds]))
    if np.any((wanted < 0) | (wanted >= plan.k)):
        raise DFOTRValidationError(f"fold indices must lie in [0, {plan.k})")
    if plan.positive_folds.size != data.n_pos or plan.negative_folds.size != data.n_neg:
        raise DFOTRValidationError("fold plan does not match the dataset")
    return data.take(
        np.flatnonzero(np.isin(plan.positive_folds, wanted)),
        np.flatnonzero(np.isin(plan.negative_folds, wanted)),
    )


def split(
    data: LabeledDataset, plan: FoldPlan, test_fold: int | Iterable[int]
) -> tuple[LabeledDataset, LabeledDataset]:
    """Return ``(train, test)`` with ``test_fold`` (one fold or several) held out."""
    test_folds = [test_fold] if isinstance(test_fold, int) else list(test_fold)
    train_folds = [f for f in range(plan.k) if f not in test_folds]
    return select_folds(data, plan, train_folds), select_folds(data, plan, test_folds)


def subsample_classes(
    data: LabeledDataset, n_pos: int, n_neg: int, rng: np.random.Generator
) -> LabeledDataset:
    """Draw ``n_pos`` positives and ``n_neg`` negatives uniformly without replacement.

    Raises:
        EmptyClassError: If a requested size is below 1.
        DFOTRValidationError: If a request exceeds the class size.
    """
    if n_pos < 1 or n_neg < 1:
        raise EmptyClassError(f"sample sizes must be at least 1, got ({n_pos}, {n_neg})")
    if n_pos > data.n_pos or n_neg > data.n_neg:
        raise DFOTRValidationError(
            f"requested ({n_pos}, {n_neg}) exceeds class sizes ({data.n_pos}, {data.n_neg})"
        )
    if n_pos == data.n_pos and n_neg == data.n_neg:
        return data
    pos_index = (
        np.arange(data.n_pos)
        if n_pos == data.n_pos
        else np.sort(rng.choice(data.n_pos, size=n_pos, replace=False))
    )
    neg_index = (
        np.arange(data.n_neg)
        if n_neg == data.n_neg
        else np.sort(rng.choice(data.n_neg, size=n_neg, replace=False))
    )
    return data.take(pos_index, neg_index)


__all__ = [
    "FoldPlan",
    "LabeledDataset",
    "SparseVector",
    "load_libsvm",
    "make_folds",
    "parse_libsvm",
    "scale_to_unit_interval",
    "select_folds",
    "serialize_libsvm",
    "split",
    "subsample_classes",
]
