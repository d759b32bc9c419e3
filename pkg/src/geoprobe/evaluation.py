"""Average precision per class and their unweighted mean (MAP)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

N_CLASSES = 3


class UndefinedMetricError(ValueError):
    """AP is undefined without positives."""


@dataclass
class EvalReport:
    per_class_ap: list[float]
    map: float
    n_test: int
    class_prevalence: list[float]
    n_train_effective: int = 0
    scheme: str = ""
    featurizer: str = ""
    n_requested: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(**d)


def rank_order(scores) -> np.ndarray:
    """Indices by descending score; ties keep ascending index order."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    return np.argsort(-s, kind="stable")


def average_precision(scores, positives) -> float:
    """Mean over positives of precision at that positive's rank.

    Raises:
        UndefinedMetricError: if there are no positives.
    """
    pos = np.asarray(positives, dtype=bool)
    if len(pos) != len(np.asarray(scores)):
        raise ValueError("scores and positives differ in length")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision is undefined with zero positives")
    hits = pos[rank_order(scores)]
    ranks = np.flatnonzero(hits) + 1.0
    precisions = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precisions.tolist()) / n_pos


def no_skill_baseline(labels: Sequence[int]) -> np.ndarray:
    """Per-class prevalence, the expected AP of an uninformative ranking."""
    y = np.asarray(labels)
    counts = np.bincount(y, minlength=N_CLASSES)[:N_CLASSES]
    if (counts == 0).any():
        raise ValueError(f"every class must be present, got counts {counts.tolist()}")
    return counts / counts.sum()


def mean_average_precision(
    scores: np.ndarray,
    labels: Sequence[int],
    row_ids: Sequence | None = None,
    **provenance,
) -> EvalReport:
    """Per-class one-vs-all AP and their unweighted mean.

    With ``row_ids`` the rows are first stably sorted by id, so ties in the
    scores resolve the same way under any row permutation.

    Raises:
        UndefinedMetricError: if a class is absent from ``labels``.
    """
    S = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if S.shape != (len(y), N_CLASSES):
        raise ValueError(f"scores must be ({len(y)}, {N_CLASSES}), got {S.shape}")
    if row_ids is not None:
        order = sorted(range(len(y)), key=lambda i: row_ids[i])
        S, y = S[order], y[order]
    counts = np.bincount(y, minlength=N_CLASSES)[:N_CLASSES]
    missing = [c for c in range(N_CLASSES) if counts[c] == 0]
    if missing:
        raise UndefinedMetricError(f"classes {missing} absent from the evaluation labels")
    aps = [average_precision(S[:, c], y == c) for c in range(N_CLASSES)]
    return EvalReport(
        per_class_ap=aps,
        map=sum(aps) / N_CLASSES,
        n_test=len(y),
        class_prevalence=(counts / counts.sum()).tolist(),
        **provenance,
    )
