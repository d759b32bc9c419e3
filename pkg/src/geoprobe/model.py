"""One-vs-all ridge regression on +/-1 class targets.

All three class columns share one Cholesky factorization: of the d x d Gram
matrix when there are at least as many rows as features, otherwise of the
n x n kernel matrix (dual form). Intercepts are never penalized.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .evaluation import average_precision
from .featurize.fmat import FeatureMatrix, read_fmat, write_fmat

N_CLASSES = 3


class SingularSystemError(np.linalg.LinAlgError):
    """The regularized normal equations are not positive definite."""


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 1.0
    standardize: bool = True
    fit_intercept: bool = True
    select: bool = False
    lambda_grid: tuple[float, ...] = (1e-4, 1e-2, 1.0, 1e2, 1e4)
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.select and not self.lambda_grid:
            raise ValueError("lambda selection needs a non-empty lambda_grid")
        if any(not (math.isfinite(v) and v >= 0) for v in self.lambda_grid):
            raise ValueError("lambda_grid values must be finite and >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        return d


@dataclass
class ModelWeights:
    W: np.ndarray  # (d, 3)
    intercept: np.ndarray  # (3,)
    feature_means: np.ndarray
    feature_sds: np.ndarray
    trained_lambda: float
    config: RidgeConfig = field(default_factory=RidgeConfig)
    selection: dict[float, float] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.W.shape[0]


def encode_targets(labels: Sequence[int]) -> np.ndarray:
    """n x 3 matrix with +1 in the label's column and -1 elsewhere."""
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise ValueError("labels must be in {0, 1, 2}")
    return np.where(y[:, None] == np.arange(N_CLASSES)[None, :], 1.0, -1.0)


def _as_array(X) -> np.ndarray:
    arr = X.values if isinstance(X, FeatureMatrix) else X
    return np.asarray(arr, dtype=np.float64)


def solve_ridge(X: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """W minimizing ||XW - Y||^2 + lam ||W||^2 for every column of Y.

    Raises:
        SingularSystemError: if the system is not numerically positive
            definite (typically lam = 0 with rank-deficient X).
    """
    n, d = X.shape
    if d == 0:
        return np.zeros((0, Y.shape[1]))
    primal = n >= d
    A = X.T @ X if primal else X @ X.T
    A[np.diag_indices_from(A)] += lam
    try:
        c, low = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular system at lambda={lam}; use lambda > 0") from exc
    piv = np.diag(c) ** 2
    if piv.min() <= piv.max() * A.shape[0] * np.finfo(float).eps:
        raise SingularSystemError(f"numerically singular system at lambda={lam}; use lambda > 0")
    if primal:
        return linalg.cho_solve((c, low), X.T @ Y, check_finite=False)
    return X.T @ linalg.cho_solve((c, low), Y, check_finite=False)


def _fit(X: np.ndarray, Y: np.ndarray, lam: float, cfg: RidgeConfig):
    d = X.shape[1]
    if cfg.standardize:
        means = X.mean(axis=0)
        sds = X.std(axis=0)
        active = sds > 0
        sds = np.where(active, sds, 1.0)
    else:
        means, sds = np.zeros(d), np.ones(d)
        active = np.ones(d, dtype=bool)
    Z = (X - means) / sds
    if cfg.fit_intercept:
        z_bar, y_bar = Z.mean(axis=0), Y.mean(axis=0)
        Zc, Yc = Z - z_bar, Y - y_bar
    else:
        z_bar, y_bar = np.zeros(d), np.zeros(Y.shape[1])
        Zc, Yc = Z, Y
    W = np.zeros((d, Y.shape[1]))
    W[active] = solve_ridge(np.ascontiguousarray(Zc[:, active]), Yc, lam)
    intercept = y_bar - z_bar @ W
    return W, intercept, means, sds


def _select_lambda(X: np.ndarray, y: np.ndarray, cfg: RidgeConfig) -> tuple[float, dict[float, float]]:
    n = len(y)
    n_val = min(max(1, int(math.floor(cfg.val_fraction * n + 0.5))), n - 2)
    if n_val < 1:
        return cfg.lambda_grid[0], {}
    perm = np.random.default_rng(cfg.seed).permutation(n)
    val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    Y = encode_targets(y)
    scores: dict[float, float] = {}
    for lam in cfg.lambda_grid:
        try:
            W, b, m, s = _fit(X[fit], Y[fit], lam, cfg)
        except SingularSystemError:
            continue
        pred = ((X[val] - m) / s) @ W + b
        aps = [average_precision(pred[:, c], y[val] == c)
               for c in range(N_CLASSES) if (y[val] == c).any()]
        scores[lam] = float(np.mean(aps)) if aps else 0.0
    if not scores:
        raise SingularSystemError("every lambda in the grid gave a singular system")
    best = max(scores, key=lambda lam: (scores[lam], -cfg.lambda_grid.index(lam)))
    return best, scores


def train_ridge_ova(X, labels: Sequence[int], cfg: RidgeConfig = RidgeConfig()) -> ModelWeights:
    """Fit the three one-vs-all columns, optionally picking lambda by validation MAP.

    Raises:
        ValueError: fewer than 2 rows, misaligned labels, or non-finite features.
        SingularSystemError: singular system (suggest lambda > 0).
    """
    Xa = _as_array(X)
    y = np.asarray(labels, dtype=np.int64)
    if Xa.ndim != 2 or Xa.shape[0] < 2:
        raise ValueError("need a 2-D design matrix with at least 2 rows")
    if len(y) != Xa.shape[0]:
        raise ValueError(f"{len(y)} labels for {Xa.shape[0]} feature rows")
    if not np.isfinite(Xa).all():
        raise ValueError("non-finite feature values")
    selection: dict[float, float] = {}
    lam = cfg.lam
    if cfg.select:
        lam, selection = _select_lambda(Xa, y, cfg)
    W, b, m, s = _fit(Xa, encode_targets(y), lam, cfg)
    return ModelWeights(W, b, m, s, float(lam), cfg, selection)


def predict_scores(X, weights: ModelWeights) -> np.ndarray:
    Xa = _as_array(X)
    if Xa.ndim != 2 or Xa.shape[1] != weights.d:
        raise ValueError(f"expected {weights.d} feature columns, got shape {Xa.shape}")
    return ((Xa - weights.feature_means) / weights.feature_sds) @ weights.W + weights.intercept


def predict_class(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(scores), axis=1)


def save_model(path: str | Path, weights: ModelWeights) -> None:
    """Write ``<path>`` (JSON header) and ``<path stem>.fmat`` (W, float32)."""
    path = Path(path)
    w_path = path.with_suffix(".fmat")
    header = {
        "config": weights.config.to_dict(),
        "d": weights.d,
        "lambda": weights.trained_lambda,
        "intercept": weights.intercept.tolist(),
        "feature_means": weights.feature_means.tolist(),
        "feature_sds": weights.feature_sds.tolist(),
        "weights_file": w_path.name,
    }
    write_fmat(w_path, weights.W)
    path.write_text(json.dumps(header))


def load_model(path: str | Path) -> ModelWeights:
    path = Path(path)
    h = json.loads(path.read_text())
    W = read_fmat(path.with_name(h["weights_file"])).astype(np.float64)
    if W.shape != (h["d"], N_CLASSES):
        raise ValueError(f"weight block shape {W.shape} does not match d={h['d']}")
    return ModelWeights(
        W,
        np.array(h["intercept"]),
        np.array(h["feature_means"]),
        np.array(h["feature_sds"]),
        float(h["lambda"]),
        RidgeConfig(**h["config"]),
    )
