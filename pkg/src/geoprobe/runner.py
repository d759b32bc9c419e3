"""Experiment grid: sampling scheme x featurizer x sample size x seed.

Per seed there is exactly one buffered spatial split, shared by every cell
with that seed. The labeled corpus is featurized once per featurizer before
any cell runs; cells then draw their training sample from the train side
only, fit ridge, and score the fixed test set.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .evaluation import UndefinedMetricError, mean_average_precision
from .featurize import FeatureMatrix, FeaturizerSpec, featurize_corpus
from .geodata import (
    ImageTile,
    LabeledTile,
    SpatialSplit,
    format_tile_id,
    label_tiles,
    load_grid,
    load_homes,
    load_tiles,
    spatial_split,
)
from .model import RidgeConfig, predict_scores, train_ridge_ova
from .sampler import InfeasibleSample, SamplePlan, Scheme, draw
from .synthgen import SynthConfig, gen_corpus

logger = logging.getLogger(__name__)

_SAMPLE_STREAM = 101


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class CellError(RuntimeError):
    """A module error raised inside one grid cell."""

    def __init__(self, cell: tuple, exc: BaseException):
        super().__init__(f"cell {cell}: {type(exc).__name__}: {exc}")
        self.cell = cell


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    schemes: tuple[SamplePlan, ...]
    featurizers: tuple[FeaturizerSpec, ...]
    sizes: tuple[int, ...]
    seeds: tuple[int, ...]
    synth: SynthConfig | None = None
    homes_path: str | None = None
    tiles_dir: str | None = None
    test_fraction: float = 0.2
    buffer_m: float = 100.0
    ridge: RidgeConfig = field(default_factory=lambda: RidgeConfig(select=True))
    reference_n: int | None = None
    workers: int = 1
    cache_dir: str | None = None
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.schemes or not self.featurizers:
            raise ConfigError("need at least one scheme and one featurizer")
        if not self.sizes or any(n < 1 for n in self.sizes) or list(self.sizes) != sorted(self.sizes):
            raise ConfigError(f"sizes must be ascending and >= 1, got {list(self.sizes)}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.buffer_m < 0:
            raise ConfigError("buffer_m must be >= 0")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.synth is None and not (self.homes_path and self.tiles_dir):
            raise ConfigError("config needs either 'synth' or both 'homes' and 'tiles'")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        try:
            corpus = d.get("corpus", {})
            schemes = tuple(
                SamplePlan(s["scheme"], 1, 0, s.get("k_clusters"), s.get("boundary"), s.get("side", "low"))
                for s in d["schemes"]
            )
            return cls(
                schemes=schemes,
                featurizers=tuple(FeaturizerSpec.from_dict(f) for f in d["featurizers"]),
                sizes=tuple(int(n) for n in d["sizes"]),
                seeds=tuple(int(s) for s in d["seeds"]),
                synth=SynthConfig.from_dict(corpus["synth"]) if "synth" in corpus else None,
                homes_path=corpus.get("homes"),
                tiles_dir=corpus.get("tiles"),
                test_fraction=float(d.get("test_fraction", 0.2)),
                buffer_m=float(d.get("buffer_m", 100.0)),
                ridge=RidgeConfig(**{"select": True, **d.get("ridge", {})}),
                reference_n=d.get("reference_n"),
                workers=int(d.get("workers", 1)),
                cache_dir=d.get("cache_dir"),
                output_dir=d.get("output_dir"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class CellResult:
    scheme: str
    k_clusters: int | None
    featurizer: str
    n_requested: int
    n_train_effective: int
    seed: int
    lam: float | None
    map: float | None
    ap: list[float] | None
    status: str = "ok"
    reason: str = ""
    class_prevalence: list[float] | None = None
    n_test: int = 0

    @property
    def key(self) -> tuple:
        return (self.scheme, self.featurizer, self.n_requested, self.seed)


@dataclass
class CurveResult:
    rows: list[CellResult]
    sizes: list[int]
    schemes: list[str]
    featurizers: list[str]
    reference_n: int | None = None
    reference_map: dict[str, float] | None = None
    test_ids: dict[int, list[str]] = field(default_factory=dict)
    # not serialized: training ids per cell key, for leakage checks
    samples: dict[tuple, list] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        d["test_ids"] = {str(k): v for k, v in self.test_ids.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CurveResult:
        d = dict(d)
        d["rows"] = [CellResult(**r) for r in d["rows"]]
        d["test_ids"] = {int(k): v for k, v in d.get("test_ids", {}).items()}
        return cls(**d)

    def ok_rows(self) -> list[CellResult]:
        return [r for r in self.rows if r.status == "ok"]


@dataclass
class Corpus:
    """A labeled corpus with the images of its labeled tiles."""

    labeled: list[LabeledTile]
    images: list[ImageTile]

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> Corpus:
        if cfg.synth is not None:
            synth = gen_corpus(cfg.synth, n_workers=cfg.workers)
            labeled, _ = label_tiles(synth.homes, cfg.synth.grid)
            by_id = {t.tile_id: t for t in synth.tiles}
            return cls(labeled, [by_id[t.tile_id] for t in labeled])
        homes = load_homes(cfg.homes_path)
        grid = load_grid(cfg.tiles_dir)
        labeled, _ = label_tiles(homes, grid)
        _, images = load_tiles(cfg.tiles_dir, [t.tile_id for t in labeled])
        return cls(labeled, images)


def featurize_all(cfg: ExperimentConfig, corpus: Corpus) -> dict[str, FeatureMatrix]:
    return {
        spec.label: featurize_corpus(corpus.images, spec, cfg.workers, cfg.cache_dir)
        for spec in cfg.featurizers
    }


def _run_cell(
    cfg: ExperimentConfig,
    template: SamplePlan,
    feat_name: str,
    fm: FeatureMatrix,
    n: int,
    seed: int,
    split: SpatialSplit,
) -> tuple[CellResult, list]:
    label = template.label
    base = dict(scheme=label, k_clusters=template.k_clusters, featurizer=feat_name,
                n_requested=n, seed=seed)
    plan = replace(template, n=n, seed=derive_seed(seed, _SAMPLE_STREAM))
    try:
        sample = draw(split.train, plan)
    except InfeasibleSample as exc:
        return CellResult(**base, n_train_effective=0, lam=None, map=None, ap=None,
                          status="infeasible", reason=exc.reason), []
    labels = {t.tile_id: t.label for t in split.train}
    y_train = [labels[t] for t in sample.tile_ids]
    model = train_ridge_ova(fm.rows_for(sample.tile_ids), y_train, replace(cfg.ridge, seed=seed))
    test_ids = [t.tile_id for t in split.test]
    scores = predict_scores(fm.rows_for(test_ids), model)
    try:
        rep = mean_average_precision(scores, [t.label for t in split.test], row_ids=test_ids)
    except UndefinedMetricError:
        return CellResult(**base, n_train_effective=len(sample.tile_ids), lam=model.trained_lambda,
                          map=None, ap=None, status="infeasible",
                          reason="test_class_missing"), sample.tile_ids
    return CellResult(**base, n_train_effective=len(sample.tile_ids), lam=model.trained_lambda,
                      map=rep.map, ap=rep.per_class_ap, class_prevalence=rep.class_prevalence,
                      n_test=rep.n_test), sample.tile_ids


def run_learning_curve(cfg: ExperimentConfig, corpus: Corpus | None = None,
                       features: dict[str, FeatureMatrix] | None = None) -> CurveResult:
    """Evaluate every grid cell; rows come back in (scheme, featurizer, n, seed) order.

    Infeasible cells are kept as rows with status ``infeasible`` and a
    reason code. Any other error is re-raised as :class:`CellError` naming
    the cell.
    """
    corpus = corpus or Corpus.from_config(cfg)
    features = features or featurize_all(cfg, corpus)
    splits = {seed: spatial_split(corpus.labeled, cfg.test_fraction, cfg.buffer_m, seed) for seed in cfg.seeds}

    jobs = [
        (tpl, spec.label, n, seed)
        for tpl in cfg.schemes
        for spec in cfg.featurizers
        for n in cfg.sizes
        for seed in cfg.seeds
    ]

    def run(job):
        tpl, fname, n, seed = job
        try:
            return _run_cell(cfg, tpl, fname, features[fname], n, seed, splits[seed])
        except Exception as exc:
            raise CellError((tpl.label, fname, n, seed), exc) from exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            outputs = list(pool.map(run, jobs))
    else:
        outputs = [run(j) for j in jobs]

    rows = [o[0] for o in outputs]
    result = CurveResult(
        rows=rows,
        sizes=list(cfg.sizes),
        schemes=[t.label for t in cfg.schemes],
        featurizers=[s.label for s in cfg.featurizers],
        reference_n=cfg.reference_n,
        test_ids={seed: [format_tile_id(t.tile_id) for t in sp.test] for seed, sp in splits.items()},
        samples={o[0].key: o[1] for o in outputs},
    )
    result.reference_map = reference_maps(result)
    return result


def reference_maps(result: CurveResult) -> dict[str, float] | None:
    """Median UAR MAP at ``reference_n`` per featurizer."""
    if result.reference_n is None:
        return None
    ref = {}
    for fname in result.featurizers:
        vals = [r.map for r in result.ok_rows()
                if r.scheme == Scheme.UAR.value and r.featurizer == fname and r.n_requested == result.reference_n]
        if vals:
            ref[fname] = float(np.median(vals))
    return ref or None


def run_class_breakdown(cfg: ExperimentConfig, fixed_n: int, corpus: Corpus | None = None,
                        features: dict[str, FeatureMatrix] | None = None) -> list[CellResult]:
    """One row per (scheme, featurizer, seed) at a single sample size."""
    one = replace(cfg, sizes=(fixed_n,), reference_n=None)
    return run_learning_curve(one, corpus, features).rows
