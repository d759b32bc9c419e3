"""Benchmark harness for predicting price classes from overhead imagery
under different ground-truth sampling designs, featurizers and sample sizes."""

from .evaluation import EvalReport, UndefinedMetricError, average_precision, mean_average_precision, no_skill_baseline
from .geodata import (
    DataError,
    EmptyTrainSetError,
    GeoPoint,
    HomeRecord,
    ImageTile,
    LabeledTile,
    SpatialSplit,
    TileGrid,
    label_tiles,
    load_homes,
    load_tiles,
    spatial_split,
)
from .model import ModelWeights, RidgeConfig, SingularSystemError, predict_scores, train_ridge_ova
from .runner import CurveResult, ExperimentConfig, run_class_breakdown, run_learning_curve
from .sampler import InfeasibleSample, SamplePlan, SampleResult, Scheme, draw
from .synthgen import SynthConfig, SynthCorpus, gen_corpus

__version__ = "0.1.0"

__all__ = [
    "CurveResult", "DataError", "EmptyTrainSetError", "EvalReport", "ExperimentConfig", "GeoPoint",
    "HomeRecord", "ImageTile", "InfeasibleSample", "LabeledTile", "ModelWeights", "RidgeConfig",
    "SamplePlan", "SampleResult", "Scheme", "SingularSystemError", "SpatialSplit", "SynthConfig",
    "SynthCorpus", "TileGrid", "UndefinedMetricError", "average_precision", "draw", "gen_corpus",
    "label_tiles", "load_homes", "load_tiles", "mean_average_precision", "no_skill_baseline",
    "predict_scores", "run_class_breakdown", "run_learning_curve", "spatial_split", "train_ridge_ova",
]
