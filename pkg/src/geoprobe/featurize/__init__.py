"""Image featurizers and the corpus featurization pipeline."""

from .fmat import (
    CorruptFileError,
    FeatureMatrix,
    load_external_features,
    load_features,
    read_fmat,
    save_features,
    write_fmat,
)
from .gist import GistConfig, gabor_bank, gist
from .pipeline import (
    FeaturizerSpec,
    evaluation_count,
    featurize_corpus,
    reset_evaluation_count,
)
from .randconv import FilterBank, RandomConvConfig, make_filter_bank, random_conv_features

__all__ = [
    "CorruptFileError",
    "FeatureMatrix",
    "FeaturizerSpec",
    "FilterBank",
    "GistConfig",
    "RandomConvConfig",
    "evaluation_count",
    "featurize_corpus",
    "gabor_bank",
    "gist",
    "load_external_features",
    "load_features",
    "make_filter_bank",
    "random_conv_features",
    "read_fmat",
    "reset_evaluation_count",
    "save_features",
    "write_fmat",
]
