# %% [markdown]
# # Learning curves on a synthetic city
#
# Train on growing samples drawn by each scheme, test on one buffered UAR
# hold-out per seed, and plot MAP against sample size.

# %%
import sys
import time
from pathlib import Path

from geoprobe import ExperimentConfig, GeoPoint, RidgeConfig, SamplePlan, SynthConfig, TileGrid, run_learning_curve
from geoprobe.featurize import FeaturizerSpec, GistConfig, RandomConvConfig
from geoprobe.report import curve_summary, emit_report

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")

city = SynthConfig(
    n_homes=30_000,
    grid=TileGrid(GeoPoint(33.5, -112.0), 128.0, 100, 100, 4.0),
    n_price_bumps=400,
    bump_amplitude=0.25,
    noise_sd=0.05,
    image_noise_sd=30.0,
    texture_gain=0.5,
    seed=1,
)

# %%
cfg = ExperimentConfig(
    schemes=(
        SamplePlan("uar", 1),
        SamplePlan("cluster", 1, k_clusters=4),
        SamplePlan("lat", 1),
        SamplePlan("lon", 1, side="high"),
    ),
    featurizers=(
        FeaturizerSpec("gist", gist=GistConfig(resize=32)),
        FeaturizerSpec("randconv", randconv=RandomConvConfig(n_filters=64, channels=1)),
    ),
    sizes=(100, 300, 1000, 3000),
    seeds=(0, 1, 2),
    synth=city,
    ridge=RidgeConfig(select=True),
    reference_n=3000,
    workers=4,
)

t0 = time.perf_counter()
result = run_learning_curve(cfg)
print(f"{len(result.rows)} cells in {time.perf_counter() - t0:.0f}s")

# %%
# median MAP per curve point over the seeds
for s in curve_summary(result):
    med = "   -  " if s["median"] is None else f"{s['median']:.3f}"
    print(f"{s['scheme']:<9} {s['featurizer']:<9} n={s['n']:<5} {med}")

# %%
paths = emit_report(result, out_dir)
print("wrote", ", ".join(str(p) for p in paths.values()))
