# %% [markdown]
# # How the four sampling schemes cover a city
#
# Same population, four ways of picking 400 training tiles. We look at
# how spread out each sample is and which price classes it sees.

# %%
import numpy as np

from geoprobe import GeoPoint, SamplePlan, SynthConfig, TileGrid, draw, gen_corpus, label_tiles
from geoprobe.geodata import haversine_m

grid = TileGrid(GeoPoint(33.5, -112.0), 128.0, 60, 60, 4.0)
cfg = SynthConfig(n_homes=25_000, grid=grid, seed=4)
tiles, thresholds = label_tiles(gen_corpus(cfg).homes, grid)
print(f"{len(tiles)} labeled tiles, log-price cuts at {thresholds.mu - thresholds.sigma:.2f} / {thresholds.mu + thresholds.sigma:.2f}")

# %%
# population class mix, for reference
pop_mix = np.bincount([t.label for t in tiles], minlength=3) / len(tiles)
print("population  ", np.round(pop_mix, 3))

# %%
by_id = {t.tile_id: t for t in tiles}
plans = [
    SamplePlan("uar", 400, seed=1),
    SamplePlan("cluster", 400, seed=1, k_clusters=4),
    SamplePlan("lat", 400, seed=1, side="low"),
    SamplePlan("lon", 400, seed=1, side="high"),
]
for plan in plans:
    chosen = [by_id[i] for i in draw(tiles, plan).tile_ids]
    lat = np.array([t.centroid.lat for t in chosen])
    lon = np.array([t.centroid.lon for t in chosen])
    d = haversine_m(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    spread_km = d[np.triu_indices(len(chosen), 1)].mean() / 1000
    mix = np.bincount([t.label for t in chosen], minlength=3) / len(chosen)
    print(f"{plan.label:<10}  mean pairwise {spread_km:5.2f} km  classes {np.round(mix, 3)}")

# %% [markdown]
# Four centres scattered over the map keep the mean pairwise distance close
# to UAR's, yet each cluster sees only its own neighbourhoods, so the class
# mix drifts. A stratified half can miss a tail class almost entirely.
