# %% [markdown]
# Recovering a circle from its snowflake.
# Points of the unit circle with distances chord**0.5; chain counts through
# nets of balls of radius ~e^{-eps k} give back the chordal metric up to a band.

# %%
import numpy as np
from qmrigid.generators import circle_snowflake
from qmrigid.chain_metric import desnowflake, resolved_kmax

eps = 0.5
space = circle_snowflake(2048, eps)
chordal = circle_snowflake(2048, 1.0).dist
print("resolved levels up to k =", resolved_kmax(space.normalized()[0], eps))

# %%
rep = desnowflake(space, eps, pair_budget=300, seed=1, reference=chordal)
for k, (lo, hi) in rep.per_k_band.items():
    print(f"k={k}  d_k/chord in [{lo:.3f}, {hi:.3f}]  ratio {hi / lo:.2f}  net size {rep.net_sizes[k]}")
print("overall band ratio", round(rep.band_ratio, 2))

# %%
# without the reference the comparison is against d**(1/eps), the same thing here
plain = desnowflake(space, eps, pair_budget=300, seed=1)
print("band ratio vs d**(1/eps):", round(plain.band_ratio, 2))
