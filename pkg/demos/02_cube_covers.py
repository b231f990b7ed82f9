# %% [markdown]
# Covers of the square by boxes: set count against face-to-face chain lengths.

# %%
import numpy as np
from qmrigid.cube_inequality import check_length_volume, grid_cover, random_box_cover

for m in (2, 5, 9):
    r = check_length_volume(grid_cover(m))
    print(f"{m}x{m} grid: N={r.N} chains={r.d} product={r.product}")

# %%
slack = []
for seed in range(200):
    r = check_length_volume(random_box_cover(2, seed, 200))
    assert r.holds
    slack.append(r.N / r.product)
print("random covers, N / (d1 d2): min %.2f median %.2f" % (min(slack), np.median(slack)))

# %%
c = random_box_cover(3, 7, 500)
r = check_length_volume(c)
print("a cube cover:", r.N, "sets, chain lengths", r.d)
