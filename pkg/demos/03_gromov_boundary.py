# %% [markdown]
# Gromov products, the four-point delta, and visual metrics on a boundary sample.

# %%
import numpy as np
from qmrigid import group_actions as ga
from qmrigid.generators import hyperbolic_disk, tree_metric
from qmrigid.hyperbolic_core import (BasedSpace, BoundarySample, four_point_delta,
                                     gromov_products, visual_sweep)

tree = tree_metric(150, seed=3)
print("tree delta:", four_point_delta(gromov_products(BasedSpace(tree, 0))).delta)
for s in range(3):
    disk = hyperbolic_disk(200, 6.0, seed=s)
    print("disk sample delta:", round(four_point_delta(gromov_products(BasedSpace(disk, 0))).delta, 4))

# %%
# limit set of a Schottky group, products from the chordal metric on the circle
pts = ga.limit_set_sample(ga.schottky(0.9), 4)
b = BoundarySample.from_disk(pts)
sw = visual_sweep(b, np.linspace(0.1, 1.5, 15))
for e, K, ok in zip(sw.eps, sw.K, sw.lower_ok):
    print(f"eps={e:.1f}  K={K:.3f}  rho/4 <= d_eps: {ok}")
print("K <= sqrt 2 up to eps", sw.bracket[0], "and fails from", sw.bracket[1])
