# %% [markdown]
# Orbit counting: exponential growth rate of Fuchsian groups, and the
# dimension of a Schottky limit set.

# %%
import numpy as np
from qmrigid import group_actions as ga
from qmrigid.metric_core import box_counts, loglog_slope

ob = ga.orbit_ball(ga.psl2z(), 10.0)
print("PSL(2,Z): N(10) =", ob.N, " lattice count:", ga.lattice_orbit_count(10.0))
print("growth rate on [5, 10]:", round(ga.entropy(ob, (5, 10)).slope, 4))

# %%
for t in (0.5, 0.7, 0.9):
    m = ga.schottky(t)
    e = ga.entropy(ga.orbit_ball(m, 16.0), (8, 16)).slope
    pts = ga.limit_set_sample(m, 8)
    s = np.geomspace(1e-3, 1e-1, 9)
    dim = loglog_slope(s, box_counts(np.c_[pts.real, pts.imag], s))
    print(f"schottky t={t}: growth {e:.3f}  box dimension {dim:.3f}  ({len(pts)} limit points)")

# %%
# a single translation grows linearly: the fitted log slope decays like 1/R
for R in (12, 24, 48):
    print(R, round(ga.entropy(ga.orbit_ball(ga.cyclic(), R), (R / 2, R)).slope, 4))
