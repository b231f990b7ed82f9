# %% [markdown]
# Blowing small arcs of the circle up to unit size with elements of the
# (2,3,7) triangle group, and the four distortion constants.

# %%
import numpy as np
from qmrigid import group_actions as ga

m = ga.triangle(2, 3, 7)
ball = ga.elevator_ball(m, 1e-3)
print(len(ball.elements), "candidate elements")

# %%
rng = np.random.default_rng(0)
for r in (1e-1, 1e-2, 1e-3):
    p = np.exp(1j * rng.uniform(0, 2 * np.pi))
    pts = ga.elevator_sample(p, r)
    c = ga.conformal_elevator(m, pts, int(np.argmin(np.abs(pts - p))), r, 8, ball=ball)
    print(f"r={r:g}", {k: None if v is None else round(v, 3) for k, v in c.constants().items()})
