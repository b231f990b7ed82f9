# %% [markdown]
# A small campaign: each stage writes a JSON report, the manifest records
# hashes and wall times, and plot views flatten reports to CSV.

# %%
import tempfile
from pathlib import Path

from qmrigid.campaign import CampaignConfig, emit_plot_data, run_campaign

config = {
    "seed": 3,
    "pipeline": [
        {"name": "koch", "op": "gen", "params": {"kind": "koch_curve", "params": {"level": 4}}},
        {"name": "growth", "op": "entropy",
         "params": {"group": "psl2z", "R": 8, "window": [4, 8], "expect_slope": 1, "tol": 0.3}},
        {"name": "covers", "op": "cube-check",
         "params": {"families": [{"n": 2, "count": 50, "max_sets": 200}], "grid": [2, 6]}},
    ],
}
out = Path(tempfile.mkdtemp())
res = run_campaign(CampaignConfig.from_dict(config, out=str(out)), log=print)
print("ok:", res.ok, "files:", sorted(p.name for p in out.iterdir()))

# %%
print(emit_plot_data(res.reports["growth"], "entropy")[:200])
