# %% [markdown]
# # How far away should the pseudo label sit?
#
# Censored rows are split between their observed value and a far-away
# pseudo label y* = c * max(y). With light censoring the choice of c hardly
# matters. With heavy censoring a huge c drags the upper quantiles upward.

# %%
from cqrnn.harness import run_ablation, summarize

seeds = [0, 1, 2]
for dataset in ("norm_light", "norm_heavy"):
    reports = run_ablation("ystar", dataset, seeds, params={"n_train": 2000, "factors": [1.2, 2.0, 100.0]})
    for row in summarize(reports, keys=("dataset", "ystar_factor")):
        print(f"{row['dataset']:>11}  c={float(row['ystar_factor']):6.1f}  "
              f"TQMSE={float(row['tqmse_mean']):10.3f} +/- {float(row['tqmse_se']):.3f}")
