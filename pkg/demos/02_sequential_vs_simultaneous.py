# %% [markdown]
# # Fitting quantiles one at a time versus all at once
#
# The sequential grid trains one single-output network per quantile level,
# each level reusing the censoring estimates left by the one below. The
# simultaneous approach fits every level in one network and refreshes the
# estimates inside each minibatch. Here we time both on the same data.

# %%
import numpy as np

from cqrnn import TrainConfig, evaluate, make_type1_split, train_cqrnn, train_sequential_grid

train, test = make_type1_split("norm_nonlinear", seed=2)
cfg = TrainConfig(epochs=100)

results = {}
for fn in (train_cqrnn, train_sequential_grid):
    model = fn(train, cfg)
    rep = evaluate(model, test, dataset_type=1)
    results[model.method] = (model.train_seconds, model.n_params, rep.tqmse)

# %%
for method, (secs, params, tq) in results.items():
    print(f"{method:>8}  {secs:6.2f}s  {params:6d} parameters  TQMSE={tq:.3f}")

speed = results["seqgrid"][0] / results["cqrnn"][0]
print(f"one network is {speed:.1f}x faster and "
      f"{results['seqgrid'][1] / results['cqrnn'][1]:.1f}x smaller")

# %% [markdown]
# The sequential fit also records how many levels it trained before every
# observed label fell below the latest prediction.

# %%
seq = train_sequential_grid(train, cfg.replace(epochs=30))
print("levels trained:", seq.n_levels_trained, "of", len(seq.grid))
print("per-level final loss:", np.round([h[2] for h in seq.history if h[1] == 30], 3))
