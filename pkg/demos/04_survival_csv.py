# %% [markdown]
# # Running on your own survival table
#
# Any CSV with feature columns, a label column `y` and an event indicator
# `delta` (1 = observed, 0 = right-censored) can be used. Without access to
# true quantiles only the censoring-aware metrics are reported.

# %%
from pathlib import Path

from cqrnn import TrainConfig, evaluate, load_csv, split, train_cqrnn
from cqrnn.data import SplitConfig

csv_path = Path(__file__).resolve().parents[1] / "tests" / "data" / "type3_survival.csv"
table = load_csv(csv_path)
print(f"{len(table)} rows, {table.n_features} features, {table.censored_fraction:.0%} censored")

# %%
train, test = split(table, SplitConfig(test_fraction=0.2, seed=0))
model = train_cqrnn(train, TrainConfig(epochs=100))
rep = evaluate(model, test, dataset_type=3, dataset="survival")
print({k: round(v, 3) for k, v in rep.values().items() if v is not None})

# %% [markdown]
# The median column doubles as a risk score: a higher predicted median
# means a later expected event.

# %%
median = model.predict(test.features)[:, model.grid.index_of(0.5)]
print("first five predicted medians:", median[:5].round(2))
