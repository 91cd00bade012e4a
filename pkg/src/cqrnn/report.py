"""Plot-ready CSVs and a markdown results table from a benchmark directory."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .algorithms import TrainedQuantileModel
from .exceptions import DataError
from .metrics import METRIC_NAMES
from .synthgen import TYPE1_SPECS, true_quantile

__all__ = ["fan_rows", "markdown_table", "build_report", "FAN_POINTS"]

FAN_POINTS = 200
_HEADINGS = {"tqmse": "TQMSE", "uql": "UQL", "undcal": "UnDCal",
             "censdcal": "CensDCal", "c_index": "C-index"}


def _fmt_level(t: float) -> str:
    return f"{t:.4f}".rstrip("0").rstrip(".")


def fan_rows(model: TrainedQuantileModel, xs, dataset: str | None = None):
    """Header and rows of ``x, yhat_<tau>..., y_<tau>...`` for a 1-D model.

    Truth columns appear only for generated datasets.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    taus = model.grid.levels
    pred = model.predict(xs[:, None])
    header = ["x"] + [f"yhat_{_fmt_level(t)}" for t in taus]
    cols = [xs[:, None], pred]
    if dataset in TYPE1_SPECS:
        header += [f"y_{_fmt_level(t)}" for t in taus]
        cols.append(np.stack([true_quantile(dataset, xs[:, None], t) for t in taus], axis=1))
    table = np.concatenate(cols, axis=1)
    return header, [[repr(float(v)) for v in row] for row in table]


def markdown_table(summary_rows) -> str:
    lines = ["| Dataset | Method | " + " | ".join(_HEADINGS[m] for m in METRIC_NAMES) + " |",
             "|" + "---|" * (2 + len(METRIC_NAMES))]
    for row in summary_rows:
        cells = [row["dataset"], row["method"]]
        for m in METRIC_NAMES:
            mean, se = row.get(f"{m}_mean", ""), row.get(f"{m}_se", "")
            cells.append(f"{float(mean):.3f} ± {float(se):.3f}" if mean else "n/a")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def build_report(runs_dir, out_dir=None):
    """Write fan CSVs and ``table.md``; return ``(written, absent, notices)``.

    ``absent`` lists checkpoints named in the run manifest but missing on disk.
    """
    runs_dir = Path(runs_dir)
    man_path = runs_dir / "manifest.json"
    if not man_path.exists():
        raise DataError(f"{runs_dir} has no manifest.json; run the benchmark first")
    runs = json.loads(man_path.read_text(encoding="utf-8"))["runs"]
    out_dir = Path(out_dir) if out_dir else runs_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    written, absent, notices = [], [], []
    for run in runs:
        ds = run["dataset"]
        name, method = ds["name"], run["method"]
        found = []
        for s in run["seeds"]:
            p = runs_dir / "checkpoints" / name / method / f"seed{s}" / "model.json"
            (found if p.exists() else absent).append(p)
        if not found:
            continue
        model = TrainedQuantileModel.load(found[0])
        n_features = len(model.scaler.mean)
        if n_features != 1:
            notices.append(f"{name}/{method}: {n_features}-D inputs, fan CSV skipped")
            continue
        if name in TYPE1_SPECS:
            xs = np.linspace(0.0, 2.0, FAN_POINTS + 2)[1:-1]
        else:
            lo = model.scaler.mean[0] - 2 * model.scaler.std[0]
            hi = model.scaler.mean[0] + 2 * model.scaler.std[0]
            xs = np.linspace(lo, hi, FAN_POINTS)
        header, rows = fan_rows(model, xs, name if ds.get("type", 1) == 1 else None)
        path = out_dir / f"fan_{name}_{method}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)
    summary = runs_dir / "summary.csv"
    if summary.exists():
        path = out_dir / "table.md"
        path.write_text(markdown_table(_read_csv(summary)), encoding="utf-8")
        written.append(path)
    else:
        notices.append("summary.csv not found, table skipped")
    return written, absent, notices
