"""``cqrnn`` command-line tool.

Subcommands: ``gen-data``, ``train``, ``benchmark``, ``ablate``, ``report``.
Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric or training error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .algorithms import CROSSING_RULES, METHODS, TrainConfig, train
from .data import CensoredDataset, load_csv, save_csv
from .exceptions import CQRError, DataError, NumericError
from .losses import PseudoValue, QuantileGrid
from .metrics import evaluate
from .report import build_report
from .synthgen import TYPE1_SPECS, get_spec, make_type1_split, true_quantile

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def parse_seeds(text: str) -> list:
    """``"0-9"``, ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(v) for v in part.split("-", 1))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _seeds_arg(text):
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _add_config_flags(p):
    g = p.add_argument_group("training options (override manifest values)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--grid-size", type=int, help="number of quantile levels k/(M+1)")
    g.add_argument("--ystar-factor", type=float, help="y* = factor * max training label")
    g.add_argument("--hidden", type=_csv_list(int), help="hidden layer widths, e.g. 100,100")
    g.add_argument("--activation", choices=("relu", "gelu"))
    g.add_argument("--dropout", action="store_true", default=None)
    g.add_argument("--crossing-rule", choices=CROSSING_RULES)
    g.add_argument("--crossing-weight", type=float)
    g.add_argument("--monotone", action="store_true", default=None)
    g.add_argument("--nonpositive-labels", choices=("raise", "clip"))


_FLAG_TO_FIELD = {
    "epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
    "weight_decay": "weight_decay", "ystar_factor": "pseudo", "hidden": "hidden_sizes",
    "activation": "activation", "dropout": "dropout", "crossing_rule": "crossing_rule",
    "crossing_weight": "crossing_weight", "monotone": "monotone",
    "nonpositive_labels": "nonpositive_labels", "grid_size": "grid_size",
}


def _overrides(args) -> dict:
    out = {}
    for flag, name in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[name] = v
    return out


def _apply(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    o = dict(overrides)
    if "grid_size" in o:
        o["grid"] = QuantileGrid.even(o.pop("grid_size"))
    if "pseudo" in o:
        o["pseudo"] = PseudoValue(o["pseudo"])
    if "hidden_sizes" in o:
        o["hidden_sizes"] = tuple(o["hidden_sizes"])
    return cfg.replace(**o)


# --------------------------------------------------------------------------
# gen-data


def _write_truth(path, spec, test: CensoredDataset, grid: QuantileGrid):
    header = [f"x{k + 1}" for k in range(spec.dim)] + [f"y_{t!r}" for t in grid.levels]
    truth = np.stack([true_quantile(spec, test.features, t) for t in grid.levels], axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, q in zip(test.features, truth):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in q])


def cmd_gen_data(args) -> int:
    spec = get_spec(args.name)
    tr, te = make_type1_split(spec, args.seed, args.n_train, args.n_test)
    out = Path(args.out or f"data/{spec.name}_seed{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    default_m = len(harness.default_config(harness.DataSource(spec.name)).grid)
    grid = QuantileGrid.even(args.grid_size or default_m)
    save_csv(tr, out / "train.csv")
    save_csv(te, out / "test.csv")
    _write_truth(out / "truth.csv", spec, te, grid)
    manifest = {
        "name": spec.name, "type": 1, "seed": args.seed, "dim": spec.dim,
        "n_train": len(tr), "n_test": len(te),
        "prop_censored_train": tr.censored_fraction, "prop_censored_test": te.censored_fraction,
        "truth_levels": list(grid.levels),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}/train.csv ({len(tr)} rows), test.csv ({len(te)} rows), truth.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# train


def _load_data_dir(path: Path):
    """Train/test sets and dataset type from a ``gen-data`` style directory."""
    man_path = path / "manifest.json"
    meta = json.loads(man_path.read_text(encoding="utf-8")) if man_path.exists() else {}
    tr = load_csv(path / "train.csv")
    te_path = path / "test.csv"
    te = load_csv(te_path) if te_path.exists() else None
    name = meta.get("name", path.name)
    kind = int(meta.get("type", 3))
    if kind == 1 and name in TYPE1_SPECS and te is not None:
        spec = get_spec(name)
        te = CensoredDataset(te.features, te.labels, te.indicators, te.true_targets,
                             lambda x, t: true_quantile(spec, x, t), name)
    return name, kind, tr, te


def cmd_train(args) -> int:
    if args.data:
        name, kind, tr, te = _load_data_dir(Path(args.data))
        if args.type:
            kind = args.type
    else:
        name, kind = args.name, 1
        tr, te = make_type1_split(name, args.seed)
    base = harness.default_config(harness.DataSource(name)) if kind == 1 and name in TYPE1_SPECS \
        else TrainConfig()
    cfg = _apply(base, _overrides(args)).replace(seed=args.seed)
    model = train(args.method, tr, cfg)
    out = Path(args.out or f"runs/{name}_{args.method}_seed{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    model.write_history(out / "history.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    msg = f"trained {args.method} on {name} in {model.train_seconds:.2f}s -> {out}/model.json"
    if te is not None:
        rep = evaluate(model, te, kind, name, args.seed)
        harness.write_rows(out / "metrics.csv", [rep.to_row()], harness.DETAIL_COLUMNS)
        vals = ", ".join(f"{k}={v:.4g}" for k, v in rep.values().items() if v is not None)
        msg += f"\n{vals}"
    print(msg)
    return EXIT_OK


# --------------------------------------------------------------------------
# benchmark


def cmd_benchmark(args) -> int:
    manifests = harness.load_manifest(args.manifest, _overrides(args))
    if args.seeds:
        for m in manifests:
            m.seeds = tuple(args.seeds)
    out = Path(args.out or manifests[0].out_dir or "runs/benchmark")
    out.mkdir(parents=True, exist_ok=True)
    reports, timings = harness.run_manifests(manifests, out, save_checkpoints=not args.no_checkpoints)
    (out / "manifest.json").write_text(
        json.dumps({"runs": [m.to_dict() for m in manifests]}, indent=2) + "\n", encoding="utf-8")
    harness.write_rows(out / "metrics.csv", harness.detail_rows(reports), harness.DETAIL_COLUMNS)
    summary = harness.summarize(reports)
    harness.write_rows(out / "summary.csv", summary)
    harness.write_rows(out / "timings.csv",
                       [{"dataset": d, "method": m, "seed": str(s), "train_ms": repr(ms)}
                        for d, m, s, ms in timings])
    for row in summary:
        flag = f" ({row['n_failed']} diverged)" if row["n_failed"] != "0" else ""
        parts = [f"{k[:-5]}={float(v):.4g}" for k, v in row.items() if k.endswith("_mean") and v]
        print(f"{row['dataset']:>16} {row['method']:>8}  " + "  ".join(parts) + flag)
    print(f"results in {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# ablate


def cmd_ablate(args) -> int:
    params = {}
    if args.grid_sizes:
        params["grid_sizes"] = args.grid_sizes
    if args.ns:
        params["ns"] = args.ns
    if args.factors:
        params["factors"] = args.factors
    if args.modes:
        params["modes"] = args.modes
    if args.n_train:
        params["n_train"] = args.n_train
    if args.epochs:
        params["epochs"] = args.epochs
    src = harness.DataSource(args.dataset)
    base = _apply(harness.default_config(src), _overrides(args))
    reports = harness.run_ablation(args.kind, args.dataset, args.seeds, args.method, params, base)
    sweep_keys = list(reports[0].extra) if reports else []
    out = Path(args.out or f"runs/ablate_{args.kind}_{args.dataset}.csv")
    harness.write_rows(out, harness.detail_rows(reports),
                       harness.DETAIL_COLUMNS + [k for k in sweep_keys])
    summary = harness.summarize(reports, keys=("dataset", "method", *sweep_keys))
    harness.write_rows(out.with_name(out.stem + "_summary.csv"), summary)
    for row in summary:
        cell = " ".join(f"{k}={row[k]}" for k in sweep_keys)
        tq = row["tqmse_mean"]
        print(f"{cell:>30}  tqmse={float(tq):.6g}" if tq else f"{cell:>30}  tqmse=n/a")
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    written, absent, notices = build_report(args.runs, args.out)
    for n in notices:
        print(f"note: {n}", file=sys.stderr)
    for p in absent:
        print(f"absent: {p}", file=sys.stderr)
    for p in written:
        print(f"wrote {p}")
    if absent and args.strict:
        return EXIT_DATA
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cqrnn", description="Censored quantile regression experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic train/test pair")
    g.add_argument("--name", required=True, help=", ".join(TYPE1_SPECS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--grid-size", type=int, help="levels written to truth.csv")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one model")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--name", help="generated dataset name")
    src.add_argument("--data", help="directory holding train.csv (and optionally test.csv)")
    t.add_argument("--type", type=int, choices=(1, 2, 3), help="dataset type for --data")
    t.add_argument("--method", choices=tuple(METHODS), default="cqrnn")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("benchmark", help="run a manifest over several seeds")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out")
    b.add_argument("--seeds", type=_seeds_arg)
    b.add_argument("--no-checkpoints", action="store_true")
    _add_config_flags(b)
    b.set_defaults(func=cmd_benchmark)

    a = sub.add_parser("ablate", help="sweep grid size, y* factor or crossing handling")
    a.add_argument("--kind", required=True, choices=("grid", "ystar", "crossing"))
    a.add_argument("--dataset", required=True)
    a.add_argument("--method", choices=tuple(METHODS), default="cqrnn")
    a.add_argument("--seeds", type=_seeds_arg, default=list(range(10)))
    a.add_argument("--grid-sizes", type=_csv_list(int))
    a.add_argument("--ns", type=_csv_list(int))
    a.add_argument("--factors", type=_csv_list(float))
    a.add_argument("--modes", type=_csv_list(str))
    a.add_argument("--n-train", type=int)
    a.add_argument("--out")
    _add_config_flags(a)
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="fan CSVs and a markdown table from a benchmark run")
    r.add_argument("--runs", required=True)
    r.add_argument("--out")
    r.add_argument("--strict", action="store_true", help="exit 2 when checkpoints are missing")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CQRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
