"""Command-line entry point: dataset generation, training runs with
manifests, evaluation, and comparison reports.

Exit codes: 0 success, 1 runtime/I-O failure, 2 usage error.
Config files are flat ``key = value`` lines (# comments); any key can be
overridden by an environment variable ``DECORRGNN_<KEY>``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import data as D
from . import training as TR
from .cvd import HsicConfig
from .data import DataFormatError

MANIFEST_VERSION = 1
ENV_PREFIX = "DECORRGNN_"

_CONFIG_KEYS = {
    "variant": str,
    "epochs": int,
    "warmup_epochs": int,
    "batch_size": int,
    "lr": float,
    "hidden": int,
    "n_clusters": int,
    "seed": int,
    "decor_epochs": int,
    "weight_lr": float,
    "use_cvd": lambda s: s.lower() in ("1", "true", "yes"),
}


class CliError(RuntimeError):
    pass


def load_config(path) -> TR.TrainConfig:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key not in _CONFIG_KEYS:
                    raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = val
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}") from e
    for key in _CONFIG_KEYS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            values[key] = env
    kwargs = {}
    decor_kwargs = {}
    for key, val in values.items():
        try:
            parsed = _CONFIG_KEYS[key](val)
        except ValueError as e:
            raise CliError(f"config key {key!r}: bad value {val!r}") from e
        if key in ("decor_epochs", "weight_lr"):
            decor_kwargs[key] = parsed
        else:
            kwargs[key] = parsed
    try:
        return TR.TrainConfig(decor=HsicConfig(**decor_kwargs), **kwargs)
    except ValueError as e:
        raise CliError(f"invalid config: {e}") from e


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# -- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        dataset = D.generate_dataset(args.mu, args.n, args.seed, args.split)
        D.save_dataset(dataset, args.out)
    except OSError as e:
        print(f"error: cannot write {args.out}: {e}", file=sys.stderr)
        return 1
    rate = D.star_cooccurrence_rate(dataset)
    print(f"wrote {args.out}: {len(dataset)} graphs, "
          f"positive fraction {dataset.labels().mean():.4f}, "
          f"star co-occurrence among positives {rate:.4f}")
    return 0


def _train_one_seed(config: TR.TrainConfig, seed: int, train_set, val_set, test_set,
                    out_dir):
    cfg = TR.TrainConfig(variant=config.variant, epochs=config.epochs,
                         warmup_epochs=config.warmup_epochs,
                         batch_size=config.batch_size, lr=config.lr,
                         hidden=config.hidden, n_clusters=config.n_clusters,
                         seed=seed, decor=config.decor, use_cvd=config.use_cvd)
    model, history, stats = TR.train(cfg, train_set, val_set)
    metrics = TR.evaluate(model, test_set)
    TR.save_model(model, cfg, os.path.join(out_dir, f"model_seed{seed}.json"))
    with open(os.path.join(out_dir, f"history_seed{seed}.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(TR.history_to_csv(history))
    return {"seed": seed, **metrics, "best_epoch": stats["best_epoch"],
            "decor_steps": stats["decor_steps"]}


def _aggregate(per_seed, key):
    vals = np.array([r[key] for r in per_seed if r[key] is not None], dtype=float)
    if len(vals) == 0:
        return {"mean": None, "stderr": None}
    stderr = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return {"mean": float(vals.mean()), "stderr": stderr}


def cmd_train(args) -> int:
    try:
        config = load_config(args.config)
        train_set = D.load_dataset(args.train)
        val_set = D.load_dataset(args.val)
        test_set = D.load_dataset(args.test)
    except (CliError, DataFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
             else [config.seed])
    os.makedirs(args.out, exist_ok=True)
    per_seed = []
    for seed in seeds:
        result = _train_one_seed(config, seed, train_set, val_set, test_set, args.out)
        per_seed.append(result)
        print(f"seed {seed}: acc {result['accuracy']:.4f} f1 {result['f1']:.4f} "
              f"auc {result['auc']:.4f}")
    manifest = {
        "version": MANIFEST_VERSION,
        "variant": config.variant,
        "mu": train_set.mu,
        "config": {k: getattr(config, k) for k in
                   ("variant", "epochs", "warmup_epochs", "batch_size", "lr",
                    "hidden", "n_clusters", "use_cvd")},
        "decor": {"decor_epochs": config.decor.decor_epochs,
                  "weight_lr": config.decor.weight_lr},
        "datasets": {name: {"path": path, "sha256": sha256_file(path)}
                     for name, path in (("train", args.train), ("val", args.val),
                                        ("test", args.test))},
        "seeds": seeds,
        "per_seed": per_seed,
        "aggregate": {key: _aggregate(per_seed, key)
                      for key in ("accuracy", "f1", "auc")},
        "decor_steps": sum(r["decor_steps"] for r in per_seed),
    }
    manifest_path = os.path.join(args.out, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {manifest_path}")
    return 0


def cmd_eval(args) -> int:
    try:
        model = TR.load_model(args.model)
        dataset = D.load_dataset(args.data)
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename}", file=sys.stderr)
        return 1
    except (DataFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if dataset.graphs[0].features.shape[1] != model.d_in:
        print(f"error: model expects {model.d_in} input features, dataset has "
              f"{dataset.graphs[0].features.shape[1]}", file=sys.stderr)
        return 1
    metrics = TR.evaluate(model, dataset)
    out = {k: (None if v is None else round(v, 4)) for k, v in metrics.items()}
    print(json.dumps(out))
    return 0


def _is_stable(variant: str) -> bool:
    return variant.startswith("stable")


def cmd_report(args) -> int:
    manifests = []
    for path in args.manifests:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: {path}: {e}", file=sys.stderr)
            return 1
        if doc.get("version") != MANIFEST_VERSION:
            print(f"error: {path}: unsupported manifest version", file=sys.stderr)
            return 1
        manifests.append(doc)

    # group by (mu, model family); a group pairs a baseline with a stable run
    groups = {}
    for doc in manifests:
        family = doc["variant"].split("_")[1]
        groups.setdefault((doc["mu"], family), {})[
            "stable" if _is_stable(doc["variant"]) else "baseline"] = doc

    metrics = ("accuracy", "f1", "auc")
    rows = []
    for (mu, family), pair in sorted(groups.items()):
        for role in ("baseline", "stable"):
            if role not in pair:
                continue
            doc = pair[role]
            row = {"mu": mu, "variant": doc["variant"]}
            for k in metrics:
                agg = doc["aggregate"][k]
                row[k] = agg["mean"]
                row[f"{k}_stderr"] = agg["stderr"]
            rows.append(row)
        if "baseline" in pair and "stable" in pair:
            imp = {"mu": mu, "variant": f"improvement_{family}_pct"}
            for k in metrics:
                base = pair["baseline"]["aggregate"][k]["mean"]
                stab = pair["stable"]["aggregate"][k]["mean"]
                imp[k] = (stab - base) / base * 100.0 if base else None
                imp[f"{k}_stderr"] = None
            rows.append(imp)

    fields = ["mu", "variant", "accuracy", "accuracy_stderr", "f1", "f1_stderr",
              "auc", "auc_stderr"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else f"{row[k]:.4f}")
                         if k not in ("mu", "variant") else row[k] for k in fields})
    csv_text = buf.getvalue()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    # aligned text table
    table = [fields] + [line.split(",") for line in csv_text.strip().split("\n")[1:]]
    widths = [max(len(r[i]) for r in table) for i in range(len(fields))]
    for r in table:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return 0


# -- argument parsing ---------------------------------------------------------


def _mu_arg(value: str) -> float:
    mu = float(value)
    if not 0.0 <= mu <= 1.0:
        raise argparse.ArgumentTypeError(f"mu must be in [0, 1], got {mu}")
    return mu


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decorrgnn")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic motif dataset")
    gen.add_argument("--mu", type=_mu_arg, required=True,
                     help="star co-occurrence degree among positives")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--split", default="train", choices=("train", "val", "test"))
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="train a model and write artifacts")
    train.add_argument("--config", required=True)
    train.add_argument("--train", required=True)
    train.add_argument("--val", required=True)
    train.add_argument("--test", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--seeds", default=None,
                       help="comma-separated seeds; default: config seed")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a model snapshot on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="comparison table from run manifests")
    rep.add_argument("manifests", nargs="+")
    rep.add_argument("--csv", default=None, help="also write the table as CSV")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
