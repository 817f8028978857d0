"""Run the standard experiment recipes through the CLI.

    python scripts/reproduce_tables.py --list
    python scripts/reproduce_tables.py italy_sweep german_haphazard --out results/
    python scripts/reproduce_tables.py all --n-runs 5 --jobs 8

Each recipe writes its per-run CSV, summary CSV and manifest under
``<out>/<recipe>/``. Recipes whose dataset file is absent are reported and
skipped (see ``scripts/prepare_data.py`` and the README for obtaining data).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from hapstream import cli
from hapstream.data import dataset_path

RECIPES = {
    "italy_sweep": ("italy_power", ["sweep", "--dataset", "italy_power", "--model", "hapnet",
                                    "--p", "0.5", "0.6", "0.7", "0.8", "0.9", "0.95", "0.99"]),
    "german_haphazard": ("german", ["run", "--dataset", "german", "--p", "0.73"]),
    "svmguide3_haphazard": ("svmguide3", ["run", "--dataset", "svmguide3", "--p", "0.72"]),
    "magic04_haphazard": ("magic04", ["run", "--dataset", "magic04", "--p", "0.68"]),
    "a8a_haphazard": ("a8a", ["run", "--dataset", "a8a", "--p", "0.75"]),
    "german_trapezoid": ("german", ["run", "--dataset", "german", "--mode", "trapezoid"]),
    "german_hapnetpu": ("german", ["run", "--dataset", "german", "--model", "hapnetpu",
                                   "--mode", "variable_window", "--p", "0.73"]),
    "german_hedge": ("german", ["run", "--dataset", "german", "--model", "hedge", "--p", "0.73"]),
    "german_weighted_residual": ("german", ["run", "--dataset", "german", "--model",
                                            "weighted_residual", "--p", "0.73"]),
    "ablate_dropout": ("german", ["ablate", "--dataset", "german", "--p", "0.73",
                                  "--axis", "dropout", "--values", "0.15", "0.3", "0.5"]),
    "ablate_p": ("german", ["ablate", "--dataset", "german", "--axis", "p",
                            "--values", "0.5", "0.73", "0.9"]),
    "ablate_lr": ("german", ["ablate", "--dataset", "german", "--p", "0.73",
                             "--axis", "lr", "--values", "0.0001", "0.001"]),
    "ablate_blocks": ("german", ["ablate", "--dataset", "german", "--p", "0.73",
                                 "--axis", "blocks", "--values", "6", "12", "24"]),
    "ablate_batch_size": ("german", ["ablate", "--dataset", "german", "--p", "0.73",
                                     "--axis", "batch_size", "--values", "16", "64", "128"]),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("recipes", nargs="*", help="recipe names, or 'all'")
    ap.add_argument("--list", action="store_true")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--n-runs", default="20")
    ap.add_argument("--jobs", default=str(os.cpu_count() or 1))
    args = ap.parse_args(argv)
    if args.list or not args.recipes:
        for name, (dataset, argv_) in RECIPES.items():
            print(f"{name:26s} hapstream {' '.join(argv_)}")
        return 0
    names = list(RECIPES) if args.recipes == ["all"] else args.recipes
    unknown = [n for n in names if n not in RECIPES]
    if unknown:
        ap.error(f"unknown recipes: {unknown}")
    worst = 0
    for name in names:
        dataset, argv_ = RECIPES[name]
        if not dataset_path(dataset).exists():
            print(f"[{name}] skipped: {dataset} not found at {dataset_path(dataset)}")
            continue
        print(f"[{name}] hapstream {' '.join(argv_)}", flush=True)
        code = cli.main([*argv_, "--n-runs", args.n_runs, "--jobs", args.jobs,
                         "--out", str(args.out / name)])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
