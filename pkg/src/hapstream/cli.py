"""Command-line entry point: ``hapstream {run,sweep,ablate,replay}``.

Exit codes: 0 success, 1 invalid configuration or usage, 2 missing dataset,
3 one or more runs failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .data import load_dataset
from .errors import ConfigError, DataMissingError, ParseError
from .experiment import ExperimentConfig, manifest, runner, write_manifest
from .prequential import METRICS, AggregateResult, export, repeat

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

ABLATION_AXES = {
    "dropout": ("model_config", float),
    "lr": ("model_config", float),
    "blocks": ("model_config", int),
    "batch_size": ("model_config", int),
    "p": ("p", float),
}

# flag name -> model_config key
MODEL_FLAGS = {"dropout": float, "lr": float, "blocks": int, "batch_size": int, "K": int,
               "q": float, "d_model": int}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, p_list: bool):
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--dataset", help="registered dataset name or path to a data file")
    p.add_argument("--model", choices=["hapnet", "hapnetpu", "hedge", "weighted_residual"])
    p.add_argument("--mode", choices=["haphazard", "trapezoid", "variable_window"])
    if p_list:
        p.add_argument("--p", type=float, nargs="+", required=True,
                       help="availability probabilities to sweep")
    else:
        p.add_argument("--p", type=float, help="auxiliary feature availability probability")
    p.add_argument("--aux-fraction", type=float, dest="aux_fraction")
    p.add_argument("--trapezoid-chunks", type=int, dest="trapezoid_chunks")
    p.add_argument("--n-runs", type=int, dest="n_runs")
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--no-scale", action="store_const", const=False, dest="scale",
                   help="feed raw feature values instead of online min-max scaling")
    for name, typ in MODEL_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=f"model_{name}",
                       help=f"model override: {name}")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other model config override (value parsed as JSON)")
    _output(p)


def _output(p: argparse.ArgumentParser):
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel repetitions (default: available cores)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hapstream", description="Online learning on haphazard input streams.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="repeat one configuration over seeds"), p_list=False)
    _common(sub.add_parser("sweep", help="one configuration per availability probability"),
            p_list=True)
    ab = sub.add_parser("ablate", help="vary one hyper-parameter")
    ab.add_argument("--axis", required=True, help=f"one of {sorted(ABLATION_AXES)}")
    ab.add_argument("--values", nargs="*", default=[], required=True)
    _common(ab, p_list=False)
    rp = sub.add_parser("replay", help="re-run every experiment recorded in a manifest")
    rp.add_argument("manifest", type=Path)
    _output(rp)
    return parser


def config_from_args(args) -> ExperimentConfig:
    """Defaults < --config file < explicit flags."""
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
    doc.setdefault("model_config", {})
    doc["model_config"] = dict(doc["model_config"])
    for key in ("dataset", "model", "mode", "aux_fraction", "trapezoid_chunks", "n_runs",
                "base_seed", "max_steps", "scale"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    if isinstance(args.p, float):
        doc["p"] = args.p
    for name in MODEL_FLAGS:
        value = getattr(args, f"model_{name}")
        if value is not None:
            doc["model_config"][name] = value
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set: expected KEY=VALUE, got {item!r}")
        try:
            doc["model_config"][key] = json.loads(raw)
        except json.JSONDecodeError:
            doc["model_config"][key] = raw
    return ExperimentConfig.from_dict(doc)


def _dedupe(values: list[float], what: str) -> list[float]:
    out = []
    for v in values:
        if v in out:
            print(f"warning: duplicate {what} {v} ignored", file=sys.stderr)
        else:
            out.append(v)
    return out


def _sweep_configs(base: ExperimentConfig, ps: list[float]) -> list[ExperimentConfig]:
    return [base.replace(p=p) for p in _dedupe(ps, "p")]


def _ablation_configs(base: ExperimentConfig, axis: str, raw: list[str]):
    if axis not in ABLATION_AXES:
        raise ConfigError(f"axis: unsupported {axis!r}; choose from {sorted(ABLATION_AXES)}")
    if not raw:
        raise ConfigError("values: at least one value is required")
    where, typ = ABLATION_AXES[axis]
    try:
        values = _dedupe([typ(v) for v in raw], axis)
    except ValueError:
        raise ConfigError(f"values: cannot parse {raw} as {typ.__name__}") from None
    configs = []
    for v in values:
        if where == "p":
            configs.append(base.replace(p=v))
        else:
            configs.append(base.replace(model_config={**base.model_config, axis: v}))
    return configs


def summary_rows(configs, aggregates: list[AggregateResult], label: str | None = None):
    label = None if label == "p" else label  # p already has a column
    header = ["dataset", "mode", "model", "p"] + ([label] if label else []) + ["runs"]
    header += list(METRICS)
    rows = []
    for cfg, agg in zip(configs, aggregates):
        row = [cfg.dataset, cfg.mode, cfg.model, repr(cfg.p)]
        if label:
            row.append(repr(getattr(cfg.model_settings(), label)))
        row.append(str(agg.n_runs) + ("*" if agg.partial else ""))
        row += [agg.format(m) for m in METRICS]
        rows.append(row)
    return header, rows


def format_table(header, rows) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
             for r in [header] + rows]
    return "\n".join(lines)


def monotonicity_summary(configs, aggregates) -> str:
    pairs = sorted((c.p, a.mean["error"]) for c, a in zip(configs, aggregates))
    errs = [e for _, e in pairs]
    if len(errs) < 2:
        return "error vs p: single point"
    if all(b < a for a, b in zip(errs, errs[1:])):
        return "error vs p: strictly decreasing"
    bumps = [f"{p0}->{p1}" for (p0, e0), (p1, e1) in zip(pairs, pairs[1:]) if e1 >= e0]
    return "error vs p: not monotone (rises or ties at " + ", ".join(bumps) + ")"


def execute(configs: list[ExperimentConfig], out: Path, stem: str, fmt: str, jobs: int,
            command: str, label: str | None = None, extra: dict | None = None) -> int:
    for cfg in configs:
        load_dataset(cfg.dataset)  # fail fast, before writing anything
    out.mkdir(parents=True, exist_ok=True)
    doc = manifest(configs, command, {"output": f"{stem}.{fmt}", "format": fmt,
                                      "label": label, **(extra or {})})
    write_manifest(doc, out / f"{stem}.manifest.json")
    results, aggregates = [], []
    for cfg in configs:
        rs, agg = repeat(runner(cfg), n=cfg.n_runs, base_seed=cfg.base_seed, jobs=jobs)
        results += rs
        aggregates.append(agg)
    export(results, out / f"{stem}.{fmt}", fmt)
    header, rows = summary_rows(configs, aggregates, label)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([header] + rows)
    (out / f"{stem}.summary.csv").write_text(buf.getvalue())
    print(format_table(header, rows))
    if command == "sweep":
        print(monotonicity_summary(configs, aggregates))
    failed = [(cfg.dataset, seed, why) for cfg, agg in zip(configs, aggregates)
              for seed, why in agg.failures]
    for dataset, seed, why in failed:
        print(f"run failed: dataset={dataset} seed={seed}: {why}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def replay(path: Path, out: Path, jobs: int) -> int:
    try:
        doc = json.loads(path.read_text())
        configs = [ExperimentConfig.from_dict(e["config"]) for e in doc["experiments"]]
        stem, fmt = doc["output"].rsplit(".", 1)
        command, label = doc["command"], doc.get("label")
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"manifest: cannot replay {path}: {exc}") from None
    return execute(configs, out, stem, fmt, jobs, command, label)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return replay(args.manifest, args.out, args.jobs)
        base = config_from_args(args)
        if args.command == "run":
            return execute([base], args.out, "run", args.format, args.jobs, "run")
        if args.command == "sweep":
            configs = _sweep_configs(base, args.p)
            return execute(configs, args.out, "sweep", args.format, args.jobs, "sweep", "p")
        configs = _ablation_configs(base, args.axis, args.values)
        return execute(configs, args.out, f"ablate_{args.axis}", args.format, args.jobs,
                       "ablate", args.axis)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataMissingError as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
