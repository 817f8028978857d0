"""Predict-then-update evaluation, metrics, seeded repetition and result export."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff import log_softmax_np
from .errors import ContractError

METRICS = ("error", "mean_ce", "macro_f1", "micro_f1", "accuracy")
CSV_COLUMNS = ("dataset", "mode", "model", "p", "seed") + METRICS


@dataclass
class RunResult:
    dataset: str
    mode: str
    model: str
    p: float
    seed: int
    predictions: list[int] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    ce: list[float] = field(default_factory=list)
    error: int = 0
    mean_ce: float = float("nan")
    macro_f1: float = float("nan")
    micro_f1: float = float("nan")
    accuracy: float = float("nan")
    wall_time_seconds: float = 0.0
    failed_t: int | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def steps(self) -> int:
        return len(self.labels)

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


class RunAborted(RuntimeError):
    def __init__(self, t: int, cause: BaseException, partial: RunResult):
        super().__init__(f"run aborted at t={t}: {cause!r}")
        self.t = t
        self.partial = partial


def classification_metrics(pred: np.ndarray, labels: np.ndarray, num_classes: int | None = None
                           ) -> dict[str, float]:
    """Error count, accuracy and F1 scores; a class with 0/0 F1 scores 0."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ContractError(f"{pred.shape[0]} predictions but {labels.shape[0]} labels")
    if pred.size == 0:
        raise ContractError("metrics need at least one prediction")
    if num_classes is None:
        num_classes = int(max(pred.max(), labels.max())) + 1
    f1 = []
    tp_total = 0
    for c in range(max(num_classes, 2)):
        tp = int(np.sum((pred == c) & (labels == c)))
        fp = int(np.sum((pred == c) & (labels != c)))
        fn = int(np.sum((pred != c) & (labels == c)))
        tp_total += tp
        denom = 2 * tp + fp + fn
        f1.append(2 * tp / denom if denom else 0.0)
    n = pred.size
    errors = int(np.sum(pred != labels))
    # single-label: micro precision == micro recall == accuracy
    micro = tp_total / n
    return {"error": errors, "accuracy": (n - errors) / n, "micro_f1": micro,
            "macro_f1": float(np.mean(f1))}


def metrics(logits, labels) -> dict[str, float]:
    """Metrics from a (n, C) logit matrix; prediction is argmax, ties to the lower class."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != labels.shape[0]:
        raise ContractError(f"{logits.shape[0]} predictions but {labels.shape[0]} labels")
    out = classification_metrics(np.argmax(logits, axis=1), labels, logits.shape[1])
    ce = -log_softmax_np(logits)[np.arange(labels.shape[0]), labels]
    out["mean_ce"] = float(ce.mean())
    return out


def run_prequential(model, stream: Iterable, *, dataset="", mode="", model_name="", p=float("nan"),
                    seed=0, max_steps: int | None = None, num_classes: int | None = None,
                    on_step: Callable | None = None) -> RunResult:
    """Predict each sample (inference mode), score it, then update on its label."""
    result = RunResult(dataset, mode, model_name, p, seed)
    start = time.perf_counter()
    for i, sample in enumerate(stream):
        if max_steps is not None and i >= max_steps:
            break
        t = sample.t
        try:
            logits = np.asarray(model.predict(sample), dtype=np.float64)
            pred = int(np.argmax(logits))
            result.ce.append(float(-log_softmax_np(logits)[sample.label]))
            result.predictions.append(pred)
            result.labels.append(int(sample.label))
            if on_step is not None:
                on_step(sample, logits)
            model.update(sample)
        except Exception as exc:  # noqa: BLE001 - recorded and re-raised with context
            result.failed_t = t
            result.failure = repr(exc)
            _finish(result, start, num_classes)
            raise RunAborted(t, exc, result) from exc
    _finish(result, start, num_classes)
    return result


def _finish(result: RunResult, start: float, num_classes):
    result.wall_time_seconds = time.perf_counter() - start
    if not result.labels:
        return
    m = classification_metrics(np.array(result.predictions), np.array(result.labels), num_classes)
    result.error = m["error"]
    result.accuracy = m["accuracy"]
    result.micro_f1 = m["micro_f1"]
    result.macro_f1 = m["macro_f1"]
    result.mean_ce = float(np.mean(result.ce))


@dataclass
class AggregateResult:
    n_runs: int
    mean: dict[str, float]
    std: dict[str, float]
    std_defined: bool = True
    partial: bool = False
    failures: list[tuple[int, str]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def format(self, name: str, digits: int | None = None) -> str:
        """``mean±std`` table cell; error counts get one decimal, rates four."""
        if digits is None:
            digits = 1 if name == "error" else 4
        return f"{self.mean[name]:.{digits}f}±{self.std[name]:.{digits}f}"


def aggregate(results: Sequence[RunResult]) -> AggregateResult:
    """Mean and sample (n-1) standard deviation over successful runs."""
    ok = [r for r in results if r.ok]
    failures = [(r.seed, r.failure) for r in results if not r.ok]
    mean, std = {}, {}
    for name in METRICS:
        vals = np.array([r.metric(name) for r in ok], dtype=np.float64)
        mean[name] = float(vals.mean()) if vals.size else float("nan")
        std[name] = float(vals.std(ddof=1)) if vals.size >= 2 else 0.0
    return AggregateResult(len(ok), mean, std, std_defined=len(ok) >= 2,
                           partial=bool(failures), failures=failures,
                           seeds=[r.seed for r in results])


def repeat(run_one: Callable[[int], RunResult], n: int = 20, base_seed: int = 0, jobs: int = 1
           ) -> tuple[list[RunResult], AggregateResult]:
    """Run seeds base_seed..base_seed+n-1 (optionally in worker processes), ordered by seed.

    ``run_one`` must be picklable when ``jobs > 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seeds = list(range(base_seed, base_seed + n))
    if jobs <= 1 or n == 1:
        results = [_guarded(run_one, s) for s in seeds]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_guarded, [run_one] * n, seeds))
    results.sort(key=lambda r: r.seed)
    return results, aggregate(results)


def _guarded(run_one, seed: int) -> RunResult:
    try:
        return run_one(seed)
    except RunAborted as exc:
        return exc.partial


# export ----------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def to_json(results: Sequence[RunResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=1, sort_keys=True)


def export(results: Sequence[RunResult], path, format: str = "csv"):
    """Write per-run rows; CSV omits wall time so identical runs give identical bytes."""
    if format not in ("csv", "json"):
        raise ValueError(f"unsupported export format {format!r}")
    text = to_csv(results) if format == "csv" else to_json(results)
    Path(path).write_text(text)


def read_csv(path) -> list[RunResult]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(RunResult(
                dataset=row["dataset"], mode=row["mode"], model=row["model"], p=float(row["p"]),
                seed=int(row["seed"]), error=int(row["error"]), mean_ce=float(row["mean_ce"]),
                macro_f1=float(row["macro_f1"]), micro_f1=float(row["micro_f1"]),
                accuracy=float(row["accuracy"])))
    return out


def read_json(path) -> list[RunResult]:
    return [RunResult(**obj) for obj in json.loads(Path(path).read_text())]


def is_finite_result(r: RunResult) -> bool:
    return all(math.isfinite(r.metric(m)) for m in METRICS)
