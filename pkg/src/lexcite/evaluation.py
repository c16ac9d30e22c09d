"""Confusion matrices, averaged metrics, one-vs-rest ROC/AUC, robustness and latency."""

from __future__ import annotations

import csv
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    def to_csv(self, path, labels=None) -> None:
        labels = labels or [str(i) for i in range(self.K)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + list(labels))
            for lab, row in zip(labels, self.counts):
                w.writerow([lab] + [int(x) for x in row])


def confusion(preds, truths, K: int) -> ConfusionMatrix:
    preds, truths = np.asarray(preds, dtype=np.int64), np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise EvaluationError(f"length mismatch: {preds.shape[0]} predictions vs {truths.shape[0]} truths")
    for name, a in (("prediction", preds), ("truth", truths)):
        if a.size and (a.min() < 0 or a.max() >= K):
            raise EvaluationError(f"{name} class index out of range [0, {K})")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: dict
    weighted: dict
    n: int
    undefined: dict = field(default_factory=dict)  # metric -> class indices scored 0 by convention
    auc: np.ndarray | None = None
    macro_auc: float | None = None


def _safe_div(num, den):
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(den)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics(m: ConfusionMatrix) -> MetricsReport:
    """Per-class precision/recall/F1 and their macro and support-weighted means.

    A zero denominator scores 0 and the class is listed in ``undefined``.
    """
    C = m.counts.astype(np.float64)
    n = C.sum()
    if n <= 0:
        raise EvaluationError("metrics of an empty confusion matrix")
    tp = np.diag(C)
    col, row = C.sum(axis=0), C.sum(axis=1)
    precision = _safe_div(tp, col)
    recall = _safe_div(tp, row)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    undefined = {
        "precision": [int(i) for i in np.flatnonzero(col == 0)],
        "recall": [int(i) for i in np.flatnonzero(row == 0)],
        "f1": [int(i) for i in np.flatnonzero(precision + recall == 0)],
    }
    w = row / n
    macro = {"precision": float(precision.mean()), "recall": float(recall.mean()), "f1": float(f1.mean())}
    weighted = {"precision": float(w @ precision), "recall": float(w @ recall), "f1": float(w @ f1)}
    return MetricsReport(float(tp.sum() / n), precision, recall, f1, row.astype(np.int64), macro, weighted,
                         int(n), {k: v for k, v in undefined.items() if v})


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def binary_roc(scores, positive) -> RocCurve:
    """ROC over a descending threshold sweep; tied scores move as one step so ties count half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    P, N = int(pos.sum()), int((~pos).sum())
    if P == 0 or N == 0:
        raise EvaluationError("ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    tps = np.cumsum(pos)
    fps = np.cumsum(~pos)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp, fp = np.r_[0, tps[last]], np.r_[0, fps[last]]
    tpr, fpr = tp / P, fp / N
    thresholds = np.r_[np.inf, s[last]]
    # trapezoid in integer counts, one final division: exact for any realistic n
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * P * N)
    return RocCurve(fpr, tpr, thresholds, auc)


@dataclass
class RocReport:
    per_class: dict  # class index -> RocCurve
    macro_auc: float
    skipped: list


def roc_auc(scores, truths) -> RocReport:
    """One-vs-rest ROC per class and their unweighted mean AUC.

    Classes absent from ``truths`` (or with no negatives) are skipped with a warning.
    """
    S = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truths, dtype=np.int64)
    if S.ndim != 2 or S.shape[0] != y.shape[0]:
        raise EvaluationError(f"scores shape {S.shape} does not match {y.shape[0]} truths")
    per, skipped = {}, []
    for c in range(S.shape[1]):
        pos = y == c
        if not pos.any() or pos.all():
            log.warning("class %d has no %s; skipped in ROC/AUC", c, "positives" if not pos.any() else "negatives")
            skipped.append(c)
            continue
        per[c] = binary_roc(S[:, c], pos)
    if not per:
        raise EvaluationError("no class has both positives and negatives")
    return RocReport(per, float(np.mean([r.auc for r in per.values()])), skipped)


def rank_statistic(scores, positive) -> float:
    """P(score of a random positive > that of a random negative), ties counted half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    diff = s[pos][:, None] - s[~pos][None, :]
    twice_wins = int(2 * np.sum(diff > 0) + np.sum(diff == 0))
    return twice_wins / (2 * diff.size)


def attach_auc(report: MetricsReport, roc: RocReport, K: int) -> MetricsReport:
    auc = np.full(K, np.nan)
    for c, r in roc.per_class.items():
        auc[c] = r.auc
    report.auc = auc
    report.macro_auc = roc.macro_auc
    return report


# ------------------------------------------------------------------ reports


def write_report(path, report: MetricsReport, labels, extra: dict | None = None) -> None:
    """``name=value`` lines, one metric per line."""
    lines = [f"n={report.n}", f"accuracy={report.accuracy:.4f}"]
    for avg_name, avg in (("macro", report.macro), ("weighted", report.weighted)):
        for k in ("precision", "recall", "f1"):
            lines.append(f"{avg_name}_{k}={avg[k]:.4f}")
    if report.macro_auc is not None:
        lines.append(f"macro_auc={report.macro_auc:.4f}")
    for i, lab in enumerate(labels):
        key = lab.replace(" ", "_")
        lines += [f"precision[{key}]={report.precision[i]:.4f}", f"recall[{key}]={report.recall[i]:.4f}",
                  f"f1[{key}]={report.f1[i]:.4f}", f"support[{key}]={int(report.support[i])}"]
        if report.auc is not None and not np.isnan(report.auc[i]):
            lines.append(f"auc[{key}]={report.auc[i]:.4f}")
    for metric, classes in report.undefined.items():
        lines.append(f"undefined_{metric}={','.join(labels[c] for c in classes)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def safe_label(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label)


def write_roc_csvs(out_dir, roc: RocReport, labels) -> list:
    paths = []
    for c, r in roc.per_class.items():
        p = Path(out_dir) / f"roc_{safe_label(labels[c])}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in zip(r.fpr, r.tpr, r.thresholds):
                w.writerow([f"{f:.6f}", f"{t:.6f}", "inf" if np.isinf(th) else f"{th:.8g}"])
        paths.append(p)
    return paths


# ----------------------------------------------------------------- ablation


@dataclass
class AblationRow:
    kernels: tuple
    accuracy: float | None
    macro_f1: float | None
    epochs: int | None
    error: str | None = None


def ablate(configs, run_one) -> list:
    """One row per kernel configuration.

    ``run_one(kernels)`` trains and evaluates a model, returning
    ``(accuracy, macro_f1, epochs)``. A failing run records its error in its
    own row and the sweep continues.
    """
    configs = [tuple(int(k) for k in c) for c in configs]
    if not configs:
        raise EvaluationError("ablation needs at least one kernel configuration")
    rows = []
    for ks in configs:
        try:
            acc, f1, epochs = run_one(ks)
            rows.append(AblationRow(ks, float(acc), float(f1), int(epochs)))
        except Exception as e:  # noqa: BLE001 - isolate the row, keep sweeping
            log.error("ablation run %s failed: %s", list(ks), e)
            rows.append(AblationRow(ks, None, None, None, f"{type(e).__name__}: {e}"))
    return rows


def format_ablation(rows) -> str:
    lines = [f"{'kernels':<16}{'accuracy':>10}{'macro_f1':>10}{'epochs':>8}"]
    for r in rows:
        ks = "[" + ",".join(map(str, r.kernels)) + "]"
        if r.error:
            lines.append(f"{ks:<16}{'failed':>10}  {r.error}")
        else:
            lines.append(f"{ks:<16}{r.accuracy:>10.4f}{r.macro_f1:>10.4f}{r.epochs:>8d}")
    return "\n".join(lines)


def write_ablation_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kernels", "accuracy", "macro_f1", "epochs", "error"])
        for r in rows:
            w.writerow([" ".join(map(str, r.kernels)),
                        "" if r.accuracy is None else f"{r.accuracy:.6f}",
                        "" if r.macro_f1 is None else f"{r.macro_f1:.6f}",
                        "" if r.epochs is None else r.epochs, r.error or ""])


# --------------------------------------------------------------- robustness


def noise_robustness(predict_fn, truths, sigma: float, seed: int = 0):
    """Clean vs noisy accuracy.

    ``predict_fn(sigma, rng)`` returns class probabilities with additive
    Gaussian noise of standard deviation ``sigma`` on the token embeddings.
    """
    if sigma < 0:
        raise EvaluationError("sigma must be non-negative")
    y = np.asarray(truths)
    clean = predict_fn(0.0, np.random.default_rng(seed))
    noisy = predict_fn(sigma, np.random.default_rng(seed))
    return float((clean.argmax(1) == y).mean()), float((noisy.argmax(1) == y).mean()), clean, noisy


# ------------------------------------------------------------------ latency


@dataclass
class BenchReport:
    samples_ms: np.ndarray
    mean_ms: float
    median_ms: float
    p95_ms: float
    docs_per_second: float
    params_without_embeddings: int | None = None
    params_with_embeddings: int | None = None
    epoch_seconds: list = field(default_factory=list)
    machine: str = ""

    def to_lines(self) -> list:
        lines = [
            f"samples={len(self.samples_ms)}",
            f"mean_ms={self.mean_ms:.4f}",
            f"median_ms={self.median_ms:.4f}",
            f"p95_ms={self.p95_ms:.4f}",
            f"docs_per_second={self.docs_per_second:.2f}",
        ]
        if self.params_without_embeddings is not None:
            lines.append(f"params_without_embeddings={self.params_without_embeddings}")
        if self.params_with_embeddings is not None:
            lines.append(f"params_with_embeddings={self.params_with_embeddings}")
        if self.epoch_seconds:
            lines.append(f"mean_epoch_seconds={np.mean(self.epoch_seconds):.4f}")
        lines.append(f"machine={self.machine}")
        return lines


def machine_description() -> str:
    return f"{platform.machine()} {platform.processor() or 'cpu'} {platform.system()} {platform.release()} " \
           f"python {platform.python_version()} numpy {np.__version__}"


def latency_bench(infer_one, docs, repetitions: int = 100, warmup: int = 10) -> BenchReport:
    """Time ``infer_one(doc)`` per document; warmup calls are excluded.

    Runs single-threaded on the calling thread, ``repetitions`` passes over ``docs``.
    """
    docs = list(docs)
    if not docs:
        raise EvaluationError("latency benchmark needs at least one document")
    if repetitions < 1:
        raise EvaluationError("repetitions must be >= 1")
    for i in range(warmup):
        infer_one(docs[i % len(docs)])
    samples = np.empty(repetitions * len(docs), dtype=np.float64)
    j = 0
    for _ in range(repetitions):
        for doc in docs:
            t0 = time.perf_counter_ns()
            infer_one(doc)
            samples[j] = (time.perf_counter_ns() - t0) / 1e6
            j += 1
    samples = np.maximum(samples, 1e-6)
    return BenchReport(samples, float(samples.mean()), float(np.median(samples)),
                       float(np.percentile(samples, 95)), float(1000.0 / samples.mean()),
                       machine=machine_description())


def write_bench_csv(path, report: BenchReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "ms"])
        for i, v in enumerate(report.samples_ms):
            w.writerow([i, f"{v:.6f}"])
