"""Metrics CSV export and SVG charts."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness.metrics import MetricsLog, forgetting_scores  # noqa: E402

METRICS_HEADER = ["task", "overall_acc", "avg_acc", "last_acc", "f_class", "params"]
PER_CLASS_HEADER = ["task", "class", "acc", "f"]


def fmt(x: float | int | None) -> str:
    """Shortest round-trip decimal; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def metrics_rows(log: MetricsLog) -> list[list[str]]:
    rows = []
    for t in range(1, log.n_tasks + 1):
        f_class = forgetting_scores(log, t)[1] if t >= 2 else None
        last = log.last_accuracy if t == log.n_tasks else None
        rows.append([str(t), fmt(log.overall[t - 1]), fmt(log.avg_accuracy(t)), fmt(last),
                     fmt(f_class), fmt(log.params[t - 1])])
    return rows


def per_class_rows(log: MetricsLog) -> list[list[str]]:
    rows = []
    for t in range(1, log.n_tasks + 1):
        f = forgetting_scores(log, t)[0] if t >= 2 else []
        for j, acc in enumerate(log.accuracies[t - 1]):
            rows.append([str(t), str(j), fmt(acc), fmt(f[j]) if j < len(f) else ""])
    return rows


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_metrics(log: MetricsLog, outdir: str | Path) -> tuple[Path, Path]:
    if log.n_tasks == 0:
        raise ValueError("cannot export an empty metrics log")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    metrics, per_class = out / "metrics.csv", out / "per_class.csv"
    metrics.write_text(_csv_text(METRICS_HEADER, metrics_rows(log)))
    per_class.write_text(_csv_text(PER_CLASS_HEADER, per_class_rows(log)))
    return metrics, per_class


def read_metrics_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save_svg(fig, path: Path) -> None:
    # fixed hash salt and no date keep the SVG bytes reproducible
    with plt.rc_context({"svg.hashsalt": "dpformer", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_accuracy(log: MetricsLog, path: str | Path) -> Path:
    tasks = list(range(1, log.n_tasks + 1))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    (line,) = ax.plot(tasks, log.overall, marker="o")
    line.set_gid("overall-accuracy")
    ax.set_xlabel("task")
    ax.set_ylabel("overall accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_xticks(tasks)
    fig.tight_layout()
    _save_svg(fig, Path(path))
    return Path(path)


def plot_forgetting(log: MetricsLog, path: str | Path) -> Path:
    """One bar per task t >= 2, each tagged ``gid="forgetting-t<t>"``."""
    tasks = list(range(2, log.n_tasks + 1))
    values = [forgetting_scores(log, t)[1] for t in tasks]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(tasks, values, color="tab:red")
    for t, bar in zip(tasks, bars):
        bar.set_gid(f"forgetting-t{t}")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("task")
    ax.set_ylabel("class forgetting")
    ax.set_ylim(min(-0.05, *values) if values else -0.05, 1.0)
    if tasks:
        ax.set_xticks(tasks)
    fig.tight_layout()
    _save_svg(fig, Path(path))
    return Path(path)


def export_and_plot(log: MetricsLog, outdir: str | Path) -> dict[str, Path]:
    out = Path(outdir)
    metrics, per_class = write_metrics(log, out)
    return {"metrics": metrics, "per_class": per_class,
            "accuracy_svg": plot_accuracy(log, out / "accuracy.svg"),
            "forgetting_svg": plot_forgetting(log, out / "forgetting.svg")}
