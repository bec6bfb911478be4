"""Report files: a fixed-key delimited text report plus figures rendered
from the same results.

Reports are byte-deterministic for identical inputs: no timestamps, fixed
section order, floats written with shortest round-trip formatting.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

REPORT_NAME = "report.txt"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def format_report(config: dict, results: dict) -> str:
    """Render the report text. ``results`` carries the fixed keys
    accuracy_mean, accuracy_std, per_run_accuracy, per_class, confusion,
    class_labels, objective_trace."""
    lines = ["# dadl report", "[config]"]
    for key in sorted(config):
        lines.append(f"{key} = {_fmt(config[key])}")

    lines.append("[results]")
    lines.append(f"accuracy_mean = {_fmt(results['accuracy_mean'])}")
    lines.append(f"accuracy_std = {_fmt(results['accuracy_std'])}")
    lines.append(f"runs = {len(results['per_run_accuracy'])}")
    lines.append(f"per_run_accuracy = {_fmt(results['per_run_accuracy'])}")

    lines.append("[per_class]")
    for label in sorted(results["per_class"]):
        lines.append(f"{label} = {_fmt(results['per_class'][label])}")

    lines.append("[confusion]")
    labels = [str(int(c)) for c in results["class_labels"]]
    lines.append("true\\pred," + ",".join(labels))
    confusion = np.asarray(results["confusion"])
    for k, label in enumerate(labels):
        lines.append(label + "," + ",".join(str(int(v)) for v in confusion[k]))

    lines.append("[objective_trace]")
    lines.append("run,outer,stage,before,after")
    for run, outer, stage, before, after in results["objective_trace"]:
        lines.append(f"{run},{outer},{stage},{_fmt(before)},{_fmt(after)}")
    return "\n".join(lines) + "\n"


def write_report(out_dir, config: dict, results: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REPORT_NAME
    path.write_text(format_report(config, results), encoding="utf-8")
    return path


def render_figures(out_dir, results: dict) -> list:
    """Draw the objective trace, confusion matrix, and per-class accuracy to
    PNG files next to the report. Returns the paths written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    meta = {"Software": "dadl"}  # keep PNG bytes free of library/version stamps

    trace = results.get("objective_trace") or []
    if trace:
        fig, ax = plt.subplots(figsize=(6, 4))
        runs = sorted({row[0] for row in trace})
        for run in runs:
            ys = [row[4] for row in trace if row[0] == run]
            ax.plot(range(1, len(ys) + 1), ys, lw=1.2,
                    label=f"run {run}" if len(runs) > 1 else None)
        ax.set_xlabel("block update")
        ax.set_ylabel("objective")
        ax.set_title("objective trace")
        if len(runs) > 1 and len(runs) <= 10:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "objective_trace.png"
        fig.savefig(path, dpi=120, metadata=meta)
        plt.close(fig)
        written.append(path)

    confusion = results.get("confusion")
    if confusion is not None:
        confusion = np.asarray(confusion)
        labels = [str(int(c)) for c in results["class_labels"]]
        fig, ax = plt.subplots(figsize=(5, 4.5))
        im = ax.imshow(confusion, cmap="Blues")
        ax.set_xticks(range(len(labels)), labels)
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title("confusion (pooled)")
        threshold = confusion.max() / 2 if confusion.max() else 0.5
        for r in range(confusion.shape[0]):
            for c in range(confusion.shape[1]):
                ax.text(c, r, str(int(confusion[r, c])), ha="center", va="center",
                        fontsize=8, color="white" if confusion[r, c] > threshold else "black")
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        path = out_dir / "confusion.png"
        fig.savefig(path, dpi=120, metadata=meta)
        plt.close(fig)
        written.append(path)

    per_class = results.get("per_class")
    if per_class:
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = sorted(per_class)
        ax.bar([str(l) for l in labels], [per_class[l] for l in labels], color="#4878a8")
        ax.set_ylim(0, 1)
        ax.set_xlabel("class")
        ax.set_ylabel("accuracy")
        ax.set_title("per-class accuracy")
        fig.tight_layout()
        path = out_dir / "per_class_accuracy.png"
        fig.savefig(path, dpi=120, metadata=meta)
        plt.close(fig)
        written.append(path)
    return written
