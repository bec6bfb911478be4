"""Repeated split/train/evaluate protocol over one target and one or more
source domains."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .classify import evaluate
from .data_io import DomainDataset, make_split
from .errors import ConfigError, DataError
from .trainer import Hyperparams, fit


def run_experiment(sources, target: DomainDataset, h: Hyperparams,
                   src_per_class, tgt_per_class: int, repeat: int, base_seed: int) -> dict:
    """For run i (seed base_seed + i): draw per-class training splits from
    every source and from the target, train on the selected parts, evaluate
    on the target remainder. Returns pooled metrics plus per-run accuracies
    and objective traces.

    ``src_per_class`` is one count applied to every source, or a sequence
    with one count per source.
    """
    if repeat < 1:
        raise ConfigError("repeat must be >= 1")
    if not sources:
        raise ConfigError("need at least one source domain")
    if isinstance(src_per_class, (int, np.integer)):
        src_counts = [int(src_per_class)] * len(sources)
    else:
        src_counts = [int(c) for c in src_per_class]
        if len(src_counts) != len(sources):
            raise ConfigError(
                f"{len(src_counts)} source split counts for {len(sources)} sources")

    accuracies = []
    trace_rows = []
    confusion = None
    class_labels = None
    per_class_correct: dict[int, int] = {}
    per_class_total: dict[int, int] = {}
    models = []

    for run in range(repeat):
        seed = base_seed + run
        train_domains = []
        for s_idx, src in enumerate(sources):
            selected, _rest = make_split(src, src_counts[s_idx], seed + 1000 * (s_idx + 1))
            train_domains.append(selected)
        tgt_train, tgt_test = make_split(target, tgt_per_class, seed)
        train_domains.append(tgt_train)

        model = fit(train_domains, replace(h, seed=seed))
        metrics = evaluate(model, tgt_test, domain=len(train_domains) - 1)

        accuracies.append(metrics.accuracy)
        if confusion is None:
            confusion = metrics.confusion.copy()
            class_labels = model.classes.copy()
        else:
            if not np.array_equal(class_labels, model.classes):
                raise DataError("class tables changed between runs")
            confusion += metrics.confusion
        for k, label in enumerate(class_labels):
            per_class_correct[int(label)] = per_class_correct.get(int(label), 0) + int(metrics.confusion[k, k])
            per_class_total[int(label)] = per_class_total.get(int(label), 0) + int(metrics.confusion[k].sum())
        for entry in model.objective_trace:
            trace_rows.append((run, entry.outer_iter, entry.stage, entry.before, entry.after))
        models.append(model)

    acc = np.array(accuracies)
    std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
    per_class = {label: per_class_correct[label] / per_class_total[label]
                 for label in sorted(per_class_total) if per_class_total[label]}
    return {
        "accuracy_mean": float(acc.mean()),
        "accuracy_std": std,
        "per_run_accuracy": [float(a) for a in accuracies],
        "per_class": per_class,
        "confusion": confusion,
        "class_labels": class_labels,
        "objective_trace": trace_rows,
        "models": models,
    }
