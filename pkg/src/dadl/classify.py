"""Residual classification of test samples through a trained model.

A test sample never enters feature space explicitly: its projected
coordinates are A_i^T K_t with K_t the kernel column against the retained
training samples of its domain, and the per-class reconstruction residual
expands through the same kernel values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .geometry import gram, kernel_value
from .sparse import omp
from .trainer import TrainedModel


@dataclass(frozen=True)
class Prediction:
    label: int
    residuals: np.ndarray   # one entry per class, in model.classes order
    code: np.ndarray


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    per_class: dict
    confusion: np.ndarray   # rows = true class, columns = predicted class
    n_samples: int


def _test_column(model: TrainedModel, x, domain):
    i = model.domain_index(domain)
    X = model.features[i]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != X.shape[0]:
        raise DataError(
            f"test sample has shape {x.shape}, domain {model.domain_names[i]!r} expects length {X.shape[0]}")
    kt = gram(X, x, model.hyperparams.kernel)[:, 0]
    return i, x, kt


def embed_test(model: TrainedModel, x, domain) -> np.ndarray:
    """Projected coordinates of one test sample in the shared space."""
    i, _x, kt = _test_column(model, x, domain)
    return model.coeffs[i].T @ kt


def predict(model: TrainedModel, x, domain) -> Prediction:
    """Classify one test sample by smallest per-class reconstruction
    residual; ties go to the lowest class index."""
    i, x, kt = _test_column(model, x, domain)
    coeffs = model.coeffs[i]
    z = coeffs.T @ kt
    code = omp(model.dictionary.atoms, z, model.hyperparams.t0)
    self_k = kernel_value(x, x, model.hyperparams.kernel)

    residuals = np.empty(model.classes.size)
    for c_idx, label in enumerate(model.classes):
        mask = model.dictionary.class_of_atom == label
        u = model.dictionary.atoms[:, mask] @ code[mask]
        r = self_k - 2.0 * float(kt @ (coeffs @ u)) + float(u @ u)
        if r < -1e-6:
            raise NumericalError(
                f"negative class residual {r:.3e}; projection feasibility is broken")
        residuals[c_idx] = max(r, 0.0)
    label = int(model.classes[int(np.argmin(residuals))])
    return Prediction(label, residuals, code)


def evaluate(model: TrainedModel, test_set, domain=None) -> EvalMetrics:
    """Accuracy, per-class accuracy, and the confusion matrix of the model on
    a labeled test set. The domain defaults to the test set's name."""
    if domain is None:
        domain = test_set.domain_name
    i = model.domain_index(domain)
    X = np.asarray(test_set.features, dtype=np.float64)
    y = np.asarray(test_set.labels)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DataError("test set is empty")
    unknown = set(np.unique(y).tolist()) - set(model.classes.tolist())
    if unknown:
        raise DataError(f"test labels {sorted(unknown)} never appeared in training")

    class_pos = {int(c): k for k, c in enumerate(model.classes)}
    C = model.classes.size
    confusion = np.zeros((C, C), dtype=np.int64)
    for j in range(X.shape[1]):
        pred = predict(model, X[:, j], i)
        confusion[class_pos[int(y[j])], class_pos[pred.label]] += 1

    correct = np.trace(confusion)
    total = confusion.sum()
    per_class = {}
    for label, k in class_pos.items():
        row = confusion[k].sum()
        if row:
            per_class[label] = float(confusion[k, k] / row)
    return EvalMetrics(float(correct / total), per_class, confusion, int(total))
