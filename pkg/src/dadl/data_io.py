"""Dataset and model files.

Two dataset formats carry the same content:

* csv  - one sample per line, feature values then an integer class label in
  the last column.
* packed binary - magic ``DADL1``, little-endian uint32 header
  (sample count, feature count, label byte width), the feature block as
  row-major little-endian float64 with samples as rows, then the labels as
  little-endian int64.

Trained models live in a versioned ``DADLM1`` container: magic, uint32
version, a length-prefixed JSON header (hyperparameters, domain names and
shapes, class table), then the arrays in header order as little-endian
float64 / int64. Loading a saved model reproduces its predictions bitwise.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DataFormatError, ModelFormatError
from .geometry import KernelSpec
from .trainer import Dictionary, Hyperparams, TrainedModel

DATASET_MAGIC = b"DADL1"
MODEL_MAGIC = b"DADLM1"
MODEL_VERSION = 1


@dataclass
class DomainDataset:
    """Labeled samples of one domain; ``features`` is n x N with samples as
    columns."""

    features: np.ndarray
    labels: np.ndarray
    domain_name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix with samples as columns")
        if self.labels.shape != (self.features.shape[1],):
            raise DataError(
                f"{self.features.shape[1]} samples but {self.labels.shape[0]} labels")
        if not np.isfinite(self.features).all():
            raise DataError("features contain non-finite values")
        if (self.labels < 0).any():
            raise DataError("class labels must be nonnegative integers")


def _parse_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
                if width < 2:
                    raise DataFormatError(f"{path}:{lineno}: a row needs at least one feature and a label")
            elif len(parts) != width:
                raise DataFormatError(f"{path}:{lineno}: expected {width} columns, found {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if not all(np.isfinite(values)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            lab = values[-1]
            if lab != int(lab):
                raise DataFormatError(f"{path}:{lineno}: label {lab!r} is not an integer")
            rows.append(values[:-1])
            labels.append(int(lab))
    if not rows:
        raise DataFormatError(f"{path}: no samples found")
    return np.array(rows, dtype=np.float64).T, np.array(labels, dtype=np.int64)


def _parse_packed(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    head = len(DATASET_MAGIC) + 12
    if len(raw) < head or raw[:len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise DataFormatError(f"{path}: not a {DATASET_MAGIC.decode()} dataset file")
    n_samples, n_features, label_width = struct.unpack_from("<III", raw, len(DATASET_MAGIC))
    if label_width != 8:
        raise DataFormatError(f"{path}: unsupported label width {label_width}")
    if n_samples < 1 or n_features < 1:
        raise DataFormatError(f"{path}: empty dataset ({n_samples} x {n_features})")
    need = head + 8 * n_samples * n_features + label_width * n_samples
    if len(raw) != need:
        raise DataFormatError(f"{path}: expected {need} bytes, found {len(raw)} (truncated or padded)")
    feats = np.frombuffer(raw, dtype="<f8", count=n_samples * n_features, offset=head)
    feats = feats.reshape(n_samples, n_features).T.copy()
    labels = np.frombuffer(raw, dtype="<i8", count=n_samples,
                           offset=head + 8 * n_samples * n_features).copy()
    if not np.isfinite(feats).all():
        raise DataFormatError(f"{path}: non-finite feature value")
    return feats, labels


def load_dataset(path, format: str | None = None, domain_name: str | None = None) -> DomainDataset:
    """Read one domain from ``path``. ``format`` is ``"csv"`` or ``"packed"``;
    None sniffs the file. The domain name defaults to the file stem."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset file not found: {path}")
    if format is None:
        with open(path, "rb") as fh:
            format = "packed" if fh.read(len(DATASET_MAGIC)) == DATASET_MAGIC else "csv"
    if format == "csv":
        feats, labels = _parse_csv(path)
    elif format == "packed":
        feats, labels = _parse_packed(path)
    else:
        raise DataFormatError(f"unknown dataset format {format!r}")
    try:
        return DomainDataset(feats, labels, domain_name if domain_name is not None else path.stem)
    except DataError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_dataset(ds: DomainDataset, path, format: str = "csv") -> None:
    """Write a domain to disk; both formats round-trip bit-identically."""
    path = Path(path)
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for j in range(ds.features.shape[1]):
                feats = ",".join(repr(float(v)) for v in ds.features[:, j])
                fh.write(f"{feats},{int(ds.labels[j])}\n")
        return
    if format != "packed":
        raise DataFormatError(f"unknown dataset format {format!r}")
    n_features, n_samples = ds.features.shape
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<III", n_samples, n_features, 8))
    buf.write(np.ascontiguousarray(ds.features.T).astype("<f8").tobytes())
    buf.write(ds.labels.astype("<i8").tobytes())
    path.write_bytes(buf.getvalue())


def normalize_l1(features: np.ndarray) -> np.ndarray:
    """Scale every column to unit L1 mass. Requires nonnegative entries."""
    X = np.asarray(features, dtype=np.float64)
    if (X < 0).any():
        raise DataError("normalize_l1 requires nonnegative features")
    sums = X.sum(axis=0)
    zero = sums <= 0
    if zero.any():
        raise DataError(f"column {int(np.flatnonzero(zero)[0])} has zero mass; cannot normalize")
    return X / sums


def make_split(ds: DomainDataset, per_class: int, seed: int) -> tuple[DomainDataset, DomainDataset]:
    """Draw ``per_class`` samples of every class uniformly at random
    (without replacement); returns (selected, remainder), both in the
    original sample order."""
    if per_class < 1:
        raise DataError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < per_class:
            raise DataError(f"class {int(c)} has only {idx.size} samples, cannot draw {per_class}")
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    sel = np.sort(np.concatenate(chosen))
    rest = np.setdiff1d(np.arange(ds.labels.size), sel)
    if rest.size == 0:
        raise DataError("split leaves no remainder samples")
    return (DomainDataset(ds.features[:, sel], ds.labels[sel], ds.domain_name),
            DomainDataset(ds.features[:, rest], ds.labels[rest], ds.domain_name))


def _hyperparams_to_dict(h: Hyperparams) -> dict:
    return {
        "lambda1": h.lambda1, "lambda2": h.lambda2, "lambda3": h.lambda3,
        "mu1": h.mu1, "mu2": h.mu2, "t0": h.t0,
        "atoms_per_class": h.atoms_per_class, "n_dim": h.n_dim, "k_nn": h.k_nn,
        "kernel_kind": h.kernel.kind, "kernel_bandwidth": h.kernel.bandwidth,
        "outer_iters": h.outer_iters, "inner_iters": h.inner_iters, "seed": h.seed,
    }


def _hyperparams_from_dict(d: dict) -> Hyperparams:
    return Hyperparams(
        lambda1=d["lambda1"], lambda2=d["lambda2"], lambda3=d["lambda3"],
        mu1=d["mu1"], mu2=d["mu2"], t0=d["t0"],
        atoms_per_class=d["atoms_per_class"], n_dim=d["n_dim"], k_nn=d["k_nn"],
        kernel=KernelSpec(d["kernel_kind"], d["kernel_bandwidth"]),
        outer_iters=d["outer_iters"], inner_iters=d["inner_iters"], seed=d["seed"],
    )


def save_model(model: TrainedModel, path) -> None:
    """Serialize a trained model to the versioned DADLM1 container."""
    header = {
        "version": MODEL_VERSION,
        "hyperparams": _hyperparams_to_dict(model.hyperparams),
        "normalize_l1": bool(model.normalize_l1),
        "classes": [int(c) for c in model.classes],
        "domains": [
            {"name": model.domain_names[i],
             "n_features": int(model.features[i].shape[0]),
             "n_samples": int(model.features[i].shape[1])}
            for i in range(len(model.domain_names))
        ],
        "n_dim": int(model.dictionary.atoms.shape[0]),
        "n_atoms": int(model.dictionary.atoms.shape[1]),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<II", MODEL_VERSION, len(blob)))
    buf.write(blob)
    for i in range(len(model.domain_names)):
        buf.write(np.ascontiguousarray(model.features[i]).astype("<f8").tobytes())
        buf.write(np.ascontiguousarray(model.coeffs[i]).astype("<f8").tobytes())
    buf.write(np.ascontiguousarray(model.dictionary.atoms).astype("<f8").tobytes())
    buf.write(model.dictionary.class_of_atom.astype("<i8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> TrainedModel:
    """Read a DADLM1 container back into a usable model."""
    path = Path(path)
    if not path.exists():
        raise ModelFormatError(f"model file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 8 or raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a {MODEL_MAGIC.decode()} model file")
    version, header_len = struct.unpack_from("<II", raw, len(MODEL_MAGIC))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    offset = len(MODEL_MAGIC) + 8
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt model header") from exc
    offset += header_len

    def take(dtype, count, shape):
        nonlocal offset
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise ModelFormatError(f"{path}: truncated model file")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
        return arr

    h = _hyperparams_from_dict(header["hyperparams"])
    n_dim = header["n_dim"]
    features, coeffs, names = [], [], []
    for dom in header["domains"]:
        nf, ns = dom["n_features"], dom["n_samples"]
        names.append(dom["name"])
        features.append(take("<f8", nf * ns, (nf, ns)))
        coeffs.append(take("<f8", ns * n_dim, (ns, n_dim)))
    atoms = take("<f8", n_dim * header["n_atoms"], (n_dim, header["n_atoms"]))
    atom_classes = take("<i8", header["n_atoms"], (header["n_atoms"],))
    if offset != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - offset} unexpected trailing bytes")
    return TrainedModel(
        hyperparams=h,
        domain_names=names,
        features=features,
        coeffs=coeffs,
        dictionary=Dictionary(atoms, atom_classes),
        classes=np.array(header["classes"], dtype=np.int64),
        normalize_l1=bool(header.get("normalize_l1", False)),
    )
