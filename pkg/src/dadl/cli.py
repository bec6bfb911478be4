"""Command-line interface.

Subcommands: ``train``, ``eval``, ``run-experiment``, ``synth``. Every
setting can come from a ``key = value`` config file (``#`` starts a
comment); command-line flags win over file values. Reports are delimited
text with fixed keys, rendered figures land next to them.

Exit codes: 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .classify import evaluate
from .data_io import (DomainDataset, load_dataset, load_model, make_split,
                      normalize_l1, save_dataset, save_model)
from .errors import ConfigError, DataError, NumericalError
from .experiment import run_experiment
from .geometry import KernelSpec
from .report import render_figures, write_report
from .synth import ShiftSpec, make_shift_benchmark
from .trainer import Hyperparams, fit

KERNEL_NAMES = {
    "hik": "histogram_intersection",
    "histogram_intersection": "histogram_intersection",
    "linear": "linear",
    "gaussian": "gaussian",
}

_HYPER_FLOAT = ("lambda1", "lambda2", "lambda3", "mu1", "mu2")
_HYPER_INT = ("t0", "atoms_per_class", "n_dim", "k_nn", "outer_iters", "inner_iters")


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    for name in _HYPER_FLOAT:
        p.add_argument(f"--{name}", type=float, default=None)
    for name in _HYPER_INT:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int, default=None)
    p.add_argument("--kernel", choices=sorted(KERNEL_NAMES), default=None,
                   help="kernel kind (default hik)")
    p.add_argument("--bandwidth", type=float, default=None, help="gaussian kernel bandwidth")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value settings file; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default dadl-out)")
    p.add_argument("--no-normalize", dest="normalize", action="store_const", const=False,
                   default=None, help="skip per-sample unit-L1 normalization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dadl",
                                     description="domain-adaptive dictionary learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on source domains plus a target domain")
    p.add_argument("--source", action="append", default=None, help="source dataset file (repeatable)")
    p.add_argument("--target", default=None, help="target dataset file")
    p.add_argument("--src-per-class", default=None,
                   help="training samples per class per source (int or comma list); default all")
    p.add_argument("--tgt-per-class", type=int, default=None,
                   help="training samples per class from the target; default all")
    _add_common_flags(p)
    _add_hyper_flags(p)

    p = sub.add_parser("eval", help="evaluate a saved model on a labeled test file")
    p.add_argument("--model", default=None, help="path to a saved model")
    p.add_argument("--target", default=None, help="labeled test dataset file")
    p.add_argument("--domain", default=None,
                   help="training domain to project through; defaults to the test file's "
                        "stem when it names one, else the last training domain")
    _add_common_flags(p)

    p = sub.add_parser("run-experiment",
                       help="repeated split/train/eval protocol with mean and std accuracy")
    p.add_argument("--source", action="append", default=None, help="source dataset file (repeatable)")
    p.add_argument("--target", default=None, help="target dataset file")
    p.add_argument("--src-per-class", default=None,
                   help="training samples per class per source (int or comma list, default 20)")
    p.add_argument("--tgt-per-class", type=int, default=None,
                   help="training samples per class from the target (default 3)")
    p.add_argument("--repeat", type=int, default=None, help="number of runs (default 1)")
    _add_common_flags(p)
    _add_hyper_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic two-domain benchmark")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--dim", type=int, default=None, help="source feature dimension (default 30)")
    p.add_argument("--src-size", type=int, default=None, help="source samples per class (default 60)")
    p.add_argument("--tgt-size", type=int, default=None, help="target samples per class (default 30)")
    p.add_argument("--shift", choices=["default", "identity"], default=None)
    p.add_argument("--target-dim", type=int, default=None,
                   help="mix the target into this many features")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--spread", type=float, default=None, help="within-class spread (default 1.2)")
    p.add_argument("--format", choices=["csv", "packed"], default=None)
    _add_common_flags(p)
    return parser


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; '#' starts a comment. Repeated keys
    accumulate into lists (the ``source`` key relies on this)."""
    out: dict[str, object] = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            prev = out[key]
            out[key] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            out[key] = value
    return out


class _Settings:
    """Layered lookup: CLI flag, then config file, then default."""

    def __init__(self, args, cfg: dict):
        self.args = args
        self.cfg = cfg
        self.resolved: dict[str, object] = {}

    def get(self, key, default=None, conv=str):
        value = getattr(self.args, key, None)
        if value is None and key in self.cfg:
            raw = self.cfg[key]
            if isinstance(raw, list):
                raise ConfigError(f"config key {key!r} given more than once")
            value = _convert(key, raw, conv)
        if value is None:
            value = default
        self.resolved[key] = value
        return value

    def get_sources(self):
        value = getattr(self.args, "source", None)
        if value is None and "source" in self.cfg:
            raw = self.cfg["source"]
            raw_list = raw if isinstance(raw, list) else [raw]
            value = [p for item in raw_list for p in str(item).split(",") if p]
        if not value:
            raise ConfigError("at least one --source is required")
        self.resolved["source"] = list(value)
        return list(value)


def _convert(key, raw, conv):
    try:
        if conv is bool:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _int_list(raw):
    return [int(p) for p in str(raw).split(",") if p != ""]


def _resolve_hyperparams(s: _Settings) -> Hyperparams:
    values = {}
    for name in _HYPER_FLOAT:
        v = s.get(name, conv=float)
        if v is not None:
            values[name] = float(v)
    for name in _HYPER_INT:
        v = s.get(name, conv=int)
        if v is not None:
            values[name] = int(v)
    kernel_name = s.get("kernel", default="hik")
    kind = KERNEL_NAMES.get(str(kernel_name).lower())
    if kind is None:
        raise ConfigError(f"unknown kernel {kernel_name!r}; pick from {sorted(KERNEL_NAMES)}")
    bandwidth = s.get("bandwidth", conv=float)
    try:
        values["kernel"] = KernelSpec(kind, bandwidth)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    values["seed"] = int(s.get("seed", default=0, conv=int))
    s.resolved["kernel"] = kind
    s.resolved["bandwidth"] = bandwidth
    return Hyperparams(**values)


def _load_domain(path, normalize: bool) -> DomainDataset:
    ds = load_dataset(path)
    if normalize:
        return DomainDataset(normalize_l1(ds.features), ds.labels, ds.domain_name)
    return ds


def _config_section(s: _Settings, command: str, h: Hyperparams | None) -> dict:
    cfg = {"command": command}
    for key, value in s.resolved.items():
        cfg[key] = value
    if h is not None:
        cfg.update({name: getattr(h, name) for name in _HYPER_FLOAT})
        cfg.update({name: getattr(h, name) for name in _HYPER_INT})
        cfg["kernel"] = h.kernel.kind
        cfg["bandwidth"] = h.kernel.bandwidth
        cfg["seed"] = h.seed
    return cfg


def _split_counts(raw, n_sources) -> list[int] | None:
    if raw is None:
        return None
    counts = raw if isinstance(raw, list) else _int_list(raw)
    if len(counts) == 1:
        counts = counts * n_sources
    if len(counts) != n_sources:
        raise ConfigError(f"{len(counts)} src-per-class counts for {n_sources} sources")
    return counts


def _cmd_train(args, cfg) -> int:
    s = _Settings(args, cfg)
    sources = s.get_sources()
    target = s.get("target")
    normalize = s.get("normalize", default=True, conv=bool)
    out_dir = Path(s.get("out", default="dadl-out"))
    src_counts = _split_counts(s.get("src_per_class"), len(sources))
    tgt_count = s.get("tgt_per_class", conv=int)
    h = _resolve_hyperparams(s)

    domains = [_load_domain(p, normalize) for p in sources]
    if src_counts is not None:
        domains = [make_split(d, src_counts[i], h.seed + 1000 * (i + 1))[0]
                   for i, d in enumerate(domains)]
    if target is not None:
        tgt = _load_domain(target, normalize)
        if tgt_count is not None:
            tgt = make_split(tgt, int(tgt_count), h.seed)[0]
        domains.append(tgt)

    model = fit(domains, h)
    model.normalize_l1 = normalize
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.dadlm"
    save_model(model, model_path)

    trace_rows = [(0, e.outer_iter, e.stage, e.before, e.after) for e in model.objective_trace]
    trace_path = out_dir / "objective_trace.csv"
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write("outer,stage,before,after\n")
        for _run, outer, stage, before, after in trace_rows:
            fh.write(f"{outer},{stage},{before!r},{after!r}\n")
    render_figures(out_dir, {"objective_trace": trace_rows})
    for note in model.fit_warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(f"model written to {model_path}")
    return 0


def _cmd_eval(args, cfg) -> int:
    s = _Settings(args, cfg)
    model_path = s.get("model")
    if model_path is None:
        raise ConfigError("--model is required for eval")
    target = s.get("target")
    if target is None:
        raise ConfigError("--target is required for eval")
    out_dir = Path(s.get("out", default="dadl-out"))
    model = load_model(model_path)
    normalize = s.get("normalize", default=model.normalize_l1, conv=bool)
    test = _load_domain(target, normalize)
    domain = s.get("domain")
    if domain is None:
        domain = test.domain_name if test.domain_name in model.domain_names \
            else len(model.domain_names) - 1
    metrics = evaluate(model, test, domain=domain)

    results = {
        "accuracy_mean": metrics.accuracy,
        "accuracy_std": 0.0,
        "per_run_accuracy": [metrics.accuracy],
        "per_class": metrics.per_class,
        "confusion": metrics.confusion,
        "class_labels": model.classes,
        "objective_trace": [],
    }
    config = _config_section(s, "eval", None)
    report = write_report(out_dir, config, results)
    render_figures(out_dir, results)
    print(f"accuracy {metrics.accuracy:.4f} on {metrics.n_samples} samples; report at {report}")
    return 0


def _cmd_run_experiment(args, cfg) -> int:
    s = _Settings(args, cfg)
    sources = s.get_sources()
    target = s.get("target")
    if target is None:
        raise ConfigError("--target is required for run-experiment")
    normalize = s.get("normalize", default=True, conv=bool)
    out_dir = Path(s.get("out", default="dadl-out"))
    src_counts = _split_counts(s.get("src_per_class", default="20"), len(sources))
    tgt_count = int(s.get("tgt_per_class", default=3, conv=int))
    repeat = int(s.get("repeat", default=1, conv=int))
    h = _resolve_hyperparams(s)

    source_sets = [_load_domain(p, normalize) for p in sources]
    target_set = _load_domain(target, normalize)
    results = run_experiment(source_sets, target_set, h, src_counts, tgt_count,
                             repeat, h.seed)
    config = _config_section(s, "run-experiment", h)
    report = write_report(out_dir, config, results)
    render_figures(out_dir, results)
    for model in results["models"]:
        for note in model.fit_warnings:
            print(f"warning: {note}", file=sys.stderr)
    print(f"accuracy {results['accuracy_mean']:.4f} +- {results['accuracy_std']:.4f} "
          f"over {repeat} runs; report at {report}")
    return 0


def _cmd_synth(args, cfg) -> int:
    s = _Settings(args, cfg)
    n_classes = int(s.get("classes", default=3, conv=int))
    dim = int(s.get("dim", default=30, conv=int))
    src_size = int(s.get("src_size", default=60, conv=int))
    tgt_size = int(s.get("tgt_size", default=30, conv=int))
    shift_kind = s.get("shift", default="default")
    noise = s.get("noise", conv=float)
    spread = float(s.get("spread", default=1.2, conv=float))
    target_dim = s.get("target_dim", conv=int)
    seed = int(s.get("seed", default=0, conv=int))
    file_format = s.get("format", default="csv")
    out_dir = Path(s.get("out", default="dadl-out"))

    shift_args = {"kind": str(shift_kind)}
    if noise is not None:
        shift_args["noise"] = float(noise)
    if target_dim is not None:
        shift_args["target_dim"] = int(target_dim)
    source, tgt = make_shift_benchmark(n_classes, src_size, tgt_size, dim,
                                       ShiftSpec(**shift_args), seed, spread)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "csv" if file_format == "csv" else "dadl"
    src_path = out_dir / f"source.{ext}"
    tgt_path = out_dir / f"target.{ext}"
    save_dataset(source, src_path, file_format)
    save_dataset(tgt, tgt_path, file_format)
    print(f"wrote {src_path} and {tgt_path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "run-experiment": _cmd_run_experiment,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = {}
    try:
        if getattr(args, "config", None):
            cfg = parse_config_file(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
