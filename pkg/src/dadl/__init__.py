"""Domain-adaptive dictionary learning with kernelized projections.

Trains per-domain kernel projections jointly with one shared,
class-partitioned dictionary so that labeled samples from several domains
share a sparse representation; classification assigns a test sample to the
class whose atoms reconstruct it best.
"""

from . import errors
from .classify import EvalMetrics, Prediction, embed_test, evaluate, predict
from .data_io import (DomainDataset, load_dataset, load_model, make_split,
                      normalize_l1, save_dataset, save_model)
from .experiment import run_experiment
from .geometry import (GraphLaplacian, KernelSpec, MmdMatrix, gram,
                       kernel_value, knn_laplacian, mmd_matrix)
from .manifold import (CurvilinearOptions, FeasibleResult, minimize_feasible,
                       whiten, whiten_auto)
from .sparse import SparseCodes, mask_split, omp, omp_batch, refine_codes
from .synth import ShiftSpec, make_shift_benchmark
from .trainer import (BlockMatrices, Dictionary, Hyperparams, TraceEntry,
                      TrainedModel, assemble_blocks, fit, total_objective,
                      update_dictionary)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "KernelSpec", "GraphLaplacian", "MmdMatrix",
    "kernel_value", "gram", "knn_laplacian", "mmd_matrix",
    "SparseCodes", "omp", "omp_batch", "mask_split", "refine_codes",
    "CurvilinearOptions", "FeasibleResult", "whiten", "whiten_auto", "minimize_feasible",
    "Hyperparams", "Dictionary", "BlockMatrices", "TraceEntry", "TrainedModel",
    "assemble_blocks", "total_objective", "update_dictionary", "fit",
    "Prediction", "EvalMetrics", "embed_test", "predict", "evaluate",
    "DomainDataset", "load_dataset", "save_dataset", "normalize_l1", "make_split",
    "save_model", "load_model",
    "ShiftSpec", "make_shift_benchmark", "run_experiment",
    "__version__",
]
