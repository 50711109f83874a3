"""depthfill: dense depth from sparse samples by direct loss minimization.

The solver treats the depth field itself as the optimization variable and
descends a self-supervised objective: agreement with the sparse samples,
a windowed top-k gradient constraint, and mask-aware selective smoothness.
No training, no network; every run is deterministic for fixed inputs.
"""

from .estimator import DepthCompleter
from .grid import SparseDepth
from .losses import GcConfig, LossConfig, Objective, SmsConfig
from .metrics import MetricsReport, evaluate
from .scenegen import SamplingSpec, Scene, SceneSpec, generate_scene, sample_sparse
from .solver import SolveTrace, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "DepthCompleter",
    "GcConfig",
    "LossConfig",
    "MetricsReport",
    "Scene",
    "Objective",
    "SamplingSpec",
    "SceneSpec",
    "SolveTrace",
    "SolverConfig",
    "SparseDepth",
    "evaluate",
    "generate_scene",
    "sample_sparse",
    "solve",
    "__version__",
]
