"""Reconstruction of 2D wave-equation solutions from full-boundary Cauchy data."""
from .errors import (
    ConfigError,
    CoverageError,
    TraceFormatError,
    UnstableRegimeError,
    WaveCauchyError,
    WindowCoverageError,
)
from .kernel import KernelParams, RadialPoint, SpaceTimePoint, V, V_direct, V_stable
from .reconstruct import (
    PartialBoundaryConfig,
    ReconstructionResult,
    TargetPoint,
    h_sweep,
    reconstruct_grid,
    reconstruct_partial,
    reconstruct_point,
)
from .synthdata import (
    BoundaryTrace,
    DiskMode,
    Domain,
    RectMode,
    add_noise,
    exact_trace,
    make_ground_truth,
)

__version__ = "0.1.0"
