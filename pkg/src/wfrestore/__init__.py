"""Wavelet-frame image restoration with a two-transform general model.

Modules
-------
framelet
    Tensor B-spline filter banks, unitary-extension checks and undecimated transforms.
operators
    Degradation operators (identity, periodic blur, inpainting mask).
solver
    ADMM for the general model and its special cases.
asymptotics
    Sampling operators, discrete and continuum energies, convergence studies.
imageio
    PGM files, synthetic images, PSNR and CSV helpers.
plotting
    PNG figures for restorations, diagnostics and convergence studies.
"""

from .framelet import (
    CoefficientStack,
    ConfigurationError,
    Filter2D,
    FilterBank2D,
    NumericalError,
    analyze,
    build_bank,
    synthesize,
    verify_uep,
)
from .operators import DegradationOp
from .solver import ModelSpec, SolverState, preset, soft_threshold, solve

__version__ = "0.1.0"

__all__ = [
    "CoefficientStack",
    "ConfigurationError",
    "DegradationOp",
    "Filter2D",
    "FilterBank2D",
    "ModelSpec",
    "NumericalError",
    "SolverState",
    "analyze",
    "build_bank",
    "preset",
    "soft_threshold",
    "solve",
    "synthesize",
    "verify_uep",
]
