"""Equivariant harmonic self-maps of ellipsoids: shooting, threshold and Jacobi stability."""

__version__ = "0.1.0"

from .model import ModelParams, PhaseState, PsiState  # noqa: E402
from .integrator import IntegratorConfig  # noqa: E402

__all__ = ["ModelParams", "PhaseState", "PsiState", "IntegratorConfig", "__version__"]
