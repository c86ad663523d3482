"""Rademacher chaos toolkit: kernel algebra, exact hypercube calculus,
Ornstein-Uhlenbeck coupling and normal-approximation bounds."""
from __future__ import annotations

from .errors import CheckFailure, InputError, ResourceError
from .kernel import Kernel, RawTable, contract, counterexample_kernel, inner, max_influence, norm_sq, symmetrize
from .chaos import ChaosDecomposition, HypercubeFunction, RademacherLaw

__version__ = "0.1.0"

__all__ = [
    "CheckFailure", "InputError", "ResourceError",
    "Kernel", "RawTable", "contract", "counterexample_kernel", "inner", "max_influence", "norm_sq", "symmetrize",
    "ChaosDecomposition", "HypercubeFunction", "RademacherLaw",
]
