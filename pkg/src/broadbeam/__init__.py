"""Robust, near linear-phase broadband filter-and-sum beamformer design.

The package evaluates the far-field response of a linear microphone array
with one FIR filter per microphone, designs the filters by second-order cone
programming (a one-shot convex minimax design and an iterative group-delay
design) and reports the usual quality metrics.
"""
from .errors import (AsymmetricGeometry, BroadbeamError, ConfigError, Infeasible, NearZeroResponse,
                     SolverFailure)
from .response import ArrayGeometry, FilterBank
from .sampling import BandSpec, GridConfig

__version__ = "0.1.0"

__all__ = ["ArrayGeometry", "FilterBank", "BandSpec", "GridConfig", "BroadbeamError", "ConfigError",
           "Infeasible", "NearZeroResponse", "SolverFailure", "AsymmetricGeometry"]
