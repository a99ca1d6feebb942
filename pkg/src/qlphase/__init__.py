"""Coded interferometric phase retrieval near the quantum limit.

Designs of small interferometer groups, a Poisson photon-counting forward
model, Adam reconstruction, exact Fisher information / Cramér–Rao bounds and
block-based (multiscale) stitching.
"""
from .bounds import FisherBundle, c_matrix, diagonal_crlb_approx, fisher, fisher_composite
from .designs import (CodeBlock, DesignError, Group, MeasurementDesign, dft_code, holographic_design,
                      is_connected, materialize_rows, normalize_columns, random_group_design)
from .estimate import OptimizerConfig, holographic_estimate, loss_and_gradient, reconstruct
from .field import ComplexField, ErrorReport, gauge_align, mse, random_field
from .forward import DetectionRecord, intensities, sample_counts, simulate
from .multiscale import MultiscalePlan, build_plan, relative_phase, stitch

__version__ = "0.1.0"

__all__ = [
    "FisherBundle",
    "c_matrix",
    "diagonal_crlb_approx",
    "fisher",
    "fisher_composite",
    "CodeBlock",
    "DesignError",
    "Group",
    "MeasurementDesign",
    "dft_code",
    "holographic_design",
    "is_connected",
    "materialize_rows",
    "normalize_columns",
    "random_group_design",
    "OptimizerConfig",
    "holographic_estimate",
    "loss_and_gradient",
    "reconstruct",
    "ComplexField",
    "ErrorReport",
    "gauge_align",
    "mse",
    "random_field",
    "DetectionRecord",
    "intensities",
    "sample_counts",
    "simulate",
    "MultiscalePlan",
    "build_plan",
    "relative_phase",
    "stitch",
]
