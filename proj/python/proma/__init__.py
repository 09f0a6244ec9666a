"""Projected microbatch accumulation: C++ kernels with a thin python surface.

The heavy lifting lives in the `_proma` extension module; this package simply
re-exports it.
"""

from ._proma import (
    approx_rank_r_basis,
    default_config_text,
    group_advantages,
    proma_intra,
    project_to_complement,
    project_to_complement_iterative,
    qr_reduced,
    run_training,
    sandwich_project,
)

__all__ = [
    "approx_rank_r_basis",
    "default_config_text",
    "group_advantages",
    "proma_intra",
    "project_to_complement",
    "project_to_complement_iterative",
    "qr_reduced",
    "run_training",
    "sandwich_project",
]
