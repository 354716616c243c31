"""Quantitative checks, one per claim, each producing a :class:`CheckReport`."""

from .checks import (
    check_bv_uniformity,
    check_conservation,
    check_contraction,
    check_energy_equality,
    check_interior_representation,
    check_kernel_gaussian,
    check_local_energy,
    check_max_square,
    check_norm_equivalence,
    check_offdiagonal,
    check_reverse_holder,
    check_struct_bound,
    check_whitney_fatou,
)
from .report import CheckReport
from .suite import CHECKS, RunContext, check_ids, run_check

__all__ = [
    "CHECKS",
    "CheckReport",
    "RunContext",
    "check_bv_uniformity",
    "check_conservation",
    "check_contraction",
    "check_energy_equality",
    "check_ids",
    "check_interior_representation",
    "check_kernel_gaussian",
    "check_local_energy",
    "check_max_square",
    "check_norm_equivalence",
    "check_offdiagonal",
    "check_reverse_holder",
    "check_struct_bound",
    "check_whitney_fatou",
    "run_check",
]
