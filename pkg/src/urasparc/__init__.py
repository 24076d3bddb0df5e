"""Concatenated sparse-superposition coding for unsourced random access.

Inner code: per-user index modulation onto a shared Gaussian dictionary,
decoded by an approximate-message-passing recursion with a scalar
effective-noise characterization. Outer code: seeded parity chaining
across sections, list-decoded over the per-section support estimates.
The analysis half of the package carries the matching fixed-point and
potential-function machinery plus the power-allocation optimizer.
"""

from .amp import AmpDivergence, AmpState, amp_init, amp_run, amp_step, \
    quantize
from .analysis import AnalysisModel, ConvergenceError, QuadratureError, \
    concatenated_caps, kl_mult_vs_product, limit_potential, \
    limit_thresholds, min_energy_for_strength, mutual_info, mutual_info_or, \
    potential_profile, required_energy_curve, rs_potential, \
    rs_potential_deriv, scalar_mmse, se_fixed_point_alg, se_global_min, \
    se_trajectory, vector_mmse_oracle
from .codebook import GaussianCodebook, SignalVector, encode_user, \
    load_received, save_received, superpose, transmit
from .config import DerivedParams, SectionPrior, SystemConfig, \
    build_section_prior, derive_params, or_prior, orplus_prior, \
    power_for_ebn0
from .decision import lrt_support, qfunc, qfuncinv, required_strength, \
    topk_support, tradeoff_curve
from .denoise import DenoiserSpec, denoise
from .harness import Aggregate, ExperimentSpec, SweepError, SweepResult, \
    TrialResult, aggregate, desk_default_spec, emit_report, \
    load_manifest_spec, run_batch, run_many, run_trial, se_vs_empirical, \
    sweep_ebn0, wilson_interval
from .lp import LpInfeasible, LpUnbounded, solve_lp
from .powalloc import AllocationSolution, PowerGrid, default_grid, \
    find_p_alg, find_p_opt, materialize, solve_pa_lp, verify_allocation
from .tree import ParityProfile, TreeCodebook, TreeDecodeOverload, \
    cover_decode_experiment, outer_rate_bound, profile_for, tree_decode, \
    tree_encode

__version__ = "0.1.0"
