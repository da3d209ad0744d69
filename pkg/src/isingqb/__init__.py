"""Optimal charging of a two-spin Ising quantum battery.

Modules: ``dynamics`` (propagation and stored energy), ``pmp`` (adjoint and
switching vector), ``bsb`` (bang-singular-bang timings), ``oracle``
(brute-force checks), ``optimum`` and the ``cli`` front end.
"""
from .bsb import (
    AppendixBParams,
    BsbSolution,
    SequenceKind,
    appendix_b,
    asymptotic_slopes,
    bsb_onset,
    min_time_full_charge,
    solve_bsb,
    threshold_T_seq1,
    timing_residual,
)
from .dynamics import (
    BatteryParams,
    BoundMode,
    ControlProtocol,
    Propagator2,
    PulseSegment,
    ThreeLevelState,
    TwoLevelState,
    evolve,
    evolve_three_level,
    segment_propagator,
    stored_energy_from_A,
    stored_energy_from_populations,
    to_lab_frame,
)
from .optimum import optimal_charging
from .oracle import OracleResult, constant_pulse_best, grid_search_bsb, piecewise_ascent
from .pmp import (
    AdjointState,
    PmpReport,
    SwitchingVector,
    evolve_adjoint_backward,
    phi_z_at_second_switch,
    switching_vector,
    terminal_adjoint,
    verify_pmp,
)

__version__ = "0.1.0"
