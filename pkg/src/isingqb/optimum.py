"""Optimal stored energy at a given duration, assembled from the analytic pieces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bsb import (
    SequenceKind,
    bsb_onset,
    bsb_window,
    build_solution,
    min_time_full_charge,
    solve_bsb,
)
from .dynamics import (
    OMEGA0_MIN,
    BatteryParams,
    BoundMode,
    ControlProtocol,
    PulseSegment,
    protocol_energy,
)
from .oracle import constant_pulse_energy, constant_pulse_best

REGIME_TOL = 1e-9
REGIMES = ("hillside1", "plateau", "bsb")


@dataclass(frozen=True)
class OptimalProtocol:
    T: float
    energy: float
    protocol: ControlProtocol
    source: str
    regime: str


def admissible_sequences(params: BatteryParams) -> tuple[SequenceKind, ...]:
    if params.bound_mode is BoundMode.SYMMETRIC:
        return SequenceKind.SEQ_I, SequenceKind.SEQ_II
    return (SequenceKind.SEQ_I,)


def regime_of(T: float, energy: float, params: BatteryParams) -> str:
    """Value-based label: before one full rotation, at the plateau value, or above it."""
    if T < params.plateau_time:
        return "hillside1"
    if energy <= params.plateau_energy + REGIME_TOL:
        return "plateau"
    return "bsb"


def padded_full_charge(T: float, params: BatteryParams, sequence, T_min: float | None = None) -> ControlProtocol:
    """Minimum-time full-charging protocol followed by an Off pulse up to T.

    The Off propagator leaves A untouched, so the stored energy stays 1.
    """
    T_min = min_time_full_charge(params, sequence) if T_min is None else T_min
    if T < T_min:
        raise ValueError(f"T={T!r} is shorter than the full-charging time {T_min!r}")
    sol = build_solution(T_min, 2 * (T_min - math.pi), params, sequence)
    segs = list(sol.protocol().segments)
    if T - T_min > 0:
        segs.append(PulseSegment(0.0, T - T_min))
    return ControlProtocol(tuple(segs))


class FullChargeTimes:
    """Per-parameter cache of the full-charging times; the sweep asks repeatedly."""

    def __init__(self):
        self._cache: dict[tuple, float] = {}

    def get(self, params: BatteryParams, sequence: SequenceKind) -> float | None:
        if params.omega0_over_J <= OMEGA0_MIN:
            return None
        key = (params.omega0_over_J, params.chi, sequence)
        if key not in self._cache:
            self._cache[key] = min_time_full_charge(params, sequence)
        return self._cache[key]


_TIMES = FullChargeTimes()


def optimal_charging(T: float, params: BatteryParams) -> OptimalProtocol:
    """Best of: constant On/Off pulse, admissible BSB sequences, padded full charge."""
    const = constant_pulse_best(T, params)
    best = (const.best_energy, const.best_protocol, "constant")
    lo, hi = bsb_window(params)
    for seq in admissible_sequences(params):
        T_min = _TIMES.get(params, seq)
        if T_min is not None and T >= T_min:
            proto = padded_full_charge(T, params, seq, T_min)
            cand = (protocol_energy(proto, params.chi), proto, f"full-charge-{seq.value}")
        elif lo < T <= hi:
            sol = solve_bsb(T, params, seq)
            if sol is None:
                continue
            cand = (sol.stored_energy, sol.protocol(), f"bsb-{seq.value}")
        else:
            continue
        if cand[0] > best[0]:
            best = cand
    energy, proto, source = best
    return OptimalProtocol(T, energy, proto, source, regime_of(T, energy, params))


def constant_crossing(params: BatteryParams, t_max: float = 2 * math.pi, n: int = 20000) -> float | None:
    """First On-duration beyond one full rotation whose energy beats the plateau."""
    t0 = params.plateau_time
    t = np.linspace(t0, t_max, n + 1)[1:]
    excess = constant_pulse_energy(t, params) - params.plateau_energy
    above = np.nonzero(excess > REGIME_TOL)[0]
    if above.size == 0:
        return None
    k = above[0]
    a = t[k - 1] if k > 0 else t0
    f = lambda x: float(constant_pulse_energy(x, params)) - params.plateau_energy - REGIME_TOL  # noqa: E731
    return brentq(f, a, t[k], xtol=1e-13) if f(a) < 0 else float(t[k])


def plateau_exit(params: BatteryParams) -> float | None:
    """Earliest duration at which the optimal stored energy rises above the plateau."""
    cands = [bsb_onset(params, seq) for seq in admissible_sequences(params)]
    cands.append(constant_crossing(params))
    cands = [c for c in cands if c is not None]
    return min(cands) if cands else None
