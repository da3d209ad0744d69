"""Bang-singular-bang timings from the switching conditions.

Notation: tau_s = tau1 + tau3 (total bang time), tau_d = tau1 - tau3 and
tau2 = T - tau_s is the Off (singular) arc. Sequence I is (Omega_0, 0, Omega_0)
with tau_d = 2 pi/omega, sequence II is (Omega_0, 0, -Omega_0) with tau_d = 0.

The timing equations are evaluated in a cross-multiplied form. For sequence I
the tan-form equation has been multiplied by cos(omega tau_s/4), which vanishes
exactly at tau_s = tau_d; for sequence II by sin(omega tau_s/4). Both forms stay
finite everywhere, so a sign-change scan never straddles a pole.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dynamics import (
    INV_SQRT2,
    BatteryParams,
    BoundMode,
    ControlProtocol,
    PulseSegment,
    fmt,
    protocol_propagator,
    stored_energy_from_A,
)

SCAN_POINTS = 2000
ROOT_XTOL = 1e-12
# a solution must beat the single-pulse plateau by more than this
PLATEAU_MARGIN = 1e-12
ENERGY_TIE = 1e-12


class SequenceKind(str, enum.Enum):
    SEQ_I = "I"
    SEQ_II = "II"

    @property
    def last_sign(self) -> float:
        return 1.0 if self is SequenceKind.SEQ_I else -1.0

    def tau_d(self, params: BatteryParams) -> float:
        return params.plateau_time if self is SequenceKind.SEQ_I else 0.0

    def check_mode(self, params: BatteryParams):
        if self is SequenceKind.SEQ_II and params.bound_mode is not BoundMode.SYMMETRIC:
            raise ValueError("sequence II needs the symmetric control domain")


def as_sequence(value) -> SequenceKind:
    if isinstance(value, SequenceKind):
        return value
    key = str(value).strip().upper().replace("SEQ", "").strip("_ ")
    aliases = {"1": "I", "2": "II"}
    return SequenceKind(aliases.get(key, key))


@dataclass(frozen=True)
class AppendixBParams:
    u_I: float
    u_z: float
    x_I: float
    x_z: float
    y_I: float
    y_z: float

    def A_final(self, T: float) -> complex:
        return complex(np.exp(0.5j * T) * (self.u_I + 1j * self.u_z) * INV_SQRT2)


def appendix_b(tau_s: float, tau_d: float, T: float, params: BatteryParams, sequence) -> AppendixBParams:
    """Closed-form propagator coefficients of the three-pulse product.

    ``u_I + i u_z`` is the (0, 0) entry of U3 U2 U1 without global phase;
    ``i x_I + x_z`` and ``i y_I + y_z`` are the same entry of U3 sigma_x U2 U1
    and U3 sigma_y U2 U1.
    """
    sequence = as_sequence(sequence)
    if not (0 <= tau_s <= T):
        raise ValueError(f"need 0 <= tau_s <= T, got tau_s={tau_s!r}, T={T!r}")
    if abs(tau_d) > tau_s + 1e-12:
        raise ValueError(f"need |tau_d| <= tau_s, got tau_d={tau_d!r}, tau_s={tau_s!r}")
    w, nx, nz = params.omega, params.n_x, params.n_z
    b = (T - tau_s) / 2
    cb, sb = math.cos(b), math.sin(b)
    cs, ss = math.cos(w * tau_s / 2), math.sin(w * tau_s / 2)
    cd, sd = math.cos(w * tau_d / 2), math.sin(w * tau_d / 2)
    if sequence is SequenceKind.SEQ_I:
        uI = cb * cs - nz * sb * ss
        uz = -(nx**2) * sb * cd - nz * cb * ss - nz**2 * sb * cs
        xI = -nx * ss * cb
        xz = nx * sd * sb - nx * nz * cd * cb + nx * nz * cs * cb
        yI = -nx * ss * sb
        yz = -nx * sd * cb - nx * nz * cd * sb + nx * nz * cs * sb
    else:
        uI = nx**2 * cb * cd - nz * sb * ss + nz**2 * cb * cs
        uz = -sb * cs - nz * cb * ss
        xI = -nx * sd * cb - nx * nz * cd * sb + nx * nz * cs * sb
        xz = nx * ss * sb
        yI = -nx * sd * sb + nx * nz * cd * cb - nx * nz * cs * cb
        yz = -nx * ss * cb
    return AppendixBParams(uI, uz, xI, xz, yI, yz)


def timing_residual(tau_s, T: float, params: BatteryParams, sequence):
    """Pole-free timing residual; accepts scalar or array ``tau_s``."""
    sequence = as_sequence(sequence)
    chi, w, nx, nz = params.chi, params.omega, params.n_x, params.n_z
    tau_s = np.asarray(tau_s, dtype=float)
    c, s = np.cos(w * tau_s / 2), np.sin(w * tau_s / 2)
    cq, sq = np.cos(w * tau_s / 4), np.sin(w * tau_s / 4)
    beta = (T - tau_s) / 2
    cb, sb = np.cos(beta), np.sin(beta)
    k = 2 * chi
    if sequence is SequenceKind.SEQ_I:
        N = k * sb * (nx**2 - nz**2 * c) - k * nz * s * cb + math.sin(T / 2)
        D = k * nz * s * sb - k * c * cb + math.cos(T / 2)
        r = nz * N * cq - D * sq
    else:
        N = math.sin(T / 2) - k * nz * s * cb - k * c * sb
        D = math.cos(T / 2) - k * cb * (nz**2 * c + nx**2) + k * nz * s * sb
        r = N * cq - nz * D * sq
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class BsbSolution:
    tau1: float
    tau2: float
    tau3: float
    sequence: SequenceKind
    stored_energy: float
    residual: float
    A_final: complex
    B_final: complex = 0j
    omega0_over_J: float = math.nan
    candidates: int = 1
    mirrored_energy: float = math.nan

    @property
    def T(self) -> float:
        return self.tau1 + self.tau2 + self.tau3

    @property
    def tau_s(self) -> float:
        return self.tau1 + self.tau3

    @property
    def tau_d(self) -> float:
        return self.tau1 - self.tau3

    def protocol(self) -> ControlProtocol:
        a = self.omega0_over_J
        return ControlProtocol(
            (
                PulseSegment(a, self.tau1),
                PulseSegment(0.0, self.tau2),
                PulseSegment(self.sequence.last_sign * a, self.tau3),
            )
        )

    def mirrored(self) -> ControlProtocol:
        """The tau1 <-> tau3 interchanged protocol (same stored energy)."""
        a = self.omega0_over_J
        s = self.sequence.last_sign
        return ControlProtocol(
            (PulseSegment(a, self.tau3), PulseSegment(0.0, self.tau2), PulseSegment(s * a, self.tau1))
        )

    def record(self) -> str:
        return ",".join(
            [
                self.sequence.value,
                fmt(self.T),
                fmt(self.tau1),
                fmt(self.tau2),
                fmt(self.tau3),
                fmt(self.stored_energy),
                fmt(self.residual),
            ]
        )


BSB_RECORD_HEADER = "sequence,T,tau1,tau2,tau3,energy,residual"


def bsb_window(params: BatteryParams) -> tuple[float, float]:
    """Open lower / closed upper T window for the three-segment solver."""
    return math.pi / params.omega, 2 * math.pi


def build_solution(T: float, tau_s: float, params: BatteryParams, sequence) -> BsbSolution:
    sequence = as_sequence(sequence)
    tau_d = sequence.tau_d(params)
    tau1 = (tau_s + tau_d) / 2
    tau3 = max((tau_s - tau_d) / 2, 0.0)
    tau2 = max(T - tau1 - tau3, 0.0)
    sol = BsbSolution(
        tau1, tau2, tau3, sequence, 0.0, 0.0, 0j, omega0_over_J=params.omega0_over_J
    )
    full = protocol_propagator(sol.protocol()).full()
    A, B = full[0, 0] * INV_SQRT2, full[1, 0] * INV_SQRT2
    mirror = protocol_propagator(sol.mirrored()).full()[0, 0] * INV_SQRT2
    return BsbSolution(
        tau1,
        tau2,
        tau3,
        sequence,
        stored_energy_from_A(A, params.chi),
        float(timing_residual(tau_s, T, params, sequence)),
        complex(A),
        complex(B),
        params.omega0_over_J,
        1,
        stored_energy_from_A(mirror, params.chi),
    )


def residual_roots(T: float, params: BatteryParams, sequence, n_scan: int = SCAN_POINTS) -> list[float]:
    """All sign-change roots of the timing residual for tau_s in [tau_d, T]."""
    sequence = as_sequence(sequence)
    lo = sequence.tau_d(params)
    if T < lo:
        return []
    grid = np.linspace(lo, T, n_scan + 1)
    r = timing_residual(grid, T, params, sequence)
    roots = []
    f = lambda x: timing_residual(x, T, params, sequence)  # noqa: E731
    for i in range(n_scan):
        if r[i] == 0.0:
            roots.append(float(grid[i]))
        elif r[i] * r[i + 1] < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    if r[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def solve_bsb(T: float, params: BatteryParams, sequence, n_scan: int = SCAN_POINTS) -> BsbSolution | None:
    """Energy-maximizing bang-singular-bang root at duration T.

    Returns None when no root stores more energy than the single-pulse plateau.
    """
    sequence = as_sequence(sequence)
    sequence.check_mode(params)
    lo, hi = bsb_window(params)
    if not (lo < T <= hi):
        raise ValueError(f"T={T!r} outside the bang-singular-bang window ({lo:.6g}, {hi:.6g}]")
    roots = residual_roots(T, params, sequence, n_scan)
    best = None
    for tau_s in roots:
        sol = build_solution(T, tau_s, params, sequence)
        if best is None or sol.stored_energy > best.stored_energy + ENERGY_TIE:
            best = sol
    if best is None or best.stored_energy <= params.plateau_energy + PLATEAU_MARGIN:
        return None
    return BsbSolution(**{**best.__dict__, "candidates": len(roots)})


def _scan_roots(f, lo: float, hi: float, step: float) -> list[float]:
    n = max(int(math.ceil((hi - lo) / step)), 2)
    grid = np.linspace(lo, hi, n + 1)
    vals = np.array([f(x) for x in grid])
    roots = []
    for i in range(n):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return roots


def threshold_function(T: float, params: BatteryParams) -> float:
    return 2 * params.chi * math.cos((T - params.plateau_time) / 2) + math.cos(T / 2)


def threshold_T_seq1(params: BatteryParams) -> float | None:
    """Smallest T in (2 pi/omega, 2 pi) where sequence I leaves the plateau with tau3 = 0."""
    lo = params.plateau_time
    roots = _scan_roots(lambda T: threshold_function(T, params), lo, 2 * math.pi, math.pi / 2000)
    roots = [r for r in roots if lo < r < 2 * math.pi]
    return roots[0] if roots else None


def full_charge_function(T: float, params: BatteryParams, sequence) -> float:
    sequence = as_sequence(sequence)
    w, nz = params.omega, params.n_z
    p = w * (math.pi - T) / 2
    if sequence is SequenceKind.SEQ_I:
        return nz * math.sin(T / 2) * math.cos(p) + math.sin(p) * math.cos(T / 2)
    return math.sin(T / 2) * math.cos(p) + nz * math.sin(p) * math.cos(T / 2)


def _full_charge_check(T: float, params: BatteryParams, sequence, tol: float = 1e-8) -> BsbSolution | None:
    tau_s = 2 * (T - math.pi)
    if tau_s < sequence.tau_d(params) - 1e-12 or tau_s > T:
        return None
    sol = build_solution(T, tau_s, params, sequence)
    if abs(sol.A_final + INV_SQRT2) > tol:
        return None
    return sol


def min_time_full_charge(params: BatteryParams, sequence) -> float:
    """Shortest duration reaching A(T) = -1/sqrt(2) with the given sequence."""
    sequence = as_sequence(sequence)
    params.require_full_charging()
    step = min(math.pi / 2000, math.pi / (40 * params.omega))
    f = lambda T: full_charge_function(T, params, sequence)  # noqa: E731
    for T in _scan_roots(f, math.pi, 2 * math.pi, step):
        if math.pi < T < 2 * math.pi and _full_charge_check(T, params, sequence) is not None:
            return T
    raise ArithmeticError(
        f"no full-charging root found for omega0_over_J={params.omega0_over_J!r}, sequence {sequence.value}"
    )


def full_charge_solution(params: BatteryParams, sequence) -> BsbSolution:
    sequence = as_sequence(sequence)
    T = min_time_full_charge(params, sequence)
    return build_solution(T, 2 * (T - math.pi), params, sequence)


def asymptotic_slopes() -> tuple[float, float]:
    """(alpha_II, alpha_I) of JT ~ pi + alpha J/omega near the lower corner.

    alpha_I = 2x with x the root of x + cot(x) = 0 in (pi/2, pi).
    """
    from scipy.optimize import bisect

    x = bisect(lambda x: x * math.sin(x) + math.cos(x), math.pi / 2, math.pi, xtol=1e-14)
    return math.pi, 2 * x


def upper_corner(params: BatteryParams, sequence) -> float:
    """Leading-order JT near (J/omega, JT) = (1/2, 2 pi)."""
    d = 0.5 - params.n_z
    if as_sequence(sequence) is SequenceKind.SEQ_I:
        return 2 * math.pi - 8 * math.pi / 3 * d
    return 2 * math.pi - 2 * math.pi ** (1 / 3) * d ** (1 / 3)


def beats_plateau(T: float, params: BatteryParams, sequence) -> bool:
    return solve_bsb(T, params, sequence) is not None


def _plateau_crossing(params: BatteryParams, sequence, lo: float, hi: float, step: float, tol: float):
    grid = np.arange(lo, hi, step).tolist() + [hi]
    prev = None
    for T in grid:
        if beats_plateau(T, params, sequence):
            if prev is None:
                return T
            a, b = prev, T
            while b - a > tol:
                m = 0.5 * (a + b)
                if beats_plateau(m, params, sequence):
                    b = m
                else:
                    a = m
            return b
        prev = T
    return None


def bsb_onset(params: BatteryParams, sequence, step: float = 1e-2, tol: float = 1e-10) -> float | None:
    """First duration at which the three-segment solution beats the plateau.

    Branches that cross the plateau value transversally are located by a
    forward scan and bisection. The tau3 -> 0 branch of sequence I departs
    with an excess that grows only like (T - T_th)^3, so there the threshold
    root is used directly whenever it comes first.
    """
    sequence = as_sequence(sequence)
    lo_w, hi = bsb_window(params)
    if params.omega0_over_J > math.sqrt(3):
        hi = min(hi, min_time_full_charge(params, sequence))
    lo = max(lo_w + 1e-9, sequence.tau_d(params))
    T = _plateau_crossing(params, sequence, lo, hi, step, tol)
    if sequence is SequenceKind.SEQ_I:
        th = threshold_T_seq1(params)
        if th is not None and (T is None or th < T):
            return th
    return T


__all__ = [
    "AppendixBParams",
    "BSB_RECORD_HEADER",
    "BsbSolution",
    "SequenceKind",
    "appendix_b",
    "asymptotic_slopes",
    "bsb_onset",
    "full_charge_solution",
    "min_time_full_charge",
    "solve_bsb",
    "threshold_T_seq1",
    "timing_residual",
]
