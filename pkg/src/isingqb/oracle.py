"""Brute-force optimizers used to certify the analytic protocols.

Three independent searches:

* ``constant_pulse_best``: one On pulse followed by Off, On-duration scanned
  on a grid and polished with bounded Brent search.
* ``grid_search_bsb``: exhaustive (tau1, tau3) grid for a given sequence.
* ``piecewise_ascent``: derivative-free coordinate ascent over the amplitudes
  of equal-length segments, with seeded random restarts.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import minimize_scalar

from .bsb import SequenceKind, as_sequence
from .dynamics import (
    INV_SQRT2,
    BatteryParams,
    ControlProtocol,
    PulseSegment,
    protocol_energy,
    stored_energy_array,
)

CONSTANT_GRID = 4000
MAX_SWEEPS_PER_STEP = 40
MASK64 = (1 << 64) - 1


class OracleMethod(str, enum.Enum):
    GRID_BSB = "GridBsb"
    PIECEWISE_ASCENT = "PiecewiseAscent"
    CONSTANT_SWEEP = "ConstantSweep"


@dataclass(frozen=True)
class OracleResult:
    best_energy: float
    best_protocol: ControlProtocol
    evaluations: int
    method: OracleMethod

    def resimulate(self, chi: float) -> float:
        return protocol_energy(self.best_protocol, chi)


class SplitMix64:
    """SplitMix64 generator: 64-bit state, golden-ratio increment, two xor-multiply rounds."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


# -- constant pulse -------------------------------------------------------


def constant_pulse_energy(t, params: BatteryParams):
    w, nz = params.omega, params.n_z
    t = np.asarray(t, dtype=float)
    A = np.exp(0.5j * t) * (np.cos(w * t / 2) - 1j * nz * np.sin(w * t / 2)) * INV_SQRT2
    return stored_energy_array(A, params.chi)


def _on_off(params: BatteryParams, t_on: float, T: float) -> ControlProtocol:
    return ControlProtocol(
        (PulseSegment(params.omega0_over_J, t_on), PulseSegment(0.0, max(T - t_on, 0.0)))
    )


def constant_pulse_best(T: float, params: BatteryParams, n_grid: int = CONSTANT_GRID) -> OracleResult:
    """Best On-then-Off protocol with the maximal amplitude and On-duration in [0, T]."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    grid = np.linspace(0.0, T, n_grid + 1)
    special = [t for t in (params.plateau_time, 2 * params.plateau_time) if t <= T]
    cand = np.concatenate([grid, special])
    vals = constant_pulse_energy(cand, params)
    evals = cand.size
    i = int(np.argmax(vals[: grid.size]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid)]
    res = minimize_scalar(
        lambda t: -float(constant_pulse_energy(t, params)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-13},
    )
    evals += res.nfev
    pool = list(zip(vals.tolist(), cand.tolist())) + [(-res.fun, float(res.x))]
    best_e, best_t = max(pool, key=lambda p: (p[0], -p[1]))
    proto = _on_off(params, best_t, T)
    return OracleResult(protocol_energy(proto, params.chi), proto, evals, OracleMethod.CONSTANT_SWEEP)


# -- (tau1, tau3) grid --------------------------------------------------------


def _bang_factors(amplitude: float, tau: np.ndarray):
    """(U00, R10 e^{-i tau/2}) of a bang of length ``tau`` where U = e^{i tau/2} R.

    R is real-symmetric up to the i, so the same pair serves the last bang
    through R01 = R10.
    """
    w = math.hypot(amplitude, 1.0)
    nx, nz = amplitude / w, 1.0 / w
    c, s = np.cos(w * tau / 2), np.sin(w * tau / 2)
    u00 = (c - 1j * nz * s) * np.exp(0.5j * tau)
    r10 = -1j * nx * s * np.exp(-0.5j * tau)
    return u00, r10


@numba.njit(cache=True)
def _grid_kernel(taus, f1, g1, f3, g3, eT, T, chi):
    """Best (energy, i, j) over tau3 = taus[j] <= tau1 = taus[i], tau1 + tau3 <= T."""
    inv = 1.0 / math.sqrt(2.0)
    best_e = -1e300
    best_i = 0
    best_j = 0
    count = 0
    for i in range(taus.size):
        t1 = taus[i]
        for j in range(i + 1):
            if t1 + taus[j] > T + 1e-12:
                break
            A = (f1[i] * f3[j] + eT * g1[i] * g3[j]) * inv
            e = chi * (A.real * A.real + A.imag * A.imag - 0.5) - A.real * inv + 0.5
            count += 1
            if e > best_e:
                best_e = e
                best_i = i
                best_j = j
    return best_e, best_i, best_j, count


def grid_search_bsb(T: float, params: BatteryParams, sequence, step: float) -> OracleResult:
    """Exhaustive scan of bang durations on a uniform grid (plus the T endpoint).

    A(T) factorizes because the Off propagator is diag(1, e^{i tau2}) and
    tau2 = T - tau1 - tau3, so each cell costs two complex products.
    Only tau1 >= tau3 is scanned: the energy is symmetric under the swap.
    """
    sequence = as_sequence(sequence)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step!r}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    a = params.omega0_over_J
    taus = np.arange(0.0, T, step)
    if T - taus[-1] > 1e-12:
        taus = np.append(taus, T)
    f1, g1 = _bang_factors(a, taus)
    f3, g3 = _bang_factors(sequence.last_sign * a, taus)
    _, i, j, evals = _grid_kernel(taus, f1, g1, f3, g3, np.exp(1j * T), T, params.chi)
    tau1, tau3 = float(taus[i]), float(taus[j])
    tau2 = max(T - tau1 - tau3, 0.0)
    proto = ControlProtocol(
        (PulseSegment(a, tau1), PulseSegment(0.0, tau2), PulseSegment(sequence.last_sign * a, tau3))
    )
    return OracleResult(protocol_energy(proto, params.chi), proto, int(evals), OracleMethod.GRID_BSB)


# -- coordinate ascent ------------------------------------------------------


@numba.njit(cache=True)
def _seg_matrix(amp, dt):
    w = math.sqrt(amp * amp + 1.0)
    c = math.cos(w * dt / 2)
    s = math.sin(w * dt / 2)
    nx = amp / w
    nz = 1.0 / w
    ph = complex(math.cos(dt / 2), math.sin(dt / 2))
    m00 = complex(c, -nz * s) * ph
    m01 = complex(0.0, -nx * s) * ph
    m11 = complex(c, nz * s) * ph
    return m00, m01, m01, m11


@numba.njit(cache=True)
def _energy_of_A(A, chi):
    return chi * (A.real * A.real + A.imag * A.imag - 0.5) - A.real / math.sqrt(2.0) + 0.5


@numba.njit(cache=True)
def _ascent_kernel(amps, dt, lo, hi, chi, step0, step_min, max_sweeps):
    """In-place coordinate ascent; returns (final energy, number of trial evaluations)."""
    n = amps.size
    inv = 1.0 / math.sqrt(2.0)
    # suffix rows r_k = e0^T U_{n-1} ... U_{k+1}
    r0 = np.empty(n, dtype=np.complex128)
    r1 = np.empty(n, dtype=np.complex128)
    evals = 0
    step = step0
    energy = 0.0
    sweeps = 0
    while step >= step_min:
        improved = False
        sweeps += 1
        r0[n - 1] = 1.0
        r1[n - 1] = 0.0
        for k in range(n - 1, 0, -1):
            m00, m01, m10, m11 = _seg_matrix(amps[k], dt)
            r0[k - 1] = r0[k] * m00 + r1[k] * m10
            r1[k - 1] = r0[k] * m01 + r1[k] * m11
        p0 = complex(inv, 0.0)
        p1 = complex(0.0, 0.0)
        for k in range(n):
            m00, m01, m10, m11 = _seg_matrix(amps[k], dt)
            cur = _energy_of_A(r0[k] * (m00 * p0 + m01 * p1) + r1[k] * (m10 * p0 + m11 * p1), chi)
            best_a = amps[k]
            best_e = cur
            for sgn in (1.0, -1.0):
                a = min(max(amps[k] + sgn * step, lo), hi)
                if a == amps[k]:
                    continue
                q00, q01, q10, q11 = _seg_matrix(a, dt)
                e = _energy_of_A(r0[k] * (q00 * p0 + q01 * p1) + r1[k] * (q10 * p0 + q11 * p1), chi)
                evals += 1
                if e > best_e:
                    best_e = e
                    best_a = a
            if best_a != amps[k]:
                amps[k] = best_a
                improved = True
            m00, m01, m10, m11 = _seg_matrix(amps[k], dt)
            p0, p1 = m00 * p0 + m01 * p1, m10 * p0 + m11 * p1
        energy = _energy_of_A(p0, chi)
        # a fixed step can crawl along a ridge for very long; cap each level
        if not improved or sweeps >= max_sweeps:
            step *= 0.5
            sweeps = 0
    return energy, evals


def _upsample(protocol: ControlProtocol, T: float, n_segments: int) -> np.ndarray:
    """Amplitude of ``protocol`` at the midpoint of each of ``n_segments`` equal cells."""
    from .dynamics import amplitude_at

    mids = (np.arange(n_segments) + 0.5) * (T / n_segments)
    return amplitude_at(protocol, mids).astype(float)


def piecewise_ascent(
    T: float,
    params: BatteryParams,
    n_segments: int = 64,
    restarts: int = 20,
    seed: int = 0,
    warm_start: ControlProtocol | None = None,
    step_min: float = 1e-6,
    max_sweeps: int = MAX_SWEEPS_PER_STEP,
) -> OracleResult:
    """Coordinate ascent over equal-duration segment amplitudes.

    Start points are drawn uniformly in the admissible amplitude range from a
    SplitMix64 stream seeded with ``seed``. ``warm_start`` (for instance the
    result of a coarser run) is added as one more start, so a refined run
    never ends below it when its cells nest the coarse cells.
    """
    if n_segments < 8:
        raise ValueError(f"n_segments must be >= 8, got {n_segments!r}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if restarts < 1 and warm_start is None:
        raise ValueError("need at least one restart or a warm start")
    lo, hi = params.lower_bound, params.omega0_over_J
    dt = T / n_segments
    rng = SplitMix64(seed)
    starts = []
    for _ in range(restarts):
        starts.append(np.array([lo + (hi - lo) * rng.uniform() for _ in range(n_segments)]))
    if warm_start is not None:
        starts.append(np.clip(_upsample(warm_start, T, n_segments), lo, hi))
    best_key, best_amps, total = None, None, 0
    for amps in starts:
        energy, evals = _ascent_kernel(amps, dt, lo, hi, params.chi, hi / 8, step_min, max_sweeps)
        total += evals
        # max energy, ties broken toward the lexicographically smallest amplitude list
        key = (energy, tuple(-amps))
        if best_key is None or key > best_key:
            best_key, best_amps = key, amps.copy()
    proto = ControlProtocol(tuple(PulseSegment(float(a), dt) for a in best_amps))
    return OracleResult(protocol_energy(proto, params.chi), proto, total, OracleMethod.PIECEWISE_ASCENT)


def best_of(results: list[OracleResult]) -> OracleResult:
    return max(results, key=lambda r: r.best_energy)


__all__ = [
    "OracleMethod",
    "OracleResult",
    "SplitMix64",
    "best_of",
    "constant_pulse_best",
    "constant_pulse_energy",
    "grid_search_bsb",
    "piecewise_ascent",
]
