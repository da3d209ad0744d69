"""State propagation for the driven triplet manifold and its two-level reduction.

Units: J = 1 throughout. Times are in 1/J, drive amplitudes in J and stored
energies in units of the longitudinal field Omega_z = J/chi.

In the rotating frame at resonance the triplet amplitudes ``c = (c0, c1, c2)``
obey ``i dc/dt = H3 c`` with the Omega(t)-dependent matrix of
:func:`three_level_hamiltonian`. The combinations ``A = (c2 + c0)/sqrt(2)``
and ``B = c1`` then follow ``i d(A, B)/dt = H' (A, B)`` with

    H' = -1/2 * I + Omega/2 * sigma_x + 1/2 * sigma_z

while ``C = (c2 - c0)/sqrt(2)`` is frozen. Starting in the spin-down state,
``(A, B) = (1/sqrt(2), 0)`` and ``C = -1/sqrt(2)``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .integrate import IntegrationError, rk4_linear

SQRT2 = math.sqrt(2.0)
INV_SQRT2 = 1.0 / SQRT2
OMEGA0_MIN = math.sqrt(3.0)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# amplitude tolerance used when checking a protocol against its bounds
AMPLITUDE_TOL = 1e-12
DURATION_TOL = 1e-12


class BoundMode(str, enum.Enum):
    NONNEG = "nonneg"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class BatteryParams:
    """Dimensionless problem definition.

    ``omega0_over_J`` is the drive bound Omega_0/J, ``chi`` the ratio J/Omega_z.
    """

    omega0_over_J: float
    chi: float
    bound_mode: BoundMode = BoundMode.NONNEG

    def __post_init__(self):
        if not (math.isfinite(self.omega0_over_J) and self.omega0_over_J > 0):
            raise ValueError(f"omega0_over_J must be positive, got {self.omega0_over_J!r}")
        if not (math.isfinite(self.chi) and 0 < self.chi <= 0.5):
            raise ValueError(f"chi must satisfy 0 < chi <= 1/2, got {self.chi!r}")
        object.__setattr__(self, "bound_mode", BoundMode(self.bound_mode))

    @property
    def omega(self) -> float:
        return math.hypot(self.omega0_over_J, 1.0)

    @property
    def n_x(self) -> float:
        return self.omega0_over_J / self.omega

    @property
    def n_z(self) -> float:
        return 1.0 / self.omega

    @property
    def lower_bound(self) -> float:
        return 0.0 if self.bound_mode is BoundMode.NONNEG else -self.omega0_over_J

    @property
    def omega_z(self) -> float:
        return 1.0 / self.chi

    @property
    def plateau_time(self) -> float:
        """Duration 2*pi/omega of one full rotation under the maximal drive."""
        return 2 * math.pi / self.omega

    @property
    def plateau_energy(self) -> float:
        """Stored energy after a single full rotation; independent of chi."""
        return 0.5 * (1.0 + math.cos(math.pi * self.n_z))

    def require_full_charging(self):
        if self.omega0_over_J <= OMEGA0_MIN:
            raise ValueError(
                f"full charging workflows need omega0_over_J > sqrt(3), got {self.omega0_over_J!r}"
            )

    def with_bound(self, bound_mode: BoundMode | str) -> "BatteryParams":
        return BatteryParams(self.omega0_over_J, self.chi, BoundMode(bound_mode))


@dataclass(frozen=True)
class PulseSegment:
    amplitude: float
    duration: float

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError(f"non-finite amplitude {self.amplitude!r}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError(f"segment duration must be >= 0, got {self.duration!r}")


@dataclass(frozen=True)
class ControlProtocol:
    """Piecewise-constant Omega(t) on [0, T], as an ordered tuple of segments."""

    segments: tuple[PulseSegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "ControlProtocol":
        return cls(tuple(PulseSegment(float(a), float(d)) for a, d in pairs))

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([s.amplitude for s in self.segments], dtype=float)

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments], dtype=float)

    def boundaries(self) -> np.ndarray:
        """Segment start times followed by the final time (length n+1)."""
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def switch_times(self) -> list[float]:
        """Interior boundaries where the amplitude changes."""
        bounds = self.boundaries()
        out = []
        for k in range(1, len(self.segments)):
            if self.segments[k].amplitude != self.segments[k - 1].amplitude:
                out.append(float(bounds[k]))
        return out

    def check_bounds(self, params: BatteryParams):
        lo, hi = params.lower_bound, params.omega0_over_J
        for k, seg in enumerate(self.segments):
            if seg.amplitude < lo - AMPLITUDE_TOL or seg.amplitude > hi + AMPLITUDE_TOL:
                raise ValueError(
                    f"segment {k} amplitude {seg.amplitude} outside [{lo}, {hi}] "
                    f"({params.bound_mode.value} bounds)"
                )

    def split(self, parts: int = 2) -> "ControlProtocol":
        """Same control with every segment cut into ``parts`` equal pieces."""
        return ControlProtocol(
            tuple(
                PulseSegment(s.amplitude, s.duration / parts)
                for s in self.segments
                for _ in range(parts)
            )
        )

    def __len__(self):
        return len(self.segments)


@dataclass(frozen=True)
class TwoLevelState:
    A: complex
    B: complex

    def __post_init__(self):
        object.__setattr__(self, "A", complex(self.A))
        object.__setattr__(self, "B", complex(self.B))
        norm2 = abs(self.A) ** 2 + abs(self.B) ** 2
        if abs(norm2 - 0.5) > 1e-10:
            raise ValueError(f"|A|^2 + |B|^2 must be 1/2, got {norm2!r}")

    @classmethod
    def initial(cls) -> "TwoLevelState":
        return cls(INV_SQRT2, 0.0)

    @classmethod
    def from_array(cls, v) -> "TwoLevelState":
        return cls(complex(v[0]), complex(v[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B], dtype=complex)

    @property
    def norm(self) -> float:
        return math.hypot(abs(self.A), abs(self.B))

    def bloch(self) -> tuple[float, float, float]:
        return bloch_vector(self.A, self.B)


@dataclass(frozen=True)
class ThreeLevelState:
    c0: complex
    c1: complex
    c2: complex

    def __post_init__(self):
        for name in ("c0", "c1", "c2"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        norm2 = abs(self.c0) ** 2 + abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm2 - 1.0) > 1e-10:
            raise ValueError(f"three-level state must be normalized, got {norm2!r}")

    @classmethod
    def ground(cls) -> "ThreeLevelState":
        return cls(1.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v) -> "ThreeLevelState":
        return cls(complex(v[0]), complex(v[1]), complex(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2], dtype=complex)

    @property
    def populations(self) -> tuple[float, float, float]:
        return abs(self.c0) ** 2, abs(self.c1) ** 2, abs(self.c2) ** 2

    @property
    def conserved(self) -> complex:
        """C = (c2 - c0)/sqrt(2), untouched by the drive."""
        return (self.c2 - self.c0) / SQRT2

    def reduce(self) -> tuple[complex, complex, complex]:
        """(A, B, C) of the two-level mapping; no normalization is imposed."""
        return (self.c2 + self.c0) / SQRT2, self.c1, (self.c2 - self.c0) / SQRT2

    def to_two_level(self) -> TwoLevelState:
        A, B, _ = self.reduce()
        return TwoLevelState(A, B)

    @classmethod
    def from_two_level(cls, psi: TwoLevelState, C: complex = -INV_SQRT2) -> "ThreeLevelState":
        return cls((psi.A - C) / SQRT2, psi.B, (psi.A + C) / SQRT2)


@dataclass(frozen=True)
class Propagator2:
    """``global_phase * matrix`` where ``matrix`` is the SU(2) rotation part."""

    matrix: np.ndarray
    global_phase: complex = 1.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "global_phase", complex(self.global_phase))

    @classmethod
    def identity(cls) -> "Propagator2":
        return cls(IDENTITY2)

    def full(self) -> np.ndarray:
        return self.global_phase * self.matrix

    def __matmul__(self, other: "Propagator2") -> "Propagator2":
        return Propagator2(self.matrix @ other.matrix, self.global_phase * other.global_phase)

    def dagger(self) -> "Propagator2":
        return Propagator2(self.matrix.conj().T, self.global_phase.conjugate())

    def apply(self, psi: TwoLevelState) -> TwoLevelState:
        return TwoLevelState.from_array(self.full() @ psi.as_array())

    def coefficients(self) -> tuple[float, float, float, float]:
        """(u_I, u_x, u_y, u_z) with matrix = u_I*I + i*(u_x sx + u_y sy + u_z sz)."""
        m = self.matrix
        return m[0, 0].real, m[0, 1].imag, m[0, 1].real, m[0, 0].imag

    def unitarity_error(self) -> float:
        full = self.full()
        return float(np.max(np.abs(full.conj().T @ full - IDENTITY2)))


def rotation_matrix(amplitude: float, duration: float) -> np.ndarray:
    """SU(2) part exp(-i*omega*t/2 * (n_x sx + n_z sz)) of a constant segment."""
    w = math.hypot(amplitude, 1.0)
    c = math.cos(w * duration / 2)
    s = math.sin(w * duration / 2)
    nx, nz = amplitude / w, 1.0 / w
    return np.array(
        [[c - 1j * nz * s, -1j * nx * s], [-1j * nx * s, c + 1j * nz * s]], dtype=complex
    )


def segment_propagator(amplitude: float, duration: float) -> Propagator2:
    if duration < 0:
        raise ValueError(f"negative duration {duration!r}")
    return Propagator2(rotation_matrix(amplitude, duration), np.exp(0.5j * duration))


def _rotation_batch(amplitude: float, dt: np.ndarray) -> np.ndarray:
    """Stack of full propagators (global phase included) for elapsed times ``dt``."""
    w = math.hypot(amplitude, 1.0)
    c = np.cos(w * dt / 2)
    s = np.sin(w * dt / 2)
    nx, nz = amplitude / w, 1.0 / w
    out = np.empty(dt.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * nz * s
    out[..., 0, 1] = -1j * nx * s
    out[..., 1, 0] = -1j * nx * s
    out[..., 1, 1] = c + 1j * nz * s
    return out * np.exp(0.5j * dt)[..., None, None]


def protocol_propagator(protocol: ControlProtocol) -> Propagator2:
    total = Propagator2.identity()
    for seg in protocol.segments:
        total = segment_propagator(seg.amplitude, seg.duration) @ total
    return total


def two_level_hamiltonian(amplitude: float) -> np.ndarray:
    return -0.5 * IDENTITY2 + 0.5 * amplitude * SIGMA_X + 0.5 * SIGMA_Z


def three_level_hamiltonian(amplitude: float) -> np.ndarray:
    g = amplitude / (2 * SQRT2)
    return np.array([[0, g, 0], [g, -1.0, g], [0, g, 0]], dtype=complex)


@dataclass(frozen=True)
class Trajectory:
    """Two-level trajectory sampled on segment boundaries plus a dense grid.

    ``segment[i]`` is the index of the segment the sample belongs to; a
    boundary is attributed to the segment that ends there, except t = 0.
    """

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    segment: np.ndarray
    protocol: ControlProtocol = field(repr=False, default=ControlProtocol())

    @property
    def final(self) -> TwoLevelState:
        return TwoLevelState(self.A[-1], self.B[-1])

    def norms(self) -> np.ndarray:
        return np.sqrt(np.abs(self.A) ** 2 + np.abs(self.B) ** 2)

    def bloch(self) -> np.ndarray:
        return np.column_stack(bloch_vector(self.A, self.B))

    def states(self) -> list[TwoLevelState]:
        return [TwoLevelState(a, b) for a, b in zip(self.A, self.B)]


def _segment_grid(duration: float, samples: int) -> np.ndarray:
    if duration == 0:
        return np.array([0.0])
    return np.linspace(0.0, duration, max(samples, 1) + 1)


def propagate_samples(protocol: ControlProtocol, vec, samples_per_segment: int = 400):
    """Dense samples of an arbitrary 2-vector (state or adjoint) along ``protocol``.

    Returns ``(t, states, segment)`` with ``states`` of shape (N, 2).
    Zero-length segments contribute no samples.
    """
    psi = np.asarray(vec, dtype=complex)
    ts, parts, segs = [np.array([0.0])], [psi[None, :]], [np.array([0])]
    bounds = protocol.boundaries()
    for k, seg in enumerate(protocol.segments):
        dt = _segment_grid(seg.duration, samples_per_segment)[1:]
        if dt.size:
            parts.append(_rotation_batch(seg.amplitude, dt) @ psi)
            ts.append(bounds[k] + dt)
            segs.append(np.full(dt.size, k))
            psi = parts[-1][-1]
    return np.concatenate(ts), np.concatenate(parts), np.concatenate(segs)


def sample_at(protocol: ControlProtocol, vec, segment, local_t) -> np.ndarray:
    """States ``local_t`` into each listed segment, starting from ``vec`` at t = 0."""
    starts = [np.asarray(vec, dtype=complex)]
    for seg in protocol.segments:
        starts.append(segment_propagator(seg.amplitude, seg.duration).full() @ starts[-1])
    segment = np.asarray(segment, dtype=int)
    local_t = np.asarray(local_t, dtype=float)
    out = np.empty((segment.size, 2), dtype=complex)
    for k in np.unique(segment):
        mask = segment == k
        if k >= len(protocol.segments):
            out[mask] = starts[-1]
            continue
        amp = protocol.segments[k].amplitude
        out[mask] = _rotation_batch(amp, local_t[mask]) @ starts[k]
    return out


def evolve(
    protocol: ControlProtocol,
    initial: TwoLevelState | None = None,
    samples_per_segment: int = 400,
) -> Trajectory:
    """Propagate ``initial`` through ``protocol`` with exact segment propagators."""
    psi = (initial or TwoLevelState.initial()).as_array()
    t, states, segs = propagate_samples(protocol, psi, samples_per_segment)
    return Trajectory(t, states[:, 0], states[:, 1], segs, protocol)


def final_state(protocol: ControlProtocol, initial: TwoLevelState | None = None) -> TwoLevelState:
    psi = (initial or TwoLevelState.initial()).as_array()
    for seg in protocol.segments:
        psi = segment_propagator(seg.amplitude, seg.duration).full() @ psi
    return TwoLevelState.from_array(psi)


def evolve_three_level(
    protocol: ControlProtocol,
    initial: ThreeLevelState | None = None,
    rtol: float = 1e-12,
    record: bool = False,
):
    """Integrate the resonant three-level equation with adaptive RK4.

    Each constant segment is integrated with step doubling until the
    Richardson error estimate drops below ``rtol``. With ``record=True`` the
    states at every segment boundary are returned as well.
    """
    c = (initial or ThreeLevelState.ground()).as_array()
    history = [c]
    for seg in protocol.segments:
        M = -1j * three_level_hamiltonian(seg.amplitude)
        try:
            c = rk4_linear(M, c, seg.duration, rtol=rtol)
        except IntegrationError as exc:
            raise IntegrationError(f"three-level integration failed: {exc}") from exc
        history.append(c)
    final = ThreeLevelState.from_array(c)
    if record:
        return final, np.array(history)
    return final


def stored_energy_from_A(A_final: complex, chi: float) -> float:
    """Stored energy (units of Omega_z) as a function of the final amplitude A."""
    A_final = complex(A_final)
    if abs(A_final) > INV_SQRT2 + 1e-9:
        raise ValueError(f"|A| = {abs(A_final)!r} exceeds 1/sqrt(2)")
    return chi * (abs(A_final) ** 2 - 0.5) - A_final.real / SQRT2 + 0.5


def stored_energy_from_populations(p0: float, p2: float, chi: float) -> float:
    if p0 < -1e-12 or p2 < -1e-12 or p0 + p2 > 1 + 1e-9:
        raise ValueError(f"populations ({p0!r}, {p2!r}) outside the simplex")
    return (0.5 - chi) * (1 - p0) + (0.5 + chi) * p2


def stored_energy(state: TwoLevelState | ThreeLevelState, chi: float) -> float:
    if isinstance(state, ThreeLevelState):
        p0, _, p2 = state.populations
        return stored_energy_from_populations(p0, p2, chi)
    return stored_energy_from_A(state.A, chi)


def protocol_energy(protocol: ControlProtocol, chi: float) -> float:
    return stored_energy_from_A(final_state(protocol).A, chi)


def stored_energy_array(A: np.ndarray, chi: float) -> np.ndarray:
    """Vectorized :func:`stored_energy_from_A` without range checks."""
    return chi * (np.abs(A) ** 2 - 0.5) - A.real / SQRT2 + 0.5


def bloch_vector(A, B):
    """Bloch coordinates of the normalized qubit state sqrt(2)*(A, B).

    The state (1/sqrt(2), 0) sits at the north pole.
    """
    AB = np.conj(A) * B
    return 4 * np.real(AB), 4 * np.imag(AB), 2 * (np.abs(A) ** 2 - np.abs(B) ** 2)


def to_lab_frame(
    protocol: ControlProtocol,
    omega_z_over_J: float,
    times: Sequence[float] | np.ndarray | None = None,
    samples: int = 2000,
):
    """Transverse lab-frame fields Omega_x(t), Omega_y(t) for a rotating-frame protocol.

    The carrier runs at the resonant frequency Omega_z/2. Returns
    ``(t, Omega(t), Omega_x(t), Omega_y(t))``.
    """
    T = protocol.total_duration
    t = np.linspace(0.0, T, samples + 1) if times is None else np.asarray(times, dtype=float)
    amp = amplitude_at(protocol, t)
    wc = omega_z_over_J / 2
    return t, amp, amp * np.cos(wc * t), -amp * np.sin(wc * t)


def amplitude_at(protocol: ControlProtocol, t) -> np.ndarray:
    """Omega(t), right-continuous at switches; the last segment includes T."""
    t = np.asarray(t, dtype=float)
    if not protocol.segments:
        return np.zeros_like(t)
    bounds = protocol.boundaries()
    idx = np.searchsorted(bounds, t, side="right") - 1
    idx = np.clip(idx, 0, len(protocol.segments) - 1)
    return protocol.amplitudes[idx]


TRAJECTORY_HEADER = ["t", "reA", "imA", "reB", "imB", "bloch_x", "bloch_y", "bloch_z"]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, out: TextIO, labels: Sequence[str] | None = None):
    writer = csv.writer(out, lineterminator="\n")
    header = list(TRAJECTORY_HEADER)
    if labels is not None:
        header.append("segment")
    writer.writerow(header)
    bx, by, bz = bloch_vector(traj.A, traj.B)
    for i in range(traj.t.size):
        row = [
            fmt(traj.t[i]),
            fmt(traj.A[i].real),
            fmt(traj.A[i].imag),
            fmt(traj.B[i].real),
            fmt(traj.B[i].imag),
            fmt(bx[i]),
            fmt(by[i]),
            fmt(bz[i]),
        ]
        if labels is not None:
            row.append(labels[traj.segment[i]])
        writer.writerow(row)


def read_trajectory_csv(inp: TextIO) -> dict[str, np.ndarray]:
    reader = csv.DictReader(inp)
    cols: dict[str, list] = {name: [] for name in reader.fieldnames or []}
    for row in reader:
        for k, v in row.items():
            cols[k].append(v)
    out = {}
    for k, v in cols.items():
        out[k] = np.array(v) if k == "segment" else np.array(v, dtype=float)
    return out
