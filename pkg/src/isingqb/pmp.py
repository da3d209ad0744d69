"""Maximum-principle quantities: adjoint ket, switching vector and a PMP checker.

With the state equation i dPsi/dt = H' Psi the control Hamiltonian is

    H_c = Re[-i <lambda|H'|Psi>] = phi_x * Omega + phi_z * J + c'

where phi_k = -1/2 Re[i <lambda|sigma_k|Psi>] and c' = J/2 Re[i <lambda|Psi>].
The adjoint obeys the same Schrodinger equation as the state, so both are
propagated with the same segment propagators. Maximizing H_c means
Omega = Omega_0 where phi_x > 0 and the lower bound where phi_x < 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    INV_SQRT2,
    BatteryParams,
    ControlProtocol,
    TwoLevelState,
    final_state,
    propagate_samples,
    sample_at,
    segment_propagator,
    stored_energy_from_A,
)

PMP_GRID = 2000
SINGULAR_REL_TOL = 1e-7
DEGENERATE_PHI = 1e-8


@dataclass(frozen=True)
class AdjointState:
    lambdaA: complex
    lambdaB: complex

    def __post_init__(self):
        object.__setattr__(self, "lambdaA", complex(self.lambdaA))
        object.__setattr__(self, "lambdaB", complex(self.lambdaB))

    def as_array(self) -> np.ndarray:
        return np.array([self.lambdaA, self.lambdaB], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "AdjointState":
        return cls(complex(v[0]), complex(v[1]))

    @property
    def norm(self) -> float:
        return math.hypot(abs(self.lambdaA), abs(self.lambdaB))


@dataclass(frozen=True)
class SwitchingVector:
    phi_x: float
    phi_y: float
    phi_z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.phi_x**2 + self.phi_y**2 + self.phi_z**2)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.phi_x, self.phi_y, self.phi_z


def terminal_adjoint(A_final: complex, chi: float) -> AdjointState:
    """lambda(T) = (2 chi A(T) - 1/sqrt(2), 0): gradient of the stored energy."""
    A_final = complex(A_final)
    if abs(A_final) > INV_SQRT2 + 1e-9:
        raise ValueError(f"|A| = {abs(A_final)!r} exceeds 1/sqrt(2)")
    return AdjointState(2 * chi * A_final - INV_SQRT2, 0.0)


def _phi_arrays(lam: np.ndarray, psi: np.ndarray):
    """Vectorized switching vector and c' for stacked (N, 2) adjoint/state arrays."""
    la, lb = np.conj(lam[..., 0]), np.conj(lam[..., 1])
    a, b = psi[..., 0], psi[..., 1]
    phi_x = -0.5 * np.real(1j * (la * b + lb * a))
    phi_y = -0.5 * np.real(la * b - lb * a)
    phi_z = -0.5 * np.real(1j * (la * a - lb * b))
    cp = 0.5 * np.real(1j * (la * a + lb * b))
    return phi_x, phi_y, phi_z, cp


def switching_vector(lam: AdjointState, psi: TwoLevelState) -> SwitchingVector:
    px, py, pz, _ = _phi_arrays(lam.as_array(), psi.as_array())
    return SwitchingVector(float(px), float(py), float(pz))


def c_prime(lam: AdjointState, psi: TwoLevelState) -> float:
    return float(_phi_arrays(lam.as_array(), psi.as_array())[3])


def switching_rates(phi: SwitchingVector, amplitude: float) -> tuple[float, float, float]:
    """Time derivative of phi: rotation about the total field (Omega, 0, J)."""
    px, py, pz = phi.as_tuple()
    return -py, px - amplitude * pz, amplitude * py


def adjoint_at_start(protocol: ControlProtocol, terminal: AdjointState) -> AdjointState:
    lam = terminal.as_array()
    for seg in reversed(protocol.segments):
        lam = segment_propagator(seg.amplitude, seg.duration).dagger().full() @ lam
    return AdjointState.from_array(lam)


@dataclass(frozen=True)
class AdjointTrajectory:
    t: np.ndarray
    lam: np.ndarray
    segment: np.ndarray

    @property
    def start(self) -> AdjointState:
        return AdjointState.from_array(self.lam[0])

    @property
    def end(self) -> AdjointState:
        return AdjointState.from_array(self.lam[-1])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.lam, axis=1)


def evolve_adjoint_backward(
    protocol: ControlProtocol, terminal: AdjointState, samples_per_segment: int = 400
) -> AdjointTrajectory:
    """Adjoint trajectory on [0, T] obtained from its terminal value.

    The start value U(T)^dagger lambda(T) is found by inverse composition; the
    dense samples are then generated forward with the same propagators, so the
    last sample reproduces ``terminal`` up to rounding.
    """
    lam0 = adjoint_at_start(protocol, terminal)
    t, lam, seg = propagate_samples(protocol, lam0.as_array(), samples_per_segment)
    return AdjointTrajectory(t, lam, seg)


@dataclass
class PmpReport:
    hc_constant_deviation: float
    phi_x_at_switches: list[float]
    sign_violations: int
    c_prime: float
    switch_times: list[float] = field(default_factory=list)
    phi_y_at_switches: list[float] = field(default_factory=list)
    phi_z_at_switches: list[float] = field(default_factory=list)
    hc_value: float = 0.0
    c_prime_deviation: float = 0.0
    phi_norm: float = 0.0
    max_phi_norm: float = 0.0
    adjoint_norm: float = 0.0
    singular_tol: float = 0.0
    stored_energy: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            vals = v if isinstance(v, list) else [v]
            if not all(math.isfinite(x) for x in vals):
                raise ValueError(f"non-finite entry in PmpReport.{k}")

    @property
    def max_switch_phi_x(self) -> float:
        return max((abs(x) for x in self.phi_x_at_switches), default=0.0)

    def failures(self, hc_tol: float = 1e-8, switch_tol: float = 1e-8) -> list[str]:
        out = []
        if self.max_switch_phi_x > switch_tol:
            out.append("switching-function nonzero at switch")
        if self.hc_constant_deviation > hc_tol:
            out.append("control Hamiltonian not constant")
        if self.sign_violations:
            out.append("switching-function sign contradicts control")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_points(protocol: ControlProtocol, n_grid: int):
    """(segment, local time) pairs: a uniform grid plus both sides of every boundary."""
    bounds = protocol.boundaries()
    T = bounds[-1]
    nseg = len(protocol.segments)
    grid = np.linspace(0.0, T, n_grid + 1)
    seg = np.clip(np.searchsorted(bounds, grid, side="right") - 1, 0, nseg - 1)
    local = grid - bounds[seg]
    extra_seg, extra_t = [], []
    for k in range(nseg):
        if protocol.segments[k].duration > 0:
            extra_seg += [k, k]
            extra_t += [0.0, protocol.segments[k].duration]
    seg = np.concatenate([seg, np.array(extra_seg, dtype=int)])
    local = np.concatenate([local, np.array(extra_t)])
    # keep only points that really lie inside a positive-length segment
    durations = protocol.durations
    ok = (durations[seg] > 0) & (local >= 0) & (local <= durations[seg])
    return seg[ok], np.minimum(local[ok], durations[seg[ok]])


def _switch_indices(protocol: ControlProtocol) -> list[int]:
    """Indices k where segment k starts with a different amplitude than the last
    positive-length segment before it."""
    out = []
    prev = None
    for k, seg in enumerate(protocol.segments):
        if seg.duration <= 0:
            continue
        if prev is not None and seg.amplitude != protocol.segments[prev].amplitude:
            out.append(k)
        prev = k
    return out


def verify_pmp(protocol: ControlProtocol, params: BatteryParams, n_grid: int = PMP_GRID) -> PmpReport:
    """Evaluate the necessary conditions of the maximum principle on ``protocol``."""
    if not protocol.segments or protocol.total_duration <= 0:
        raise ValueError("verify_pmp needs a protocol of positive duration")
    protocol.check_bounds(params)
    psi0 = TwoLevelState.initial().as_array()
    psiT = final_state(protocol)
    lamT = terminal_adjoint(psiT.A, params.chi)
    lam0 = adjoint_at_start(protocol, lamT).as_array()

    seg, local = _check_points(protocol, n_grid)
    psi = sample_at(protocol, psi0, seg, local)
    lam = sample_at(protocol, lam0, seg, local)
    px, py, pz, cp = _phi_arrays(lam, psi)
    amps = protocol.amplitudes[seg]

    hc = px * amps + pz
    phi_norms = np.sqrt(px**2 + py**2 + pz**2)
    phiT = float(np.linalg.norm(_phi_arrays(lamT.as_array(), psiT.as_array())[:3]))

    if phiT <= DEGENERATE_PHI:
        tol = math.inf
        violations = 0
    else:
        tol = SINGULAR_REL_TOL * phiT
        upper = np.isclose(amps, params.omega0_over_J, rtol=0, atol=1e-12)
        lower = np.isclose(amps, params.lower_bound, rtol=0, atol=1e-12)
        interior = ~(upper | lower)
        bad = (upper & (px < -tol)) | (lower & (px > tol)) | (interior & (np.abs(px) > tol))
        violations = int(np.count_nonzero(bad))

    sw = _switch_indices(protocol)
    bounds = protocol.boundaries()
    if sw:
        sw_psi = sample_at(protocol, psi0, np.array(sw), np.zeros(len(sw)))
        sw_lam = sample_at(protocol, lam0, np.array(sw), np.zeros(len(sw)))
        sx, sy, sz, _ = _phi_arrays(sw_lam, sw_psi)
    else:
        sx = sy = sz = np.zeros(0)

    return PmpReport(
        hc_constant_deviation=float(hc.max() - hc.min()),
        phi_x_at_switches=[float(x) for x in sx],
        sign_violations=violations,
        c_prime=float(cp[0]),
        switch_times=[float(bounds[k]) for k in sw],
        phi_y_at_switches=[float(x) for x in sy],
        phi_z_at_switches=[float(x) for x in sz],
        hc_value=float(hc[0]),
        c_prime_deviation=float(cp.max() - cp.min()),
        phi_norm=phiT,
        max_phi_norm=float(phi_norms.max()),
        adjoint_norm=lamT.norm,
        singular_tol=tol if math.isfinite(tol) else 0.0,
        stored_energy=stored_energy_from_A(psiT.A, params.chi),
    )


def switching_trajectory(protocol: ControlProtocol, params: BatteryParams, samples_per_segment: int = 400):
    """(t, phi_x, phi_y, phi_z, c') sampled densely along an optimal-candidate protocol."""
    psiT = final_state(protocol)
    lamT = terminal_adjoint(psiT.A, params.chi)
    t, psi, _ = propagate_samples(protocol, TwoLevelState.initial().as_array(), samples_per_segment)
    _, lam, _ = propagate_samples(protocol, adjoint_at_start(protocol, lamT).as_array(), samples_per_segment)
    return (t, *_phi_arrays(lam, psi))


def phi_z_at_second_switch(protocol: ControlProtocol, params: BatteryParams) -> float:
    """phi_z(tau1 + tau2) for a bang-singular-bang protocol."""
    if len(protocol.segments) != 3:
        raise ValueError(
            f"phi_z_at_second_switch needs exactly 3 segments, got {len(protocol.segments)}"
        )
    first_two = ControlProtocol(protocol.segments[:2])
    psiT = final_state(protocol)
    lamT = terminal_adjoint(psiT.A, params.chi)
    lam0 = adjoint_at_start(protocol, lamT)
    psi = final_state(first_two)
    lam = final_state_adjoint(first_two, lam0)
    return switching_vector(lam, psi).phi_z


def final_state_adjoint(protocol: ControlProtocol, lam0: AdjointState) -> AdjointState:
    lam = lam0.as_array()
    for seg in protocol.segments:
        lam = segment_propagator(seg.amplitude, seg.duration).full() @ lam
    return AdjointState.from_array(lam)


__all__ = [
    "AdjointState",
    "AdjointTrajectory",
    "PmpReport",
    "SwitchingVector",
    "c_prime",
    "evolve_adjoint_backward",
    "phi_z_at_second_switch",
    "switching_rates",
    "switching_trajectory",
    "switching_vector",
    "terminal_adjoint",
    "verify_pmp",
]
