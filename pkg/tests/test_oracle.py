import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from conftest import params_for
from isingqb.bsb import SequenceKind, min_time_full_charge, solve_bsb
from isingqb.dynamics import BatteryParams, BoundMode, ControlProtocol, protocol_energy
from isingqb.oracle import (
    OracleMethod,
    SplitMix64,
    constant_pulse_best,
    constant_pulse_energy,
    grid_search_bsb,
    piecewise_ascent,
)

SEQ_I, SEQ_II = SequenceKind.SEQ_I, SequenceKind.SEQ_II


# generator ------------------------------------------------------------------


def test_splitmix64_reference_values():
    # published reference outputs for seed 0
    g = SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


@given(st.integers(0, 2**64 - 1))
def test_splitmix64_uniform_range(seed):
    g = SplitMix64(seed)
    xs = [g.uniform() for _ in range(20)]
    assert all(0.0 <= x < 1.0 for x in xs)
    h = SplitMix64(seed)
    assert xs == [h.uniform() for _ in range(20)]


# constant pulse -------------------------------------------------------------


def test_constant_pulse_full_charge():
    p = BatteryParams(math.sqrt(3), 0.2)
    res = constant_pulse_best(2 * math.pi, p)
    assert res.best_energy == pytest.approx(1.0, abs=1e-8)
    assert res.method is OracleMethod.CONSTANT_SWEEP


def test_constant_pulse_short_time():
    p = BatteryParams(4.0, 1 / 3)
    assert constant_pulse_best(1e-6, p).best_energy < 1e-10


def test_constant_pulse_plateau_value(p4):
    res = constant_pulse_best(p4.plateau_time, p4)
    assert res.best_energy == pytest.approx(0.8617462610925475, abs=1e-12)
    later = constant_pulse_best(p4.plateau_time + 0.4, p4)
    assert later.best_energy == pytest.approx(res.best_energy, abs=1e-12)
    on = later.best_protocol.segments[0].duration
    assert on == pytest.approx(p4.plateau_time, abs=1e-9)


def test_constant_pulse_closed_form_matches_propagation(p4):
    t = np.linspace(0, 6, 37)
    e = constant_pulse_energy(t, p4)
    ref = [
        O.triplet_energy(O.triplet_evolve([(4.0, x)], p4.chi)[0], p4.chi) if x > 0 else 0.0
        for x in t
    ]
    assert np.abs(e - ref).max() < 1e-9


@given(st.floats(0.05, 2 * math.pi), st.floats(0.5, 8), st.floats(0.05, 0.5))
def test_constant_pulse_bound_mode_invariant(T, w, chi):
    a = constant_pulse_best(T, BatteryParams(w, chi, BoundMode.NONNEG))
    b = constant_pulse_best(T, BatteryParams(w, chi, BoundMode.SYMMETRIC))
    assert a.best_energy == b.best_energy


def test_constant_pulse_reproducible(p4):
    res = constant_pulse_best(3.3, p4)
    assert res.resimulate(p4.chi) == pytest.approx(res.best_energy, abs=1e-12)


# grid oracle ----------------------------------------------------------------


def _brute_rectangle(T, p, seq, step):
    """Full (tau1, tau3) rectangle with expm propagators; no symmetry used."""
    taus = np.append(np.arange(0.0, T, step), T)
    a = p.omega0_over_J
    U1 = np.array([O.expm_propagator(a, t) for t in taus])
    U3 = np.array([O.expm_propagator(seq.last_sign * a, t) for t in taus])
    psi0 = np.array([1 / math.sqrt(2), 0])
    v1 = U1 @ psi0  # (n, 2)
    row3 = U3[:, 0, :]  # (n, 2)
    t2 = T - taus[:, None] - taus[None, :]
    ok = t2 >= -1e-12
    t2 = np.maximum(t2, 0)
    A = row3[None, :, 0] * v1[:, None, 0] + row3[None, :, 1] * np.exp(1j * t2) * v1[:, None, 1]
    e = p.chi * (np.abs(A) ** 2 - 0.5) - A.real / math.sqrt(2) + 0.5
    return float(np.max(np.where(ok, e, -np.inf)))


@pytest.mark.parametrize("seq", [SEQ_I, SEQ_II])
@pytest.mark.parametrize("T", [2.0, 3.6, 4.3])
def test_grid_matches_brute_rectangle(seq, T):
    p = params_for(4.0, 1 / 3, seq)
    g = grid_search_bsb(T, p, seq, 2e-2)
    assert g.best_energy == pytest.approx(_brute_rectangle(T, p, seq, 2e-2), abs=1e-12)


def test_grid_reaches_full_charge(p4s):
    T = min_time_full_charge(p4s, SEQ_II)
    assert grid_search_bsb(T, p4s, SEQ_II, 1e-3).best_energy == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("seq", [SEQ_I, SEQ_II])
@pytest.mark.parametrize("T", [3.9, 4.2])
def test_grid_vs_analytic(seq, T):
    p = params_for(4.0, 1 / 3, seq)
    sol = solve_bsb(T, p, seq)
    coarse = grid_search_bsb(T, p, seq, 1e-2).best_energy
    fine = grid_search_bsb(T, p, seq, 1e-3).best_energy
    assert coarse <= sol.stored_energy + 1e-9
    assert fine <= sol.stored_energy + 1e-9
    assert sol.stored_energy - coarse < 1e-3
    assert sol.stored_energy - fine < 1e-5


def test_grid_mirror_symmetric(p4):
    res = grid_search_bsb(4.1, p4, SEQ_I, 1e-2)
    a, off, b = res.best_protocol.segments
    mirrored = ControlProtocol((b, off, a))
    assert protocol_energy(mirrored, p4.chi) == pytest.approx(res.best_energy, abs=1e-12)
    assert res.resimulate(p4.chi) == res.best_energy


def test_grid_rejects_bad_step(p4):
    with pytest.raises(ValueError):
        grid_search_bsb(3.0, p4, SEQ_I, 0.0)


# ascent oracle --------------------------------------------------------------


def test_ascent_full_charge(p4s):
    T = min_time_full_charge(p4s, SEQ_II)
    res = piecewise_ascent(T, p4s, 64, 20, seed=0)
    assert 1 - 1e-3 <= res.best_energy <= 1 + 1e-12
    assert res.method is OracleMethod.PIECEWISE_ASCENT


def test_ascent_plateau_window(p4):
    T = p4.plateau_time + 0.2
    res = piecewise_ascent(T, p4, 64, 20, seed=0)
    assert res.best_energy - constant_pulse_best(T, p4).best_energy < 1e-4


def test_ascent_deterministic(p4):
    a = piecewise_ascent(3.0, p4, 16, 4, seed=42)
    b = piecewise_ascent(3.0, p4, 16, 4, seed=42)
    assert a.best_energy == b.best_energy
    assert a.best_protocol == b.best_protocol


def test_ascent_refinement_monotone(p4):
    coarse = piecewise_ascent(4.0, p4, 8, 5, seed=3)
    fine = piecewise_ascent(4.0, p4, 64, 5, seed=3, warm_start=coarse.best_protocol)
    assert fine.best_energy >= coarse.best_energy - 1e-15


def test_ascent_respects_bounds(p4, p4s):
    for p in (p4, p4s):
        res = piecewise_ascent(3.5, p, 16, 3, seed=1)
        res.best_protocol.check_bounds(p)
        assert res.resimulate(p.chi) == pytest.approx(res.best_energy, abs=1e-12)


def test_ascent_rejects_few_segments(p4):
    with pytest.raises(ValueError):
        piecewise_ascent(3.0, p4, 4, 2)


@given(st.floats(0.1, 2 * math.pi), st.integers(0, 1000))
def test_oracle_energy_bounds(T, seed):
    p = BatteryParams(3.0, 0.25, BoundMode.SYMMETRIC)
    for res in (
        constant_pulse_best(T, p),
        grid_search_bsb(T, p, SEQ_II, 5e-2),
        piecewise_ascent(T, p, 8, 1, seed=seed),
    ):
        assert -1e-12 <= res.best_energy <= 1 + 1e-12
