"""Workflows behind the CLI subcommands. Each returns the paths it wrote."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .bsb import (
    BSB_RECORD_HEADER,
    BsbSolution,
    SequenceKind,
    as_sequence,
    bsb_onset,
    build_solution,
    full_charge_solution,
    min_time_full_charge,
    solve_bsb,
)
from .config import RunConfig
from .dynamics import (
    OMEGA0_MIN,
    SQRT2,
    BatteryParams,
    BoundMode,
    ControlProtocol,
    PulseSegment,
    evolve,
    fmt,
    protocol_energy,
    to_lab_frame,
    write_trajectory_csv,
)
from .oracle import constant_pulse_best, grid_search_bsb, piecewise_ascent
from .optimum import admissible_sequences, optimal_charging
from .pmp import phi_z_at_second_switch, verify_pmp

SEGMENT_LABELS = ("bang1", "singular", "bang2")
SWEEP_HEADER = ["T", "energy_seq1", "energy_seq2", "energy_const", "regime"]
MIN_TIME_HEADER = ["omega0_over_J", "J_over_omega", "JT_seq1", "JT_seq2"]
PHIZ_HEADER = ["T", "phi_z"]
ORACLE_HEADER = ["T", "energy_analytic", "energy_grid", "energy_ascent"]
LAB_HEADER = ["t", "Omega", "Omega_x", "Omega_y"]
FD_STEP = 1e-5


class VerificationFailed(RuntimeError):
    def __init__(self, check: str, report_path: Path):
        super().__init__(check)
        self.check = check
        self.report_path = report_path


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    return fmt(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def tag(x: float) -> str:
    return format(x, ".6g").replace(".", "p")


def ordered_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """map() in input order, optionally over a process pool."""
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def sequence_params(omega0: float, chi: float, sequence) -> BatteryParams:
    """Sequence II lives in the symmetric domain, sequence I in the non-negative one."""
    mode = BoundMode.SYMMETRIC if as_sequence(sequence) is SequenceKind.SEQ_II else BoundMode.NONNEG
    return BatteryParams(omega0, chi, mode)


# -- sweep ----------------------------------------------------------------


def sweep_row(args) -> list:
    T, omega0, chi, mode = args
    p1 = BatteryParams(omega0, chi, BoundMode.NONNEG)
    p2 = BatteryParams(omega0, chi, BoundMode.SYMMETRIC)
    o1 = optimal_charging(T, p1)
    o2 = optimal_charging(T, p2)
    const = constant_pulse_best(T, p1).best_energy
    regime = (o1 if BoundMode(mode) is BoundMode.NONNEG else o2).regime
    return [T, o1.energy, o2.energy, const, regime]


def sweep_rows(cfg: RunConfig, omega0: float, chi: float) -> list[list]:
    items = [(T, omega0, chi, cfg.params.bound_mode.value) for T in cfg.sweep.t_grid()]
    return ordered_map(sweep_row, items, cfg.workers)


def cmd_sweep_energy(cfg: RunConfig) -> list[Path]:
    out = []
    for omega0, chi in cfg.sweep.cases:
        rows = sweep_rows(cfg, omega0, chi)
        path = Path(cfg.out) / f"sweep_energy_omega0_{tag(omega0)}_chi_{tag(chi)}.csv"
        out.append(write_csv(path, SWEEP_HEADER, rows))
    return out


# -- minimum time ----------------------------------------------------------


def min_time_row(omega0: float) -> list[float]:
    p = BatteryParams(omega0, 0.25)
    return [
        omega0,
        p.n_z,
        min_time_full_charge(p, SequenceKind.SEQ_I),
        min_time_full_charge(p, SequenceKind.SEQ_II),
    ]


def min_time_rows(cfg: RunConfig) -> list[list[float]]:
    return ordered_map(min_time_row, cfg.min_time.omega0_grid(), cfg.workers)


def cmd_min_time(cfg: RunConfig) -> list[Path]:
    return [write_csv(Path(cfg.out) / "min_time.csv", MIN_TIME_HEADER, min_time_rows(cfg))]


# -- protocols at a chosen duration ------------------------------------------


def solution_at(params: BatteryParams, sequence, T: float | None = None) -> BsbSolution:
    """Full-charging solution by default, otherwise the BSB solution at T."""
    sequence = as_sequence(sequence)
    if T is None:
        return full_charge_solution(params, sequence)
    sol = solve_bsb(T, params, sequence)
    if sol is None:
        raise ArithmeticError(
            f"no bang-singular-bang solution above the plateau at T={T!r} "
            f"(omega0_over_J={params.omega0_over_J}, chi={params.chi}, sequence {sequence.value})"
        )
    return sol


def cmd_bloch(cfg: RunConfig, T: float | None = None, sequences: Sequence[str] | None = None) -> list[Path]:
    out = []
    for omega0 in cfg.bloch.omega0:
        for seq in sequences or cfg.bloch.sequences:
            seq = as_sequence(seq)
            params = sequence_params(omega0, cfg.bloch.chi, seq)
            sol = solution_at(params, seq, T)
            traj = evolve(sol.protocol(), samples_per_segment=cfg.bloch.samples_per_segment)
            path = Path(cfg.out) / f"bloch_seq{seq.value}_omega0_{tag(omega0)}.csv"
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                with path.open("w", newline="") as fh:
                    write_trajectory_csv(traj, fh, SEGMENT_LABELS)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc.strerror}") from exc
            out.append(path)
    return out


def cmd_lab_frame(cfg: RunConfig, T: float | None = None, sequence="I", samples: int = 2000) -> list[Path]:
    p = cfg.params
    seq = as_sequence(sequence)
    params = sequence_params(p.omega0_over_J, p.chi, seq)
    sol = solution_at(params, seq, T)
    t, amp, ox, oy = to_lab_frame(sol.protocol(), 1 / p.chi, samples=samples)
    path = Path(cfg.out) / f"lab_frame_seq{seq.value}_omega0_{tag(p.omega0_over_J)}_chi_{tag(p.chi)}.csv"
    return [write_csv(path, LAB_HEADER, zip(t, amp, ox, oy))]


def cmd_solve(cfg: RunConfig, T: float | None, sequence="I") -> tuple[list[Path], str]:
    p = cfg.params
    seq = as_sequence(sequence)
    params = sequence_params(p.omega0_over_J, p.chi, seq)
    sol = solution_at(params, seq, T)
    text = BSB_RECORD_HEADER + "\n" + sol.record() + "\n"
    path = Path(cfg.out) / f"solve_seq{seq.value}_omega0_{tag(p.omega0_over_J)}_chi_{tag(p.chi)}.csv"
    return [write_text(path, text)], text


# -- phi_z curves ------------------------------------------------------------


def phiz_curve(params: BatteryParams, sequence, points: int) -> list[tuple[float, float]]:
    """phi_z(tau1 + tau2) from the plateau exit to the full-charging duration."""
    seq = as_sequence(sequence)
    T0 = bsb_onset(params, seq)
    T1 = min_time_full_charge(params, seq)
    rows = []
    for k in range(points):
        T = T0 + (T1 - T0) * k / (points - 1)
        if k == points - 1:
            sol = full_charge_solution(params, seq)
        else:
            sol = solve_bsb(T, params, seq)
            if sol is None:
                # at the threshold itself the tau3 -> 0 branch only touches the plateau
                sol = build_solution(T, seq.tau_d(params), params, seq)
        rows.append((sol.T, phi_z_at_second_switch(sol.protocol(), params)))
    return rows


def cmd_phiz(cfg: RunConfig) -> list[Path]:
    out = []
    for omega0 in cfg.phiz.omega0:
        for seq in (SequenceKind.SEQ_I, SequenceKind.SEQ_II):
            params = sequence_params(omega0, cfg.phiz.chi, seq)
            rows = phiz_curve(params, seq, cfg.phiz.points)
            path = Path(cfg.out) / f"phiz_seq{seq.value}_omega0_{tag(omega0)}.csv"
            out.append(write_csv(path, PHIZ_HEADER, rows))
    return out


# -- oracle comparison -------------------------------------------------------


def full_charge_horizon(params: BatteryParams, fallback: float) -> float:
    if params.omega0_over_J <= OMEGA0_MIN:
        return fallback
    return min(min_time_full_charge(params, s) for s in admissible_sequences(params))


def oracle_row(args) -> list[float]:
    T, params, step, n_segments, restarts, seed = args
    analytic = optimal_charging(T, params).energy
    grid = max(grid_search_bsb(T, params, s, step).best_energy for s in admissible_sequences(params))
    ascent = piecewise_ascent(T, params, n_segments, restarts, seed).best_energy
    return [T, analytic, grid, ascent]


def oracle_T_values(params: BatteryParams, n: int, t_max: float) -> list[float]:
    """n durations evenly covering (0, T_full]: the three-segment grid cannot pad past it."""
    horizon = full_charge_horizon(params, t_max)
    return [horizon * (k + 1) / n for k in range(n)]


def cmd_oracle(cfg: RunConfig, T: float | None = None) -> list[Path]:
    o = cfg.oracle
    p = cfg.params
    Ts = [T] if T is not None else oracle_T_values(p, o.t_points, cfg.sweep.t_max)
    items = [(t, p, o.grid_step, o.n_segments, o.restarts, cfg.seed) for t in Ts]
    rows = ordered_map(oracle_row, items, cfg.workers)
    name = f"oracle_{p.bound_mode.value}_omega0_{tag(p.omega0_over_J)}_chi_{tag(p.chi)}.csv"
    return [write_csv(Path(cfg.out) / name, ORACLE_HEADER, rows)]


# -- verification ------------------------------------------------------------


def perturbed(sol: BsbSolution, delta: float) -> ControlProtocol:
    """Move the first switch by ``delta`` while keeping T fixed."""
    segs = sol.protocol().segments
    return ControlProtocol(
        (
            PulseSegment(segs[0].amplitude, segs[0].duration + delta),
            PulseSegment(0.0, max(segs[1].duration - delta, 0.0)),
            segs[2],
        )
    )


def switch_gradients(protocol: ControlProtocol, chi: float, h: float = FD_STEP) -> tuple[float, float]:
    """Central differences of the stored energy w.r.t. the two switch times."""
    d = protocol.durations
    a = protocol.amplitudes

    def energy(d0, d1, d2):
        return protocol_energy(ControlProtocol.from_pairs(zip(a, (d0, d1, d2))), chi)

    g1 = (energy(d[0] + h, d[1] - h, d[2]) - energy(d[0] - h, d[1] + h, d[2])) / (2 * h)
    g2 = (energy(d[0], d[1] + h, d[2] - h) - energy(d[0], d[1] - h, d[2] + h)) / (2 * h)
    return g1, g2


@dataclass
class Check:
    check: str
    case: dict
    values: dict
    failure: str | None

    def to_dict(self) -> dict:
        return {"check": self.check, "case": self.case, "passed": self.failure is None, "failure": self.failure, "values": self.values}


def _pmp_checks(cfg: RunConfig, omega0: float, chi: float, seq: SequenceKind) -> list[Check]:
    v = cfg.verify
    params = sequence_params(omega0, chi, seq)
    T0 = bsb_onset(params, seq)
    T1 = min_time_full_charge(params, seq)
    out = []
    for k in range(v.t_points):
        T = T0 + (T1 - T0) * (k + 0.5) / v.t_points
        case = {"omega0_over_J": omega0, "chi": chi, "sequence": seq.value, "T": T}
        sol = solve_bsb(T, params, seq)
        if sol is None:
            out.append(Check("pmp", case, {}, "no bang-singular-bang solution"))
            continue
        proto = perturbed(sol, v.perturb_tau1) if v.perturb_tau1 else sol.protocol()
        rep = verify_pmp(proto, params)
        g1, g2 = switch_gradients(proto, chi)
        fails = rep.failures(v.hc_tol, v.switch_tol)
        # phi_y must vanish where the singular arc is entered and left
        phi_y = max((abs(x) for x in rep.phi_y_at_switches), default=0.0)
        if phi_y > v.switch_tol:
            fails.append("singular-arc phi_y nonzero at switch")
        if max(abs(g1), abs(g2)) > 1e-6:
            fails.append("stored energy not stationary in switch times")
        values = {
            "tau1": proto.durations[0],
            "tau2": proto.durations[1],
            "tau3": proto.durations[2],
            "energy": rep.stored_energy,
            "hc_constant_deviation": rep.hc_constant_deviation,
            "phi_x_at_switches": rep.phi_x_at_switches,
            "phi_y_at_switches": rep.phi_y_at_switches,
            "sign_violations": rep.sign_violations,
            "c_prime": rep.c_prime,
            "dE_dswitch": [g1, g2],
        }
        out.append(Check("pmp", case, values, fails[0] if fails else None))
    return out


def _degenerate_check(cfg: RunConfig, omega0: float, chi: float, seq: SequenceKind) -> Check:
    v = cfg.verify
    params = sequence_params(omega0, chi, seq)
    sol = full_charge_solution(params, seq)
    rep = verify_pmp(sol.protocol(), params)
    expected = (2 * chi + 1) / SQRT2
    fails = []
    if abs(sol.stored_energy - 1) > 1e-9:
        fails.append("full charging not reached")
    if rep.max_phi_norm > v.degenerate_tol:
        fails.append("switching vector nonzero on full-charging protocol")
    if abs(rep.adjoint_norm - expected) > 1e-10:
        fails.append("adjoint norm differs from (2 chi + 1)/sqrt(2)")
    case = {"omega0_over_J": omega0, "chi": chi, "sequence": seq.value, "T": sol.T}
    values = {"max_phi_norm": rep.max_phi_norm, "adjoint_norm": rep.adjoint_norm, "energy": sol.stored_energy}
    return Check("full-charge-degenerate", case, values, fails[0] if fails else None)


def _oracle_checks(cfg: RunConfig, omega0: float, chi: float, mode: BoundMode) -> list[Check]:
    v, o = cfg.verify, cfg.oracle
    params = BatteryParams(omega0, chi, mode)
    out = []
    for T in oracle_T_values(params, v.t_points, cfg.sweep.t_max):
        _, analytic, grid, ascent = oracle_row((T, params, o.grid_step, o.n_segments, o.restarts, cfg.seed))
        fails = []
        if abs(analytic - grid) > v.grid_tol:
            fails.append("grid oracle disagrees with analytic optimum")
        if ascent > analytic + v.ascent_tol:
            fails.append("ascent oracle beats analytic optimum")
        case = {"omega0_over_J": omega0, "chi": chi, "bound": mode.value, "T": T}
        values = {"energy_analytic": analytic, "energy_grid": grid, "energy_ascent": ascent}
        out.append(Check("oracle", case, values, fails[0] if fails else None))
    return out


def _verify_case(args) -> list[Check]:
    cfg, omega0, chi = args
    checks = []
    for seq in (SequenceKind.SEQ_I, SequenceKind.SEQ_II):
        checks += _pmp_checks(cfg, omega0, chi, seq)
        checks.append(_degenerate_check(cfg, omega0, chi, seq))
    if cfg.verify.oracle and cfg.oracle.enabled:
        for mode in (BoundMode.NONNEG, BoundMode.SYMMETRIC):
            checks += _oracle_checks(cfg, omega0, chi, mode)
    return checks


def verify_report(cfg: RunConfig) -> tuple[str, str | None]:
    """(report text, first failing check or None)."""
    items = [(cfg, w, chi) for w, chi in cfg.verify.cases]
    checks = [c for group in ordered_map(_verify_case, items, cfg.workers) for c in group]
    first = next((c.failure for c in checks if c.failure), None)
    doc = {
        "config": cfg.to_dict(),
        "checks": [c.to_dict() for c in checks],
        "summary": {
            "total": len(checks),
            "failed": sum(c.failure is not None for c in checks),
            "first_failure": first,
            "passed": first is None,
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", first


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def cmd_verify(cfg: RunConfig) -> list[Path]:
    text, first = verify_report(cfg)
    path = write_text(Path(cfg.out) / "verify_report.json", text)
    if first is not None:
        raise VerificationFailed(first, path)
    return [path]
