import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from isingqb import cli
from isingqb.bsb import SequenceKind, min_time_full_charge
from isingqb.commands import (
    cmd_bloch,
    cmd_lab_frame,
    cmd_min_time,
    cmd_oracle,
    cmd_phiz,
    cmd_solve,
    cmd_sweep_energy,
    read_csv,
    sequence_params,
)
from isingqb.config import ConfigError, RunConfig, apply_overrides, from_dict, load_config
from isingqb.dynamics import (
    BatteryParams,
    BoundMode,
    ControlProtocol,
    final_state,
    protocol_energy,
    read_trajectory_csv,
)
from isingqb.optimum import REGIMES, optimal_charging

ROOT = Path(__file__).resolve().parents[1]
SEQ_I, SEQ_II = SequenceKind.SEQ_I, SequenceKind.SEQ_II


def small(tmp_path, **sections) -> RunConfig:
    cfg = RunConfig(out=str(tmp_path))
    for name, kw in sections.items():
        cfg = replace(cfg, **{name: replace(getattr(cfg, name), **kw)})
    return cfg.validate()


# configuration --------------------------------------------------------------


def test_default_toml_matches_dataclass_defaults():
    assert load_config(ROOT / "configs" / "default.toml").to_dict() == RunConfig().validate().to_dict()


@pytest.mark.parametrize(
    "data",
    [
        {"params": {"chi": 0.6}},
        {"params": {"omega0_over_J": -1.0}},
        {"params": {"bound": "sideways"}},
        {"sweep": {"t_points": 0}},
        {"sweep": {"t_points": 1.5}},
        {"sweep": {"unknown": 1}},
        {"verify": {"hc_tol": 0.0}},
        {"min_time": {"omega0_min": 1.5}},
        {"min_time": {"omega0_min": 10.0, "omega0_max": 5.0}},
        {"bloch": {"omega0": [1.5]}},
        {"bloch": {"sequences": ["III"]}},
        {"oracle": {"n_segments": 4}},
        {"oracle": {"enabled": 1}},
        {"nonsense": 3},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_load_config_errors_name_the_path(tmp_path):
    missing = tmp_path / "nope.toml"
    with pytest.raises(ConfigError, match="nope.toml"):
        load_config(missing)
    bad = tmp_path / "bad.toml"
    bad.write_text("[params]\nchi = 0.7\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(bad)
    broken = tmp_path / "broken.toml"
    broken.write_text("[params\n")
    with pytest.raises(ConfigError, match="broken.toml"):
        load_config(broken)


def test_overrides_narrow_cases():
    cfg = apply_overrides(RunConfig(), omega0=2.5, chi=0.2, bound="symmetric", seed=7, out="x")
    assert cfg.params == BatteryParams(2.5, 0.2, BoundMode.SYMMETRIC)
    assert cfg.sweep.cases == ((2.5, 0.2),)
    assert cfg.verify.cases == ((2.5, 0.2),)
    assert cfg.bloch.omega0 == (2.5,) and cfg.bloch.chi == 0.2
    assert cfg.seed == 7 and cfg.out == "x"


def test_override_rejects_bad_chi():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), chi=0.6)


def test_sequence_params_modes():
    assert sequence_params(4, 0.3, "I").bound_mode is BoundMode.NONNEG
    assert sequence_params(4, 0.3, "II").bound_mode is BoundMode.SYMMETRIC


# CLI exit codes --------------------------------------------------------------


def test_cli_invalid_chi_exits_1(tmp_path, capsys):
    assert cli.main(["verify", "--chi", "0.6", "--out", str(tmp_path)]) == 1
    assert "chi" in capsys.readouterr().err
    assert not (tmp_path / "verify_report.json").exists()


def test_cli_solve(tmp_path, capsys):
    assert cli.main(["solve", "--T", "4.2", "--omega0", "4", "--chi", "0.3333333333333333", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("sequence,T,tau1,tau2,tau3,energy,residual\nI,")


def test_cli_solve_plateau_exits_2(tmp_path, capsys):
    assert cli.main(["solve", "--T", "1.7", "--omega0", "4", "--out", str(tmp_path)]) == 2
    assert "plateau" in capsys.readouterr().err


def test_cli_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    target = str(blocker / "sub")
    assert cli.main(["solve", "--omega0", "4", "--out", target]) == 1
    assert target in capsys.readouterr().err


def test_cli_verify_pass_and_perturbed(tmp_path, capsys):
    cfg = tmp_path / "v.toml"
    cfg.write_text(
        "[verify]\ncases = [[4.0, 0.3333333333333333]]\nt_points = 3\n"
        "[oracle]\nn_segments = 16\nrestarts = 2\n"
    )
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    rep = json.loads((tmp_path / "a" / "verify_report.json").read_text())
    assert rep["summary"]["passed"] is True
    code = cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "b"), "--perturb-tau1", "0.05"])
    assert code == 3
    err = capsys.readouterr().err
    assert "switching-function nonzero at switch" in err
    rep = json.loads((tmp_path / "b" / "verify_report.json").read_text())
    assert rep["summary"]["first_failure"] == "switching-function nonzero at switch"


# workflows -------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = replace(RunConfig(out=str(out)), sweep=replace(RunConfig().sweep, t_points=150)).validate()
    return {Path(p).name: read_csv(p) for p in cmd_sweep_energy(cfg)}


def test_sweep_files_and_columns(sweeps):
    assert len(sweeps) == 7
    for rows in sweeps.values():
        assert list(rows[0]) == ["T", "energy_seq1", "energy_seq2", "energy_const", "regime"]
        Ts = [float(r["T"]) for r in rows]
        assert Ts == sorted(Ts)


def test_sweep_regimes_contiguous(sweeps):
    for rows in sweeps.values():
        labels = [r["regime"] for r in rows]
        blocks = [labels[0]] + [b for a, b in zip(labels, labels[1:]) if a != b]
        assert blocks == list(REGIMES)


def test_sweep_seq2_dominates(sweeps):
    for rows in sweeps.values():
        for r in rows:
            e1, e2 = float(r["energy_seq1"]), float(r["energy_seq2"])
            assert e2 >= e1 - 1e-12
            if r["regime"] == "hillside1":
                assert e2 == pytest.approx(e1, abs=1e-12)


def test_sweep_shape_omega25(sweeps):
    rows = sweeps["sweep_energy_omega0_2p5_chi_0p333333.csv"]
    p = BatteryParams(2.5, 1 / 3)
    e = np.array([float(r["energy_seq1"]) for r in rows])
    assert np.all(np.diff(e) >= -1e-12)
    assert e[-1] == pytest.approx(1.0, abs=1e-12)
    plateau = [float(r["energy_seq1"]) for r in rows if r["regime"] == "plateau"]
    assert np.allclose(plateau, p.plateau_energy, atol=1e-9)


def test_sweep_plateau_chi_independent(sweeps):
    names = [f"sweep_energy_omega0_2_chi_{c}.csv" for c in ("0p5", "0p333333", "0p2", "0p1")]
    rows = [sweeps[n] for n in names]
    p = BatteryParams(2.0, 0.25)
    for k in range(len(rows[0])):
        if all(r[k]["regime"] == "plateau" for r in rows):
            vals = [float(r[k]["energy_seq1"]) for r in rows]
            assert np.ptp(vals) < 1e-12
            assert vals[0] == pytest.approx(p.plateau_energy, abs=1e-9)
    exits = []
    for r in rows:
        exits.append(min(float(x["T"]) for x in r if x["regime"] == "bsb"))
    assert all(b <= a for a, b in zip(exits, exits[1:]))


def test_sweep_round_trip_resimulates(sweeps):
    rows = sweeps["sweep_energy_omega0_4_chi_0p333333.csv"]
    for mode, col in ((BoundMode.NONNEG, "energy_seq1"), (BoundMode.SYMMETRIC, "energy_seq2")):
        p = BatteryParams(4.0, 1 / 3, mode)
        for r in rows[::15]:
            opt = optimal_charging(float(r["T"]), p)
            assert protocol_energy(opt.protocol, p.chi) == pytest.approx(float(r[col]), abs=1e-9)
            assert opt.protocol.total_duration == pytest.approx(float(r["T"]), abs=1e-12)


def test_sweep_deterministic(tmp_path):
    cfg = small(tmp_path / "a", sweep={"t_points": 30, "cases": ((4.0, 1 / 3),)})
    [p1] = cmd_sweep_energy(cfg)
    [p2] = cmd_sweep_energy(replace(cfg, out=str(tmp_path / "b")))
    assert Path(p1).read_bytes() == Path(p2).read_bytes()


def test_min_time_csv(tmp_path):
    [path] = cmd_min_time(small(tmp_path, min_time={"points": 25}))
    rows = read_csv(path)
    t1 = np.array([float(r["JT_seq1"]) for r in rows])
    t2 = np.array([float(r["JT_seq2"]) for r in rows])
    assert np.all(np.diff(t1) < 0) and np.all(np.diff(t2) < 0)
    assert np.all(t2 <= t1)
    assert np.all((t1 > math.pi) & (t1 < 2 * math.pi))
    w = float(rows[3]["omega0_over_J"])
    assert float(rows[3]["J_over_omega"]) == pytest.approx(1 / math.sqrt(w * w + 1), abs=1e-15)


def test_phiz_csv(tmp_path):
    paths = cmd_phiz(small(tmp_path, phiz={"points": 15}))
    assert len(paths) == 6
    for path in paths:
        rows = read_csv(path)
        phi = np.array([float(r["phi_z"]) for r in rows])
        assert abs(phi[-1]) < 1e-7
        assert np.all(phi[1:-1] > 0)
        assert list(rows[0]) == ["T", "phi_z"]


def test_phiz_curve_starts_at_threshold(tmp_path):
    from isingqb.bsb import threshold_T_seq1

    cfg = small(tmp_path, phiz={"points": 5, "omega0": (2.5,)})
    path = [p for p in cmd_phiz(cfg) if "seqI_" in Path(p).name][0]
    assert float(read_csv(path)[0]["T"]) == pytest.approx(threshold_T_seq1(BatteryParams(2.5, 1 / 3)), abs=1e-9)


def _read_traj(path):
    with open(path) as fh:
        return read_trajectory_csv(fh)


def test_bloch_csv(tmp_path):
    paths = cmd_bloch(small(tmp_path, bloch={"samples_per_segment": 60}))
    assert len(paths) == 6
    fracs = {}
    for path in paths:
        c = _read_traj(path)
        name = Path(path).name
        z = c["bloch_z"]
        assert z[0] == pytest.approx(1, abs=1e-12) and z[-1] == pytest.approx(1, abs=1e-9)
        sing = c["segment"] == "singular"
        assert np.ptp(z[sing]) < 1e-12
        t = c["t"]
        fracs[name] = (t[sing].max() - t[sing].min()) / t[-1]
        # re-simulation from the exported switch times
        seg = c["segment"]
        # each segment's samples cover (start, end]
        ends = [0.0] + [t[seg == s].max() for s in ("bang1", "singular", "bang2")]
        d = np.diff(ends)
        seq = SEQ_I if name.startswith("bloch_seqI_") else SEQ_II
        w = float(name.split("omega0_")[1].removesuffix(".csv").replace("p", "."))
        if seq is SEQ_I:
            # the first bang contains a full turn that revisits the north pole
            turn = BatteryParams(w, 1 / 3).plateau_time
            assert d[0] >= turn
            A = final_state(ControlProtocol.from_pairs([(w, turn)])).A
            assert abs(abs(A) ** 2 * 2 - 1) < 1e-12
        proto = ControlProtocol.from_pairs([(w, d[0]), (0.0, d[1]), (seq.last_sign * w, d[2])])
        assert protocol_energy(proto, 1 / 3) == pytest.approx(1.0, abs=1e-9)
    for s in ("I", "II"):
        seq_fracs = [fracs[f"bloch_seq{s}_omega0_{w}.csv"] for w in ("2p5", "4", "6")]
        assert seq_fracs == sorted(seq_fracs)


def test_lab_frame_csv(tmp_path):
    [path] = cmd_lab_frame(small(tmp_path), None, "II", samples=300)
    rows = read_csv(path)
    assert list(rows[0]) == ["t", "Omega", "Omega_x", "Omega_y"]
    for r in rows[::10]:
        om, ox, oy = float(r["Omega"]), float(r["Omega_x"]), float(r["Omega_y"])
        assert ox * ox + oy * oy == pytest.approx(om * om, rel=1e-12, abs=1e-12)
    assert float(rows[-1]["t"]) == pytest.approx(min_time_full_charge(BatteryParams(4, 1 / 3, "symmetric"), SEQ_II))


def test_solve_csv_round_trip(tmp_path):
    [path], text = cmd_solve(small(tmp_path), 4.2, "I")
    row = read_csv(path)[0]
    pairs = [(4.0, float(row["tau1"])), (0.0, float(row["tau2"])), (4.0, float(row["tau3"]))]
    assert protocol_energy(ControlProtocol.from_pairs(pairs), 1 / 3) == pytest.approx(float(row["energy"]), abs=1e-9)


def test_oracle_csv(tmp_path):
    cfg = small(tmp_path, oracle={"grid_step": 1e-2, "n_segments": 16, "restarts": 2, "t_points": 4})
    [path] = cmd_oracle(cfg)
    rows = read_csv(path)
    assert list(rows[0]) == ["T", "energy_analytic", "energy_grid", "energy_ascent"]
    assert len(rows) == 4
    for r in rows:
        assert float(r["energy_grid"]) <= float(r["energy_analytic"]) + 1e-9
