"""Command-line entry point.

Exit codes: 0 success, 1 validation or I/O error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import commands
from .config import ConfigError, apply_overrides, load_config
from .integrate import IntegrationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="TOML run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (default from config: out)")
    p.add_argument("--omega0", type=float, help="drive bound Omega_0/J")
    p.add_argument("--chi", type=float, help="coupling ratio J/Omega_z")
    p.add_argument("--bound", choices=["nonneg", "symmetric"], help="control domain")
    p.add_argument("--seed", type=int, help="seed for the ascent oracle restarts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isingqb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-energy", help="optimal stored energy vs duration")
    _common(p)
    p = sub.add_parser("min-time", help="minimum full-charging durations vs Omega_0/J")
    _common(p)
    p = sub.add_parser("bloch", help="Bloch trajectories of optimal protocols")
    _common(p)
    p.add_argument("--T", type=float, help="duration (default: full-charging time)")
    p.add_argument("--sequence", choices=["I", "II"], action="append", help="repeatable")
    p = sub.add_parser("phiz", help="phi_z at the second switch vs duration")
    _common(p)
    p = sub.add_parser("solve", help="bang-singular-bang timings at one duration")
    _common(p)
    p.add_argument("--T", type=float, help="duration (default: full-charging time)")
    p.add_argument("--sequence", choices=["I", "II"], default="I")
    p = sub.add_parser("oracle", help="analytic optimum vs grid and ascent oracles")
    _common(p)
    p.add_argument("--T", type=float, help="single duration (default: configured grid)")
    p = sub.add_parser("verify", help="maximum-principle and oracle checks")
    _common(p)
    p.add_argument("--perturb-tau1", type=float, help="shift the first switch (negative test)")
    p = sub.add_parser("lab-frame", help="lab-frame transverse fields of a protocol")
    _common(p)
    p.add_argument("--T", type=float, help="duration (default: full-charging time)")
    p.add_argument("--sequence", choices=["I", "II"], default="I")
    p.add_argument("--samples", type=int, default=2000)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), args.omega0, args.chi, args.bound, args.seed, args.out)
    cmd = args.command
    if cmd == "verify" and args.perturb_tau1 is not None:
        cfg = replace(cfg, verify=replace(cfg.verify, perturb_tau1=args.perturb_tau1)).validate()
    if cmd == "sweep-energy":
        paths = commands.cmd_sweep_energy(cfg)
    elif cmd == "min-time":
        paths = commands.cmd_min_time(cfg)
    elif cmd == "bloch":
        paths = commands.cmd_bloch(cfg, args.T, args.sequence)
    elif cmd == "phiz":
        paths = commands.cmd_phiz(cfg)
    elif cmd == "solve":
        paths, text = commands.cmd_solve(cfg, args.T, args.sequence)
        sys.stdout.write(text)
    elif cmd == "oracle":
        paths = commands.cmd_oracle(cfg, args.T)
    elif cmd == "verify":
        paths = commands.cmd_verify(cfg)
    elif cmd == "lab-frame":
        if args.samples < 1:
            raise ConfigError("--samples must be >= 1")
        paths = commands.cmd_lab_frame(cfg, args.T, args.sequence, args.samples)
    else:  # pragma: no cover - argparse rejects it first
        raise ConfigError(f"unknown command {cmd}")
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except commands.VerificationFailed as exc:
        print(f"verification failed: {exc.check} (report: {exc.report_path})", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
