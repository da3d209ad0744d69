"""Write every data file behind the figures into one output directory.

    python3 scripts/reproduce_figures.py --out out --config configs/default.toml
"""

import argparse
import time
from dataclasses import replace

from isingqb import commands
from isingqb.config import load_config
from isingqb.dynamics import BatteryParams, BoundMode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--skip-oracle", action="store_true", help="skip the grid/ascent comparison files")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out=args.out)

    steps = [
        ("sweep-energy", lambda: commands.cmd_sweep_energy(cfg)),
        ("min-time", lambda: commands.cmd_min_time(cfg)),
        ("bloch", lambda: commands.cmd_bloch(cfg)),
        ("phiz", lambda: commands.cmd_phiz(cfg)),
        ("lab-frame", lambda: commands.cmd_lab_frame(cfg)),
    ]
    if not args.skip_oracle:
        for w, chi in cfg.verify.cases:
            for mode in BoundMode:
                c = replace(cfg, params=BatteryParams(w, chi, mode))
                steps.append((f"oracle {w:g} {mode.value}", lambda c=c: commands.cmd_oracle(c)))

    for name, run in steps:
        t = time.perf_counter()
        paths = run()
        print(f"{name:<24} {len(paths):3d} file(s)  {time.perf_counter() - t:6.1f}s")


if __name__ == "__main__":
    main()
