"""Random SO(3) gauge rotations: strings move, the charge does not.

For each rotation prints the number of D+ piercings, their windings and both
charge estimates.

    python scripts/gauge_sweep.py --builtin quadratic_shift --count 10 --seed 7
"""

import argparse
import sys

import numpy as np

from geophase.model import make_builtin, random_rotation, rotate_gauge
from geophase.strings import full_report


def num(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--builtin", default="quadratic_shift")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--radius", type=float, default=0.5)
    args = ap.parse_args(argv)
    params = {k: num(v) for k, v in (p.split("=", 1) for p in args.param)}
    base = make_builtin(args.builtin, params)
    rng = np.random.default_rng(args.seed)

    print(f"{'#':>3} {'strings':>7} {'g_winding':>9} {'g_flux':>14} {'|dg|':>9}  windings")
    worst = 0.0
    for k in range(args.count):
        R = np.eye(3) if k == 0 else random_rotation(rng)
        rep = full_report(rotate_gauge(base, R), args.radius)
        worst = max(worst, rep.method_agreement)
        ws = " ".join(f"{s.winding:+d}" for s in rep.piercings)
        print(f"{k:>3} {len(rep.piercings):>7} {str(rep.g_winding):>9} {rep.g_flux:>14.10f} "
              f"{rep.method_agreement:>9.1e}  {ws}")
    print(f"worst method agreement {worst:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
