"""Geometric phase around ever smaller circles around a Dirac string.

Circles run clockwise seen from +z, the rim orientation of a hole pierced in
a sphere.  Near D+ the connection tends to -grad arg(e_x + i e_y), so the
phase tends to 2 pi times the winding of e_x + i e_y around the counterclockwise
loop.  The gap falls like (rho/z)^2 with rho = |e_x + i e_y|, so
the observed order in delta is twice the contact order of e_x, e_y.

    python scripts/shrinking_loop.py --builtin power_contact --param n=1 --z0 0.2
"""

import argparse
import math
import sys

import numpy as np

from geophase.integrate import QuadratureSettings, circle_loop, circulation
from geophase.model import make_builtin
from geophase.strings import winding_number


def num(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--builtin", default="power_contact")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--z0", type=float, default=0.2)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625])
    args = ap.parse_args(argv)
    params = {k: num(v) for k, v in (p.split("=", 1) for p in args.param)} or {"n": 1}
    m = make_builtin(args.builtin, params)

    w = winding_number(m, circle_loop(min(args.deltas), args.z0, orientation=1))
    target = 2 * math.pi * w
    print(f"{args.builtin} {params}, z0={args.z0}: winding {w:+d}, limit {target:.10f}")
    print(f"{'delta':>10} {'dPhi':>16} {'|dPhi - limit|':>16} {'order':>6}")
    prev = None
    for d in sorted(args.deltas, reverse=True):
        res = circulation(m, circle_loop(d, args.z0), QuadratureSettings(abs_tol=1e-10, max_depth=16))
        gap = abs(res.value - target)
        order = "" if prev is None else f"{np.log(prev[1] / gap) / np.log(prev[0] / d):6.2f}"
        print(f"{d:>10.5f} {res.value:>16.10f} {gap:>16.3e} {order:>6}")
        prev = (d, gap)
    return 0


if __name__ == "__main__":
    sys.exit(main())
