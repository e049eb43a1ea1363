"""Rewrite tests/golden/ from the current CLI output.

    python scripts/regenerate_goldens.py

Run only after a deliberate change to the numerics or the report layout, and
review the diff: the golden tests compare against these files.
"""

import contextlib
import io
import sys
from pathlib import Path

from geophase.cli import run

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"

# (file stem, argv) for every built-in family plus the catalog and a gauge-flipped run
CASES = [
    ("charge_diabolical", ["charge", "--builtin", "diabolical"]),
    ("charge_quadratic_shift", ["charge", "--builtin", "quadratic_shift"]),
    *[(f"charge_power_contact_n{n}", ["charge", "--builtin", "power_contact", "--param", f"n={n}"])
      for n in range(1, 5)],
    *[(f"charge_chebyshev_contact_n{n}", ["charge", "--builtin", "chebyshev_contact", "--param", f"n={n}"])
      for n in range(1, 6)],
    ("charge_quadratic_shift_flipped", ["charge", "--ex=x^2 + z", "--ey=-(y^2 + z)", "--ez=-z"]),
    ("charge_chebyshev_contact_n4_r04", ["charge", "--builtin", "chebyshev_contact", "--param", "n=4",
                                         "--radius", "0.4"]),
    ("flux_diabolical", ["flux", "--builtin", "diabolical", "--radius", "1"]),
    ("windings_power_contact_n1", ["windings", "--builtin", "power_contact", "--param", "n=1"]),
    ("circulate_power_contact_n1", ["circulate", "--builtin", "power_contact", "--param", "n=1",
                                    "--z0", "0.2", "--delta", "0.025"]),
    ("classify_diabolical", ["classify", "--builtin", "diabolical"]),
    ("classify_quadratic_shift", ["classify", "--builtin", "quadratic_shift"]),
    ("list_models", ["list-models"]),
]


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for stem, argv in CASES:
        path = GOLDEN / f"{stem}.json"
        if stem == "list_models":
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                code = run(argv)
            path.write_text(buf.getvalue(), encoding="utf-8")
        else:
            code = run(argv + ["--output", str(path)])
        if code != 0:
            print(f"{stem}: exit {code}", file=sys.stderr)
            return code
        print(f"wrote {path.relative_to(ROOT)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
