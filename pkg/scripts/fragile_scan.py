"""Scan scalar two-delay systems ``x(t) = a x(t - 1/2) + b x(t - 1)`` for fragility.

A pair is fragile when ``|a| + |b| > 1`` (so rho_HS > 1) while the exact
abscissa at these commensurate delays is negative.  Writes one CSV row per
grid point and prints the pair with the largest stability margin.
"""

import argparse
import csv
import sys

import numpy as np

from distdelay.measure import MatrixNBV
from distdelay.spectrum import commensurate_oracle


def scan(step: float):
    grid = np.arange(step, 1.0, step)
    for a in grid:
        for b in -grid:
            M = MatrixNBV.build(1, [(0.5, [[a]]), (1.0, [[b]])])
            yield float(a), float(b), abs(a) + abs(b), commensurate_oracle(M, 0.5)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    args = p.parse_args(argv)

    rows = list(scan(args.step))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["a", "b", "rho_hs", "abscissa", "fragile"])
    for a, b, rho, S in rows:
        w.writerow([f"{a:.4g}", f"{b:.4g}", f"{rho:.4g}", f"{S:.17g}", int(rho > 1 and S < 0)])
    if fh is not sys.stdout:
        fh.close()

    fragile = [r for r in rows if r[2] > 1 and r[3] < 0]
    print(f"{len(fragile)} fragile pairs out of {len(rows)}", file=sys.stderr)
    if fragile:
        a, b, rho, S = max(fragile, key=lambda r: min(-r[3], r[2] - 1))
        print(f"most robust: a={a:.2f} b={b:.2f} rho_HS={rho:.2f} S={S:.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
