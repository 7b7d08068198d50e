"""Abscissa of ``N_n`` against ``Var(M - N_n)`` for sequences approaching ``M``.

Families (scalar, ``M`` = atom 0.5 at delay 1):
  shift   atom weight 0.5 + 1/n
  scale   weights scaled by 1 - 1/n
"""

import argparse
import csv
import math
import sys

from distdelay.measure import MatrixNBV
from distdelay.spectrum import abscissa_tv_continuity_probe, spectral_abscissa


def family(name: str, M: MatrixNBV, n: int) -> MatrixNBV:
    if name == "shift":
        return MatrixNBV.build(1, [(1.0, [[0.5 + 1 / n]])])
    return M.scaled(1 - 1 / n)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--family", choices=("shift", "scale"), default="shift")
    p.add_argument("--n", type=int, nargs="+", default=[2, 5, 10, 20, 50, 100, 1000, 10000])
    args = p.parse_args(argv)

    M = MatrixNBV.build(1, [(1.0, [[0.5]])])
    S_M = spectral_abscissa(M).abscissa
    rows = abscissa_tv_continuity_probe(M, [family(args.family, M, n) for n in args.n])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n", "var_diff", "abscissa", "gap", "gap_over_var"])
    for n, (var, S) in zip(args.n, rows):
        gap = abs(S - S_M)
        w.writerow([n, f"{var:.6g}", f"{S:.12g}", f"{gap:.6g}",
                    f"{gap / var:.6g}" if var else "nan"])
    print(f"S_M = {S_M:.12g} (-ln 2 = {-math.log(2):.12g})", file=sys.stderr)


if __name__ == "__main__":
    main()
