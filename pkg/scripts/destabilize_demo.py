"""Destabilizing delay perturbations of shrinking size.

For each eps, builds the perturbation, recomputes the abscissa of the
perturbed system and compares it with ``ln rho_HS - delta``.
"""

import argparse
import math
import time

from distdelay.hs import build_destabilizer
from distdelay.measure import MatrixNBV, pushforward
from distdelay.spectrum import StripQuery, default_query, spectral_abscissa

SYSTEMS = {
    "scalar": MatrixNBV.build(1, [(0.5, [[0.6]]), (0.25, [[0.6]])]),
    "fragile": MatrixNBV.build(1, [(0.5, [[0.6]]), (1.0, [[-0.6]])]),
    "coupled": MatrixNBV.build(2, [(0.4, [[0.2, 1.2], [0.0, 0.0]]),
                                   (0.9, [[0.0, 0.0], [1.0, 0.3]])],
                               [-1.0, -0.5, 0.0],
                               [[[0.2, 0.0], [0.0, 0.1]], [[0.0, 0.3], [-0.2, 0.0]]]),
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--system", choices=sorted(SYSTEMS), default="fragile")
    p.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.02, 0.01])
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    M = SYSTEMS[args.system]
    print(f"unperturbed abscissa {spectral_abscissa(M).abscissa:.6f}")
    print(f"{'eps':>6} {'|phi-id|':>9} {'bins':>5} {'abscissa':>10} {'target':>8} {'sec':>5}")
    for eps in args.eps:
        start = time.perf_counter()
        phi, diag = build_destabilizer(M, eps, args.delta, seed=args.seed)
        Mp = pushforward(M, phi)
        q = default_query(Mp)
        q = StripQuery(q.re_min, q.re_max, max(q.im_max, diag.im_max))
        S = spectral_abscissa(Mp, q).abscissa
        target = math.log(diag.rho0) - diag.delta_used
        print(f"{eps:6.3f} {diag.sup_distance:9.4f} {diag.bin_count:5d} {S:10.4f} "
              f"{target:8.4f} {time.perf_counter() - start:5.1f}")


if __name__ == "__main__":
    main()
