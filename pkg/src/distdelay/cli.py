"""Command-line front end: ``distdelay {analyze,perturb,destabilize,simulate,roots}``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .hs import (HypothesisError, build_destabilizer, perturbation_digest,
                 perturbation_to_dict, sample_strong_stability)
from .measure import check_wellposed, pushforward
from .report import EXIT_INPUT_ERROR, analyze
from .simulate import fit_decay_rate, integrate
from .spectrum import (IndeterminateCount, Rect, StripQuery, default_query, find_roots,
                       spectral_abscissa)


def _emit(args, payload: dict, lines) -> None:
    if args.json:
        sys.stdout.write(io.dumps(payload))
    else:
        for line in lines:
            print(line)


def _load(args):
    M, file_norm = io.load_system(Path(args.system))
    return M, args.norm or file_norm


def cmd_analyze(args) -> int:
    M, norm = _load(args)
    res = analyze(M, norm, seed=args.seed, restarts=args.restarts, eps=args.eps,
                  trials=args.trials)
    v = res.verdict
    out = Path(args.out_dir)
    payload = v.to_dict()
    payload.update(bins=res.bins, witness_phases=res.witness_phases)
    io.write_text(out / "verdict.json", io.dumps(payload))
    if res.spectrum is not None:
        io.write_roots_csv(out / "roots.csv", M, res.spectrum.roots)
    lo, hi = v.abscissa_bracket
    _emit(args, payload, [
        f"Var(M)            {io.fmt(v.var_tv)}",
        f"rho_HS in         [{io.fmt(v.rho_hs_lower)}, {io.fmt(v.rho_hs_upper)}]",
        f"growth bound a*   {io.fmt(v.certified_bound)}",
        f"abscissa in       [{io.fmt(lo)}, {io.fmt(hi)}] ({v.window_tag})",
        f"classification    {v.classification}",
        *[f"note: {n}" for n in v.notes],
    ])
    return v.exit_code


def cmd_perturb(args) -> int:
    M, norm = _load(args)
    out = Path(args.out_dir)
    if args.random is not None:
        rep = sample_strong_stability(M, args.random, args.trials, args.seed, norm=norm,
                                      restarts=args.restarts)
        io.write_csv(out / "trials.csv", ("phi_digest", "family", "abscissa", "sup_distance"),
                     ((t["phi_digest"], t["family"], t["abscissa"], t["sup_distance"])
                      for t in rep.trials))
        payload = {"rho_lower": rep.rho_lower, "rho_upper": rep.rho_upper, "eps": rep.eps,
                   "max_abscissa": rep.max_abscissa, "margin": rep.margin,
                   "radius_consistent": rep.radius_consistent,
                   "trials": [{"phi_digest": t["phi_digest"], "abscissa": t["abscissa"]}
                              for t in rep.trials],
                   "skipped": rep.skipped}
        io.write_text(out / "perturb.json", io.dumps(payload))
        _emit(args, payload, [f"trials            {len(rep.trials)} ({len(rep.skipped)} skipped)",
                              f"max abscissa      {io.fmt(rep.max_abscissa)}"])
        return 0
    if args.perturbation is None:
        raise io.InputError("perturb: give a perturbation file or --random EPS")
    phi = io.load_perturbation(Path(args.perturbation))
    Mp = pushforward(M, phi)
    wp = check_wellposed(Mp)
    if not wp.ok:
        raise io.InputError(f"pushforward is not well-posed: det(I - A_M) = {wp.det:.3e}")
    res = spectral_abscissa(Mp, norm=norm)
    io.write_roots_csv(out / "perturbed_roots.csv", Mp, res.roots)
    payload = {"phi_digest": perturbation_digest(phi), "sup_distance": phi.sup_distance(),
               "abscissa": res.abscissa, "abscissa_bracket": list(res.abscissa_bracket),
               "window_tag": res.tag}
    io.write_text(out / "perturb.json", io.dumps(payload))
    _emit(args, payload, [f"||phi - id||      {io.fmt(phi.sup_distance())}",
                          f"abscissa          {io.fmt(res.abscissa)} ({res.tag})"])
    return 0


def cmd_destabilize(args) -> int:
    M, norm = _load(args)
    out = Path(args.out_dir)
    try:
        phi, diag = build_destabilizer(M, args.eps, args.delta, seed=args.seed,
                                       restarts=args.restarts, norm=norm)
    except HypothesisError as exc:
        print(f"refusing to destabilize: {exc}; such systems are strongly stable "
              "or need a sharper lower bound", file=sys.stderr)
        return 1
    Mp = pushforward(M, phi)
    q = default_query(Mp, norm)
    q = StripQuery(q.re_min, q.re_max, max(q.im_max, diag.im_max))
    res = spectral_abscissa(Mp, q, norm=norm)
    target = math.log(diag.rho0) - args.delta
    io.write_text(out / "perturbation.json", io.dumps(perturbation_to_dict(phi)))
    io.write_text(out / "perturbed_system.json", io.dumps(io.system_to_dict(Mp, norm)))
    payload = {"rho_lower": diag.rho0, "eps": args.eps, "delta": args.delta,
               "sup_distance": diag.sup_distance, "abscissa": res.abscissa,
               "abscissa_bracket": list(res.abscissa_bracket), "target": target,
               "target_met": res.abscissa >= target, "delays": diag.taus,
               "bin_count": diag.bin_count, "frequency": diag.frequency,
               "im_max": q.im_max}
    io.write_text(out / "destabilize.json", io.dumps(payload))
    _emit(args, payload, [f"||phi - id||      {io.fmt(diag.sup_distance)}",
                          f"abscissa          {io.fmt(res.abscissa)}",
                          f"target            {io.fmt(target)}"])
    return 0


def _initial_condition(args, M):
    d = M.dimension
    if args.ic == "const":
        return lambda th: np.ones(d)
    if args.ic == "exp":
        if args.s is None:
            raise io.InputError("--ic exp needs --s VALUE")
        try:
            s = complex(args.s.replace(" ", ""))
        except ValueError:
            raise io.InputError(f"--s: cannot parse {args.s!r} as a complex number") from None
        from .charfun import eval_L

        B = np.eye(d) - eval_L(M, s)
        v = np.linalg.svd(B)[2][-1].conj()
        return lambda th: (np.exp(s * th) * v).real
    if args.ic == "file":
        if args.ic_file is None:
            raise io.InputError("--ic file needs --ic-file PATH")
        try:
            with open(args.ic_file, encoding="utf-8") as fh:
                rows = [r for r in csv.reader(fh)]
            data = np.array(rows[1:], dtype=float)
        except (OSError, ValueError) as exc:
            raise io.InputError(f"--ic-file: {exc}") from None
        if data.ndim != 2 or data.shape[1] != d + 1:
            raise io.InputError(f"--ic-file: expected columns theta, x_1..x_{d}")
        order = np.argsort(data[:, 0])
        data = data[order]
        return lambda th: np.array([np.interp(th, data[:, 0], data[:, i + 1])
                                    for i in range(d)])
    raise io.InputError(f"--ic: unknown kind {args.ic!r}")


def cmd_simulate(args) -> int:
    M, norm = _load(args)
    phi0 = _initial_condition(args, M)
    traj = integrate(M, phi0, args.T, args.n)
    if traj.interpolated:
        print("warning: delays or breakpoints are off the grid; using interpolation",
              file=sys.stderr)
    rate = fit_decay_rate(traj, args.burn_in)
    try:
        bracket = spectral_abscissa(M, norm=norm).abscissa_bracket
    except IndeterminateCount:
        bracket = (-math.inf, math.inf)
    paths = io.write_trajectory_csvs(Path(args.out_dir) / "sim", traj)
    payload = {"fitted_rate": rate, "abscissa_bracket": list(bracket),
               "interpolated": traj.interpolated, "files": [p.name for p in paths]}
    _emit(args, payload, [f"empirical rate    {io.fmt(rate)}",
                          f"abscissa in       [{io.fmt(bracket[0])}, {io.fmt(bracket[1])}]"])
    return 0


def cmd_roots(args) -> int:
    M, _ = _load(args)
    rect = Rect(args.re_min, args.re_max, -args.im_max, args.im_max)
    roots = find_roots(M, rect)
    io.write_roots_csv(Path(args.out_dir) / "roots.csv", M, roots)
    payload = {"count": len(roots), "roots": [[r.real, r.imag] for r in roots]}
    _emit(args, payload, [f"{r.real:.17g} {r.imag:+.17g}i" for r in roots])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distdelay", description=__doc__)
    p.add_argument("--norm", choices=("op2", "op1", "opinf"), default=None,
                   help="matrix norm (default: the one in the system file)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="stability verdict for a system file")
    a.add_argument("system")
    a.add_argument("--restarts", type=int, default=16)
    a.add_argument("--eps", type=float, default=0.1, help="radius for sampled perturbations")
    a.add_argument("--trials", type=int, default=20)
    a.set_defaults(func=cmd_analyze)

    q = sub.add_parser("perturb", help="abscissa after a delay perturbation")
    q.add_argument("system")
    q.add_argument("perturbation", nargs="?")
    q.add_argument("--random", type=float, metavar="EPS")
    q.add_argument("--trials", type=int, default=50)
    q.add_argument("--restarts", type=int, default=16)
    q.set_defaults(func=cmd_perturb)

    z = sub.add_parser("destabilize", help="build a small destabilizing perturbation")
    z.add_argument("system")
    z.add_argument("--eps", type=float, required=True)
    z.add_argument("--delta", type=float, required=True)
    z.add_argument("--restarts", type=int, default=16)
    z.set_defaults(func=cmd_destabilize)

    s = sub.add_parser("simulate", help="integrate forward and fit a decay rate")
    s.add_argument("system")
    s.add_argument("--ic", choices=("const", "exp", "file"), default="const")
    s.add_argument("--s", help="exponent for --ic exp, e.g. -0.5+2j")
    s.add_argument("--ic-file")
    s.add_argument("--T", type=float, default=60.0)
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--burn-in", type=float, default=0.5)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("roots", help="all characteristic roots in a rectangle")
    r.add_argument("system")
    r.add_argument("--re-min", type=float, required=True)
    r.add_argument("--re-max", type=float, required=True)
    r.add_argument("--im-max", type=float, required=True)
    r.set_defaults(func=cmd_roots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (io.InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
