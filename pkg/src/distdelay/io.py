"""JSON system/perturbation files and CSV dumps."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np

from .measure import NORMS, Bin, Binning, MatrixNBV, Perturbation, PiecewiseLinear


class InputError(ValueError):
    """A system or perturbation file that violates the format or a type invariant."""


def fmt(x: float) -> str:
    """17 significant digits, ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _read_json(source: Union[str, Path]):
    text = source
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _matrix(obj, d: int, where: str) -> np.ndarray:
    try:
        A = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected a {d}x{d} numeric matrix") from None
    if A.shape != (d, d):
        raise InputError(f"{where}: expected shape ({d}, {d}), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{where}: entries must be finite")
    return A


def _number(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise InputError(f"{where}: expected a number")
    if not math.isfinite(obj):
        raise InputError(f"{where}: must be finite")
    return float(obj)


def parse_system(data: dict) -> Tuple[MatrixNBV, str]:
    """Build ``(M, norm)`` from a decoded system file."""
    if not isinstance(data, dict):
        raise InputError("top level: expected an object")
    d = data.get("dimension")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise InputError("dimension: expected a positive integer")
    norm = data.get("norm", "op2")
    if norm not in NORMS:
        raise InputError(f"norm: expected one of {', '.join(NORMS)}")
    atoms = []
    raw_atoms = data.get("atoms", [])
    if not isinstance(raw_atoms, list):
        raise InputError("atoms: expected a list")
    for k, a in enumerate(raw_atoms):
        if not isinstance(a, dict):
            raise InputError(f"atoms[{k}]: expected an object")
        tau = _number(a.get("tau"), f"atoms[{k}].tau")
        if not 0 <= tau <= 1:
            raise InputError(f"atoms[{k}].tau: must lie in [0, 1]")
        atoms.append((tau, _matrix(a.get("matrix"), d, f"atoms[{k}].matrix")))
    bps = pcs = None
    dens = data.get("density")
    if dens is not None:
        if not isinstance(dens, dict):
            raise InputError("density: expected an object")
        raw_b = dens.get("breakpoints")
        if not isinstance(raw_b, list) or len(raw_b) < 2:
            raise InputError("density.breakpoints: expected at least two numbers")
        bps = [_number(b, f"density.breakpoints[{i}]") for i, b in enumerate(raw_b)]
        if bps[0] != -1.0 or bps[-1] != 0.0:
            raise InputError("density.breakpoints: must start at -1 and end at 0")
        if any(b >= c for b, c in zip(bps, bps[1:])):
            raise InputError("density.breakpoints: must be strictly increasing")
        raw_p = dens.get("pieces")
        if not isinstance(raw_p, list) or len(raw_p) != len(bps) - 1:
            raise InputError(f"density.pieces: expected {len(bps) - 1} matrices")
        pcs = [_matrix(p, d, f"density.pieces[{j}]") for j, p in enumerate(raw_p)]
    try:
        M = MatrixNBV.build(d, atoms, bps, pcs)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return M, norm


def load_system(source: Union[str, Path]) -> Tuple[MatrixNBV, str]:
    """Read a system file (path or JSON text)."""
    return parse_system(_read_json(source))


def system_to_dict(M: MatrixNBV, norm: str = "op2") -> dict:
    out = {"dimension": M.dimension, "norm": norm,
           "atoms": [{"tau": float(t), "matrix": A.tolist()} for t, A in zip(M.taus, M.mats)]}
    if M.has_density:
        out["density"] = {"breakpoints": M.breakpoints.tolist(),
                          "pieces": M.pieces.tolist()}
    return out


def parse_perturbation(data: dict) -> Perturbation:
    if not isinstance(data, dict):
        raise InputError("top level: expected an object")
    kind = data.get("kind")
    try:
        if kind == "piecewise_linear":
            knots = data.get("knots")
            if not isinstance(knots, list):
                raise InputError("knots: expected a list of [theta, value] pairs")
            arr = [[_number(v, f"knots[{i}][{j}]") for j, v in enumerate(kn)]
                   for i, kn in enumerate(knots)]
            return PiecewiseLinear(np.array(arr))
        if kind == "binning":
            bins = data.get("bins")
            if not isinstance(bins, list):
                raise InputError("bins: expected a list")
            out = []
            for i, b in enumerate(bins):
                if not isinstance(b, dict) or not isinstance(b.get("from"), list) \
                        or len(b["from"]) != 2:
                    raise InputError(f"bins[{i}]: expected {{'from': [lo, hi], 'to': x}}")
                lo = _number(b["from"][0], f"bins[{i}].from[0]")
                hi = _number(b["from"][1], f"bins[{i}].from[1]")
                out.append(Bin(lo, hi, _number(b.get("to"), f"bins[{i}].to")))
            return Binning(tuple(out))
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    raise InputError("kind: expected 'piecewise_linear' or 'binning'")


def load_perturbation(source: Union[str, Path]) -> Perturbation:
    return parse_perturbation(_read_json(source))


def dumps(obj) -> str:
    """Deterministic JSON; non-finite floats become strings."""

    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.ndarray):
            return clean(v.tolist())
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else fmt(v)
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, (np.bool_,)):
            return bool(v)
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_roots_csv(path: Path, M: MatrixNBV, roots) -> None:
    from .spectrum import root_residual

    rows = [(float(r.real), float(r.imag), root_residual(M, r)) for r in roots]
    write_csv(path, ("re", "im", "abs_delta_residual"), rows)


def write_trajectory_csvs(prefix: Path, traj) -> Tuple[Path, Path]:
    d = traj.x.shape[1]
    traj_path = prefix.with_name(prefix.name + "_trajectory.csv")
    norm_path = prefix.with_name(prefix.name + "_windows.csv")
    write_csv(traj_path, ["t"] + [f"x_{i + 1}" for i in range(d)],
              ([float(t)] + [float(v) for v in row] for t, row in zip(traj.t, traj.x)))
    with np.errstate(divide="ignore"):
        logs = np.log(traj.window_norms)
    write_csv(norm_path, ("t", "sup_norm", "log_sup_norm"),
              zip(map(float, traj.window_t), map(float, traj.window_norms), map(float, logs)))
    return traj_path, norm_path
