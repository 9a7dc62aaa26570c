"""Iterative square-root benchmark and gradient-check runner.

Every (d, cond) cell draws its matrix from its own seed, derived from the
master seed and the cell coordinates, so results do not depend on which cells
run or in what order. Rows come back sorted.
"""

import csv
import time

import numpy as np

from .errors import InputError
from .grad import Lyapunov, SvdTruncated, grad_check
from .linalg import random_spd
from .matfun import NewtonConfig, Sqrt, mat_fun_spectral, sqrt_iterative, sqrt_residual

__all__ = [
    "SCHEMES",
    "PROFILES",
    "cell_rng",
    "sqrt_bench",
    "BENCH_COLUMNS",
    "gradcheck_matrix",
    "gradcheck_threshold",
    "run_gradcheck",
    "GRADCHECK_COLUMNS",
    "write_csv",
    "format_value",
]

SCHEMES = {
    "db": "denman-beavers",
    "denman-beavers": "denman-beavers",
    "ns": "newton-schulz",
    "newton-schulz": "newton-schulz",
}
PROFILES = ("wellsep", "clustered", "degenerate")
BENCH_COLUMNS = ("scheme", "d", "cond", "k", "rel_residual", "wall_time")
GRADCHECK_COLUMNS = (
    "kind", "scheme", "d", "profile", "h", "seed",
    "max_abs_diff", "max_rel_diff", "analytic_norm", "fd_norm", "threshold", "status",
)


def cell_rng(seed, d, cond):
    # cond enters through its bit pattern so that e.g. 1e3 and 1000.0 agree
    key = (int(d), int(np.float64(cond).view(np.uint64)))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _timed(fn, timing):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0 if timing else None)


def sqrt_bench(dims, conds, iterations, schemes=("denman-beavers", "newton-schulz"),
               seed=0, scale_mode="frobenius", timing=True):
    """Residual ``||Y Y - A||_F / ||A||_F`` of each scheme after ``k`` steps.

    Returns dict rows with keys :data:`BENCH_COLUMNS`; each (d, cond) cell
    also gets a ``spectral`` reference row with ``k`` left empty. With
    ``timing=False`` the ``wall_time`` column is empty so output is
    reproducible byte for byte.
    """
    dims = [int(d) for d in dims]
    conds = [float(c) for c in conds]
    iterations = [int(k) for k in iterations]
    if not dims or not conds or not iterations:
        raise InputError("dims, conds and iterations must be non-empty")
    if min(dims) < 1 or min(conds) < 1 or min(iterations) < 0:
        raise InputError("need d >= 1, cond >= 1 and k >= 0")
    try:
        schemes = [SCHEMES[s] for s in schemes]
    except KeyError as exc:
        raise InputError(f"unknown scheme {exc.args[0]!r}; choose from {sorted(SCHEMES)}") from None
    rows = []
    for d in sorted(set(dims)):
        for cond in sorted(set(conds)):
            A = random_spd(d, cond, rng=cell_rng(seed, d, cond))
            Z, wall = _timed(lambda: mat_fun_spectral(A, Sqrt()), timing)
            rows.append(dict(scheme="spectral", d=d, cond=cond, k=None,
                             rel_residual=sqrt_residual(Z, A), wall_time=wall))
            for scheme in sorted(set(schemes)):
                for k in sorted(set(iterations)):
                    cfg = NewtonConfig(iterations=k, scheme=scheme, scale_mode=scale_mode)
                    (Y, _), wall = _timed(lambda: sqrt_iterative(A, cfg), timing)
                    rows.append(dict(scheme=scheme, d=d, cond=cond, k=k,
                                     rel_residual=sqrt_residual(Y, A), wall_time=wall))
    rows.sort(key=lambda r: (r["d"], r["cond"], r["scheme"], -1 if r["k"] is None else r["k"]))
    return rows


def gradcheck_matrix(d, profile, seed=0, cond=100.0, scale=10.0):
    """Test input for the gradient check.

    ``wellsep``: geometric spectrum; ``clustered``: pairs of eigenvalues
    ``1e-9`` apart; ``degenerate``: ``scale * I``.
    """
    if profile not in PROFILES:
        raise InputError(f"unknown spectrum profile {profile!r}; choose from {list(PROFILES)}")
    if profile == "degenerate":
        return scale * np.eye(d)
    shape = "geometric" if profile == "wellsep" else "clustered"
    return random_spd(d, cond, rng=cell_rng(seed, d, cond), profile=shape, scale=scale)


def gradcheck_threshold(scheme, profile):
    """Pass threshold on ``max_rel_diff``, or ``None`` for report-only combinations."""
    if isinstance(scheme, Lyapunov):
        return 1e-6
    if isinstance(scheme, SvdTruncated) and profile == "wellsep":
        return 1e-5
    return None


def run_gradcheck(kind, scheme, d, profile="wellsep", h=1e-5, seed=0, cond=100.0):
    """Return ``(row, ok)``; ``ok`` is False if a threshold is missed or values are not finite."""
    A = gradcheck_matrix(d, profile, seed=seed, cond=cond)
    rep = grad_check(kind, scheme, A, h=h, seed=seed)
    thr = gradcheck_threshold(scheme, profile)
    if not rep.finite:
        ok, status = False, "non-finite"
    elif thr is None:
        ok, status = True, "report-only"
    else:
        ok = rep.max_rel_diff <= thr
        status = "pass" if ok else "fail"
    row = dict(kind=str(kind), scheme=str(scheme), d=d, profile=profile, h=h, seed=seed,
               max_abs_diff=rep.max_abs_diff, max_rel_diff=rep.max_rel_diff,
               analytic_norm=rep.analytic_norm, fd_norm=rep.fd_norm,
               threshold=thr, status=status)
    return row, ok


def format_value(v):
    """Shortest round-tripping text for floats, empty for ``None``."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(fh, columns, rows):
    """RFC-4180 CSV (CRLF line ends, minimal quoting) with a header row."""
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
