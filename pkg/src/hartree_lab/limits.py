"""Nonrelativistic-limit sweeps, multiplier bounds, energy curves and the critical mass.

The relativistic multiplier is reported through ``z = mu + m c^2`` in the
solver; here everything is phrased with ``-mu`` and the gap
``-mu - m c^2 = -z``, which tends to ``-lambda`` as ``c`` grows.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import Collapse, HartreeLabError, Inconclusive, InvalidArgument
from .grid import RadialGrid, make_grid, norm_h1
from .solve import GroundState, energy_nr, solve_nr, solve_rel

HERBST_MARGIN = 0.9
H1_STABLE = 0.05
FOUR_OVER_PI = 4.0 / math.pi

SWEEP_COLUMNS = ("c", "mu", "gap", "h1_dist", "energy", "residual", "herbst_ok", "delta1_ok", "delta2_ok")


@dataclass
class SweepRecord:
    """One point of a c-sweep; failed solves keep NaN fields and the error text."""

    c: float
    m: float
    N: float
    mu: float = math.nan
    gap: float = math.nan
    h1_dist: float = math.nan
    h1_norm: float = math.nan
    energy: float = math.nan
    mass: float = math.nan
    residual: float = math.nan
    bound_flags: dict = field(default_factory=dict)
    error: Optional[str] = None
    state: Optional[GroundState] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("c", "m", "N", "mu", "gap", "h1_dist", "h1_norm", "energy", "mass", "residual")}
        d["bound_flags"] = dict(self.bound_flags)
        d["error"] = self.error
        return d


@dataclass(frozen=True)
class CriticalMassEstimate:
    N_lo: float
    N_hi: float
    c: float
    m: float
    trace: tuple = ()

    @property
    def width(self) -> float:
        return self.N_hi - self.N_lo

    def to_dict(self) -> dict:
        return {"N_lo": self.N_lo, "N_hi": self.N_hi, "width": self.width, "c": self.c, "m": self.m,
                "trace": [list(t) for t in self.trace]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def herbst_lower(m: float, c: float, N: float) -> float:
    """``m c^2 sqrt(1 - (pi N / 2c)^2)``; NaN once ``N >= 2c/pi``."""
    x = math.pi * N / (2.0 * c)
    return m * c * c * math.sqrt(1.0 - x * x) if x < 1.0 else math.nan


def delta1(m: float, N: float) -> float:
    return 0.25 * m * math.pi**2 * N * N


def mu_bounds_check(record: SweepRecord, E_nr_N: float) -> dict:
    """Flags for ``m c^2 - delta1 <= -mu <= m c^2 - delta2`` and the Herbst bound.

    ``delta2 = -E_nr_N / N`` uses the energy of the nonrelativistic ground
    state with the same mass.  The Herbst flag is false when the bound is not
    available (``N >= 2c/pi``).
    """
    mc2 = record.m * record.c**2
    minus_mu = -record.mu
    d2 = -E_nr_N / record.N
    herbst = herbst_lower(record.m, record.c, record.N)
    return {
        "herbst_ok": bool(herbst <= minus_mu),
        "delta1_ok": bool(mc2 - delta1(record.m, record.N) <= minus_mu),
        "delta2_ok": bool(minus_mu <= mc2 - d2),
    }


def h1_uniform_check(records) -> tuple[bool, float]:
    """``M = max ||Q_c||_{H^1}`` and whether the last two norms agree within 5%."""
    norms = [r.h1_norm for r in records if r.ok]
    if not norms:
        raise InvalidArgument("no converged records")
    M = max(norms)
    if len(norms) == 1:
        return True, M
    a, b = norms[-2], norms[-1]
    return bool(abs(a - b) <= H1_STABLE * max(a, b)), M


def _sweep_point(c, m, N, grid, ref: GroundState, e_nr: float, tol: float) -> SweepRecord:
    rec = SweepRecord(float(c), m, N)
    try:
        st = solve_rel(grid, m, c, N, tol=tol, initial=ref)
    except HartreeLabError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.state = st
    rec.mu = st.multiplier
    rec.gap = -st.multiplier - m * c * c
    rec.h1_dist = norm_h1(st.Q - ref.Q)
    rec.h1_norm = norm_h1(st.Q)
    rec.energy = st.energy
    rec.mass = st.mass
    rec.residual = st.residual
    rec.bound_flags = mu_bounds_check(rec, e_nr)
    return rec


def sweep_c(cs, m: float, N: float, grid: RadialGrid, tol: float = 1e-10, jobs: int = 1,
            reference: Optional[GroundState] = None) -> tuple[list[SweepRecord], GroundState]:
    """Solve the relativistic problem at mass ``N`` for each ``c``.

    Returns the records in ascending ``c`` and the nonrelativistic reference
    state (same ``m``, ``N`` and grid), which supplies ``lambda``, ``Q_inf``
    and ``E_nr(N)``.  A failed solve is recorded on its record and does not
    stop the sweep.
    """
    cs = sorted(float(c) for c in cs)
    if not cs:
        raise InvalidArgument("empty c list")
    for c in cs:
        if not N < HERBST_MARGIN * 2.0 * c / math.pi:
            raise InvalidArgument(f"N = {N} is too close to the Herbst limit 2c/pi at c = {c}")
    ref = reference if reference is not None else solve_nr(grid, m=m, N=N, tol=tol)
    e_nr = energy_nr(ref.Q, m)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda c: _sweep_point(c, m, N, grid, ref, e_nr, tol), cs))
    else:
        records = [_sweep_point(c, m, N, grid, ref, e_nr, tol) for c in cs]
    good = [r for r in records if r.ok]
    if len(good) >= 2:
        flag, _ = h1_uniform_check(good)
        for r in good:
            r.bound_flags["h1_uniform_ok"] = flag
    return records, ref


def richardson_gap(records) -> float:
    """Extrapolate ``gap(c) = g_inf + a / c^2`` from the two largest converged ``c``."""
    good = [r for r in records if r.ok]
    if len(good) < 2:
        raise InvalidArgument("need two converged records")
    a, b = good[-2], good[-1]
    wa, wb = a.c**2, b.c**2
    return (wb * b.gap - wa * a.gap) / (wb - wa)


def sweep_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in records:
        f = r.bound_flags
        w.writerow([repr(r.c), repr(r.mu), repr(r.gap), repr(r.h1_dist), repr(r.energy), repr(r.residual),
                    f.get("herbst_ok", ""), f.get("delta1_ok", ""), f.get("delta2_ok", "")])
    return buf.getvalue()


def energy_curve(Ns, c: float, m: float, grid: RadialGrid, tol: float = 1e-10) -> list[tuple[float, float]]:
    """Minimised relativistic energies ``E_c(N)``; failed points carry NaN and a warning."""
    out = []
    prev = None
    for N in Ns:
        try:
            st = solve_rel(grid, m, c, float(N), tol=tol, initial=prev)
            prev = None  # warm starts across masses change the mass target too much
            out.append((float(N), st.energy))
        except HartreeLabError as exc:
            warnings.warn(f"energy_curve: N = {N} failed ({exc})", RuntimeWarning, stacklevel=2)
            out.append((float(N), math.nan))
    return out


def second_differences(curve) -> np.ndarray:
    """``E(N_{k-1}) - 2 E(N_k) + E(N_{k+1})`` for equally spaced samples."""
    e = np.array([p[1] for p in curve], dtype=float)
    return e[:-2] - 2.0 * e[1:-1] + e[2:]


def critical_mass_estimate(c: float = 1.0, m: float = 1.0, grid: Optional[RadialGrid] = None,
                           bracket_tol: float = 0.2, N_start: float = 1.0, N_stop: float = 10.0,
                           tol: float = 1e-9) -> CriticalMassEstimate:
    """Bracket the largest mass with a ground state by bisection on ``N``.

    ``N_lo`` is the largest mass whose solve converged, ``N_hi`` the smallest
    with a detected collapse.  If ``N_stop`` does not collapse the search
    extends to ``10 * (4/pi) * c``; plain non-convergence anywhere is
    reported as :class:`Inconclusive`, since it cannot be told apart from a
    solver failure.
    """
    if not bracket_tol > 0:
        raise InvalidArgument("bracket_tol must be positive")
    grid = grid if grid is not None else make_grid(2000, 20.0)
    trace = []

    def probe(N):
        try:
            solve_rel(grid, m, c, N, tol=tol)
            trace.append((N, "converged"))
            return True
        except Collapse:
            trace.append((N, "collapse"))
            return False
        except HartreeLabError as exc:
            trace.append((N, "failed"))
            raise Inconclusive(f"solve at N = {N} neither converged nor collapsed: {exc}") from exc

    lo, hi = N_start * c, N_stop * c
    if not probe(lo):
        raise Inconclusive(f"no ground state found at the starting mass {lo}")
    if probe(hi):
        hi2 = 10.0 * FOUR_OVER_PI * c
        if hi2 <= hi or probe(hi2):
            raise Inconclusive("collapse detector never fired")
        lo, hi = hi, hi2
    while hi - lo > bracket_tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    est = CriticalMassEstimate(lo, hi, c, m, tuple(trace))
    if not est.N_lo > FOUR_OVER_PI * c:
        raise Inconclusive(f"bracket [{lo:.4g}, {hi:.4g}] does not clear 4c/pi; the grid likely under-resolves")
    return est
