"""Desk-scale invariant suite behind ``hartree-lab validate``.

Each check returns a :class:`Check` row; the suite never raises on a failed
inequality, only on programming errors, so one bad check does not hide the
others.  Grid sizes are modest so the whole table runs in a couple of minutes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coulomb import multipole_kernel_matrix, newton_values, w_sector_values
from .errors import HartreeLabError
from .grid import RadialGrid, kinetic, make_grid, mass
from .limits import critical_mass_estimate, energy_curve, richardson_gap, second_differences, sweep_c
from .linops import (
    assemble_lminus,
    assemble_sector,
    cosine_similarity,
    eigs,
    k_ell_gap,
    kernel_count,
    linearized_shoot,
    perron_check,
)
from .solve import (
    GroundState,
    derivative4,
    el_residual,
    hartree_term,
    shoot_threshold,
    solve_nr_normalized,
    solve_rel,
    wronskian_residual,
)
from .specfun import heat_kernel_sector, resolvent_mismatch


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    value: float
    bound: str

    def row(self) -> list:
        return [self.name, "pass" if self.ok else "fail", repr(float(self.value)), self.bound]


def _virial(state: GroundState) -> list[Check]:
    T = kinetic(state.Q)
    return [
        Check("virial mass/kinetic", abs(mass(state.Q) / T / 3.0 - 1.0) <= 1e-5, mass(state.Q) / T, "3 within 1e-5 rel"),
        Check("virial hartree/kinetic", abs(hartree_term(state.Q) / T / 4.0 - 1.0) <= 1e-5, hartree_term(state.Q) / T,
              "4 within 1e-5 rel"),
    ]


def _shooting(state: GroundState) -> Check:
    prof = shoot_threshold().normalized_profile(state.grid)
    q = state.Q.values
    err = float(np.max(np.abs(prof.values - q)) / np.max(np.abs(q)))
    return Check("shooting vs Petviashvili", err <= 1e-4, err, "<= 1e-4 rel Linf")


def _sectors(state: GroundState, l_max: int) -> list[Check]:
    out = []
    rep0 = eigs(assemble_sector(0, state), k=3)
    e0 = float(np.min(np.abs(rep0.eigenvalues)))
    out.append(Check("radial sector has no zero mode", e0 >= 0.01, e0, "min |e| >= 0.01"))
    rep1 = eigs(assemble_sector(1, state), k=2)
    dq = derivative4(state.grid, state.Q.values)
    cos = abs(cosine_similarity(state.grid, rep1.ground_eigenfunction, -dq))
    out.append(Check("translation eigenvalue", abs(rep1.eigenvalues[0]) <= 5e-3, rep1.eigenvalues[0], "|e| <= 5e-3"))
    out.append(Check("translation eigenfunction ~ -Q'", cos >= 0.999, cos, "cosine >= 0.999"))
    for ell in range(2, l_max + 1):
        rep = eigs(assemble_sector(ell, state), k=2)
        K = k_ell_gap(ell, state, rep.ground_eigenfunction)
        e = float(rep.eigenvalues[0])
        perron, _ = perron_check(rep)
        out.append(Check(f"sector {ell} gap bound", e > 0 and e >= K - 1e-6, e - K, "e0 > 0 and e0 >= K - 1e-6"))
        out.append(Check(f"sector {ell} Perron", perron, float(perron), "one-signed, simple"))
    lm = eigs(assemble_lminus(state), k=2)
    cos_q = abs(cosine_similarity(state.grid, lm.ground_eigenfunction, state.Q))
    out.append(Check("L- ground eigenvalue", abs(lm.eigenvalues[0]) <= 1e-4, lm.eigenvalues[0], "|e0| <= 1e-4"))
    out.append(Check("L- ground state ~ Q", cos_q >= 0.9999, cos_q, "cosine >= 0.9999"))
    out.append(Check("L- second eigenvalue", lm.eigenvalues[1] >= 0.01, lm.eigenvalues[1], ">= 0.01"))
    return out


def _kernel(state: GroundState, l_max: int, r0: float, name: str) -> Check:
    try:
        k = kernel_count(state, l_max, r0)
    except HartreeLabError as exc:
        return Check(name, False, math.nan, f"== 3 ({exc})")
    return Check(name, k == 3, k, "== 3")


def _heat() -> list[Check]:
    g = make_grid(200, 10.0)
    inner = g.nodes <= 5.0
    out = []
    for ell in (0, 1, 2):
        a = heat_kernel_sector(ell, 0.5, g)
        b = heat_kernel_sector(ell, 1.0, g)
        pos = float(min(a.kernel().min(), b.kernel().min()))
        k2 = (a.matrix @ a.matrix)[np.ix_(inner, inner)]
        k1 = b.matrix[np.ix_(inner, inner)]
        defect = float(np.max(np.abs(k2 - k1)) / np.max(np.abs(k1)))
        out.append(Check(f"heat kernel {ell} positive", pos > 0, pos, "> 0"))
        out.append(Check(f"heat kernel {ell} semigroup", defect <= 1e-5, defect, "<= 1e-5 rel"))
        mis = resolvent_mismatch(ell, 1.0, make_grid(128, 9.0))
        out.append(Check(f"heat kernel {ell} resolvent", mis <= 1e-3, mis, "<= 1e-3 rel, operator norm on r <= 4.5"))
    return out


def _newton_fast_vs_dense(grid: RadialGrid, q: np.ndarray) -> Check:
    f = np.exp(-grid.nodes)
    err = 0.0
    for ell in (1, 2, 3):
        dense = -2.0 / (2 * ell + 1) * q * (multipole_kernel_matrix(grid, ell) @ (grid.weights * q * f))
        fast = w_sector_values(grid, ell, q, f, corrected=False)
        err = max(err, float(np.max(np.abs(fast - dense))))
    rho = q * q
    dense0 = multipole_kernel_matrix(grid, 0) @ (grid.weights * rho)
    err = max(err, float(np.max(np.abs(newton_values(grid, rho, corrected=False) - dense0))))
    return Check("multipole fast vs dense", err <= 1e-12, err, "<= 1e-12 abs")


def _wronskian(state: GroundState) -> list[Check]:
    shot = linearized_shoot(state, 1.2 * state.Q.values[0])
    res = wronskian_residual(state.Q, shot.v_profile, shot.W_of_v).values
    sel = state.grid.nodes[: shot.v.size] <= 10.0
    worst = float(np.max(np.abs(res[: shot.v.size][sel])))
    return [
        Check("linearized shot one-signed", bool(np.all(shot.v > 0)), float(np.min(shot.v)), "v > 0"),
        Check("linearized growth rate", 0.5 < shot.growth_rate < 1.05, shot.growth_rate, "in (0.5, 1.05)"),
        Check("Wronskian identity", worst <= 1e-6, worst, "<= 1e-6 on r <= 10"),
    ]


def _limits(cs, jobs: int) -> list[Check]:
    g = make_grid(1000, 40.0)
    recs, ref = sweep_c(cs, 1.0, 1.0, g, jobs=jobs)
    good = [r for r in recs if r.ok]
    out = [Check("sweep converged", len(good) == len(recs), len(good), f"== {len(recs)}")]
    out.append(Check("gap < 0", all(r.gap < 0 for r in good), max((r.gap for r in good), default=math.nan), "< 0"))
    flags_ok = all(all(r.bound_flags.values()) for r in good)
    out.append(Check("multiplier bounds", flags_ok, float(flags_ok), "all flags true"))
    errs = [abs(r.gap + ref.multiplier) for r in good]
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    out.append(Check("gap error decreasing in c", dec, errs[-1] if errs else math.nan, "strictly decreasing"))
    if len(good) >= 2:
        rich = richardson_gap(recs)
        rel = abs(rich + ref.multiplier) / ref.multiplier
        out.append(Check("Richardson gap vs -lambda", rel <= 0.02, rel, "<= 2% rel"))
    # exact scaling between (c = 1, N) and (c, c N) on node-aligned grids
    c = 2.0
    g1 = make_grid(600, 30.0)
    gc = make_grid(600, 30.0 / c)
    s1 = solve_rel(g1, 1.0, 1.0, 1.0)
    sc = solve_rel(gc, 1.0, c, c * 1.0)
    back = sc.Q.values / c**2
    rel = float(np.max(np.abs(back - s1.Q.values)) / np.max(s1.Q.values))
    out.append(Check("scaling equivalence", rel <= 1e-3, rel, "<= 1e-3 rel Linf"))
    return out


def _energy() -> Check:
    curve = energy_curve([0.4, 0.6, 0.8, 1.0, 1.2], 1.0, 1.0, make_grid(2000, 100.0))
    d2 = second_differences(curve)
    return Check("energy concavity", bool(np.all(d2 < 0)), float(np.max(d2)), "all second differences < 0")


def _critical() -> Check:
    try:
        est = critical_mass_estimate()
    except HartreeLabError as exc:
        return Check("critical-mass bracket", False, math.nan, f"N_lo > 4/pi ({exc})")
    return Check("critical-mass bracket", est.N_lo > 4.0 / math.pi and est.width <= 0.2, est.N_lo,
                 "N_lo > 4/pi, width <= 0.2")


def run_suite(grid: RadialGrid, l_max: int = 4, r0: float = 1e-2, cs=(5.0, 10.0, 20.0, 40.0), jobs: int = 1) -> list[Check]:
    """All invariants on ``grid`` (normalized state) plus fixed-size relativistic checks."""
    state = solve_nr_normalized(grid)
    checks = [Check("Euler-Lagrange residual", state.residual <= 1e-8, state.residual, "<= 1e-8")]
    checks += _virial(state)
    checks.append(_shooting(state))
    checks += _sectors(state, l_max)
    checks.append(_kernel(state, l_max, r0, "kernel count (nonrelativistic)"))
    g_rel = make_grid(1000, 40.0)
    for c in (10.0, 20.0):
        checks.append(_kernel(solve_rel(g_rel, 1.0, c, 1.0), l_max, r0, f"kernel count (c = {c:g})"))
    checks += _heat()
    checks.append(_newton_fast_vs_dense(grid, state.Q.values))
    checks += _wronskian(state)
    checks += _limits(cs, jobs)
    checks.append(_energy())
    checks.append(_critical())
    return checks
