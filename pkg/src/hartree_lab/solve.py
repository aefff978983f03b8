"""Ground-state solvers for the Choquard and pseudo-relativistic Hartree equations.

Two independent routes for the normalized equation
``-Delta Q - (|x|^-1 * Q^2) Q = -Q``:

* :func:`solve_nr_normalized` / :func:`solve_nr`: Petviashvili-stabilised
  resolvent iteration on the radial grid, diagonal in the DST basis.
* :func:`shoot_threshold`: bisection on the central value of the radial
  initial-value problem, integrated with RK4 in pure Python.

:func:`solve_rel` reuses the Petviashvili machinery with the relativistic
symbol and an outer secant iteration on the spectral shift to hit a target mass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson, trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.special import hyp1f1, hyperu

from .coulomb import FOUR_PI, newton_values
from .errors import (
    BracketFailure,
    Collapse,
    DomainError,
    GridMismatch,
    InvalidArgument,
    NoConvergence,
    ResampleOutOfRange,
    SizeExceeded,
)
from .grid import (
    RadialGrid,
    RadialProfile,
    apply_symbol,
    dst,
    kinetic,
    mass,
    profile_to_csv,
    radial_derivative,
)

MAX_DENSE = 4000
GAMMA_BLOWUP = 1e8
CENTRAL_GROWTH = 10.0
# mass of the normalized Choquard ground state, used only for initial guesses
N_NORMALIZED = 3.5053
SLOPE_MIN_STEP = 1e-6


# ---------------------------------------------------------------------------
# parameters and results


@dataclass(frozen=True)
class ModelParams:
    """Model parameters with exactly one target: the multiplier or the mass ``N``.

    For ``model="nonrelativistic"`` the multiplier is ``lambda > 0``; for
    ``model="relativistic"`` it is ``mu`` from ``T_c Q - Phi Q = -mu Q``.
    """

    model: str
    m: float
    c: Optional[float] = None
    multiplier: Optional[float] = None
    N: Optional[float] = None

    def __post_init__(self):
        if self.model not in ("nonrelativistic", "relativistic"):
            raise InvalidArgument(f"unknown model {self.model!r}")
        if not self.m > 0:
            raise InvalidArgument("m must be positive")
        if self.model == "relativistic" and not (self.c is not None and self.c > 0):
            raise InvalidArgument("relativistic model needs c > 0")
        if (self.multiplier is None) == (self.N is None):
            raise InvalidArgument("specify exactly one of multiplier and N")
        if self.N is not None and not self.N > 0:
            raise InvalidArgument("target mass must be positive")

    @property
    def relativistic(self) -> bool:
        return self.model == "relativistic"

    def to_dict(self) -> dict:
        return {"model": self.model, "m": self.m, "c": self.c, "multiplier": self.multiplier, "N": self.N}


@dataclass(frozen=True, eq=False)
class GroundState:
    Q: RadialProfile = field(repr=False)
    multiplier: float
    params: ModelParams
    mass: float
    energy: float
    residual: float
    iterations: int = 0
    gamma: float = 1.0

    @property
    def grid(self) -> RadialGrid:
        return self.Q.grid

    @property
    def lam(self) -> float:
        """``lambda`` of the nonrelativistic equation."""
        if self.params.relativistic:
            raise InvalidArgument("lambda is defined for nonrelativistic states only")
        return self.multiplier

    def to_dict(self) -> dict:
        p = self.params
        return {
            "model": p.model,
            "m": p.m,
            "c": p.c,
            "N": self.mass,
            "multiplier": self.multiplier,
            "energy": self.energy,
            "residual": self.residual,
            "grid": self.grid.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def profile_csv(self) -> str:
        return profile_to_csv(self.Q)


# ---------------------------------------------------------------------------
# energies and residuals


def hartree_term(psi: RadialProfile) -> float:
    """``int (|x|^-1 * |psi|^2) |psi|^2``."""
    rho = psi.values**2
    return float(np.dot(psi.grid.weights, newton_values(psi.grid, rho) * rho))


def energy_nr(psi: RadialProfile, m: float) -> float:
    """``(1/2m) int |grad psi|^2 - (1/2) int (|x|^-1 * psi^2) psi^2``.

    The kinetic term is the quadratic form of the discrete Laplacian, so the
    energy is exactly the functional whose critical points the solvers find.
    """
    return kinetic(psi) / (2.0 * m) - 0.5 * hartree_term(psi)


def _rel_excess_symbol(grid: RadialGrid, m: float, c: float) -> np.ndarray:
    """``sqrt(c^2 k^2 + m^2 c^4) - m c^2`` without cancellation."""
    k2 = grid.spectral_symbol
    return c * c * k2 / (np.sqrt(c * c * k2 + (m * c * c) ** 2) + m * c * c)


def relativistic_kinetic(psi: RadialProfile, m: float, c: float) -> float:
    """``<psi, sqrt(-c^2 Delta + m^2 c^4) psi>`` in the l = 0 DST basis."""
    grid = psi.grid
    uh = dst(grid.nodes * psi.values)
    excess = FOUR_PI * grid.h * float(np.dot(_rel_excess_symbol(grid, m, c), uh * uh))
    return m * c * c * mass(psi) + excess


def energy_rel(psi: RadialProfile, m: float, c: float) -> float:
    """``<psi, sqrt(-c^2 Delta + m^2 c^4) psi> - (1/2) int (|x|^-1 * psi^2) psi^2``."""
    return relativistic_kinetic(psi, m, c) - 0.5 * hartree_term(psi)


def _defect_norm(grid: RadialGrid, d: np.ndarray) -> float:
    return float(np.sqrt(np.dot(grid.weights, d * d)))


def _nr_symbol(grid: RadialGrid, m: float, lam: float) -> np.ndarray:
    return grid.spectral_symbol / (2.0 * m) + lam


def _rel_symbol(grid: RadialGrid, m: float, c: float, z: float) -> np.ndarray:
    return _rel_excess_symbol(grid, m, c) + z


def _defect_hat(grid: RadialGrid, symbol: np.ndarray, u: np.ndarray) -> np.ndarray:
    """DST coefficients of ``r (A u - Phi u)``."""
    r = grid.nodes
    return symbol * dst(r * u) - dst(r * newton_values(grid, u * u) * u)


def el_residual(state: GroundState) -> float:
    """Discrete L2 norm of the Euler-Lagrange defect of ``state``."""
    p = state.params
    grid = state.grid
    if p.relativistic:
        sym = _rel_symbol(grid, p.m, p.c, state.multiplier + p.m * p.c * p.c)
    else:
        sym = _nr_symbol(grid, p.m, state.multiplier)
    d = _defect_hat(grid, sym, state.Q.values)
    return math.sqrt(FOUR_PI * grid.h * float(np.dot(d, d)))


# ---------------------------------------------------------------------------
# Petviashvili core


@dataclass
class _PetResult:
    u: np.ndarray
    gamma: float
    iterations: int
    residual: float


def _petviashvili(grid: RadialGrid, symbol: np.ndarray, u: np.ndarray, tol: float, max_iter: int,
                  central_cap: float = np.inf, min_iter: int = 0) -> _PetResult:
    """Iterate ``u <- gamma^{3/2} A^{-1} [(|x|^-1 * u^2) u]`` with ``A`` diagonal in the DST basis.

    ``gamma = <u, A u> / <u, (|x|^-1 * u^2) u>`` drives the amplitude onto the
    fixed point; the returned residual is the L2 norm of ``A u - Phi u``.
    ``min_iter`` forces updates when warm-starting after a change of ``A``.

    The state is kept as DST coefficients of ``r u`` so the large high-mode
    symbol only ever multiplies coefficients that were divided by it, and
    the defect norm is taken by Parseval (``sum w d^2 = 4 pi h sum d_hat^2``).
    """
    r = grid.nodes
    scale = FOUR_PI * grid.h
    uh = dst(r * u)
    first_row = dst(np.eye(1, grid.n).ravel()) / r[0]  # u[0] = first_row @ uh
    for it in range(1, max_iter + 1):
        u = dst(uh) / r
        nh = dst(r * newton_values(grid, u * u) * u)
        au = symbol * uh
        gamma = float(np.dot(uh, au) / np.dot(uh, nh))
        d = au - nh
        res = math.sqrt(scale * float(np.dot(d, d)))
        if res <= tol and it > min_iter:
            return _PetResult(u, gamma, it, res)
        if not np.isfinite(gamma) or gamma <= 0 or gamma > GAMMA_BLOWUP:
            raise Collapse(f"stabilisation factor diverged (gamma = {gamma:.3g}) after {it} iterations")
        uh = gamma**1.5 * nh / symbol
        if abs(float(np.dot(first_row, uh))) > central_cap:
            raise Collapse(f"central value grew past {central_cap:.3g} after {it} iterations")
    raise NoConvergence(f"Petviashvili iteration did not reach tol={tol:g} in {max_iter} iterations (residual {res:.3g})")


def _check_tol(tol: float):
    if not 1e-14 <= tol <= 1e-4:
        raise InvalidArgument(f"tol must lie in [1e-14, 1e-4], got {tol}")


def _log_secant(f, x0: float, x1: float, target_tol: float, max_outer: int):
    """Root of ``f(log x)`` by secant in ``log x`` with bisection fallback.

    ``f`` returns ``(value, payload)``; the value must be increasing in ``x``.
    """
    s0, s1 = math.log(x0), math.log(x1)
    f0, p0 = f(math.exp(s0))
    if abs(f0) <= target_tol:
        return math.exp(s0), p0
    f1, p1 = f(math.exp(s1))
    lo = hi = None
    for s, fv in ((s0, f0), (s1, f1)):
        if fv < 0:
            lo = s if lo is None else max(lo, s)
        else:
            hi = s if hi is None else min(hi, s)
    slope = None
    for _ in range(max_outer):
        if abs(f1) <= target_tol:
            return math.exp(s1), p1
        # a slope from nearly coincident points is dominated by solver noise
        if abs(s1 - s0) > SLOPE_MIN_STEP and f1 != f0:
            slope = (f1 - f0) / (s1 - s0)
        if slope is not None and slope > 0:
            s2 = s1 - f1 / slope
        else:
            s2 = s1 + (0.5 if f1 < 0 else -0.5)
        if lo is not None and hi is not None and not lo < s2 < hi:
            s2 = 0.5 * (lo + hi)
        s2 = min(max(s2, s1 - 2.0), s1 + 2.0)
        s0, f0 = s1, f1
        s1 = s2
        f1, p1 = f(math.exp(s1))
        if f1 < 0:
            lo = s1 if lo is None else max(lo, s1)
        else:
            hi = s1 if hi is None else min(hi, s1)
    raise NoConvergence("mass targeting did not converge")


def _mass_inner_tol(tol: float, mass_rtol: float, shift: float, N: float) -> float:
    """Inner residual tolerance fine enough to resolve the mass to ``mass_rtol``.

    A residual ``d`` moves the state by about ``d / shift`` (the spectral shift
    bounds the inverse), so the relative mass error is ``~ 2 d / (shift sqrt(N))``.
    """
    return max(min(tol, 0.1 * mass_rtol * shift * math.sqrt(N)), 1e-14)


def _initial_guess(grid: RadialGrid, m: float, lam: float) -> np.ndarray:
    # e^{-r^2} in the variables of the normalized equation
    b = math.sqrt(2.0 * m * lam)
    return b * b / math.sqrt(2.0 * m) * np.exp(-((b * grid.nodes) ** 2))


def _nr_state(grid, m, lam, pet: _PetResult, params: ModelParams) -> GroundState:
    Q = RadialProfile(grid, np.abs(pet.u))
    return GroundState(Q, float(lam), params, mass(Q), energy_nr(Q, m), pet.residual, pet.iterations, pet.gamma)


# ---------------------------------------------------------------------------
# nonrelativistic solvers


def solve_nr(grid: RadialGrid, m: float = 0.5, lam: Optional[float] = None, N: Optional[float] = None,
             tol: float = 1e-10, max_iter: int = 5000, mass_rtol: float = 1e-9) -> GroundState:
    """Ground state of ``-(1/2m) Delta Q - (|x|^-1 * Q^2) Q = -lambda Q``.

    Give either ``lam`` or the target mass ``N``; in the latter case an outer
    secant iteration on ``log lambda`` matches ``mass(Q) = N``.
    """
    _check_tol(tol)
    params = ModelParams("nonrelativistic", m, multiplier=lam, N=N)
    if lam is not None:
        if not lam > 0:
            raise InvalidArgument("lambda must be positive")
        pet = _petviashvili(grid, _nr_symbol(grid, m, lam), _initial_guess(grid, m, lam), tol, max_iter)
        return _nr_state(grid, m, lam, pet, params)

    state = {"u": None}

    def mismatch(lam_k):
        u0 = state["u"] if state["u"] is not None else _initial_guess(grid, m, lam_k)
        inner = _mass_inner_tol(tol, mass_rtol, lam_k, N)
        pet = _petviashvili(grid, _nr_symbol(grid, m, lam_k), u0, inner, max_iter, min_iter=3)
        state["u"] = pet.u
        return math.log(float(np.dot(grid.weights, pet.u**2)) / N), pet

    lam0 = 2.0 * m * (N / N_NORMALIZED) ** 2
    lam_star, pet = _log_secant(mismatch, lam0, lam0 * 1.05, mass_rtol, 60)
    return _nr_state(grid, m, lam_star, pet, params)


def solve_nr_normalized(grid: RadialGrid, tol: float = 1e-10, max_iter: int = 5000) -> GroundState:
    """Normalized Choquard ground state (``m = 1/2``, ``lambda = 1``) from the initial guess ``e^{-r^2}``."""
    return solve_nr(grid, m=0.5, lam=1.0, tol=tol, max_iter=max_iter)


def rescale(state: GroundState, b: float) -> GroundState:
    """``b^2 Q(b r)`` resampled onto the same grid; ``lambda -> b^2 lambda``, ``N -> b N``.

    The profile is interpolated with a cubic spline that is even about the
    origin; beyond the last node it is taken as zero.
    """
    if state.params.relativistic:
        raise InvalidArgument("rescale applies to nonrelativistic states")
    if not b > 0:
        raise InvalidArgument("b must be positive")
    grid = state.grid
    q = state.Q.values
    support = _support_radius(state.Q)
    if b * grid.r_max < support:
        raise ResampleOutOfRange(f"b = {b} would need the profile beyond r = {b * grid.r_max:.3g} (support {support:.3g})")
    if b == 1.0:
        return state
    r = grid.nodes
    spline = CubicSpline(np.concatenate((-r[::-1], [0.0], r, [grid.r_max])),
                         np.concatenate((q[::-1], [(4 * q[0] - q[1]) / 3.0], q, [0.0])))
    x = b * r
    vals = np.where(x < grid.r_max, spline(np.minimum(x, grid.r_max)), 0.0)
    Q = RadialProfile(grid, b * b * vals)
    p = state.params
    lam = b * b * state.multiplier
    params = ModelParams("nonrelativistic", p.m, multiplier=lam if p.multiplier is not None else None,
                         N=b * p.N if p.N is not None else None)
    out = GroundState(Q, lam, params, mass(Q), energy_nr(Q, p.m), 0.0)
    return GroundState(Q, lam, params, out.mass, out.energy, el_residual(out))


def _support_radius(Q: RadialProfile, rel: float = 1e-12) -> float:
    v = np.abs(Q.values)
    above = np.nonzero(v > rel * v.max())[0]
    return float(Q.grid.nodes[above[-1]]) if above.size else 0.0


# ---------------------------------------------------------------------------
# relativistic solver


def solve_rel(grid: RadialGrid, m: float, c: float, N: float, tol: float = 1e-10, max_iter: int = 5000,
              mass_rtol: float = 1e-9, initial: Optional[GroundState] = None) -> GroundState:
    """Ground state of ``sqrt(-c^2 Delta + m^2 c^4) Q - (|x|^-1 * Q^2) Q = -mu Q`` at mass ``N``.

    Inner loop: Petviashvili iteration with the resolvent
    ``(sqrt(c^2 k^2 + m^2 c^4) - m c^2 + z)^-1``, diagonal in the DST basis.
    Outer loop: secant on ``log z`` until ``mass(Q) = N``; then ``mu = z - m c^2``.

    Raises :class:`Collapse` when the iteration concentrates (central value
    more than ten times that of the nonrelativistic state of the same mass, or
    a diverging stabilisation factor).
    """
    _check_tol(tol)
    params = ModelParams("relativistic", m, c=c, N=N)
    start = initial if initial is not None else solve_nr(grid, m=m, N=N, tol=max(tol, 1e-9), max_iter=max_iter)
    cap = CENTRAL_GROWTH * abs(start.Q.values[0])
    state = {"u": start.Q.values.copy()}

    def mismatch(z):
        inner = _mass_inner_tol(tol, mass_rtol, z, N)
        pet = _petviashvili(grid, _rel_symbol(grid, m, c, z), state["u"], inner, max_iter, central_cap=cap, min_iter=3)
        state["u"] = pet.u
        return math.log(float(np.dot(grid.weights, pet.u**2)) / N), pet

    z0 = start.multiplier if not start.params.relativistic else start.multiplier + m * c * c
    z_star, pet = _log_secant(mismatch, z0, z0 * 1.05, mass_rtol, 80)
    Q = RadialProfile(grid, np.abs(pet.u))
    mu = z_star - m * c * c
    return GroundState(Q, mu, params, mass(Q), energy_rel(Q, m, c), pet.residual, pet.iterations, pet.gamma)


@lru_cache(maxsize=12)
def _sqrt_operator_cached(grid: RadialGrid, ell: int, m: float, c: float) -> np.ndarray:
    h2 = grid.h**2
    r = grid.nodes
    diag = 2.0 / h2 + ell * (ell + 1) / r**2
    off = -np.ones(grid.n - 1) / h2
    lam, U = eigh_tridiagonal(diag, off)
    f = np.sqrt(c * c * np.maximum(lam, 0.0) + (m * c * c) ** 2)
    out = (U * f) @ U.T
    out = 0.5 * (out + out.T)
    out.setflags(write=False)
    return out


def sqrt_operator_sector(grid: RadialGrid, ell: int, m: float, c: float) -> np.ndarray:
    """``sqrt(c^2 L_(l) + m^2 c^4)`` for the discrete sector Laplacian, as a symmetric matrix.

    The matrix acts on ``u = r f`` (equivalently it is the ``sqrt(w)``-conjugated
    form of the operator on profile values), built from the full
    eigendecomposition of the tridiagonal ``L_(l)`` and cached per
    ``(grid, l, m, c)``.
    """
    if grid.n > MAX_DENSE:
        raise SizeExceeded(f"dense sector operators are limited to n <= {MAX_DENSE}")
    if int(ell) != ell or ell < 0:
        raise InvalidArgument("l must be a nonnegative integer")
    if m < 0 or not c > 0:
        raise InvalidArgument("need m >= 0 and c > 0")
    return _sqrt_operator_cached(grid, int(ell), float(m), float(c))


# ---------------------------------------------------------------------------
# shooting


@dataclass(frozen=True)
class ShootingParams:
    """Integration controls for :func:`shoot_threshold` (lengths in IVP units)."""

    dr: float = 1e-3
    r_cap: float = 200.0
    blowup: float = 10.0
    # 0 bisects to floating-point resolution (well inside any 1e-12 width)
    rel_width: float = 0.0
    # the tail-junction error scales like sqrt(trust); 1e-6 puts it near 1e-13
    trust: float = 1e-6
    max_bisect: int = 200


@dataclass(frozen=True, eq=False)
class ShootingResult:
    v0_lo: float
    v0_hi: float
    v0_star: float
    trace: tuple
    r: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    trust_radius: float
    lambda_v: float
    mass_v: float

    @property
    def kappa(self) -> float:
        return math.sqrt(self.lambda_v)

    @property
    def q0(self) -> float:
        """Central value of the normalized ground state, ``v0 / lambda_v``."""
        return self.v0_star / self.lambda_v

    def normalized_profile(self, grid: RadialGrid, dirichlet: bool = True) -> RadialProfile:
        """Threshold solution mapped to the normalized equation and sampled on ``grid``.

        ``Q(kappa s) = v(s) / kappa^2`` inside the trust radius; outside it a
        Whittaker tail ``C W_{k,1/2}(2r) / r`` solves the equation with the
        enclosed-mass Coulomb potential ``N / r``.  With ``dirichlet`` the tail
        also vanishes at ``grid.r_max`` (a multiple of the growing solution
        ``M_{k,1/2}`` is subtracted), matching the truncated problem.
        """
        k = self.kappa
        rr = self.r * k
        qq = self.v / (k * k)
        spline = CubicSpline(rr, qq)
        r_t = rr[-1]
        n_q = self.mass_v / k  # mass scales as kappa^-1
        tail = _coulomb_tail(n_q, grid.r_max if dirichlet else None)
        C = qq[-1] / tail(r_t)
        x = grid.nodes
        inside = x <= r_t
        vals = np.empty_like(x)
        vals[inside] = spline(np.maximum(x[inside], rr[0]))
        vals[~inside] = C * tail(x[~inside])
        return RadialProfile(grid, vals)


def _coulomb_tail(n_enclosed: float, r_zero: Optional[float] = None):
    """Decaying solution ``W_{k,1/2}(2r)`` of ``-u'' + u - (N/r) u = 0``, divided by ``r``.

    ``k = N/2``.  If ``r_zero`` is given, the combination vanishing there is
    returned instead (Dirichlet truncation).
    """
    kk = 0.5 * n_enclosed

    def whittaker_w(z):
        return np.exp(-z / 2.0) * z * hyperu(1.0 - kk, 2.0, z)

    def whittaker_m(z):
        return np.exp(-z / 2.0) * z * hyp1f1(1.0 - kk, 2.0, z)

    ratio = 0.0 if r_zero is None else whittaker_w(2.0 * r_zero) / whittaker_m(2.0 * r_zero)

    def tail(r):
        r = np.asarray(r, dtype=float)
        z = 2.0 * r
        return (whittaker_w(z) - ratio * whittaker_m(z)) / r

    return tail


def _moments_with_tail(r_c: float, v_c: float, a_c: float, b_c: float):
    """``A(inf)``, ``B(inf)`` including the Coulomb tail beyond the trust radius.

    Beyond ``r_c`` the IVP reads ``-Delta v + kappa^2 v - (N/r) v = 0`` with
    ``kappa^2 = 4 pi B(inf) - 1`` and ``N = 4 pi A(inf)``; two fixed-point
    passes settle the (tiny) tail moments.
    """
    a_inf, b_inf = a_c, b_c
    for _ in range(3):
        kappa = math.sqrt(FOUR_PI * b_inf - 1.0)
        prof = _coulomb_tail(FOUR_PI * a_inf / kappa)
        # tail(r) solves the kappa = 1 problem; v(s) = C tail(kappa s)
        C = v_c / prof(kappa * r_c)
        s = r_c + np.linspace(0.0, 60.0 / kappa, 4001)
        v2 = (C * prof(kappa * s)) ** 2
        a_inf = a_c + float(trapezoid(s * s * v2, s))
        b_inf = b_c + float(trapezoid(s * v2, s))
    return a_inf, b_inf


def _ivp_rhs(r, v, p, a, b):
    i = FOUR_PI * (b - a / r)
    return p, -2.0 / r * p - v + i * v, r * r * v * v, r * v * v


def _integrate(v0: float, prm: ShootingParams, store: bool):
    """RK4 for ``-v'' - (2/r) v' - v + (int_0^r K(r,s) v^2 ds) v = 0``, ``v(0) = v0``, ``v'(0) = 0``.

    The moment is ``4 pi (B - A/r)`` with ``A' = r^2 v^2`` and ``B' = r v^2``.
    The first step uses the Taylor expansion at the origin.
    """
    dr = prm.dr
    c2 = -v0 / 6.0
    c4 = (v0 / 6.0 + (2.0 * math.pi / 3.0) * v0**3) / 20.0
    r = dr
    v = v0 + c2 * r * r + c4 * r**4
    p = 2.0 * c2 * r + 4.0 * c4 * r**3
    a = v0 * v0 * r**3 / 3.0
    b = v0 * v0 * r * r / 2.0
    rs, vs, bs, as_ = ([], [], [], []) if store else (None, None, None, None)
    h2 = 0.5 * dr
    cap = prm.blowup * v0
    while r < prm.r_cap:
        if store:
            rs.append(r)
            vs.append(v)
            as_.append(a)
            bs.append(b)
        if v < 0.0:
            return "crossed-zero", (rs, vs, as_, bs)
        if v > cap and p > 0.0:
            return "blew-up", (rs, vs, as_, bs)
        k1 = _ivp_rhs(r, v, p, a, b)
        k2 = _ivp_rhs(r + h2, v + h2 * k1[0], p + h2 * k1[1], a + h2 * k1[2], b + h2 * k1[3])
        k3 = _ivp_rhs(r + h2, v + h2 * k2[0], p + h2 * k2[1], a + h2 * k2[2], b + h2 * k2[3])
        k4 = _ivp_rhs(r + dr, v + dr * k3[0], p + dr * k3[1], a + dr * k3[2], b + dr * k3[3])
        s = dr / 6.0
        v += s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p += s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        a += s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        b += s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        r += dr
    # unresolved at the cap: classify by the trend
    return ("blew-up" if p > 0 else "crossed-zero"), (rs, vs, as_, bs)


def classify(v0: float, prm: ShootingParams = ShootingParams()) -> str:
    """``"crossed-zero"`` or ``"blew-up"`` for the IVP started at ``v0``."""
    if not v0 > 0:
        raise DomainError("v0 must be positive")
    return _integrate(v0, prm, False)[0]


def shoot_threshold(ode_params: ShootingParams = ShootingParams(), bracket=(1e-3, 50.0)) -> ShootingResult:
    """Bisect on ``v0`` for the threshold between zero-crossing and blow-up.

    The returned trajectory is the midpoint solution cut at the radius where
    the two bracket solutions differ by ``ode_params.trust`` relative.
    """
    prm = ode_params
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise InvalidArgument("bracket must satisfy 0 < lo < hi")
    trace = []

    def probe(x):
        cls = classify(x, prm)
        trace.append((x, cls))
        return cls

    c_lo, c_hi = probe(lo), probe(hi)
    while c_lo == c_hi:
        if c_lo == "crossed-zero":
            if hi >= 100.0:
                raise BracketFailure("no blow-up found for v0 in (0, 100]")
            lo, hi = hi, min(2.0 * hi, 100.0)
            c_hi = probe(hi)
        else:
            if lo < 1e-8:
                raise BracketFailure("no zero crossing found for v0 in (0, 100]")
            lo, hi = lo / 10.0, lo
            c_lo = probe(lo)
    # the lower end crosses zero, the upper end blows up (or vice versa)
    low_cls = c_lo
    for _ in range(prm.max_bisect):
        mid = 0.5 * (lo + hi)
        if hi - lo <= prm.rel_width * mid or not lo < mid < hi:
            break
        if probe(mid) == low_cls:
            lo = mid
        else:
            hi = mid
    star = 0.5 * (lo + hi)
    _, (r_l, v_l, _, _) = _integrate(lo, prm, True)
    _, (r_h, v_h, _, _) = _integrate(hi, prm, True)
    _, (r_s, v_s, a_s, b_s) = _integrate(star, prm, True)
    k = min(len(v_l), len(v_h), len(v_s))
    vl, vh, vs = np.array(v_l[:k]), np.array(v_h[:k]), np.array(v_s[:k])
    div = np.abs(vl - vh) > prm.trust * np.abs(vs)
    cut = int(np.argmax(div)) if np.any(div) else k
    cut = max(cut, 8)
    a_inf, b_inf = _moments_with_tail(r_s[cut - 1], vs[cut - 1], a_s[cut - 1], b_s[cut - 1])
    return ShootingResult(
        v0_lo=lo,
        v0_hi=hi,
        v0_star=star,
        trace=tuple(trace),
        r=np.array(r_s[:cut]),
        v=vs[:cut],
        trust_radius=float(r_s[cut - 1]),
        lambda_v=FOUR_PI * b_inf - 1.0,
        mass_v=FOUR_PI * a_inf,
    )


# ---------------------------------------------------------------------------
# Wronskian identity


def _even_origin_value(f: np.ndarray) -> float:
    """``f(0)`` from the even quartic through ``f(h), f(2h), f(3h)``."""
    return float((15.0 * f[0] - 6.0 * f[1] + f[2]) / 10.0)


def derivative4(grid: RadialGrid, f) -> np.ndarray:
    """Fourth-order centered ``f'(r_i)`` for an even function of ``r``.

    Ghost values left of the origin come from evenness; the last node
    falls back to second order with ``f(r_max) = 0``.
    """
    f = np.asarray(f, dtype=float)
    h = grid.h
    n = f.size
    ext = np.concatenate((f[1::-1], [_even_origin_value(f)], f, [0.0, 0.0]))
    # ext[k] holds f at node k - 2 (node 0 is the origin, node n + 1 is r_max)
    out = np.empty(n)
    out[:-1] = (ext[1:n] - 8.0 * ext[2 : n + 1] + 8.0 * ext[4 : n + 3] - ext[5 : n + 4]) / (12.0 * h)
    out[-1] = (ext[n + 3] - ext[n + 1]) / (2.0 * h)
    return out


def cumulative_radial(grid: RadialGrid, g: np.ndarray) -> np.ndarray:
    """``int_0^{r_i} g(s) ds`` by cumulative Simpson with ``g(0) = 0``."""
    g = np.asarray(g, dtype=float)
    return cumulative_simpson(np.concatenate(([0.0], g)), dx=grid.h, initial=0.0)[1:]


def wronskian_residual(Q: RadialProfile, v: RadialProfile, W_of_v: RadialProfile) -> RadialProfile:
    """``r^2 (Q v' - Q' v) - int_0^r s^2 Q(s) (W v)(s) ds`` on the grid.

    Vanishes in the continuum when ``-Delta Q + Q - Phi Q = 0`` and
    ``-Delta v + v - Phi v + W v = 0``.  Derivatives and the running
    integral are fourth order, so the discrete residual is limited by the
    accuracy of the inputs rather than by this check.
    """
    if not (Q.grid == v.grid == W_of_v.grid):
        raise GridMismatch("Q, v and W v must share a grid")
    grid = Q.grid
    r = grid.nodes
    lhs = r * r * (Q.values * derivative4(grid, v.values) - derivative4(grid, Q.values) * v.values)
    rhs = cumulative_radial(grid, r * r * Q.values * W_of_v.values)
    return RadialProfile(grid, lhs - rhs)
