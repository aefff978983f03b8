"""Linearized operators around a ground state, their sector restrictions, and spectral diagnostics.

Every operator ``A`` here is self-adjoint in the weighted inner product
``<f, g>_w = sum_i w_i f_i g_i``.  Since ``sqrt(w_i)`` is proportional to
``r_i``, the conjugated matrix ``S = diag(r) A diag(1/r)`` is symmetric in the
plain sense; :class:`SectorOperator` stores ``S`` and eigenvectors ``y`` map
back to profiles by ``f = y / sqrt(w)`` (already unit-normalized in ``<,>_w``).

Sector ``l = 0`` uses the spectral Laplacian (the one the ground-state solvers
use), sectors ``l >= 1`` the second-difference Laplacian plus ``l(l+1)/r^2``.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh

from .coulomb import FOUR_PI, newton_linearized_values, newton_values, w_sector_values
from .errors import AmbiguousCount, EigensolverFailure, InvalidArgument, SizeExceeded
from .grid import RadialGrid, RadialProfile, apply_symbol, radial_derivative, sector_laplacian_values
from .solve import MAX_DENSE, GroundState, _rel_excess_symbol, derivative4, sqrt_operator_sector

KINDS = ("plus-nr", "minus-nr", "plus-rel")
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SectorOperator:
    ell: int
    kind: str
    matrix: np.ndarray = field(repr=False)
    state: GroundState = field(repr=False)
    asymmetry: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown operator kind {self.kind!r}")
        if self.kind == "minus-nr" and self.ell != 0:
            raise InvalidArgument("L_- is only defined at l = 0")

    @property
    def grid(self) -> RadialGrid:
        return self.state.grid

    def apply(self, f) -> RadialProfile:
        """``A f`` for a profile ``f`` through the stored symmetric form."""
        r = self.grid.nodes
        vals = np.asarray(getattr(f, "values", f), dtype=float)
        return RadialProfile(self.grid, (self.matrix @ (r * vals)) / r)

    def form(self, f, g) -> float:
        """``<f, A g>_w``."""
        r = self.grid.nodes
        c = FOUR_PI * self.grid.h
        fv = np.asarray(getattr(f, "values", f), dtype=float)
        gv = np.asarray(getattr(g, "values", g), dtype=float)
        return float(c * (r * fv) @ self.matrix @ (r * gv))

    @property
    def threshold(self) -> float:
        """Bottom of the continuous spectrum: ``lambda`` (nr) or ``mu + m c^2`` (rel)."""
        p = self.state.params
        return self.state.multiplier + (p.m * p.c * p.c if p.relativistic else 0.0)


@dataclass(frozen=True, eq=False)
class SpectralReport:
    ell: int
    kind: str
    eigenvalues: np.ndarray
    ground_eigenfunction: RadialProfile = field(repr=False)
    sign_definite: bool
    gap_bound: Optional[float] = None
    count_in_unit_interval: int = 0
    eigenfunctions: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "kind": self.kind,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "sign_definite": bool(self.sign_definite),
            "gap_bound": None if self.gap_bound is None else float(self.gap_bound),
            "count_in_unit_interval": int(self.count_in_unit_interval),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def eigenfunctions_csv(self) -> str:
        """Long-format CSV ``index,r,value`` of the computed eigenfunctions."""
        funcs = self.eigenfunctions if self.eigenfunctions is not None else self.ground_eigenfunction.values[:, None]
        r = self.ground_eigenfunction.grid.nodes
        lines = ["index,r,value"]
        for k in range(funcs.shape[1]):
            lines += [f"{k},{ri!r},{vi!r}" for ri, vi in zip(r.tolist(), funcs[:, k].tolist())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class NullspaceDiagnostics:
    resid_translation: float
    R_profile: RadialProfile = field(repr=False)
    resid_R: float
    tau: float
    sigma_functional: Callable = field(repr=False)
    kernel_counts: dict = field(default_factory=dict)

    @property
    def tau_ok(self) -> bool:
        return abs(self.tau - 1.0) > 0.05


# ---------------------------------------------------------------------------
# assembly


def _conjugate(grid: RadialGrid, a_f: np.ndarray) -> tuple[np.ndarray, float]:
    r = grid.nodes
    s = r[:, None] * a_f / r[None, :]
    asym = float(np.max(np.abs(s - s.T)))
    return 0.5 * (s + s.T), asym


def _laplacian_columns(grid: RadialGrid, ell: int, eye: np.ndarray) -> np.ndarray:
    if ell == 0:
        return apply_symbol(grid, eye, grid.spectral_symbol)
    return sector_laplacian_values(grid, eye, ell)


def _nonlocal_columns(grid: RadialGrid, ell: int, q: np.ndarray, eye: np.ndarray) -> np.ndarray:
    if ell == 0:
        return newton_linearized_values(grid, q, eye)
    return w_sector_values(grid, ell, q, eye)


def _check_nr(state: GroundState):
    if state.params.relativistic:
        raise InvalidArgument("expected a nonrelativistic ground state")


def _check_ell(ell):
    if int(ell) != ell or ell < 0:
        raise InvalidArgument("l must be a nonnegative integer")


def _check_size(grid: RadialGrid):
    if grid.n > MAX_DENSE:
        raise SizeExceeded(f"dense sector operators are limited to n <= {MAX_DENSE}")


def assemble_sector_nr(ell: int, state: GroundState) -> SectorOperator:
    """Dense ``L_{+,(l)} = (1/2m) (-Delta_(l)) + lambda - Phi + W_(l)``.

    At ``l = 0`` the nonlocal part is the full ``-2 Q (|x|^-1 * (Q .))``,
    including the rank-one far term.  Columns come from applying the fast
    operators to the identity.
    """
    _check_ell(ell)
    _check_nr(state)
    grid = state.grid
    _check_size(grid)
    m = state.params.m
    q = state.Q.values
    eye = np.eye(grid.n)
    a = _laplacian_columns(grid, ell, eye) / (2.0 * m)
    a += _nonlocal_columns(grid, ell, q, eye)
    a[np.diag_indices(grid.n)] += state.multiplier - newton_values(grid, q * q)
    s, asym = _conjugate(grid, a)
    return SectorOperator(int(ell), "plus-nr", s, state, asym)


def assemble_lminus(state: GroundState) -> SectorOperator:
    """Dense ``L_- = (1/2m)(-Delta) + lambda - Phi`` on radial functions."""
    _check_nr(state)
    grid = state.grid
    _check_size(grid)
    eye = np.eye(grid.n)
    a = _laplacian_columns(grid, 0, eye) / (2.0 * state.params.m)
    a[np.diag_indices(grid.n)] += state.multiplier - newton_values(grid, state.Q.values**2)
    s, asym = _conjugate(grid, a)
    return SectorOperator(0, "minus-nr", s, state, asym)


def assemble_sector_rel(ell: int, state: GroundState) -> SectorOperator:
    """Dense ``L_{+,c,(l)} = sqrt(-c^2 Delta_(l) + m^2 c^4) + mu - Phi + W_(l)``.

    The kinetic part minus ``m c^2`` is combined with ``mu + m c^2`` so that
    no large diagonal cancels.  ``l = 0`` uses the DST multiplier of the
    ground-state solver; ``l >= 1`` the matrix square root of the sector
    Laplacian.
    """
    _check_ell(ell)
    if not state.params.relativistic:
        raise InvalidArgument("expected a relativistic ground state")
    grid = state.grid
    _check_size(grid)
    p = state.params
    mc2 = p.m * p.c * p.c
    q = state.Q.values
    eye = np.eye(grid.n)
    if ell == 0:
        a = apply_symbol(grid, eye, _rel_excess_symbol(grid, p.m, p.c))
    else:
        r = grid.nodes
        excess = sqrt_operator_sector(grid, ell, p.m, p.c) - mc2 * np.eye(grid.n)
        a = excess * r[None, :] / r[:, None]
    a += _nonlocal_columns(grid, ell, q, eye)
    a[np.diag_indices(grid.n)] += (state.multiplier + mc2) - newton_values(grid, q * q)
    s, asym = _conjugate(grid, a)
    return SectorOperator(int(ell), "plus-rel", s, state, asym)


def assemble_sector(ell: int, state: GroundState) -> SectorOperator:
    return assemble_sector_rel(ell, state) if state.params.relativistic else assemble_sector_nr(ell, state)


# ---------------------------------------------------------------------------
# spectra


def _eigh(matrix, **kw):
    try:
        return eigh(matrix, check_finite=False, **kw)
    except (LinAlgError, ValueError) as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverFailure(str(exc)) from exc


def _profile_from_vector(grid: RadialGrid, y: np.ndarray) -> np.ndarray:
    return y / np.sqrt(grid.weights)


def _resolved(y: np.ndarray) -> np.ndarray:
    """Entries above the eigensolver noise floor (about ``1e3 eps`` of the peak)."""
    return np.abs(y) > 1e3 * np.finfo(float).eps * np.max(np.abs(y))


def eigs(op: SectorOperator, k: int = 6) -> SpectralReport:
    """``k`` lowest eigenpairs of ``op`` in the weighted inner product.

    ``count_in_unit_interval`` counts eigenvalues in ``(0, threshold)``; for
    the normalized state the threshold is 1.
    """
    n = op.matrix.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgument(f"k must lie in 1..{n}")
    vals, vecs = _eigh(op.matrix, subset_by_index=[0, k - 1])
    thr = op.threshold
    if vals[-1] < thr:
        below = _eigh(op.matrix, eigvals_only=True, subset_by_value=[-np.inf, thr])
    else:
        below = vals
    count = int(np.sum((below > 0) & (below < thr)))
    grid = op.grid
    funcs = vecs / np.sqrt(grid.weights)[:, None]
    for j in range(funcs.shape[1]):
        nz = np.nonzero(_resolved(funcs[:, j]))[0]
        if funcs[nz[0], j] < 0:
            funcs[:, j] *= -1.0
    phi = RadialProfile(grid, funcs[:, 0])
    y0 = vecs[:, 0]
    sign_def = bool(np.all(np.sign(y0[_resolved(y0)]) == np.sign(funcs[:, 0][_resolved(y0)][0])))
    return SpectralReport(op.ell, op.kind, vals, phi, sign_def, None, count, funcs)


def perron_check(report: SpectralReport) -> tuple[bool, float]:
    """``(flag, margin)``: ground eigenfunction one-signed and ``e_1 - e_0 > 1e-6``.

    Nodes where the eigenfunction sits below the eigensolver noise floor are
    not inspected (deep in the tail the sign is not resolved).  The margin is
    ``min |phi| / max |phi|`` over the inspected nodes.
    """
    phi = report.ground_eigenfunction
    y = phi.values * np.sqrt(phi.grid.weights)
    mask = _resolved(y)
    v = phi.values[mask]
    s = np.sign(v[0])
    one_signed = bool(np.all(s * v > 0))
    margin = float(np.min(np.abs(v)) / np.max(np.abs(v))) if one_signed else 0.0
    ev = np.asarray(report.eigenvalues)
    simple = ev.size < 2 or bool(ev[1] - ev[0] > 1e-6)
    return one_signed and simple, margin


def cosine_similarity(grid: RadialGrid, f, g) -> float:
    fv = np.asarray(getattr(f, "values", f), dtype=float)
    gv = np.asarray(getattr(g, "values", g), dtype=float)
    w = grid.weights
    return float(np.dot(w, fv * gv) / math.sqrt(np.dot(w, fv * fv) * np.dot(w, gv * gv)))


def gap_kernel_factor(ell: int, r, s):
    """``(1/3) r_< / r_>^2 - (1/(2l+1)) r_<^l / r_>^(l+1)``, nonnegative for ``l >= 2``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    lo = np.minimum(r, s)
    hi = np.maximum(r, s)
    x = lo / hi
    return (x / 3.0 - np.exp(ell * np.log(x)) / (2 * ell + 1)) / hi


def k_ell_gap(ell: int, state: GroundState, phi: RadialProfile) -> float:
    """Quadrature value of the lower bound ``K_(l)`` for ``e_{0,(l)}``, ``l >= 2``.

    ``K = (1/2m) sum_i w_i (l(l+1) - 2) phi_i^2 / r_i^2
    + 2 sum_ij w_i w_j Q_i phi_i F_l(r_i, r_j) Q_j phi_j``
    with :func:`gap_kernel_factor` ``F_l``; ``phi`` is normalized in ``<,>_w``
    first.  Evaluated with the dense O(n^2) kernel, independently of the
    prefix-sum operators.
    """
    if ell < 2:
        raise InvalidArgument("the gap bound is defined for l >= 2")
    grid = state.grid
    r = grid.nodes
    w = grid.weights
    f = phi.values / math.sqrt(float(np.dot(w, phi.values**2)))
    cent = (ell * (ell + 1) - 2) / (2.0 * state.params.m) * float(np.dot(w, (f / r) ** 2))
    a = w * state.Q.values * f
    kern = gap_kernel_factor(ell, r[:, None], r[None, :])
    return cent + 2.0 * float(a @ kern @ a)


def kernel_count(state: GroundState, l_max: int = 4, r0: float = 1e-2, jobs: int = 1,
                 per_sector: Optional[dict] = None) -> int:
    """``sum_l (2l+1) #{eigenvalues of L_{+,(l)} in (-r0, r0)}`` for ``l <= l_max``.

    Raises :class:`AmbiguousCount` if an eigenvalue lies within 10% of ``+-r0``.
    ``per_sector``, if given, receives the count of each sector.
    """
    if l_max < 2:
        raise InvalidArgument("l_max must be at least 2")
    if not r0 > 0:
        raise InvalidArgument("r0 must be positive")

    def sector(ell):
        op = assemble_sector(ell, state)
        vals = _eigh(op.matrix, eigvals_only=True, subset_by_value=[-1.1 * r0, 1.1 * r0])
        return ell, np.asarray(vals)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(sector, range(l_max + 1)))
    else:
        results = [sector(ell) for ell in range(l_max + 1)]
    total = 0
    for ell, vals in sorted(results):
        amb = vals[np.abs(vals) >= 0.9 * r0]
        if amb.size:
            raise AmbiguousCount(f"sector l={ell}: eigenvalue {amb[0]:.4g} within 10% of the radius {r0:g}")
        cnt = int(np.sum(np.abs(vals) < r0))
        if per_sector is not None:
            per_sector[ell] = cnt
        total += (2 * ell + 1) * cnt
    return total


def derivative(f: RadialProfile) -> RadialProfile:
    """Centered-difference derivative as a profile."""
    return RadialProfile(f.grid, radial_derivative(f))


def _wall_taper(grid: RadialGrid, start: float = 0.8) -> np.ndarray:
    """Smooth (C-infinity) step from 1 at ``start * r_max`` down to 0 at ``r_max``."""
    x = np.clip((grid.nodes / grid.r_max - start) / (1.0 - start), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / x), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / (1.0 - x)), 0.0)
    return 1.0 - a / (a + b)


def nullspace_diagnostics(state: GroundState, l_max: Optional[int] = None, r0: float = 1e-2) -> NullspaceDiagnostics:
    """Residuals of the scaling and translation identities and ``tau = int Q R / |x|``.

    ``R = 2Q + r Q'`` generates the scaling family, so ``L_+ R = -2 lambda Q``
    (``-2Q`` for the normalized state); ``L_{+,(1)} Q' = 0`` is translation.
    The scaling residual is taken on ``R`` tapered to zero over the outer
    fifth of the grid, so it assumes ``Q`` has decayed there.
    """
    _check_nr(state)
    grid = state.grid
    r = grid.nodes
    w = grid.weights
    q = state.Q.values
    dq = derivative4(grid, q)
    R = 2.0 * q + r * dq
    m = state.params.m
    lam = state.multiplier
    phi = newton_values(grid, q * q)

    def lplus(ell, f):
        return (_laplacian_columns(grid, ell, f) / (2.0 * m) + (lam - phi) * f
                + _nonlocal_columns(grid, ell, q, f))

    def wnorm(f):
        return math.sqrt(float(np.dot(w, f * f)))

    # R does not vanish at r_max, and the spectral l = 0 Laplacian would spread
    # that mismatch over the whole grid; taper it where Q is negligible
    resid_R = wnorm(lplus(0, _wall_taper(grid) * R) + 2.0 * lam * q)
    resid_t = wnorm(lplus(1, dq))

    def sigma(xi) -> float:
        xv = np.asarray(getattr(xi, "values", xi), dtype=float)
        return float(np.dot(w, q * xv / r))

    tau = sigma(R)
    counts = {}
    if l_max is not None:
        kernel_count(state, l_max, r0, per_sector=counts)
    diag = NullspaceDiagnostics(resid_t, RadialProfile(grid, R), resid_R, tau, sigma, counts)
    if not diag.tau_ok:
        warnings.warn(f"tau = {tau:.6g} is within 0.05 of 1", RuntimeWarning, stacklevel=2)
    return diag


# ---------------------------------------------------------------------------
# linearized initial-value problem


@dataclass(frozen=True, eq=False)
class LinearizedShot:
    """Solution of the linearized IVP sampled on the ground-state grid.

    ``v`` and ``W_of_v`` are exact RK4 states at grid nodes up to
    ``r_stop`` and zero beyond it.
    """

    r: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    dv: np.ndarray = field(repr=False)
    wv: np.ndarray = field(repr=False)
    r_stop: float
    growth_rate: float
    v_profile: RadialProfile = field(repr=False)
    W_of_v: RadialProfile = field(repr=False)


def _even_spline(grid: RadialGrid, values: np.ndarray) -> CubicSpline:
    r = grid.nodes
    f0 = (4.0 * values[0] - values[1]) / 3.0
    return CubicSpline(np.concatenate((-r[::-1], [0.0], r)), np.concatenate((values[::-1], [f0], values)))


def linearized_shoot(state: GroundState, v0: float, cap: float = 1e8) -> LinearizedShot:
    """Integrate ``-v'' - (2/r) v' + v - Phi v + W v = 0``, ``v(0) = v0``, ``v'(0) = 0``.

    ``(W v)(r) = 2 Q(r) int_0^r K(r,s) Q(s) v(s) ds`` with
    ``K(r,s) = 4 pi s (1 - s/r)``; both that moment and
    ``Phi(r) = Phi(0) - int_0^r K(r,s) Q(s)^2 ds`` are carried as running
    accumulators.  RK4 with step ``h/2`` so that stages hit nodes and
    midpoints of the grid, where ``Q`` comes from an even cubic spline.
    Integration stops when ``|v| > cap`` or at the last grid node.  The growth
    rate is the slope of ``log |v|`` over the final decade.
    """
    if v0 == 0:
        raise InvalidArgument("v0 must be nonzero")
    p_ = state.params
    if p_.relativistic or abs(p_.m - 0.5) > 1e-12 or abs(state.multiplier - 1.0) > 1e-12:
        raise InvalidArgument("linearized_shoot expects the normalized state (m = 1/2, lambda = 1)")
    grid = state.grid
    q = state.Q.values
    phi_grid = newton_values(grid, q * q)
    phi0 = (4.0 * phi_grid[0] - phi_grid[1]) / 3.0
    q0 = (4.0 * q[0] - q[1]) / 3.0
    dr = 0.5 * grid.h
    n_half = 2 * grid.n
    # Q on the quarter-node lattice: index 2j is r = j dr, index 2j+1 the RK4 midpoint
    qs = _even_spline(grid, q)(0.5 * dr * np.arange(2 * n_half + 1)).tolist()

    def rhs(r, Qr, v, p, c, e, f, g):
        wv = 2.0 * Qr * FOUR_PI * (c - e / r)
        phi = phi0 - FOUR_PI * (f - g / r)
        return p, -2.0 / r * p + v - phi * v + wv, r * Qr * v, r * r * Qr * v, r * Qr * Qr, r * r * Qr * Qr

    # Taylor start at r = dr
    a2 = (1.0 - phi0) * v0 / 6.0
    r = dr
    y = [v0 + a2 * r * r, 2.0 * a2 * r, q0 * v0 * r * r / 2.0, q0 * v0 * r**3 / 3.0,
         q0 * q0 * r * r / 2.0, q0 * q0 * r**3 / 3.0]
    rs, vs, ps, ws = [], [], [], []
    j = 1
    while j < n_half:
        if j % 2 == 0:  # grid node r_{j/2}
            rs.append(r)
            vs.append(y[0])
            ps.append(y[1])
            ws.append(2.0 * qs[2 * j] * FOUR_PI * (y[2] - y[3] / r))
            if abs(y[0]) > cap:
                break
        k1 = rhs(r, qs[2 * j], *y)
        qmid = qs[2 * j + 1]
        k2 = rhs(r + 0.5 * dr, qmid, *[yi + 0.5 * dr * ki for yi, ki in zip(y, k1)])
        k3 = rhs(r + 0.5 * dr, qmid, *[yi + 0.5 * dr * ki for yi, ki in zip(y, k2)])
        k4 = rhs(r + dr, qs[2 * j + 2], *[yi + dr * ki for yi, ki in zip(y, k3)])
        y = [yi + dr / 6.0 * (a + 2 * b + 2 * c + d) for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]
        r += dr
        j += 1
    rs, vs, ps, ws = map(np.array, (rs, vs, ps, ws))
    top = np.abs(vs)
    sel = top >= top[-1] / 10.0
    slope = float(np.polyfit(rs[sel], np.log(top[sel]), 1)[0]) if sel.sum() >= 2 else float("nan")
    full_v = np.zeros(grid.n)
    full_w = np.zeros(grid.n)
    full_v[: vs.size] = vs
    full_w[: ws.size] = ws
    return LinearizedShot(rs, vs, ps, ws, float(rs[-1]), slope, RadialProfile(grid, full_v), RadialProfile(grid, full_w))
