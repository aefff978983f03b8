"""Half-integer modified Bessel functions and the sector heat kernels.

``I_{l+1/2}`` is evaluated in three regimes:

* ``z < 1``: ascending power series (all terms positive, no cancellation);
* ``z >= max(1, 2 l^2)``: the terminating closed form
  ``sqrt(2 pi z) e^{-z} I = sum_k (-1)^k c_k (2z)^-k + (-1)^(l+1) e^{-2z} sum_k c_k (2z)^-k``
  with ``c_k = (l+k)! / (k! (l-k)!)`` (for ``l = 0, 1`` these are the familiar
  sinh/cosh expressions);
* otherwise Miller's backward recurrence normalised by the closed form of
  ``I_{1/2}``.  Upward recurrence is the minimal-solution direction for ``I``
  and loses all digits once ``l`` exceeds ``z``.

Everything is computed exponentially scaled (``e^{-z} I``) so heat-kernel
entries never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidArgument
from .grid import RadialGrid, sector_laplacian_values

MAX_ELL = 64
SERIES_TERMS = 60


def _check(ell, z):
    if int(ell) != ell or not 0 <= ell <= MAX_ELL:
        raise InvalidArgument(f"order index l must be an integer in 0..{MAX_ELL}, got {ell}")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("modified Bessel functions are evaluated for z > 0 only")
    return int(ell), z


def _series_scaled(ell: int, z: np.ndarray) -> np.ndarray:
    nu = ell + 0.5
    half = 0.5 * z
    log_t0 = nu * np.log(half) - math.lgamma(nu + 1.0)
    term = np.ones_like(z)
    total = np.ones_like(z)
    q = half * half
    for k in range(SERIES_TERMS):
        term = term * q / ((k + 1) * (k + 1 + nu))
        total = total + term
    return np.exp(log_t0 - z) * total


def _closed_form_scaled(ell: int, z: np.ndarray) -> np.ndarray:
    c = [math.factorial(ell + k) / (math.factorial(k) * math.factorial(ell - k)) for k in range(ell + 1)]
    inv = 1.0 / (2.0 * z)
    alt = np.zeros_like(z)
    pos = np.zeros_like(z)
    for k in reversed(range(ell + 1)):
        alt = alt * inv + (-1) ** k * c[k]
        pos = pos * inv + c[k]
    return (alt + (-1) ** (ell + 1) * np.exp(-2.0 * z) * pos) / np.sqrt(2.0 * np.pi * z)


def _miller_scaled(ell: int, z: np.ndarray) -> np.ndarray:
    start = (np.sqrt(ell * ell + 80.0 * z) + 20).astype(int)
    top = int(start.max())
    f_hi = np.zeros_like(z)  # index k + 1
    f_k = np.zeros_like(z)  # index k
    keep = np.zeros_like(z)
    big = 1e250
    for k in range(top, 0, -1):
        f_k = np.where(start == k, 1.0, f_k)
        f_lo = f_hi + (2.0 * (k + 0.5) / z) * f_k
        if k - 1 == ell:
            keep = f_lo.copy()
        over = np.abs(f_lo) > big
        if np.any(over):
            s = np.where(over, 1.0 / big, 1.0)
            f_lo, f_k, keep = f_lo * s, f_k * s, keep * s
        f_hi, f_k = f_k, f_lo
    if ell == top:  # pragma: no cover - start index always exceeds ell
        keep = f_hi
    # f_k now holds index 0, i.e. a multiple of I_{1/2}
    return keep / f_k * _closed_form_scaled(0, z)


def bessel_i_half_scaled(ell: int, z):
    """``e^{-z} I_{l+1/2}(z)`` for ``z > 0``."""
    ell, z = _check(ell, z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    small = z < 1.0
    large = z >= max(1.0, 2.0 * ell * ell)
    mid = ~small & ~large
    if np.any(small):
        out[small] = _series_scaled(ell, z[small])
    if np.any(large):
        out[large] = _closed_form_scaled(ell, z[large])
    if np.any(mid):
        out[mid] = _miller_scaled(ell, z[mid])
    return float(out[0]) if scalar else out


def bessel_i_half(ell: int, z):
    """Modified Bessel function of the first kind ``I_{l+1/2}(z)``, ``z > 0``."""
    _, zz = _check(ell, z)
    return np.exp(zz) * bessel_i_half_scaled(ell, z)


def bessel_i_series(nu: float, z: float, terms: int = 30) -> float:
    """Plain ascending series for ``I_nu(z)``; a slow reference evaluation."""
    total = 0.0
    for k in range(terms):
        total += (0.5 * z) ** (2 * k + nu) / (math.factorial(k) * math.gamma(k + nu + 1))
    return total


def spherical_i(ell: int, z):
    """Modified spherical Bessel ``i_l(z) = sqrt(pi / 2z) I_{l+1/2}(z)``."""
    _, zz = _check(ell, z)
    return np.sqrt(np.pi / (2.0 * zz)) * bessel_i_half(ell, z)


def heat_kernel_entries(ell: int, t: float, r, s):
    """``e^{t Delta_(l)}(r, s) = (1/2t) (rs)^-1/2 exp(-(r^2+s^2)/4t) I_{l+1/2}(rs/2t)``.

    Kernel with respect to ``r^2 dr`` on the half line, combined in log space
    as ``exp(-(r-s)^2/4t) * e^{-z} I(z)``.
    """
    if not t > 0:
        raise InvalidArgument("heat kernel needs t > 0")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    z = r * s / (2.0 * t)
    return np.exp(-((r - s) ** 2) / (4.0 * t)) * bessel_i_half_scaled(ell, z) / (2.0 * t * np.sqrt(r * s))


@dataclass(frozen=True, eq=False)
class HeatKernelSector:
    """``H_ij = e^{t Delta_(l)}(r_i, r_j) h r_j^2`` so that ``H @ f`` approximates ``e^{t Delta_(l)} f``."""

    ell: int
    t: float
    grid: RadialGrid
    matrix: np.ndarray = field(repr=False)

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(getattr(f, "values", f), dtype=float)

    def kernel(self) -> np.ndarray:
        """Symmetric kernel values ``e^{t Delta_(l)}(r_i, r_j)``."""
        r = self.grid.nodes
        return self.matrix / (self.grid.h * r[None, :] ** 2)


def heat_kernel_sector(ell: int, t: float, grid: RadialGrid) -> HeatKernelSector:
    r = grid.nodes
    k = heat_kernel_entries(ell, t, r[:, None], r[None, :])
    mat = k * (grid.h * r**2)[None, :]
    mat.setflags(write=False)
    return HeatKernelSector(int(ell), float(t), grid, mat)


def heat_resolvent(ell: int, mu: float, grid: RadialGrid, t_min: float = 1e-10, n_t: int = 600) -> np.ndarray:
    """``int_0^inf e^{-t mu} e^{t Delta_(l)} dt`` by trapezoid in ``log t``.

    Truncated at ``t_min`` below and at ``e^{-mu t} < 1e-17`` above.
    """
    if not mu > 0:
        raise InvalidArgument("resolvent representation needs mu > 0")
    t_max = 40.0 / mu
    s = np.linspace(np.log(t_min), np.log(t_max), n_t)
    ds = s[1] - s[0]
    out = np.zeros((grid.n, grid.n))
    for i, si in enumerate(s):
        t = np.exp(si)
        wt = ds * (0.5 if i in (0, n_t - 1) else 1.0)
        out += wt * t * np.exp(-mu * t) * heat_kernel_sector(ell, t, grid).matrix
    return out


def sector_laplacian_matrix(grid: RadialGrid, ell: int) -> np.ndarray:
    """Dense matrix of the discrete sector Laplacian acting on profile values."""
    return sector_laplacian_values(grid, np.eye(grid.n), ell)


def interior_operator_error(a: np.ndarray, b: np.ndarray, grid: RadialGrid, r_cut: float) -> float:
    """``||A - B|| / ||B||`` in the weighted operator norm, restricted to nodes ``r <= r_cut``.

    Both matrices act on profile values; conjugating by ``diag(r)`` turns the
    weighted norm into the spectral norm.  The restriction keeps the Dirichlet
    wall, which the continuum kernels do not see, out of the comparison.
    """
    r = grid.nodes
    inner = r <= r_cut
    if not np.any(inner):
        raise InvalidArgument("no nodes inside r_cut")
    blk = np.ix_(inner, inner)

    def sym(m):
        return (r[:, None] * m / r[None, :])[blk]

    return float(np.linalg.norm(sym(a) - sym(b), 2) / np.linalg.norm(sym(b), 2))


def resolvent_mismatch(ell: int, mu: float, grid: RadialGrid, r_cut: Optional[float] = None) -> float:
    """Heat-kernel resolvent integral against the dense ``(L_(l) + mu)^-1`` on the inner half of the grid."""
    r_cut = 0.5 * grid.r_max if r_cut is None else r_cut
    inv = np.linalg.inv(sector_laplacian_matrix(grid, ell) + mu * np.eye(grid.n))
    return interior_operator_error(heat_resolvent(ell, mu, grid), inv, grid, r_cut)
