"""Coulomb potentials of radial densities and the multipole sector kernels.

All fast paths are O(n) prefix/suffix sums over the grid; the dense kernels
below are kept as reference implementations for the tests and for the
independent gap-bound quadrature.

Sign convention: :func:`newton_potential` returns the positive convolution
``(|x|^-1 * rho)``; callers negate where the equations carry a minus sign.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatch, InvalidArgument
from .grid import RadialGrid, RadialProfile

FOUR_PI = 4.0 * np.pi
MAX_ELL = 64
DECAY_WARN = 1e-10


@dataclass(frozen=True)
class MultipoleKernel:
    """``k_l(r, s) = 4 pi / (2l + 1) * r_<^l / r_>^(l+1)``."""

    ell: int

    def __post_init__(self):
        if not 0 <= self.ell <= MAX_ELL:
            raise InvalidArgument(f"supported sectors are 0..{MAX_ELL}, got {self.ell}")

    def __call__(self, r, s):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        lo = np.minimum(r, s)
        hi = np.maximum(r, s)
        # exp/log form keeps large l from overflowing
        ratio = np.exp(self.ell * np.log(lo / hi)) if self.ell else np.ones_like(lo / hi)
        return FOUR_PI / (2 * self.ell + 1) * ratio / hi


def kernel_k(r, s):
    """Newton kernel ``K(r, s) = 4 pi s (1 - s/r)`` for ``0 <= s <= r``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > r):
        raise DomainError("kernel_k needs 0 <= s <= r")
    with np.errstate(invalid="ignore", divide="ignore"):
        k = FOUR_PI * s * (1.0 - np.where(r > 0, s / np.where(r > 0, r, 1.0), 0.0))
    k = np.where(r > 0, k, 0.0)
    return float(k) if k.ndim == 0 else k


def _reshape_nodes(grid: RadialGrid, ndim: int) -> np.ndarray:
    return grid.nodes.reshape((-1,) + (1,) * (ndim - 1))


def _suffix_sum(a: np.ndarray) -> np.ndarray:
    """``out_i = sum_{j > i} a_j`` along axis 0, accumulated from the far end."""
    out = np.zeros_like(a)
    out[:-1] = np.cumsum(a[::-1], axis=0)[::-1][1:]
    return out


def kink_correction(grid: RadialGrid) -> float:
    """Euler-Maclaurin correction for the kink of ``1/max(r, s)`` at ``s = r``.

    The trapezoid sum over ``s^2 g(s) r_<^l / r_>^(l+1)`` overshoots the
    integral by ``(2l+1) (h^2/12) g(r)`` (the jump of the derivative at the
    node).  With ``w = 4 pi s^2 h`` the monopole term becomes ``pi h^2 / 3``;
    dividing by ``2l+1`` gives the same constant for every sector.
    """
    return np.pi * grid.h**2 / 3.0


def newton_values(grid: RadialGrid, rho, corrected: bool = True) -> np.ndarray:
    """Array form of :func:`newton_potential`; trailing axes are batched."""
    rho = np.asarray(rho, dtype=float)
    r = _reshape_nodes(grid, rho.ndim)
    a = grid.weights.reshape(r.shape) * rho
    phi = np.cumsum(a, axis=0) / r + _suffix_sum(a / r)
    if corrected:
        phi -= kink_correction(grid) * rho
    return phi


def newton_potential(rho: RadialProfile, corrected: bool = True) -> RadialProfile:
    """``(|x|^-1 * rho)(r_i) = (1/r_i) sum_{j<=i} w_j rho_j + sum_{j>i} w_j rho_j / r_j``.

    The two prefix sums equal the dense kernel ``sum_j w_j rho_j / max(r_i, r_j)``.
    With ``corrected`` (the default) the kink term ``-(pi h^2/3) rho_i`` is
    added, which lifts the quadrature from second to fourth order.
    """
    v = rho.values
    peak = np.max(np.abs(v)) if v.size else 0.0
    if peak > 0 and abs(v[-1]) > DECAY_WARN * peak:
        warnings.warn(
            "density has not decayed at r_max; the truncated Coulomb potential may be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    return RadialProfile(rho.grid, newton_values(rho.grid, v, corrected))


def w_sector_values(grid: RadialGrid, ell: int, q: np.ndarray, f, corrected: bool = True) -> np.ndarray:
    """``(W_l f)_i = -2/(2l+1) q_i sum_j w_j r_<^l / r_>^(l+1) q_j f_j``.

    ``l = 0`` is accepted and reproduces ``-2 q (|x|^-1 * (q f))``.  The kink
    correction adds ``2 (pi h^2/3) q^2 f``, independent of ``l``.
    """
    if not 0 <= ell <= MAX_ELL:
        raise InvalidArgument(f"supported sectors are 0..{MAX_ELL}, got {ell}")
    f = np.asarray(f, dtype=float)
    shape = (-1,) + (1,) * (f.ndim - 1)
    q = np.asarray(q, dtype=float).reshape(shape)
    scale = 0.5 * grid.r_max
    x = grid.nodes.reshape(shape) / scale
    a = grid.weights.reshape(shape) * q * f
    x_up = x**ell
    x_down = x ** (-(ell + 1))
    inner = np.cumsum(a * x_up, axis=0) * x_down
    outer = _suffix_sum(a * x_down) * x_up
    out = -2.0 / (2 * ell + 1) * q * (inner + outer) / scale
    if corrected:
        out += 2.0 * kink_correction(grid) * q * q * f
    return out


def apply_w_sector(ell: int, q: RadialProfile, f: RadialProfile, corrected: bool = True) -> RadialProfile:
    """Sector-``l`` nonlocal term of the linearized Hartree operator (``l >= 1``)."""
    if ell < 1:
        raise InvalidArgument("apply_w_sector is defined for l >= 1; use apply_newton_linearized for l = 0")
    if q.grid != f.grid:
        raise GridMismatch("Q and f live on different grids")
    return RadialProfile(f.grid, w_sector_values(f.grid, int(ell), q.values, f.values, corrected))


def newton_linearized_parts(grid: RadialGrid, q: np.ndarray, xi, corrected: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Split ``-2 Q (|x|^-1 * (Q xi))`` into ``(interior, sigma)``.

    ``interior_i = 2 Q_i sum_{j<=i} w_j Q_j xi_j (1/r_j - 1/r_i)`` is the
    ``K(r, s)`` integral and ``sigma = sum_j w_j Q_j xi_j / r_j``; the full
    term is ``interior - 2 Q sigma``.  The kink correction is local and is
    carried by the interior part.
    """
    xi = np.asarray(xi, dtype=float)
    r = _reshape_nodes(grid, xi.ndim)
    q = np.asarray(q, dtype=float).reshape(r.shape)
    a = grid.weights.reshape(r.shape) * q * xi
    interior = 2.0 * q * (np.cumsum(a / r, axis=0) - np.cumsum(a, axis=0) / r)
    sigma = np.sum(a / r, axis=0)
    if corrected:
        interior = interior + 2.0 * kink_correction(grid) * q * q * xi
    return interior, sigma


def newton_linearized_values(grid: RadialGrid, q: np.ndarray, xi, corrected: bool = True) -> np.ndarray:
    interior, sigma = newton_linearized_parts(grid, q, xi, corrected)
    q = np.asarray(q, dtype=float).reshape((-1,) + (1,) * (np.ndim(xi) - 1))
    return interior - 2.0 * q * sigma


def apply_newton_linearized(q: RadialProfile, xi: RadialProfile, corrected: bool = True) -> RadialProfile:
    """Radial nonlocal term ``-2 Q (|x|^-1 * (Q xi))`` via the ``K(r, s)`` split."""
    if q.grid != xi.grid:
        raise GridMismatch("Q and xi live on different grids")
    return RadialProfile(xi.grid, newton_linearized_values(xi.grid, q.values, xi.values, corrected))


def multipole_kernel_matrix(grid: RadialGrid, ell: int) -> np.ndarray:
    """Dense ``r_<^l / r_>^(l+1)`` on grid nodes (reference path, O(n^2) memory)."""
    r = grid.nodes
    return MultipoleKernel(ell)(r[:, None], r[None, :]) * (2 * ell + 1) / FOUR_PI
