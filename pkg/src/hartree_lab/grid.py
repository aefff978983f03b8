"""Uniform radial grids, 3D radial quadrature and the discrete sector Laplacians.

Radial functions ``f(r)`` are sampled at ``r_i = i h`` for ``i = 1..n`` with
``h = r_max / (n + 1)``.  Differential operators act on ``u = r f`` with
Dirichlet data ``u(0) = u(r_max) = 0``.  The l = 0 Laplacian used by the
ground-state solvers is diagonal in the DST-I basis of ``u`` with the exact
symbol ``(j pi / r_max)^2``; the sectors ``l >= 1`` use second differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import GridMismatch, InvalidArgument

FOUR_PI = 4.0 * np.pi
MIN_NODES = 16


@dataclass(frozen=True)
class RadialGrid:
    """Interior nodes of a uniform grid on ``(0, r_max)``."""

    n: int
    r_max: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise InvalidArgument(f"grid needs n >= {MIN_NODES} interior nodes, got {self.n}")
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise InvalidArgument(f"r_max must be positive, got {self.r_max}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def h(self) -> float:
        return self.r_max / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        r = self.h * np.arange(1, self.n + 1, dtype=float)
        r.setflags(write=False)
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        # Trapezoid rule on [0, r_max]; both end values vanish (r^2 at 0,
        # Dirichlet at r_max), so every interior node carries a full cell.
        w = FOUR_PI * self.nodes**2 * self.h
        w.setflags(write=False)
        return w

    @cached_property
    def dirichlet_symbol(self) -> np.ndarray:
        """Eigenvalues of ``-d^2/dr^2`` (second differences, Dirichlet) in DST-I order."""
        j = np.arange(1, self.n + 1, dtype=float)
        lam = (2.0 - 2.0 * np.cos(j * np.pi / (self.n + 1))) / self.h**2
        lam.setflags(write=False)
        return lam

    @cached_property
    def spectral_symbol(self) -> np.ndarray:
        """``k_j^2`` with ``k_j = j pi / r_max``: the exact Dirichlet symbol of ``-d^2/dr^2`` on sine modes.

        The solvers use this for the l = 0 Laplacian; ``u = r f`` extends oddly
        and smoothly, so the DST representation converges spectrally.
        """
        k = np.pi * np.arange(1, self.n + 1, dtype=float) / self.r_max
        k2 = k * k
        k2.setflags(write=False)
        return k2

    def to_dict(self) -> dict:
        return {"n": self.n, "r_max": self.r_max}

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        return cls(int(d["n"]), float(d["r_max"]))


def make_grid(n: int, r_max: float) -> RadialGrid:
    """Build the uniform grid with ``n`` interior nodes on ``(0, r_max)``."""
    return RadialGrid(n, r_max)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Samples ``f(r_i)`` of a radial function on a fixed grid."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise InvalidArgument(f"profile needs {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("profile values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialProfile":
        return cls(grid, func(grid.nodes))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def _other(self, other):
        if isinstance(other, RadialProfile):
            if other.grid != self.grid:
                raise GridMismatch("profiles live on different grids")
            return other.values
        if np.ndim(other) == 0:
            return float(other)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else RadialProfile(self.grid, self.values + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else RadialProfile(self.grid, self.values - o)

    def __rsub__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else RadialProfile(self.grid, o - self.values)

    def __mul__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else RadialProfile(self.grid, self.values * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.ndim(other) != 0:
            return NotImplemented
        return RadialProfile(self.grid, self.values / float(other))

    def __neg__(self):
        return RadialProfile(self.grid, -self.values)

    def __len__(self):
        return self.grid.n


def as_values(f) -> np.ndarray:
    return f.values if isinstance(f, RadialProfile) else np.asarray(f, dtype=float)


def inner(grid: RadialGrid, f, g) -> float:
    """Weighted inner product ``sum_i w_i f_i g_i`` (approximates the 3D integral)."""
    return float(np.dot(grid.weights, as_values(f) * as_values(g)))


def mass(f: RadialProfile) -> float:
    """Discrete ``int |f|^2 d^3x``."""
    v = f.values
    return float(np.dot(f.grid.weights, v * v))


def integrate(grid: RadialGrid, values) -> float:
    """Discrete ``int g d^3x`` for radial ``g``."""
    return float(np.dot(grid.weights, as_values(values)))


def second_difference(u: np.ndarray, h: float) -> np.ndarray:
    """``-(u_{i+1} - 2u_i + u_{i-1}) / h^2`` with zero Dirichlet ghosts; acts along axis 0."""
    out = 2.0 * u
    out[1:] -= u[:-1]
    out[:-1] -= u[1:]
    return out / h**2


def sector_laplacian_values(grid: RadialGrid, values: np.ndarray, ell: int) -> np.ndarray:
    """Array form of :func:`apply_sector_laplacian`; extra trailing axes are batched."""
    v = np.asarray(values, dtype=float)
    r = grid.nodes.reshape((-1,) + (1,) * (v.ndim - 1))
    out = second_difference(r * v, grid.h) / r
    if ell:
        out += ell * (ell + 1) / r**2 * v
    return out


def apply_sector_laplacian(f: RadialProfile, ell: int) -> RadialProfile:
    """Discrete ``-f'' - (2/r) f' + l(l+1) f / r^2`` through ``u = r f``.

    Symmetric and positive definite in the ``w``-weighted inner product.
    """
    if ell < 0 or int(ell) != ell:
        raise InvalidArgument(f"angular momentum must be a nonnegative integer, got {ell}")
    return RadialProfile(f.grid, sector_laplacian_values(f.grid, f.values, int(ell)))


def kinetic(f) -> float:
    """``int |grad f|^2`` as ``4 pi h sum_j k_j^2 |DST(r f)_j|^2``.

    This is the quadratic form of the spectral l = 0 Laplacian used by the
    ground-state solvers.
    """
    grid = f.grid
    uh = dst(grid.nodes * f.values)
    return float(FOUR_PI * grid.h * np.dot(grid.spectral_symbol, uh * uh))


def kinetic_fd(f) -> float:
    """``<f, -Delta_h f>_w`` for the second-difference Laplacian (forward differences of ``u = r f``)."""
    grid = f.grid
    u = np.concatenate(([0.0], grid.nodes * f.values, [0.0]))
    du = np.diff(u) / grid.h
    return float(FOUR_PI * grid.h * np.dot(du, du))


def radial_derivative(f: RadialProfile) -> np.ndarray:
    """Centered-difference ``f'(r_i)``.

    Uses the even extension at the origin (``f(0)`` from a quadratic in ``r^2``)
    and the Dirichlet value ``f(r_max) = 0``.
    """
    v = f.values
    h = f.grid.h
    f0 = (4.0 * v[0] - v[1]) / 3.0
    padded = np.concatenate(([f0], v, [0.0]))
    return (padded[2:] - padded[:-2]) / (2.0 * h)


def norm_h1(f: RadialProfile, m: float = 1.0) -> float:
    """``sqrt(m^2 ||f||^2 + ||f'||^2)``; with ``m = 1`` the usual H^1 norm."""
    d = radial_derivative(f)
    return float(np.sqrt(m * m * mass(f) + np.dot(f.grid.weights, d * d)))


def dst(u: np.ndarray) -> np.ndarray:
    """Orthonormal DST-I along axis 0; it is its own inverse."""
    return fft.dst(u, type=1, norm="ortho", axis=0)


def apply_symbol(grid: RadialGrid, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Apply a multiplier diagonal in the DST basis to ``u = r f``; trailing axes are batched."""
    v = np.asarray(values, dtype=float)
    r = grid.nodes.reshape((-1,) + (1,) * (v.ndim - 1))
    s = np.asarray(symbol).reshape((-1,) + (1,) * (v.ndim - 1))
    return dst(s * dst(r * v)) / r


def profile_to_csv(f: RadialProfile) -> str:
    """CSV text with header ``r,value``; floats in ``repr`` form so reads are exact."""
    lines = ["r,value"]
    lines += [f"{r!r},{v!r}" for r, v in zip(f.grid.nodes.tolist(), f.values.tolist())]
    return "\n".join(lines) + "\n"


def profile_from_csv(text: str, grid: RadialGrid) -> RadialProfile:
    rows = [ln for ln in text.strip().splitlines()[1:] if ln]
    data = np.array([[float(x) for x in ln.split(",")] for ln in rows])
    if data.shape[0] != grid.n or not np.allclose(data[:, 0], grid.nodes, rtol=1e-12, atol=0):
        raise GridMismatch("CSV nodes do not match the grid")
    return RadialProfile(grid, data[:, 1])


def profile_to_json(f: RadialProfile) -> list:
    """JSON-ready list of ``[r, value]`` pairs."""
    return [[r, v] for r, v in zip(f.grid.nodes.tolist(), f.values.tolist())]
