import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hartree_lab.errors import GridMismatch, InvalidArgument
from hartree_lab.grid import (
    RadialGrid,
    RadialProfile,
    apply_sector_laplacian,
    dst,
    inner,
    integrate,
    kinetic,
    kinetic_fd,
    make_grid,
    mass,
    norm_h1,
    profile_from_csv,
    profile_to_csv,
    radial_derivative,
)


def test_nodes_and_weights():
    g = make_grid(99, 10.0)
    assert g.h == pytest.approx(0.1)
    assert g.nodes[0] == pytest.approx(0.1)
    assert g.nodes[-1] == pytest.approx(9.9)
    assert np.allclose(g.weights, 4 * np.pi * g.nodes**2 * g.h)
    assert not g.nodes.flags.writeable


@pytest.mark.parametrize("n, r_max", [(15, 10.0), (100, 0.0), (100, -1.0), (100, math.inf), (10.5, 1.0)])
def test_grid_rejects_bad_input(n, r_max):
    with pytest.raises(InvalidArgument):
        make_grid(n, r_max)


def test_grid_dict_roundtrip():
    g = make_grid(123, 7.5)
    assert RadialGrid.from_dict(g.to_dict()) == g


def test_gaussian_mass_is_spectrally_accurate():
    # trapezoid on an even smooth integrand: error far below any power of h
    g = make_grid(400, 12.0)
    val = integrate(g, np.exp(-g.nodes**2))
    assert abs(val / math.pi**1.5 - 1.0) <= 1e-12


def test_quadrature_is_second_order_for_a_cusp():
    # e^{-r} is not even in r, so the trapezoid rule drops to h^2
    exact = 8.0 * math.pi
    errs = [abs(integrate(g, np.exp(-g.nodes)) - exact) for g in (make_grid(199, 40.0), make_grid(399, 40.0))]
    assert errs[0] / errs[1] >= 3.5


def test_kinetic_of_gaussian():
    g = make_grid(800, 12.0)
    f = RadialProfile.from_function(g, lambda r: np.exp(-(r**2)))
    exact = 6.0 * math.pi**1.5 / 2**2.5
    assert kinetic(f) == pytest.approx(exact, rel=1e-10)
    assert kinetic_fd(f) == pytest.approx(exact, rel=1e-4)


def test_sector_laplacian_is_symmetric_in_weighted_product():
    g = make_grid(64, 8.0)
    rng = np.random.default_rng(3)
    a, b = (RadialProfile(g, rng.standard_normal(g.n)) for _ in range(2))
    for ell in (0, 1, 4):
        lhs = inner(g, apply_sector_laplacian(a, ell), b)
        rhs = inner(g, a, apply_sector_laplacian(b, ell))
        assert lhs == pytest.approx(rhs, rel=1e-12)
        assert inner(g, a, apply_sector_laplacian(a, ell)) > 0


def test_sector_laplacian_rejects_negative_ell():
    g = make_grid(32, 4.0)
    with pytest.raises(InvalidArgument):
        apply_sector_laplacian(RadialProfile(g, np.ones(32)), -1)


def test_sector_laplacian_on_smooth_function():
    # -Delta_(1) of r e^{-r^2} = (10 - 4 r^2) r e^{-r^2}
    errs = []
    for n in (1000, 2000):
        g = make_grid(n, 10.0)
        r = g.nodes
        got = apply_sector_laplacian(RadialProfile(g, r * np.exp(-(r**2))), 1).values
        err = got - (10.0 - 4.0 * r**2) * r * np.exp(-(r**2))
        # dividing by r leaves an O(h) pointwise error at the first nodes only
        assert np.max(np.abs(err[r >= 0.5])) <= 5.0 * g.h**2
        errs.append(math.sqrt(inner(g, err, err)))
    assert errs[1] <= 2e-4
    assert errs[0] / errs[1] >= 3.5


def test_radial_derivative_and_h1_norm():
    g = make_grid(2000, 12.0)
    f = RadialProfile.from_function(g, lambda r: np.exp(-(r**2)))
    d = radial_derivative(f)
    assert np.max(np.abs(d + 2 * g.nodes * f.values)) <= 1e-4
    want = math.sqrt(math.pi**1.5 / 2**1.5 + 6.0 * math.pi**1.5 / 2**2.5)
    assert norm_h1(f) == pytest.approx(want, rel=1e-5)


def test_profile_arithmetic_and_grid_mismatch():
    g = make_grid(32, 4.0)
    a = RadialProfile(g, np.ones(32))
    b = 2.0 * a - a / 2.0 + 1.0
    assert np.allclose(b.values, 2.5)
    assert np.allclose((-a).values, -1.0)
    with pytest.raises(GridMismatch):
        a + RadialProfile(make_grid(32, 5.0), np.ones(32))
    with pytest.raises(InvalidArgument):
        RadialProfile(g, np.ones(31))
    with pytest.raises(InvalidArgument):
        RadialProfile(g, np.full(32, np.nan))


def test_csv_roundtrip_is_exact():
    g = make_grid(50, 3.0)
    f = RadialProfile.from_function(g, lambda r: np.exp(-r) / 3.0)
    back = profile_from_csv(profile_to_csv(f), g)
    assert np.array_equal(back.values, f.values)
    with pytest.raises(GridMismatch):
        profile_from_csv(profile_to_csv(f), make_grid(50, 4.0))


@given(arrays(np.float64, 40, elements=st.floats(-1e3, 1e3)))
def test_dst_is_an_involution(u):
    assert np.allclose(dst(dst(u)), u, atol=1e-9)


@given(arrays(np.float64, 24, elements=st.floats(-10, 10)), st.floats(0.1, 10.0))
def test_mass_scales_quadratically(v, s):
    g = make_grid(24, 5.0)
    f = RadialProfile(g, v)
    assert mass(s * f) == pytest.approx(s * s * mass(f), rel=1e-12, abs=1e-300)
    assert mass(f) >= 0
