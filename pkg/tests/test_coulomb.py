import importlib.util
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import erf

from hartree_lab.coulomb import (
    MultipoleKernel,
    apply_newton_linearized,
    apply_w_sector,
    kernel_k,
    multipole_kernel_matrix,
    newton_linearized_parts,
    newton_potential,
    newton_values,
    w_sector_values,
)
from hartree_lab.errors import DomainError, GridMismatch, InvalidArgument
from hartree_lab.grid import RadialProfile, make_grid

GOLDEN = Path(__file__).parent / "golden"


def _load_generator():
    spec = importlib.util.spec_from_file_location("make_newton_oracle", GOLDEN / "make_newton_oracle.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def gaussian_potential(r):
    return math.pi**1.5 * erf(r) / r


def test_gaussian_closed_form_fourth_order():
    errs = {}
    for corrected in (True, False):
        e = []
        for n in (250, 500):
            g = make_grid(n, 10.0)
            phi = newton_values(g, np.exp(-g.nodes**2), corrected=corrected)
            e.append(np.max(np.abs(phi / gaussian_potential(g.nodes) - 1.0)))
        errs[corrected] = e
    assert errs[True][1] <= 1e-8
    assert errs[True][0] / errs[True][1] >= 12.0
    assert 3.5 <= errs[False][0] / errs[False][1] <= 4.5


def test_uniform_ball_with_edge_between_nodes():
    # a node-aligned edge makes the kink first order; half a cell off it is second order
    g = make_grid(1000, 4.0)
    R = (round(1.0 / g.h) + 0.5) * g.h
    r = g.nodes
    rho = (r < R).astype(float)
    want = np.where(r < R, 2 * math.pi * (R * R - r * r / 3.0), 4 * math.pi * R**3 / (3 * r))
    got = newton_values(g, rho)
    assert np.max(np.abs(got / want - 1.0)) <= 1e-4


def test_against_frozen_brute_force_oracle():
    doc = json.loads((GOLDEN / "newton_oracle.json").read_text())
    g = make_grid(doc["grid"]["n"], doc["grid"]["r_max"])
    r = g.nodes
    phi = newton_values(g, np.exp(-r * r) * (1 + r * r))
    oracle = np.array(doc["phi"])
    assert np.max(np.abs(phi / oracle - 1.0)) <= 1e-4


@pytest.mark.slow
def test_brute_force_oracle_spot_check():
    gen = _load_generator()
    doc = json.loads((GOLDEN / "newton_oracle.json").read_text())
    g = make_grid(doc["grid"]["n"], doc["grid"]["r_max"])
    for i in (0, 40):
        r = g.nodes[i]
        coarse, fine = gen.SPACINGS
        live = (4.0 * gen.lattice_sum(r, fine) - gen.lattice_sum(r, coarse)) / 3.0
        assert live == pytest.approx(doc["phi"][i], rel=1e-12)


@pytest.mark.parametrize("ell", [0, 1, 2, 3, 7])
def test_fast_sector_apply_matches_dense(ell):
    g = make_grid(300, 15.0)
    r = g.nodes
    q = np.exp(-r)
    f = np.cos(r) * np.exp(-0.3 * r)
    dense = -2.0 / (2 * ell + 1) * q * (multipole_kernel_matrix(g, ell) @ (g.weights * q * f))
    assert np.max(np.abs(w_sector_values(g, ell, q, f, corrected=False) - dense)) <= 1e-12


@given(arrays(np.float64, 48, elements=st.floats(-5, 5)))
def test_newton_fast_matches_dense(rho):
    g = make_grid(48, 6.0)
    dense = multipole_kernel_matrix(g, 0) @ (g.weights * rho)
    assert np.max(np.abs(newton_values(g, rho, corrected=False) - dense)) <= 1e-12 * max(1.0, np.max(np.abs(dense)))


@given(arrays(np.float64, 40, elements=st.floats(-3, 3)))
def test_monopole_sector_matches_linearized_newton(xi):
    g = make_grid(40, 6.0)
    q = np.exp(-g.nodes)
    lin = apply_newton_linearized(RadialProfile(g, q), RadialProfile(g, xi)).values
    assert np.allclose(lin, w_sector_values(g, 0, q, xi), atol=1e-11)
    interior, sigma = newton_linearized_parts(g, q, xi)
    assert np.allclose(interior - 2 * q * sigma, lin, atol=1e-12)


@pytest.mark.parametrize("ell", [0, 1, 2, 5])
def test_uncorrected_sector_form_is_nonpositive(ell):
    g = make_grid(80, 10.0)
    q = np.exp(-g.nodes)
    rng = np.random.default_rng(ell)
    for _ in range(5):
        f = rng.standard_normal(g.n)
        assert np.dot(g.weights * f, w_sector_values(g, ell, q, f, corrected=False)) <= 1e-12


def test_multipole_kernel_properties():
    k = MultipoleKernel(3)
    assert k(1.0, 2.0) == pytest.approx(k(2.0, 1.0))
    assert k(1.0, 2.0) == pytest.approx(4 * math.pi / 7 * 1.0 / 2.0**4)
    assert np.isfinite(MultipoleKernel(64)(1e-3, 50.0))
    with pytest.raises(InvalidArgument):
        MultipoleKernel(65)


def test_kernel_k():
    assert kernel_k(2.0, 1.0) == pytest.approx(2 * math.pi)
    assert kernel_k(2.0, 2.0) == 0.0
    assert kernel_k(0.0, 0.0) == 0.0
    with pytest.raises(DomainError):
        kernel_k(1.0, 2.0)


def test_newton_potential_warns_without_decay():
    g = make_grid(32, 2.0)
    with pytest.warns(RuntimeWarning):
        newton_potential(RadialProfile(g, np.ones(32)))


def test_sector_apply_validation():
    g = make_grid(32, 2.0)
    q = RadialProfile(g, np.exp(-g.nodes))
    with pytest.raises(InvalidArgument):
        apply_w_sector(0, q, q)
    with pytest.raises(GridMismatch):
        apply_w_sector(1, q, RadialProfile(make_grid(32, 3.0), np.ones(32)))
