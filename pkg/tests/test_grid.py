import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memodiff.errors import InvalidArgument
from memodiff.grid import cross_diffusion, gradient_energy, integrate, laplacian_matrix, make_grid


def test_grid_spacing_and_weights():
    g = make_grid(math.pi, 5, "neumann")
    assert g.h == pytest.approx(math.pi / 4, abs=1e-15)
    assert g.weights.sum() == pytest.approx(math.pi, abs=1e-14)
    assert make_grid(1.0, 101, "dirichlet").h == pytest.approx(0.01, abs=1e-15)


@pytest.mark.parametrize("L,n", [(math.pi, 2), (0.0, 10), (-1.0, 10), (1.0, 2.5)])
def test_grid_rejects_bad_input(L, n):
    with pytest.raises(InvalidArgument):
        make_grid(L, n)


def test_grid_rejects_unknown_bc():
    with pytest.raises(InvalidArgument):
        make_grid(1.0, 10, "periodic")


def test_laplacian_quadratic_interior():
    g = make_grid(n=51)
    out = laplacian_matrix(g) @ g.x**2
    assert np.allclose(out[1:-1], 2.0, atol=1e-9)


def test_laplacian_kills_constants():
    g = make_grid(n=33)
    assert np.max(np.abs(laplacian_matrix(g) @ np.full(g.n, 3.0))) < 1e-10


def test_laplacian_dirichlet_sine():
    g = make_grid(n=201, bc="dirichlet")
    out = laplacian_matrix(g) @ np.sin(g.x)
    assert np.max(np.abs(out + np.sin(g.x))) < 1e-3


def test_neumann_ghost_row():
    g = make_grid(n=11)
    u = np.cos(g.x) + g.x
    assert (laplacian_matrix(g) @ u)[0] == pytest.approx(2 * (u[1] - u[0]) / g.h**2, rel=1e-13)


def test_cross_diffusion_unit_coefficient_is_laplacian():
    g = make_grid(n=41)
    v = np.exp(np.sin(g.x))
    assert np.allclose(cross_diffusion(g, np.ones(g.n), v), laplacian_matrix(g) @ v, atol=1e-10)


def test_cross_diffusion_constant_v():
    g = make_grid(n=41)
    assert np.max(np.abs(cross_diffusion(g, 1 + g.x, np.full(g.n, 2.0)))) == 0.0


def test_cross_diffusion_matches_analytic():
    g = make_grid(n=401)
    out = cross_diffusion(g, np.sin(g.x), np.sin(g.x))
    assert np.max(np.abs(out[1:-1] - np.cos(2 * g.x[1:-1]))) < 1e-3


def test_cross_diffusion_length_mismatch():
    g = make_grid(n=11)
    with pytest.raises(InvalidArgument):
        cross_diffusion(g, np.ones(10), np.ones(11))


def test_integrals():
    g = make_grid(n=201)
    assert integrate(g, np.sin(g.x)) == pytest.approx(2.0, abs=1e-4)
    assert integrate(g, -g.x**3 + 5) == pytest.approx((20 * math.pi - math.pi**4) / 4, abs=1e-3)
    assert integrate(g, np.zeros(g.n)) == 0.0


def _errors(n):
    g = make_grid(n=n)
    lap = np.max(np.abs((laplacian_matrix(g) @ np.cos(g.x)) + np.cos(g.x)))
    cd = np.max(np.abs(cross_diffusion(g, np.sin(g.x), np.sin(g.x))[1:-1] - np.cos(2 * g.x[1:-1])))
    return lap, cd


def test_second_order_convergence():
    e1, e2 = _errors(51), _errors(101)
    for a, b in zip(e1, e2):
        assert 3.5 < a / b < 4.5


fields = st.integers(5, 40).flatmap(
    lambda n: st.tuples(
        st.just(n),
        arrays(np.float64, n, elements=st.floats(-10, 10)),
        arrays(np.float64, n, elements=st.floats(-10, 10)),
    )
)


@given(fields)
def test_neumann_conservativity(data):
    n, u, v = data
    g = make_grid(n=n)
    scale = 1 + np.max(np.abs(u)) * np.max(np.abs(v)) / g.h**2
    assert abs(integrate(g, cross_diffusion(g, u, v))) <= 1e-12 * scale * g.L


@given(fields)
def test_weighted_laplacian_symmetric(data):
    n, u, v = data
    g = make_grid(n=n)
    L = laplacian_matrix(g)
    a = integrate(g, u * (L @ v))
    b = integrate(g, v * (L @ u))
    scale = 1 + np.max(np.abs(u)) * np.max(np.abs(v)) / g.h**2
    assert abs(a - b) <= 1e-12 * scale * g.L


@given(fields, st.sampled_from(["neumann", "dirichlet"]))
def test_gradient_energy_is_summation_by_parts(data, bc):
    n, c, v = data
    g = make_grid(n=n, bc=bc)
    if g.dirichlet:
        v = v.copy()
        v[[0, -1]] = 0.0
    lhs = gradient_energy(g, c, v)
    rhs = -integrate(g, v * cross_diffusion(g, c, v))
    scale = 1 + np.max(np.abs(c)) * np.max(np.abs(v)) ** 2 / g.h
    assert abs(lhs - rhs) <= 1e-11 * scale
