import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_convex_polygon, unit_square
from polyhdg.basis import (EdgeBasis, ScaledMonomialBasis, eval_basis, gauss_legendre,
                           gauss_lobatto, legendre_table, polygon_area, polygon_quadrature,
                           triangulate_polygon)
from polyhdg.diagnostics import regular_hexagon


def green_monomial_integral(vertices, a, b, n=20):
    """int_K x^a y^b via int_dK x^(a+1) y^b / (a+1) dy, edge by edge (1D oracle)."""
    x, w = np.polynomial.legendre.leggauss(n)
    s, w = 0.5 * (x + 1), 0.5 * w
    total = 0.0
    v = np.asarray(vertices)
    for p, q in zip(v, np.roll(v, -1, axis=0)):
        pts = p + s[:, None] * (q - p)
        total += w @ (pts[:, 0] ** (a + 1) * pts[:, 1] ** b) * (q[1] - p[1]) / (a + 1)
    return total


# -- edge rules ---------------------------------------------------------------


def test_lobatto_four_points_hand_values():
    r = gauss_lobatto(4)
    c = 1 / math.sqrt(5)
    np.testing.assert_allclose(r.points, [0, (1 - c) / 2, (1 + c) / 2, 1], atol=1e-15)
    np.testing.assert_allclose(r.weights, [1 / 12, 5 / 12, 5 / 12, 1 / 12], atol=1e-15)
    for m in range(6):
        assert abs(r.weights @ r.points**m - 1 / (m + 1)) < 1e-14
    assert abs(r.weights @ r.points**6 - 1 / 7) > 1e-6


def test_lobatto_two_points_is_trapezoid():
    r = gauss_lobatto(2)
    np.testing.assert_allclose(r.points, [0, 1])
    np.testing.assert_allclose(r.weights, [0.5, 0.5])


def test_lobatto_rejects_single_point():
    with pytest.raises(ValueError):
        gauss_lobatto(1)


@pytest.mark.parametrize("n", range(2, 13))
def test_lobatto_weights_and_exactness(n):
    r = gauss_lobatto(n)
    assert abs(r.weights.sum() - 1) < 1e-13
    assert np.all(r.weights > 0)
    assert r.points[0] == 0 and r.points[-1] == 1
    for m in range(2 * n - 2):
        assert abs(r.weights @ r.points**m - 1 / (m + 1)) < 1e-12


@pytest.mark.parametrize("n", range(1, 12))
def test_gauss_legendre_exactness(n):
    r = gauss_legendre(n)
    assert abs(r.weights.sum() - 1) < 1e-13
    for m in range(2 * n):
        assert abs(r.weights @ r.points**m - 1 / (m + 1)) < 1e-12


def test_legendre_edge_mass_is_diagonal():
    e = EdgeBasis(6, np.array([0.2, 0.1]), np.array([0.9, 0.5]))
    g = gauss_legendre(10)
    P = e.values(g.points)
    M = e.length * (P.T * g.weights) @ P
    np.testing.assert_allclose(M, np.diag(e.mass_diagonal()), atol=1e-12 * e.length)


def test_legendre_table_matches_numpy():
    s = np.linspace(0, 1, 17)
    T = legendre_table(5, s)
    for j in range(6):
        ref = np.polynomial.legendre.legval(2 * s - 1, [0] * j + [1])
        np.testing.assert_allclose(T[:, j], ref, atol=1e-14)


# -- polygon rules ---------------------------------------------------------


def test_unit_square_second_moment():
    r = polygon_quadrature(unit_square(), 2)
    assert abs(r.weights @ r.points[:, 0] ** 2 - 1 / 3) < 1e-13


@pytest.mark.parametrize("side", [1.0, 0.3, 1e-3])
def test_hexagon_area(side):
    r = polygon_quadrature(regular_hexagon(side), 0)
    assert abs(r.weights.sum() - 1.5 * math.sqrt(3) * side**2) < 1e-13 * max(side**2, 1e-300) * 10


def test_pentagon_quintic_moment_matches_boundary_oracle():
    rng = np.random.default_rng(7)
    pent = random_convex_polygon(rng, n=5, center=(0.3, 0.6))
    r = polygon_quadrature(pent, 5)
    val = r.weights @ (r.points[:, 0] ** 3 * r.points[:, 1] ** 2)
    assert abs(val - green_monomial_integral(pent, 3, 2)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), degree=st.integers(0, 10))
def test_polygon_rule_exact_for_all_monomials(seed, degree):
    rng = np.random.default_rng(seed)
    poly = random_convex_polygon(rng, center=rng.uniform(-1, 1, 2))
    r = polygon_quadrature(poly, degree)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - polygon_area(poly)) < 1e-13 * 10
    for d in range(degree + 1):
        for a in range(d + 1):
            b = d - a
            ref = green_monomial_integral(poly, a, b)
            val = r.weights @ (r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))


def test_nonconvex_polygon_uses_valid_triangulation():
    # a U-shape that is not star-shaped about its centroid
    U = np.array([[0, 0], [3, 0], [3, 2], [2, 2], [2, 1], [1, 1], [1, 2], [0, 2]], float)
    tris = triangulate_polygon(U)
    assert len(tris) == 6
    assert all((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0] > 0 for a, b, c in tris)
    r = polygon_quadrature(U, 3)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - 5.0) < 1e-13
    assert abs(r.weights @ (r.points[:, 0] * r.points[:, 1] ** 2)
               - green_monomial_integral(U, 1, 2)) < 1e-12


def test_clockwise_polygon_is_rejected():
    with pytest.raises(ValueError):
        polygon_quadrature(unit_square()[::-1], 2)


# -- element basis ---------------------------------------------------------


def test_constant_and_centred_linear_monomials():
    hexv = regular_hexagon(0.7, center=(2.0, -1.0))
    b = ScaledMonomialBasis.for_polygon(hexv, 3)
    pts = np.vstack([hexv, [[2.0, -1.0]]])
    V, G = eval_basis(b, pts)
    assert b.dim == 10
    np.testing.assert_allclose(V[:, 0], 1.0)
    np.testing.assert_allclose(G[:, 0], 0.0)
    # m_(1,0) vanishes at the centroid
    assert abs(V[-1, 1]) < 1e-15


@pytest.mark.parametrize("h", [1.0, 1e-2])
def test_gradients_against_central_differences(h):
    b = ScaledMonomialBasis(4, np.array([0.3, 0.2]), h)
    rng = np.random.default_rng(0)
    pts = np.array([0.3, 0.2]) + h * rng.uniform(-0.5, 0.5, (10, 2))
    G = b.gradients(pts)
    step = 1e-6 * h
    for d in range(2):
        e = np.zeros(2)
        e[d] = step
        fd = (b.values(pts + e) - b.values(pts - e)) / (2 * step)
        assert np.abs(fd - G[:, :, d]).max() <= 1e-7 / h


def test_scaled_monomials_are_affine_invariant():
    rng = np.random.default_rng(3)
    poly = random_convex_polygon(rng, n=6)
    moved = 1e-3 * poly + np.array([5.0, 7.0])
    b0 = ScaledMonomialBasis.for_polygon(poly, 3)
    b1 = ScaledMonomialBasis.for_polygon(moved, 3)
    np.testing.assert_allclose(b0.values(poly), b1.values(moved), atol=1e-12)


def _stiffness(poly, k):
    b = ScaledMonomialBasis.for_polygon(poly, k)
    r = polygon_quadrature(poly, 2 * k)
    g = b.gradients(r.points)
    return np.einsum("q,qai,qbi->ab", r.weights, g, g)


@pytest.mark.parametrize("k", range(1, 7))
def test_stiffness_kernel_is_exactly_the_constants(k):
    rng = np.random.default_rng(k)
    poly = random_convex_polygon(rng)
    A = _stiffness(poly, k)
    np.testing.assert_allclose(A, A.T, atol=1e-14 * np.abs(A).max())
    w = np.linalg.eigvalsh(A)
    assert abs(w[0]) < 1e-12 * w[-1]
    assert w[1] > 1e-10 * w[-1]
    np.testing.assert_allclose(A[0], 0.0, atol=1e-15)


def test_gram_conditioning_is_independent_of_element_size():
    base = regular_hexagon(0.5)

    def cond(h):
        poly = base * h
        b = ScaledMonomialBasis.for_polygon(poly, 4)
        r = polygon_quadrature(poly, 8)
        V = b.values(r.points)
        return np.linalg.cond((V.T * r.weights) @ V)

    assert cond(1e-3) / cond(1.0) <= 10
