import math

import numpy as np
import pytest
from scipy import integrate

from conftest import unit_square
from polyhdg.basis import legendre_table
from polyhdg.diagnostics import REGRESSION, regular_hexagon
from polyhdg.dualnorms import (DualNormOracle, EdgeNormWeights, ElementP1Space, OracleError,
                               edge_duality_sup, estimate, h00_dual_norm, h12_seminorm,
                               minus_half_norm, minus_half_seminorm, minus_one_norm,
                               minus_one_seminorm)

COARSE = DualNormOracle(edge_intervals=128, element_divisions=20)


# -- H^{1/2} seminorm ---------------------------------------------------------


def test_h12_of_constant_is_zero():
    assert h12_seminorm(lambda x: 3.0 + 0 * x) == 0.0


def test_h12_exact_values():
    # |x|^2 = int int 1 = 1 and |x^2|^2 = int int (x + y)^2 = 7/6
    assert abs(h12_seminorm(lambda x: x) - 1.0) < 1e-12
    assert abs(h12_seminorm(lambda x: x**2) - math.sqrt(7 / 6)) < 1e-12


@pytest.mark.parametrize("h", [1.0, 0.5, 1e-3])
def test_h12_is_scale_invariant(h):
    assert abs(h12_seminorm(lambda x: x / h, 0.0, h) - 1.0) < 1e-12
    ref = h12_seminorm(lambda x: np.sin(3 * x))
    assert abs(h12_seminorm(lambda x: np.sin(3 * x / h), 0.0, h) - ref) < 1e-10


def test_h12_matches_adaptive_quadrature():
    def f(y, x):
        return (np.sin(3 * x) - np.sin(3 * y)) ** 2 / (x - y) ** 2

    # integrate the lower triangle y < x adaptively and double
    ref, _ = integrate.dblquad(f, 0, 1, lambda x: 0, lambda x: x, epsabs=1e-13, epsrel=1e-12)
    assert abs(h12_seminorm(lambda x: np.sin(3 * x)) - math.sqrt(2 * ref)) < 1e-6


# -- H^{-1/2} on an edge ------------------------------------------------------


def test_minus_half_annihilates_constants():
    assert minus_half_seminorm(lambda t: 1.0 + 0 * t) < 1e-12
    assert minus_half_seminorm([2.0, 0.0, 0.0], 0.3) < 1e-12


def test_minus_half_frozen_reference_value():
    value = minus_half_seminorm(lambda t: t - 0.5)
    assert abs(value - REGRESSION["edge_minus_half_linear"]) < 1e-6
    est = estimate(lambda o: minus_half_seminorm(lambda t: t - 0.5, 1.0, o))
    assert est.value == value
    assert est.error < 1e-6


@pytest.mark.parametrize("h", [1.0, 0.5, 0.25, 0.125])
def test_minus_half_scaling_on_the_reference_edge(h):
    lam = [0.3, -1.0, 0.5, 0.25]
    assert abs(minus_half_seminorm(lam, h) / minus_half_seminorm(lam, 1.0) - h) <= 0.02 * h


def test_legendre_coefficients_and_callables_agree():
    c = np.array([0.0, 0.4, -0.3, 0.2])
    a = minus_half_seminorm(c, 1.0, COARSE)
    b = minus_half_seminorm(lambda t: legendre_table(3, t) @ c, 1.0, COARSE)
    assert abs(a - b) < 1e-12


def test_minus_half_norm_of_constant_is_length():
    for h in (1.0, 0.3):
        assert abs(minus_half_norm([1.0], h) - h) < 1e-12


def test_minus_half_norm_of_zero_mean_is_the_seminorm():
    lam = [0.0, 1.0, -0.5]
    assert abs(minus_half_norm(lam, 0.7) - minus_half_seminorm(lam, 0.7)) < 1e-14


def test_edge_weights_must_multiply_to_squared_length():
    EdgeNormWeights.scaled(0.3).check(0.3)
    EdgeNormWeights(2.0, 0.045).check(0.3)
    with pytest.raises(ValueError):
        minus_half_norm([1.0], 0.3, EdgeNormWeights(1.0, 1.0))


def test_duality_constants_within_modest_factor():
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(20):
        lam = rng.standard_normal(4)
        h = rng.uniform(0.05, 1.0)
        ratios.append(edge_duality_sup(lam, h) / minus_half_norm(lam, h))
    c1, c2 = min(ratios), max(ratios)
    assert 0.5 <= c1 <= c2 <= 2.0


def test_oracle_values_converge_from_below():
    # each doubling enlarges the test space, so the sup can only grow
    lam = [0.2, 0.0, 1.0, -0.7]
    vals = [minus_half_seminorm(lam, 1.0, DualNormOracle(edge_intervals=n))
            for n in (32, 64, 128, 256)]
    for a, b in zip(vals, vals[1:]):
        assert b >= a * (1 - 0.01)
    gaps = np.abs(np.diff(vals))
    assert gaps[-1] <= gaps[0]


def test_oracle_resolution_floor():
    with pytest.raises(OracleError):
        DualNormOracle(edge_intervals=2)
    with pytest.raises(OracleError):
        DualNormOracle(element_divisions=1)


# -- H^{-1}(K) -------------------------------------------------------------


@pytest.fixture(scope="module")
def square_space():
    return ElementP1Space(unit_square(), 40)


def test_minus_one_of_zero(square_space):
    assert minus_one_seminorm(square_space, np.zeros(square_space.n_dofs)) == 0.0


def test_minus_one_annihilates_trace_of_constant(square_space):
    load = square_space.load_boundary(lambda e, t: np.ones_like(t))
    assert minus_one_seminorm(square_space, load) < 1e-12
    # the full norm still sees the mean: <gamma^* 1, 1> = |dK| = 4
    assert abs(minus_one_norm(square_space, load) - 4.0) < 1e-10


def test_minus_one_of_linear_gradient(square_space):
    load = square_space.load_gradient(lambda X: np.tile([1.0, 0.0], (len(X), 1)))
    value = minus_one_seminorm(square_space, load)
    assert value <= 1.0 + 1e-12
    assert abs(value - REGRESSION["minus_one_linear"]) < 1e-10


def test_sandwich_between_edge_norms_and_minus_one():
    """Edge dual norms bound |gamma^* lam|_{-1,K} from both sides, with constants
    that do not move under oracle refinement."""
    hexv = regular_hexagon()
    rng = np.random.default_rng(0)
    k = 3
    samples = []
    for _ in range(20):
        c = rng.standard_normal((6, k + 1))
        c[:, 0] -= c[:, 0].mean()           # <gamma^* lam, 1> = 0
        samples.append(c)

    def constants(oracle):
        space = ElementP1Space(hexv, oracle.element_divisions)
        lower, upper = [], []
        for c in samples:
            load = space.load_boundary(lambda e, t, c=c: legendre_table(k, t) @ c[e], order=k + 2)
            mid = minus_one_seminorm(space, load)
            left = math.sqrt(sum(h00_dual_norm(c[e], 1.0, oracle) ** 2 for e in range(6)))
            right = math.sqrt(sum(minus_half_norm(c[e], 1.0, oracle=oracle) ** 2
                                  for e in range(6)))
            lower.append(left / mid)
            upper.append(mid / right)
        return max(lower), max(upper)

    C, Cp = constants(DualNormOracle())
    C2, Cp2 = constants(DualNormOracle().refined())
    assert np.isfinite([C, Cp]).all() and C > 0 and Cp > 0
    assert abs(C2 - C) <= 0.05 * C
    assert abs(Cp2 - Cp) <= 0.05 * Cp
