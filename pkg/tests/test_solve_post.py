import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import hex_mesh, voronoi_mesh
from polyhdg.assembly import apply_dirichlet, assemble
from polyhdg.basis import ScaledMonomialBasis, polygon_quadrature
from polyhdg.mesh import PolyMesh
from polyhdg.solve_post import (MANUFACTURED, ConvergenceRecord, LevelResult, SolutionFields,
                                SolverError, compute_errors, convergence_rates,
                                diagnostic_norms, ecr, factorize, polynomial_solution, solve)


def l2_projection(mesh, k, u):
    coeffs = []
    for K in range(mesh.n_elements):
        v = mesh.element_vertices(K)
        b = ScaledMonomialBasis.for_polygon(v, k)
        q = polygon_quadrature(v, 2 * k + 4)
        V = b.values(q.points)
        coeffs.append(np.linalg.solve((V.T * q.weights) @ V, V.T @ (q.weights * u(q.points))))
    return np.array(coeffs)


def solve_with(mesh, k, sol, **kw):
    system = assemble(mesh, k, f=sol.f, **kw)
    if not sol.zero_on_boundary:
        system = apply_dirichlet(system, sol.u)
    return system, solve(system)


def test_patch_coefficients_are_exact():
    mesh = voronoi_mesh(1)
    sol = MANUFACTURED["linear-x"]
    _, f = solve_with(mesh, 1, sol)
    np.testing.assert_allclose(f.u, l2_projection(mesh, 1, sol.u), atol=1e-10)


@pytest.mark.parametrize("t", [1.0, 0.0])
def test_patch_passes_for_both_test_scalings(t):
    sol = MANUFACTURED["quadratic"]
    mesh = hex_mesh(1)
    _, f = solve_with(mesh, 2, sol, t=t)
    e0, e1 = compute_errors(mesh, 2, f, sol.u, sol.grad)
    assert e1 <= 1e-10


def test_test_scaling_changes_the_discrete_solution():
    sol = MANUFACTURED["sine"]
    mesh = hex_mesh(1)
    _, a = solve_with(mesh, 1, sol, t=1.0)
    _, b = solve_with(mesh, 1, sol, t=0.0)
    assert np.abs(a.u - b.u).max() > 1e-6 * np.abs(a.u).max()


@pytest.mark.parametrize("method", ["direct", "condensed"])
def test_random_rhs_residual(method):
    mesh = voronoi_mesh(2)
    system = assemble(mesh, 2)
    rng = np.random.default_rng(0)
    system = replace(system, locals=[replace(l, b=rng.standard_normal(len(l.b)))
                                     for l in system.locals])
    f = solve(system, method)
    assert f.residual <= 1e-10
    assert not f.warnings


def test_singular_matrix_reports_pivot():
    A = sp.diags([1.0, 1e-20, 1.0]).tocsc()
    with pytest.raises(SolverError) as info:
        factorize(A)
    assert info.value.pivot == 1
    with pytest.raises(SolverError):
        factorize(sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])))


def test_fields_must_be_finite():
    with pytest.raises(SolverError):
        SolutionFields(1, np.array([[np.nan, 0, 0]]), [np.zeros((3, 2))], np.zeros((3, 2)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_errors_vanish_for_projected_polynomials(k):
    mesh = voronoi_mesh(1)
    coeffs = {(a, d - a): 1.0 / (1 + d + a) for d in range(k + 1) for a in range(d + 1)}
    sol = polynomial_solution(coeffs)
    u = l2_projection(mesh, k, sol.u)
    f = SolutionFields(k, u, [np.zeros((len(c), k + 1)) for c in mesh.elements],
                       np.zeros((mesh.n_edges, k + 1)))
    e0, e1 = compute_errors(mesh, k, f, sol.u, sol.grad)
    assert e0 <= 1e-11 and e1 <= 1e-11


def test_ecr_hand_values():
    assert ecr(1e-2, 2.5e-3, 0.2, 0.1) == pytest.approx(2.0, abs=1e-15)
    assert convergence_rates([1e-2, 2.5e-3], [0.2, 0.1])[0] is None
    with pytest.raises(ValueError):
        convergence_rates([1.0], [0.1, 0.05])


def test_convergence_record():
    rec = ConvergenceRecord("hex", 1)
    for i, (h, e) in enumerate([(0.4, 0.16), (0.2, 0.04), (0.1, 0.01), (0.05, 0.0025)]):
        rec.add(LevelResult(i + 1, h, 10 * 4**i, e, math.sqrt(e)))
    assert rec.ecr0[0] is None
    assert rec.mean_rate("e0") == pytest.approx(2.0)
    assert rec.mean_rate("e1") == pytest.approx(1.0)
    rows = list(rec.rows())
    assert rows[0][6] is None and rows[1][6] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        rec.add(LevelResult(5, 0.01, 1, -1.0, 1.0))


def test_errors_invariant_under_element_reordering():
    mesh = voronoi_mesh(2)
    perm = np.random.default_rng(3).permutation(mesh.n_elements)
    shuffled = PolyMesh(mesh.vertices, [mesh.elements[i] for i in perm])
    sol = MANUFACTURED["sine"]
    _, a = solve_with(mesh, 2, sol)
    _, b = solve_with(shuffled, 2, sol)
    ea = compute_errors(mesh, 2, a, sol.u, sol.grad)
    eb = compute_errors(shuffled, 2, b, sol.u, sol.grad)
    np.testing.assert_allclose(ea, eb, rtol=1e-10)
    np.testing.assert_allclose(b.u, a.u[perm], atol=1e-12 * np.abs(a.u).max())


def test_diagnostics_of_exact_solution():
    sol = MANUFACTURED["quadratic"]
    mesh = voronoi_mesh(2)
    system, f = solve_with(mesh, 2, sol)
    rep = diagnostic_norms(system, f)
    interior = mesh.edge_elements[:, 1] >= 0
    assert np.abs(rep.mean_jumps[interior]).max() <= 1e-10
    assert rep.stabilization_energy <= 1e-10
    assert rep.relative_flux_average <= 1e-9


def test_stabilization_energy_decreases_under_refinement():
    sol = MANUFACTURED["sine"]
    energies = []
    for level in range(1, 5):
        system, f = solve_with(hex_mesh(level), 1, sol)
        rep = diagnostic_norms(system, f)
        assert rep.relative_flux_average <= 1e-9
        energies.append(rep.stabilization_energy)
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_broken_seminorm_matches_exact_for_linear():
    sol = MANUFACTURED["linear-x"]
    system, f = solve_with(voronoi_mesh(1), 1, sol)
    assert diagnostic_norms(system, f).broken_h1 == pytest.approx(1.0, abs=1e-10)
