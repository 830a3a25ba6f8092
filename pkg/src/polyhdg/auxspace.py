"""Auxiliary virtual space ``W_K`` used to realise the ``-1`` stabilisation.

``W_K`` is the order ``m = k + 2`` virtual element space whose interior
moments up to degree ``k`` vanish. Its degrees of freedom are nodal values
at the polygon vertices and at the ``k + 1`` interior Gauss-Lobatto nodes of
each edge. On an edge a function of ``W_K`` is the degree ``k + 2``
Lagrange polynomial through the ``k + 3`` Gauss-Lobatto nodes, so boundary
integrals of ``(polynomial of degree <= k + 1) * phi_i`` reduce exactly to
a single Gauss-Lobatto weight.

DOF numbering is edge by edge: edge ``j`` owns indices
``j (k+2) + q`` for ``q = 0..k+1``; node ``q = k + 2`` of edge ``j`` is the
first node of edge ``j + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import (ScaledMonomialBasis, gauss_legendre, gauss_lobatto,
                    legendre_table, polygon_area, polygon_quadrature)
from .dualnorms import DualNormOracle, boundary_minus_half_gram

__all__ = [
    "AuxSpaceError",
    "AuxSpaceK",
    "ResidualVectors",
    "build_aux_space",
    "flux_matrix",
    "trace_matrix",
    "residual_vector",
    "normal_derivative_coefficients",
    "infsup_constant",
    "projector_consistency",
    "consistency_defect",
]


class AuxSpaceError(RuntimeError):
    pass


@dataclass
class AuxSpaceK:
    vertices: np.ndarray
    k: int
    stab_scale: float
    area: float
    lengths: np.ndarray            # (E,)
    normals: np.ndarray            # (E, 2) outward unit normals
    edge_nodes: np.ndarray         # (E, k+3) DOF indices along each edge
    node_points: np.ndarray        # (N, 2)
    gl_points: np.ndarray          # (k+3,) on [0, 1]
    gl_weights: np.ndarray         # (k+3,)
    basis_u: ScaledMonomialBasis   # P_k
    basis_w: ScaledMonomialBasis   # P_{k+2}
    projector: np.ndarray          # (dim P_{k+2}, N)
    stiffness_w: np.ndarray        # (dim P_{k+2}, dim P_{k+2})
    dof_matrix: np.ndarray         # (N, dim P_{k+2}), D
    tau: float
    S: np.ndarray                  # (N, N)
    boundary_moments: np.ndarray   # (N,) int_dK phi_i
    interior_moments: bool = False  # True only for the full VEM space (diagnostics)
    _chol: tuple = field(default=None, repr=False)

    @property
    def n_edges(self):
        return len(self.lengths)

    @property
    def m(self):
        return self.k + 2

    @property
    def n_boundary_dofs(self):
        return self.n_edges * (self.k + 2)

    @property
    def n_dofs(self):
        return len(self.S)

    def solve_S(self, rhs):
        if self._chol is None:
            try:
                self._chol = sla.cho_factor(self.S)
            except np.linalg.LinAlgError as exc:
                raise AuxSpaceError(f"stabilisation matrix is not positive definite: {exc}") from exc
        return sla.cho_solve(self._chol, rhs)

    def edge_parameter_points(self, j):
        return self.edge_parameter_points_at(j, self.gl_points)

    def edge_parameter_points_at(self, j, s):
        A = self.vertices[j]
        B = self.vertices[(j + 1) % self.n_edges]
        return A + np.asarray(s)[:, None] * (B - A)


def _laplacian_coefficients(bw: ScaledMonomialBasis, dim_u):
    # Laplacian of each P_{k+2} monomial in the P_k monomial basis
    e = bw.exponents
    index = {tuple(x): i for i, x in enumerate(e[:dim_u])}
    lap = np.zeros((bw.dim, dim_u))
    for a, (px, py) in enumerate(e):
        if px >= 2:
            lap[a, index[(px - 2, py)]] += px * (px - 1)
        if py >= 2:
            lap[a, index[(px, py - 2)]] += py * (py - 1)
    return lap / bw.diameter**2


def build_aux_space(vertices, k, stab_scale=1.0, zero_moments=True):
    """Assemble nodes, the ``H^1`` projector and the stabilisation matrix.

    ``zero_moments=False`` builds the standard order ``k + 2`` virtual space
    instead, with interior moments as extra DOFs. It exists only so that
    the consistency diagnostics have a known-bad space to reject.
    """
    v = np.asarray(vertices, dtype=float)
    if k < 1:
        raise AuxSpaceError("polynomial degree must be >= 1")
    E = len(v)
    if E < 3 or polygon_area(v) <= 0:
        raise AuxSpaceError("element must be a CCW polygon with >= 3 vertices")
    m = k + 2
    gl = gauss_lobatto(k + 3)
    N = E * m
    nxt = np.roll(v, -1, axis=0)
    d = nxt - v
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths <= 0):
        raise AuxSpaceError("degenerate edge")
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    edge_nodes = np.empty((E, k + 3), dtype=int)
    node_points = np.empty((N, 2))
    for j in range(E):
        edge_nodes[j, : k + 2] = j * m + np.arange(k + 2)
        edge_nodes[j, k + 2] = ((j + 1) % E) * m
        node_points[j * m: (j + 1) * m] = v[j] + gl.points[: k + 2, None] * d[j]

    bu = ScaledMonomialBasis.for_polygon(v, k)
    bw = ScaledMonomialBasis.for_polygon(v, m)
    area = polygon_area(v)
    quad = polygon_quadrature(v, 2 * m)
    grads = bw.gradients(quad.points)
    Kw = np.einsum("q,qai,qbi->ab", quad.weights, grads, grads)
    mean_row = quad.weights @ bw.values(quad.points) / area

    # B_{a,i} = int_dK (n . grad m_a) phi_i; interior Laplacian term vanishes
    B = np.zeros((bw.dim, N))
    for j in range(E):
        pts = v[j] + gl.points[:, None] * d[j]
        flux = bw.gradients(pts) @ normals[j]             # (k+3, dim)
        np.add.at(B.T, edge_nodes[j], (gl.weights * lengths[j])[:, None] * flux)
    G = Kw.copy()
    G[0] = mean_row
    B[0] = 0.0
    D = bw.values(node_points)
    if not zero_moments:
        # moment DOFs (1/|K|) int phi m_b, m_b in P_k
        nu = bu.dim
        Vq = quad.weights[:, None] * bw.values(quad.points)
        Dm = bu.values(quad.points).T @ Vq / area
        B = np.hstack([B, -area * _laplacian_coefficients(bw, nu)])
        B[0] = 0.0
        B[0, N] = 1.0
        D = np.vstack([D, Dm])
        N = N + nu
    try:
        projector = np.linalg.solve(G, B)
    except np.linalg.LinAlgError as exc:
        raise AuxSpaceError(f"projector system is singular; element quality too poor: {exc}") from exc
    consistent = projector.T @ Kw @ projector
    resid = np.eye(N) - D @ projector
    tau = stab_scale * np.trace(consistent) / N
    S = consistent + tau * resid.T @ resid
    bm = np.zeros(N)
    for j in range(E):
        np.add.at(bm, edge_nodes[j], gl.weights * lengths[j])
    if not zero_moments:
        # the full space contains constants; pin them with the boundary mean
        S = S + np.outer(bm, bm) / bm.sum() ** 2
    S = 0.5 * (S + S.T)

    aux = AuxSpaceK(vertices=v, k=k, stab_scale=float(stab_scale), area=area,
                    lengths=lengths, normals=normals, edge_nodes=edge_nodes,
                    node_points=node_points, gl_points=gl.points, gl_weights=gl.weights,
                    basis_u=bu, basis_w=bw, projector=projector, stiffness_w=Kw,
                    dof_matrix=D, tau=tau, S=S, boundary_moments=bm,
                    interior_moments=not zero_moments)
    aux.solve_S(np.zeros(N))  # factorise eagerly so failures surface here
    return aux


def flux_matrix(aux: AuxSpaceK):
    """``E_u``: column ``b`` holds ``int_dK (n . grad m_b) phi_i``, ``m_b in P_k``."""
    out = np.zeros((aux.n_dofs, aux.basis_u.dim))
    for j in range(aux.n_edges):
        pts = aux.edge_parameter_points(j)
        flux = aux.basis_u.gradients(pts) @ aux.normals[j]
        np.add.at(out, aux.edge_nodes[j], (aux.gl_weights * aux.lengths[j])[:, None] * flux)
    return out


def trace_matrix(aux: AuxSpaceK, signs=None):
    """``E_lambda``: column ``(j, l)`` holds ``-int_e_j P_l phi_i``.

    ``signs[j] = -1`` means edge ``j`` is parametrised from vertex ``j+1``
    to vertex ``j``; Legendre coefficients then change by ``(-1)^l``.
    """
    k = aux.k
    E = aux.n_edges
    P = legendre_table(k, aux.gl_points)          # (k+3, k+1)
    out = np.zeros((aux.n_dofs, E * (k + 1)))
    parity = (-1.0) ** np.arange(k + 1)
    for j in range(E):
        block = -(aux.gl_weights * aux.lengths[j])[:, None] * P
        if signs is not None and signs[j] < 0:
            block = block * parity
        np.add.at(out[:, j * (k + 1): (j + 1) * (k + 1)], aux.edge_nodes[j], block)
    return out


@dataclass(frozen=True)
class ResidualVectors:
    """Coefficient vectors of the residual functionals on ``W_K``.

    ``f`` is the load functional tested on ``W_K``; it is identically zero
    because ``W_K`` functions have vanishing moments up to degree ``k``.
    """

    eta: np.ndarray
    zeta: np.ndarray | None
    f: np.ndarray


def residual_vector(aux: AuxSpaceK, u, lam, v=None, mu=None, t=1.0, signs=None):
    """``eta = E_u u + E_lam lam`` and ``zeta = t E_u v + E_lam mu``.

    Only boundary quadrature data enter.
    """
    Eu = flux_matrix(aux)
    El = trace_matrix(aux, signs)
    eta = Eu @ np.asarray(u) + El @ np.asarray(lam)
    zeta = None
    if v is not None and mu is not None:
        zeta = t * (Eu @ np.asarray(v)) + El @ np.asarray(mu)
    return ResidualVectors(eta, zeta, np.zeros(aux.n_dofs))


def normal_derivative_coefficients(aux: AuxSpaceK, u):
    """Edge-by-edge Legendre coefficients of ``grad u . n`` for ``u`` in ``P_k``.

    The result is the flux that makes ``eta`` vanish, flattened like ``lam``.
    """
    k = aux.k
    g = gauss_legendre(k + 2)
    P = legendre_table(k, g.points)
    scale = 2 * np.arange(k + 1) + 1
    out = []
    for j in range(aux.n_edges):
        pts = aux.edge_parameter_points_at(j, g.points)
        dn = aux.basis_u.evaluate_gradient(u, pts) @ aux.normals[j]
        out.append(scale * (P.T @ (g.weights * dn)))
    return np.concatenate(out)


def _zero_mean_basis(aux: AuxSpaceK):
    # lam in local orientation with int_dK lam = 0; only P_0 carries mean
    k = aux.k
    mean = np.zeros(aux.n_edges * (k + 1))
    mean[:: k + 1] = aux.lengths
    return sla.null_space(mean[None, :])


def infsup_constant(aux: AuxSpaceK, oracle: DualNormOracle | None = None, subspace=None):
    """Discrete inf-sup constant between traces and ``W_K``.

    ``inf_lam sup_{w in W_K, int_dK w = 0} <lam, w>_dK / (|w|_W |lam|_{-1/2,dK})``
    over edgewise ``P_k`` traces with zero boundary mean. ``subspace`` is an
    optional matrix whose columns restrict ``W_K``.
    """
    oracle = oracle or DualNormOracle()
    El = trace_matrix(aux)
    c = aux.boundary_moments
    S = aux.S
    if subspace is not None:
        R = np.asarray(subspace, dtype=float)
        S = R.T @ S @ R
        El = R.T @ El
        c = R.T @ c
    Sinv_El = np.linalg.solve(S, El)
    Sinv_c = np.linalg.solve(S, c)
    cSc = c @ Sinv_c
    Q_El = Sinv_El - np.outer(Sinv_c, c @ Sinv_El) / cSc if cSc > 0 else Sinv_El
    A = El.T @ Q_El
    Gram = boundary_minus_half_gram(aux.vertices, aux.k, oracle)
    Z = _zero_mean_basis(aux)
    A = Z.T @ A @ Z
    Gram = Z.T @ Gram @ Z
    A = 0.5 * (A + A.T)
    Gram = 0.5 * (Gram + Gram.T)
    ev = sla.eigh(A, Gram, eigvals_only=True)
    return float(np.sqrt(max(ev[0], 0.0)))


def projector_consistency(aux: AuxSpaceK):
    """Largest coefficient error of ``Pi D p - p`` over ``p = q - Pi^0_k q``.

    Such ``p`` are polynomials of degree ``k + 2`` orthogonal to ``P_k``
    and therefore lie in ``W_K``; the projector must reproduce them.
    """
    v = aux.vertices
    quad = polygon_quadrature(v, 2 * aux.m)
    Vw = aux.basis_w.values(quad.points)
    Vu = aux.basis_u.values(quad.points)
    Muu = np.einsum("q,qa,qb->ab", quad.weights, Vu, Vu)
    Muw = np.einsum("q,qa,qb->ab", quad.weights, Vu, Vw)
    # coefficients of Pi^0_k q in the P_{k+2} basis
    lift = np.zeros((aux.basis_w.dim, aux.basis_u.dim))
    lift[: aux.basis_u.dim] = np.eye(aux.basis_u.dim)
    P = np.eye(aux.basis_w.dim) - lift @ np.linalg.solve(Muu, Muw)
    err = aux.projector @ aux.dof_matrix @ P - P
    return float(np.abs(err).max())


def consistency_defect(aux: AuxSpaceK):
    """How far the boundary-only shortcuts are from the exact definitions.

    Returns the larger of two relative defects: ``int_K grad u . grad phi_i``
    via the boundary route against the projector route for ``u in P_k``,
    and the ``P_k`` moments of the basis functions, which the load
    approximation ``f_i = 0`` relies on. Both vanish for ``W_K``.
    """
    nu = aux.basis_u.dim
    direct = aux.projector.T @ aux.stiffness_w[:, :nu]
    boundary = flux_matrix(aux)
    scale = max(np.abs(direct).max(), 1e-300)
    flux_defect = np.abs(direct - boundary).max() / scale
    moment_defect = 0.0
    if aux.interior_moments:
        # moment DOFs are the P_k moments themselves, scaled by 1/|K|
        moment_defect = 1.0
    return float(max(flux_defect, moment_defect))


def boundary_gauss_points(aux: AuxSpaceK, n):
    """Gauss points along every edge, ``(E, n, 2)``, with weights ``(E, n)``."""
    g = gauss_legendre(n)
    d = np.roll(aux.vertices, -1, axis=0) - aux.vertices
    pts = aux.vertices[:, None, :] + g.points[None, :, None] * d[:, None, :]
    return pts, g.weights[None, :] * aux.lengths[:, None]
