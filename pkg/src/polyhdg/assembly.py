"""Global three-field saddle-point system and its static condensation.

Unknown ordering: all element ``u`` blocks, then all element-edge ``lam``
blocks (element by element, edges in CCW order), then the ``phi`` blocks
of the interior edges. Every edge polynomial, ``lam`` included, is written
in the Legendre basis of the global edge parameter running from
``mesh.edges[e, 0]`` to ``mesh.edges[e, 1]``.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
import multiprocessing as mp

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .auxspace import AuxSpaceK, build_aux_space, flux_matrix, trace_matrix
from .basis import gauss_legendre, legendre_table, polygon_quadrature
from .mesh import PolyMesh

__all__ = [
    "AssemblyError",
    "DofLayout",
    "LocalSystem",
    "SaddleSystem",
    "local_system",
    "assemble",
    "apply_dirichlet",
    "condense",
    "dump_coo",
]


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class DofLayout:
    k: int
    dim_u: int
    u_offsets: np.ndarray      # (M,)
    lam_offsets: np.ndarray    # (M,) start of each element's lam block
    phi_offsets: np.ndarray    # (n_edges,), -1 on boundary edges
    n_u: int
    n_lam: int
    n_phi: int

    @classmethod
    def from_mesh(cls, mesh: PolyMesh, k: int):
        if k < 1:
            raise AssemblyError("polynomial degree must be >= 1")
        dim_u = (k + 1) * (k + 2) // 2
        M = mesh.n_elements
        u_off = np.arange(M) * dim_u
        n_u = M * dim_u
        sizes = np.array([len(e) for e in mesh.elements]) * (k + 1)
        lam_off = n_u + np.concatenate([[0], np.cumsum(sizes)[:-1]])
        n_lam = int(sizes.sum())
        interior = mesh.edge_elements[:, 1] >= 0
        phi_off = -np.ones(mesh.n_edges, dtype=int)
        phi_off[interior] = n_u + n_lam + np.arange(interior.sum()) * (k + 1)
        return cls(k, dim_u, u_off, lam_off, phi_off, n_u, n_lam, int(interior.sum()) * (k + 1))

    @property
    def total(self):
        return self.n_u + self.n_lam + self.n_phi

    def u_slice(self, K):
        return slice(int(self.u_offsets[K]), int(self.u_offsets[K]) + self.dim_u)

    def lam_slice(self, K, n_edges):
        start = int(self.lam_offsets[K])
        return slice(start, start + n_edges * (self.k + 1))

    def element_dofs(self, K, n_edges):
        """Global indices of the local ``[u, lam]`` vector of element ``K``."""
        u = np.arange(self.dim_u) + self.u_offsets[K]
        lam = np.arange(n_edges * (self.k + 1)) + self.lam_offsets[K]
        return np.concatenate([u, lam])

    def phi_dofs(self, edge):
        start = int(self.phi_offsets[edge])
        if start < 0:
            return None
        return np.arange(start, start + self.k + 1)


@dataclass
class LocalSystem:
    """Local matrix ``A_K`` acting on ``[u, lam]`` and the load ``b_K``."""

    aux: AuxSpaceK
    A: np.ndarray
    b: np.ndarray
    flux: np.ndarray    # E_u
    trace: np.ndarray   # E_lam in global edge orientation
    edge_mass: np.ndarray  # (E, k+1) diagonal Legendre mass per edge


def _edge_mass(lengths, k):
    return lengths[:, None] / (2.0 * np.arange(k + 1) + 1.0)[None, :]


def local_system(vertices, signs, k, alpha=1.0, t=1.0, f=None, stab_scale=1.0,
                 load_degree=None):
    """Local blocks of one element; ``signs[j] < 0`` flips edge ``j``."""
    load_degree = 2 * k + 4 if load_degree is None else int(load_degree)
    if load_degree < 2 * k - 2:
        raise AssemblyError("load quadrature degree too low for the element basis")
    aux = build_aux_space(vertices, k, stab_scale)
    bu = aux.basis_u
    nu = bu.dim
    E = aux.n_edges
    quad = polygon_quadrature(aux.vertices, max(2 * k - 2, 0))
    g = bu.gradients(quad.points)
    stiff = np.einsum("q,qai,qbi->ab", quad.weights, g, g)

    # C[(j, l), b] = int_{e_j} m_b P_l, P_l in the global edge parameter
    gq = gauss_legendre(k + 1)
    parity = (-1.0) ** np.arange(k + 1)
    C = np.zeros((E * (k + 1), nu))
    for j in range(E):
        pts = aux.edge_parameter_points_at(j, gq.points)
        P = legendre_table(k, gq.points)
        if signs[j] < 0:
            P = P * parity
        C[j * (k + 1): (j + 1) * (k + 1)] = (P * (gq.weights * aux.lengths[j])[:, None]).T @ bu.values(pts)

    Eu = flux_matrix(aux)
    El = trace_matrix(aux, signs)
    SiEu = aux.solve_S(Eu)
    SiEl = aux.solve_S(El)
    A = np.block([
        [stiff + t * alpha * Eu.T @ SiEu, -C.T + t * alpha * Eu.T @ SiEl],
        [C + alpha * El.T @ SiEu, alpha * El.T @ SiEl],
    ])
    b = np.zeros(len(A))
    if f is not None:
        lq = polygon_quadrature(aux.vertices, load_degree)
        b[:nu] = bu.values(lq.points).T @ (lq.weights * np.asarray(f(lq.points), dtype=float))
    return LocalSystem(aux, A, b, Eu, El, _edge_mass(aux.lengths, k))


# per-process job context for the parallel element loop (inherited by fork)
_JOB = None


def _local_job(K):
    mesh, k, alpha, t, f, stab_scale = _JOB
    return local_system(mesh.element_vertices(K), mesh.element_edge_signs[K], k,
                        alpha, t, f, stab_scale)


def _build_locals(mesh, k, alpha, t, f, stab_scale, workers):
    global _JOB
    _JOB = (mesh, k, alpha, t, f, stab_scale)
    try:
        if workers and workers > 1 and "fork" in mp.get_all_start_methods():
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                # map preserves element order, so the result is deterministic
                return list(pool.map(_local_job, range(mesh.n_elements), chunksize=64))
        return [_local_job(K) for K in range(mesh.n_elements)]
    finally:
        _JOB = None


@dataclass
class SaddleSystem:
    mesh: PolyMesh
    k: int
    alpha: float
    t: float
    layout: DofLayout
    locals: list
    condensed: bool = False
    stab_scale: float = 1.0
    dirichlet: bool = False

    @cached_property
    def matrix(self):
        """Sparse matrix of the uncondensed system (built on first use)."""
        rows, cols, vals = [], [], []
        mesh, L, k = self.mesh, self.layout, self.k
        for K, loc in enumerate(self.locals):
            E = len(mesh.elements[K])
            dofs = L.element_dofs(K, E)
            rows.append(np.repeat(dofs, len(dofs)))
            cols.append(np.tile(dofs, len(dofs)))
            vals.append(loc.A.ravel())
            lam0 = int(L.lam_offsets[K])
            for j, e in enumerate(mesh.element_edges[K]):
                phi = L.phi_dofs(e)
                if phi is None:
                    continue
                lam = lam0 + j * (k + 1) + np.arange(k + 1)
                m = loc.edge_mass[j]
                rows += [lam, phi]
                cols += [phi, lam]
                vals += [-m, m]
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(L.total, L.total))
        return A.tocsr()

    @cached_property
    def rhs(self):
        b = np.zeros(self.layout.total)
        for K, loc in enumerate(self.locals):
            b[self.layout.element_dofs(K, len(self.mesh.elements[K]))] = loc.b
        return b

    def coupling(self, K):
        """``(P_K, phi_dofs)``: local columns multiplying the interior traces."""
        loc = self.locals[K]
        k = self.k
        nu = self.layout.dim_u
        cols, blocks = [], []
        for j, e in enumerate(self.mesh.element_edges[K]):
            phi = self.layout.phi_dofs(e)
            if phi is None:
                continue
            P = np.zeros((len(loc.b), k + 1))
            r = nu + j * (k + 1)
            P[r: r + k + 1] = -np.diag(loc.edge_mass[j])
            blocks.append(P)
            cols.append(phi)
        if not blocks:
            return np.zeros((len(loc.b), 0)), np.zeros(0, dtype=int)
        return np.hstack(blocks), np.concatenate(cols)


def assemble(mesh: PolyMesh, k: int, alpha=1.0, t=1.0, f=None, stab_scale=1.0,
             condensed=False, workers=None, validate=True):
    """Build the saddle-point system of the hybrid method on ``mesh``.

    ``f`` maps an ``(n, 2)`` array of points to source values. With
    ``condensed=True`` the system is flagged for the trace-only solve;
    the local blocks are the same either way.
    """
    if not alpha > 0:
        raise AssemblyError("alpha must be positive")
    if validate:
        try:
            mesh.validate(domain_area=None, unit_square=False)
        except Exception as exc:
            raise AssemblyError(f"invalid mesh: {exc}") from exc
    layout = DofLayout.from_mesh(mesh, k)
    locs = _build_locals(mesh, k, float(alpha), float(t), f, float(stab_scale), workers)
    return SaddleSystem(mesh, int(k), float(alpha), float(t), layout, locs,
                        condensed=bool(condensed), stab_scale=float(stab_scale))


def apply_dirichlet(system: SaddleSystem, g=None, order=None):
    """Add ``int_e g mu`` on boundary edges; ``g = None`` or zero leaves it unchanged."""
    if g is None:
        return system
    k = system.k
    mesh = system.mesh
    gq = gauss_legendre(order or k + 6)
    P = legendre_table(k, gq.points)
    new_locals = []
    for K, loc in enumerate(system.locals):
        b = loc.b.copy()
        for j, e in enumerate(mesh.element_edges[K]):
            if mesh.edge_elements[e, 1] >= 0:
                continue
            a, c = mesh.vertices[mesh.edges[e]]
            pts = a + gq.points[:, None] * (c - a)
            vals = np.asarray(g(pts), dtype=float)
            r = system.layout.dim_u + j * (k + 1)
            b[r: r + k + 1] += np.linalg.norm(c - a) * (P.T @ (gq.weights * vals))
        new_locals.append(replace(loc, b=b))
    return replace(system, locals=new_locals, dirichlet=True)


@dataclass
class CondensedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    factors: list = field(repr=False)   # per element (lu, A^{-1} b, A^{-1} P, phi dofs)


def condense(system: SaddleSystem):
    """Eliminate ``[u, lam]`` element by element, leaving a system in ``phi``.

    Coupling rows read ``sum_K -P_K^T x_K = 0`` and
    ``x_K = A_K^{-1} (b_K - P_K phi)``, hence
    ``(sum_K P_K^T A_K^{-1} P_K) phi = sum_K P_K^T A_K^{-1} b_K``.
    """
    L = system.layout
    off = L.n_u + L.n_lam
    rows, cols, vals = [], [], []
    r = np.zeros(L.n_phi)
    factors = []
    for K, loc in enumerate(system.locals):
        P, phi = system.coupling(K)
        try:
            lu = sla.lu_factor(loc.A, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise AssemblyError(f"local matrix of element {K} is singular: {exc}") from exc
        xb = sla.lu_solve(lu, loc.b)
        XP = sla.lu_solve(lu, P) if P.shape[1] else P
        factors.append((xb, XP, phi))
        if not len(phi):
            continue
        idx = phi - off
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append((P.T @ XP).ravel())
        np.add.at(r, idx, P.T @ xb)
    if rows:
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(L.n_phi, L.n_phi)).tocsr()
    else:
        H = sp.csr_matrix((0, 0))
    return CondensedSystem(H, r, factors)


def dump_coo(matrix, path):
    """Write ``row col value`` lines (0-based) preceded by a size header."""
    A = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
    return os.path.abspath(path)
