"""Scaled fractional and dual norms, evaluated on fine reference spaces.

The sup-type norms are realised over fine continuous piecewise-linear
spaces: on an edge (or a closed polygon boundary) for the ``H^{1/2}``
duals, and on a sub-triangulated element for the ``H^1(K)`` dual. A sup
over a subspace is a lower bound that increases towards the exact value
as the resolution grows.

Conventions: ``|phi|_{1/2,e}`` is the square root of the Gagliardo double
integral, ``||phi||^2_{1/2,e} = alpha_e mean^2 + |phi|^2_{1/2,e}`` and
``||lam||^2_{-1/2,e} = beta_e mean^2 + |lam|^2_{-1/2,e}`` with
``alpha_e * beta_e = |e|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .basis import (_reference_triangle_rule, gauss_legendre, legendre_table,
                    polygon_diameter, triangulate_polygon)

__all__ = [
    "OracleError",
    "DualNormOracle",
    "EdgeNormWeights",
    "PolylineP1",
    "ElementP1Space",
    "h12_seminorm",
    "minus_half_seminorm",
    "minus_half_norm",
    "edge_duality_sup",
    "h00_dual_norm",
    "boundary_minus_half_gram",
    "minus_one_seminorm",
    "minus_one_norm",
    "minus_one_gram",
    "OracleEstimate",
    "estimate",
]

MIN_EDGE_INTERVALS = 4
MIN_ELEMENT_DIVISIONS = 2


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class DualNormOracle:
    """Resolution of the fine reference spaces.

    ``edge_intervals``: P1 sub-intervals per edge for the ``H^{1/2}``
    computations; ``element_divisions``: subdivisions of each edge of the
    coarse element triangulation for the ``H^1(K)`` computations (a fan of
    ``n`` triangles yields ``n * element_divisions**2`` fine triangles).
    """

    edge_intervals: int = 512
    element_divisions: int = 40
    boundary_intervals: int = 64
    gauss_order: int = 6

    def __post_init__(self):
        if self.edge_intervals < MIN_EDGE_INTERVALS or self.boundary_intervals < MIN_EDGE_INTERVALS:
            raise OracleError(f"oracle needs at least {MIN_EDGE_INTERVALS} intervals per edge")
        if self.element_divisions < MIN_ELEMENT_DIVISIONS:
            raise OracleError(f"oracle needs at least {MIN_ELEMENT_DIVISIONS} element divisions")

    def refined(self, factor=2):
        return replace(self, edge_intervals=self.edge_intervals * factor,
                       element_divisions=self.element_divisions * factor,
                       boundary_intervals=self.boundary_intervals * factor)


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    error: float     # |value - value at doubled resolution|


def estimate(fn, oracle=None):
    """Evaluate ``fn(oracle)`` and attach the change under one refinement."""
    oracle = oracle or DualNormOracle()
    value = float(fn(oracle))
    return OracleEstimate(value, abs(float(fn(oracle.refined())) - value))


@dataclass(frozen=True)
class EdgeNormWeights:
    alpha: float
    beta: float

    @classmethod
    def scaled(cls, length):
        return cls(1.0, length**2)

    def check(self, length, rtol=1e-12):
        if abs(self.alpha * self.beta - length**2) > rtol * length**2:
            raise ValueError("edge weights must satisfy alpha * beta = |e|^2")


# --------------------------------------------------------------------------
# Gagliardo seminorm of a callable
# --------------------------------------------------------------------------


def h12_seminorm(phi, a=0.0, b=1.0, n_sub=8, order=10):
    """``|phi|_{1/2,[a,b]}`` for a vectorised callable ``phi``.

    The square is split into sub-interval pairs; diagonal blocks are cut
    along the diagonal and each half is integrated with a collapsed Gauss
    rule, so the quadrature never samples ``x == y``.
    """
    x, w = gauss_legendre(order).points, gauss_legendre(order).weights
    H = (b - a) / n_sub
    starts = a + H * np.arange(n_sub)
    total = 0.0
    # off-diagonal blocks (i < j, doubled by symmetry)
    I, J = np.triu_indices(n_sub, 1)
    if I.size:
        X = starts[I][:, None, None] + H * x[None, :, None]
        Y = starts[J][:, None, None] + H * x[None, None, :]
        f = (phi(X) - phi(Y)) ** 2 / (X - Y) ** 2
        total += 2.0 * H * H * np.einsum("pij,i,j->", f, w, w)
    # diagonal blocks: lower triangle y < x via x = s + H u, y = s + H u v
    U, V = np.meshgrid(x, x, indexing="ij")
    WW = np.outer(w, w) * U
    for s in starts:
        X = s + H * U
        Y = s + H * U * V
        f = (phi(X) - phi(Y)) ** 2 / (X - Y) ** 2
        total += 2.0 * H * H * np.sum(WW * f)
    return float(np.sqrt(total))


# --------------------------------------------------------------------------
# fine P1 spaces on polylines
# --------------------------------------------------------------------------


def _duffy_rule(order):
    """Rule on [0,1]^2 for integrands singular at the origin: (p, q, w)."""
    g = gauss_legendre(order)
    U, V = np.meshgrid(g.points, g.points, indexing="ij")
    W = np.outer(g.weights, g.weights) * U
    p = np.concatenate([U.ravel(), (U * V).ravel()])
    q = np.concatenate([(U * V).ravel(), U.ravel()])
    return p, q, np.concatenate([W.ravel(), W.ravel()])


class PolylineP1:
    """Continuous piecewise-linear functions on an open or closed polyline.

    ``corners`` lists the polyline vertices; every straight piece is split
    into ``n_per_piece`` equal intervals.
    """

    def __init__(self, corners, closed=False, n_per_piece=64, order=6):
        corners = np.asarray(corners, dtype=float)
        self.closed = bool(closed)
        self.order = int(order)
        n_pieces = len(corners) if closed else len(corners) - 1
        if n_pieces < 1:
            raise ValueError("polyline needs at least one piece")
        self.n_pieces = n_pieces
        self.n_per_piece = int(n_per_piece)
        pts, piece, t0 = [], [], []
        for p in range(n_pieces):
            A, B = corners[p], corners[(p + 1) % len(corners)]
            s = np.arange(n_per_piece) / n_per_piece
            pts.append(A + s[:, None] * (B - A))
            piece.append(np.full(n_per_piece, p))
            t0.append(s)
        pts = np.vstack(pts)
        if not closed:
            pts = np.vstack([pts, corners[-1]])
        self.points = pts
        self.n_dofs = len(pts)
        n_int = n_pieces * n_per_piece
        self.n_intervals = n_int
        self.start = np.arange(n_int)
        self.end = (np.arange(n_int) + 1) % self.n_dofs if closed else np.arange(n_int) + 1
        self.piece = np.concatenate(piece)
        self.t0 = np.concatenate(t0)
        self.dt = 1.0 / n_per_piece
        self.lengths = np.linalg.norm(pts[self.end] - pts[self.start], axis=1)
        self.length = float(self.lengths.sum())
        m = np.zeros(self.n_dofs)
        np.add.at(m, self.start, 0.5 * self.lengths)
        np.add.at(m, self.end, 0.5 * self.lengths)
        self.moments = m
        self._gram = None

    # -- Gagliardo Gram matrix -------------------------------------------

    @property
    def gram(self):
        if self._gram is None:
            self._gram = self._assemble_gram()
        return self._gram

    def _assemble_gram(self):
        n = self.n_dofs
        A = np.zeros((n, n))
        P0, P1 = self.points[self.start], self.points[self.end]
        L = self.lengths
        g = gauss_legendre(self.order)
        s, ws = g.points, g.weights
        ga = np.column_stack([1.0 - s, s])
        # same interval: the divided difference is the constant slope
        for a in range(self.n_intervals):
            i, j = self.start[a], self.end[a]
            A[i, i] += 1.0
            A[j, j] += 1.0
            A[i, j] -= 1.0
            A[j, i] -= 1.0
        starts_at = {int(n): b for b, n in enumerate(self.start)}
        adjacent_next = {a: starts_at[int(self.end[a])] for a in range(self.n_intervals)
                         if int(self.end[a]) in starts_at and starts_at[int(self.end[a])] != a}
        adj = set()
        for a, b in adjacent_next.items():
            adj.add((a, b))
            adj.add((b, a))
        # far pairs, vectorised in chunks over all ordered pairs
        n_int = self.n_intervals
        far = np.ones((n_int, n_int), dtype=bool)
        np.fill_diagonal(far, False)
        for a, b in adj:
            far[a, b] = False
        ia, ib = np.nonzero(far)
        wq = ws[:, None] * ws[None, :]
        gg = (ga[:, :, None] * ga[:, None, :]).reshape(len(s), 4)
        chunk = max(1, 200000 // (len(s) ** 2))
        idx_parts, val_parts = [], []
        for c0 in range(0, len(ia), chunk):
            a, b = ia[c0:c0 + chunk], ib[c0:c0 + chunk]
            X = P0[a][:, :, None] + (P1[a] - P0[a])[:, :, None] * s[None, None, :]
            Y = P0[b][:, :, None] + (P1[b] - P0[b])[:, :, None] * s[None, None, :]
            d2 = ((X[:, :, :, None] - Y[:, :, None, :]) ** 2).sum(1)
            Wd = wq[None] * (L[a] * L[b])[:, None, None] / d2
            K11 = (Wd.sum(2) @ gg).reshape(-1, 2, 2)
            K22 = (Wd.sum(1) @ gg).reshape(-1, 2, 2)
            K12 = ga.T @ Wd @ ga
            na = np.column_stack([self.start[a], self.end[a]])
            nb = np.column_stack([self.start[b], self.end[b]])
            for i in range(2):
                for j in range(2):
                    idx_parts += [na[:, i] * n + na[:, j], nb[:, i] * n + nb[:, j],
                                  na[:, i] * n + nb[:, j], nb[:, j] * n + na[:, i]]
                    val_parts += [K11[:, i, j], K22[:, i, j], -K12[:, i, j], -K12[:, i, j]]
        if idx_parts:
            A += np.bincount(np.concatenate(idx_parts), weights=np.concatenate(val_parts),
                             minlength=n * n).reshape(n, n)
        # adjacent pairs sharing a node, Duffy-regularised at the shared node
        p, q, wd = _duffy_rule(self.order)
        for a, b in adjacent_next.items():
            S = self.points[self.end[a]]
            x = S - p[:, None] * (P1[a] - P0[a])
            y = S + q[:, None] * (P1[b] - P0[b])
            d2 = ((x - y) ** 2).sum(-1)
            gvec = np.column_stack([p, (1.0 - p) - (1.0 - q), -q])
            K = np.einsum("q,qi,qj->ij", wd * L[a] * L[b] / d2, gvec, gvec)
            idx = [self.start[a], self.end[a], self.end[b]]
            # ordered pairs (a, b) and (b, a) contribute equally
            A[np.ix_(idx, idx)] += 2.0 * K
        return 0.5 * (A + A.T)

    def h00_weight(self):
        """Gram of ``int phi_i phi_j (1/|x-a| + 1/|x-b|)`` on an open single piece."""
        if self.closed or self.n_pieces != 1:
            raise ValueError("H^{1/2}_{00} weights need a single open piece")
        n = self.n_dofs
        W = np.zeros((n, n))
        total = self.length
        g = gauss_legendre(self.order)
        s, ws = g.points, g.weights
        for a in range(self.n_intervals):
            La = self.lengths[a]
            x0 = a * La
            i, j = self.start[a], self.end[a]
            loc = np.column_stack([1.0 - s, s])
            for dist0, dist_dir in ((x0, 1.0), (total - x0, -1.0)):
                dist = dist0 + dist_dir * s * La
                if np.min(dist) <= 0 or (a == 0 and dist_dir > 0) or \
                        (a == self.n_intervals - 1 and dist_dir < 0):
                    continue
                K = np.einsum("q,qi,qj->ij", ws * La / dist, loc, loc)
                W[np.ix_([i, j], [i, j])] += K
        # first and last interval: only the inner node survives, exactly 1/2
        W[1, 1] += 0.5
        W[n - 2, n - 2] += 0.5
        return W

    # -- loads -------------------------------------------------------------

    def load(self, lam):
        """``int lam phi_i`` with ``lam(piece, t)`` in the piece parameter."""
        g = gauss_legendre(max(self.order, 4))
        s, w = g.points, g.weights
        t = self.t0[:, None] + s[None, :] * self.dt
        vals = np.empty_like(t)
        for p in range(self.n_pieces):
            rows = self.piece == p
            vals[rows] = lam(p, t[rows])
        ell = np.zeros(self.n_dofs)
        wl = vals * w[None, :] * self.lengths[:, None]
        np.add.at(ell, self.start, (wl * (1.0 - s)).sum(1))
        np.add.at(ell, self.end, (wl * s).sum(1))
        return ell

    def load_legendre(self, degree):
        """Loads of the Legendre basis on each piece.

        Returns a matrix of shape ``(n_dofs, n_pieces * (degree + 1))``,
        piece-major.
        """
        cols = []
        for p in range(self.n_pieces):
            for j in range(degree + 1):
                def lam(piece, t, p=p, j=j):
                    return legendre_table(degree, t)[..., j] * (piece == p)
                cols.append(self.load(lam))
        return np.column_stack(cols)

    # -- dual norms --------------------------------------------------------

    @property
    def _zero_mean_lu(self):
        if getattr(self, "_lu", None) is None:
            n = self.n_dofs
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = self.gram
            M[:n, n] = self.moments
            M[n, :n] = self.moments
            self._lu = sla.lu_factor(M)
        return self._lu

    def dual_gram(self, loads):
        """``L^T A_0^{-1} L`` for loads tested on zero-mean fine functions."""
        loads = np.atleast_2d(np.asarray(loads).T).T
        # only the action on zero-mean functions matters: drop the mean part
        loads = loads - np.outer(self.moments, loads.sum(0) / self.moments.sum())
        rhs = np.vstack([loads, np.zeros((1, loads.shape[1]))])
        X = sla.lu_solve(self._zero_mean_lu, rhs)[: self.n_dofs]
        G = loads.T @ X
        return 0.5 * (G + G.T)

    def dual_seminorm(self, load):
        return float(np.sqrt(max(self.dual_gram(load)[0, 0], 0.0)))


@lru_cache(maxsize=32)
def _unit_edge_space(n, order):
    return PolylineP1([[0.0, 0.0], [1.0, 0.0]], closed=False, n_per_piece=n, order=order)


def _edge_function(lam, length):
    """Wrap ``lam`` as a function of the edge parameter."""
    if callable(lam):
        return lambda p, t: np.asarray(lam(t), dtype=float) * np.ones_like(t)
    c = np.asarray(lam, dtype=float)
    return lambda p, t: legendre_table(len(c) - 1, t) @ c


def _edge_load(lam, length, oracle):
    space = _unit_edge_space(oracle.edge_intervals, oracle.gauss_order)
    # loads scale with the edge length; the Gram matrix is scale invariant
    return space, length * space.load(_edge_function(lam, length))


def minus_half_seminorm(lam, length=1.0, oracle=None):
    """``|lam|_{-1/2,e}`` on an edge of the given length.

    ``lam`` is a callable of the edge parameter ``t in [0,1]`` or an array
    of Legendre coefficients.
    """
    oracle = oracle or DualNormOracle()
    space, ell = _edge_load(lam, length, oracle)
    return space.dual_seminorm(ell)


def _edge_mean(lam, length):
    g = gauss_legendre(16)
    return float(g.weights @ _edge_function(lam, length)(0, g.points))


def minus_half_norm(lam, length=1.0, weights=None, oracle=None):
    """``sqrt(beta_e mean^2 + |lam|^2_{-1/2,e})``."""
    weights = weights or EdgeNormWeights.scaled(length)
    weights.check(length)
    semi = minus_half_seminorm(lam, length, oracle)
    return float(np.sqrt(weights.beta * _edge_mean(lam, length) ** 2 + semi**2))


def edge_duality_sup(lam, length=1.0, weights=None, oracle=None):
    """``sup_phi int_e lam phi / ||phi||_{1/2,e}`` over the fine space."""
    oracle = oracle or DualNormOracle()
    weights = weights or EdgeNormWeights.scaled(length)
    space, ell = _edge_load(lam, length, oracle)
    A = space.gram
    mbar = space.moments / space.length  # mean functional, scale-free
    M = A + weights.alpha * np.outer(mbar, mbar)
    return float(np.sqrt(ell @ np.linalg.solve(M, ell)))


def h00_dual_norm(lam, length=1.0, oracle=None):
    """Norm dual to the ``H^{1/2}_{00}(e)`` norm, tested on fine P1 functions
    vanishing at both endpoints."""
    oracle = oracle or DualNormOracle()
    space, ell = _edge_load(lam, length, oracle)
    if not hasattr(space, "_h00"):
        space._h00 = space.gram + space.h00_weight()
    M = space._h00[1:-1, 1:-1]
    li = ell[1:-1]
    return float(np.sqrt(li @ np.linalg.solve(M, li)))


@lru_cache(maxsize=8)
def _boundary_space(flat_vertices, n, order):
    return PolylineP1(np.reshape(flat_vertices, (-1, 2)), closed=True, n_per_piece=n, order=order)


def boundary_minus_half_gram(vertices, degree, oracle=None):
    """Gram matrix of ``|.|_{-1/2,dK}`` on edgewise Legendre polynomials.

    The basis runs over the edges of the CCW polygon, Legendre degree
    fastest, each edge parametrised from vertex ``j`` to ``j+1``.
    """
    oracle = oracle or DualNormOracle()
    key = tuple(np.asarray(vertices, dtype=float).ravel())
    space = _boundary_space(key, oracle.boundary_intervals, oracle.gauss_order)
    L = space.load_legendre(degree)
    # Legendre in the piece parameter integrates against arclength
    return space.dual_gram(L)


# --------------------------------------------------------------------------
# fine P1 space on an element
# --------------------------------------------------------------------------


class ElementP1Space:
    """Continuous P1 space on a structured refinement of a polygon."""

    def __init__(self, vertices, divisions=40):
        self.polygon = np.asarray(vertices, dtype=float)
        n = int(divisions)
        pts, tris = [], []
        base = 0
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        mask = ii + jj <= n
        ii, jj = ii[mask], jj[mask]
        lookup = -np.ones((n + 1, n + 1), dtype=int)
        lookup[ii, jj] = np.arange(len(ii))
        up = [(lookup[i, j], lookup[i + 1, j], lookup[i, j + 1])
              for i in range(n) for j in range(n - i)]
        down = [(lookup[i + 1, j], lookup[i + 1, j + 1], lookup[i, j + 1])
                for i in range(n) for j in range(n - i - 1)]
        local = np.array(up + down, dtype=int)
        for A, B, C in triangulate_polygon(self.polygon):
            P = A + np.outer(ii / n, B - A) + np.outer(jj / n, C - A)
            pts.append(P)
            tris.append(local + base)
            base += len(P)
        pts = np.vstack(pts)
        tris = np.vstack(tris)
        scale = polygon_diameter(self.polygon)
        tree = cKDTree(pts)
        rep = np.arange(len(pts))
        for i, j in tree.query_pairs(1e-10 * scale):
            lo, hi = min(rep[i], rep[j]), max(rep[i], rep[j])
            rep[rep == hi] = lo
        uniq, inv = np.unique(rep, return_inverse=True)
        self.points = pts[uniq]
        self.triangles = inv[tris]
        self.n_dofs = len(self.points)
        self._build()

    def _build(self):
        P, T = self.points, self.triangles
        a, b, c = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        if np.any(det <= 0):
            raise OracleError("fine triangulation has inverted triangles")
        self.tri_area = 0.5 * det
        # gradients of barycentric coordinates, shape (nt, 3, 2)
        g = np.empty((len(T), 3, 2))
        g[:, 0] = np.column_stack([b[:, 1] - c[:, 1], c[:, 0] - b[:, 0]]) / det[:, None]
        g[:, 1] = np.column_stack([c[:, 1] - a[:, 1], a[:, 0] - c[:, 0]]) / det[:, None]
        g[:, 2] = np.column_stack([a[:, 1] - b[:, 1], b[:, 0] - a[:, 0]]) / det[:, None]
        self.grads = g
        Kloc = np.einsum("tid,tjd,t->tij", g, g, self.tri_area)
        rows = np.repeat(T, 3, axis=1).ravel()
        cols = np.tile(T, (1, 3)).ravel()
        self.stiffness = sp.csr_matrix((Kloc.ravel(), (rows, cols)),
                                       shape=(self.n_dofs, self.n_dofs))
        # boundary segments: triangle edges used once
        e = np.vstack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        seg = e[idx[counts == 1]]
        poly = self.polygon
        nv = len(poly)
        mid = 0.5 * (P[seg[:, 0]] + P[seg[:, 1]])
        dist = np.empty((len(seg), nv))
        for j in range(nv):
            A, B = poly[j], poly[(j + 1) % nv]
            d = B - A
            t = np.clip((mid - A) @ d / (d @ d), 0, 1)
            dist[:, j] = np.linalg.norm(A + t[:, None] * d - mid, axis=1)
        self.seg = seg
        self.seg_edge = dist.argmin(axis=1)
        A = poly[self.seg_edge]
        d = poly[(self.seg_edge + 1) % nv] - A
        dd = (d**2).sum(1)
        self.seg_t0 = ((P[seg[:, 0]] - A) * d).sum(1) / dd
        self.seg_t1 = ((P[seg[:, 1]] - A) * d).sum(1) / dd
        self.seg_len = np.linalg.norm(P[seg[:, 1]] - P[seg[:, 0]], axis=1)
        m = np.zeros(self.n_dofs)
        np.add.at(m, seg[:, 0], 0.5 * self.seg_len)
        np.add.at(m, seg[:, 1], 0.5 * self.seg_len)
        self.boundary_moments = m
        self.perimeter = float(self.seg_len.sum())
        self._lu = None

    # -- loads -------------------------------------------------------------

    def load_gradient(self, grad, degree=6):
        """Action of ``Du`` on the hat functions, ``int_K grad u . grad phi_i``."""
        P, T = self.points, self.triangles
        ref, w = _reference_triangle_rule(degree)
        a, b, c = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
        X = (a[:, None, :] + ref[None, :, 0, None] * (b - a)[:, None, :]
             + ref[None, :, 1, None] * (c - a)[:, None, :])
        G = np.asarray(grad(X.reshape(-1, 2))).reshape(len(T), len(w), 2)
        mean_grad = np.einsum("tqd,q->td", G, w) * (2.0 * self.tri_area)[:, None]
        contrib = np.einsum("tid,td->ti", self.grads, mean_grad)
        ell = np.zeros(self.n_dofs)
        np.add.at(ell, T, contrib)
        return ell

    def load_boundary(self, lam, order=8):
        """Action of ``gamma^* lam``: ``int_dK lam phi_i``, ``lam(edge, t)``."""
        g = gauss_legendre(order)
        s, w = g.points, g.weights
        t = self.seg_t0[:, None] + s[None, :] * (self.seg_t1 - self.seg_t0)[:, None]
        vals = np.empty_like(t)
        for j in np.unique(self.seg_edge):
            rows = self.seg_edge == j
            vals[rows] = lam(int(j), t[rows])
        wl = vals * w[None, :] * self.seg_len[:, None]
        ell = np.zeros(self.n_dofs)
        np.add.at(ell, self.seg[:, 0], (wl * (1.0 - s)).sum(1))
        np.add.at(ell, self.seg[:, 1], (wl * s).sum(1))
        return ell

    # -- dual norms --------------------------------------------------------

    def _factor(self):
        if self._lu is None:
            m = sp.csr_matrix(self.boundary_moments[None, :])
            M = sp.bmat([[self.stiffness, m.T], [m, None]], format="csc")
            try:
                self._lu = spla.splu(M)
            except RuntimeError as exc:
                raise OracleError(f"fine stiffness factorisation failed: {exc}") from exc
        return self._lu

    def dual_gram(self, loads):
        loads = np.asarray(loads, dtype=float)
        if loads.ndim == 1:
            loads = loads[:, None]
        m = self.boundary_moments
        loads = loads - np.outer(m, loads.sum(0) / m.sum())
        rhs = np.vstack([loads, np.zeros((1, loads.shape[1]))])
        X = self._factor().solve(rhs)[: self.n_dofs]
        G = loads.T @ X
        return 0.5 * (G + G.T)


def minus_one_gram(space: ElementP1Space, loads):
    """``|.|_{-1,K}`` Gram matrix of several functionals given by their loads."""
    return space.dual_gram(loads)


def minus_one_seminorm(space: ElementP1Space, load):
    """``sup <G,u> / |u|_{1,K}`` over fine ``u`` with zero boundary mean."""
    return float(np.sqrt(max(space.dual_gram(load)[0, 0], 0.0)))


def minus_one_norm(space: ElementP1Space, load):
    """Dual of ``||u||^2_{1,K} = mean_dK(u)^2 + |u|^2_{1,K}``."""
    # split u = c + u0 with u0 of zero boundary mean
    semi2 = space.dual_gram(load)[0, 0]
    return float(np.sqrt(max(semi2, 0.0) + np.sum(load) ** 2))
