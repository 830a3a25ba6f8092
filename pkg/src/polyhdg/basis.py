"""Polynomial bases and quadrature rules on polygons and edges.

Element polynomials use scaled monomials centred at the element centroid,
edge polynomials use Legendre polynomials in the normalised edge parameter
``s in [0, 1]``. All quadrature rules returned here have positive weights.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureRule",
    "ScaledMonomialBasis",
    "EdgeBasis",
    "gauss_legendre",
    "gauss_lobatto",
    "triangle_quadrature",
    "polygon_quadrature",
    "triangulate_polygon",
    "polygon_area",
    "polygon_centroid",
    "polygon_diameter",
    "legendre_table",
    "monomial_exponents",
    "eval_basis",
]

DEDUP_TOL = 1e-10


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        """Apply the rule to sampled values (quadrature axis first)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


# --------------------------------------------------------------------------
# 1D rules
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_legendre(n_points):
    """Gauss-Legendre rule on [0, 1], exact up to degree ``2n - 1``."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    x, w = _gauss_legendre(int(n_points))
    return QuadratureRule(x.copy(), w.copy(), 2 * n_points - 1)


@lru_cache(maxsize=None)
def _gauss_lobatto(n):
    # interior nodes: roots of P'_{n-1}
    if n == 2:
        interior = np.zeros(0)
    else:
        interior = np.sort(npleg.legroots(npleg.legder([0] * (n - 1) + [1])))
    x = np.concatenate(([-1.0], interior, [1.0]))
    pn1 = npleg.legval(x, [0] * (n - 1) + [1])
    w = 2.0 / (n * (n - 1) * pn1**2)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_lobatto(n_points):
    """Gauss-Lobatto rule on [0, 1] including both endpoints.

    Exact for polynomials of degree ``2n - 3``.
    """
    if n_points < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    x, w = _gauss_lobatto(int(n_points))
    return QuadratureRule(x.copy(), w.copy(), 2 * n_points - 3)


def legendre_table(degree, s):
    """Values of ``P_j(2s - 1)`` for ``j = 0..degree``; shape ``(len(s), degree+1)``."""
    s = np.asarray(s, dtype=float)
    x = 2.0 * s - 1.0
    out = np.empty(s.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for j in range(1, degree):
        out[..., j + 1] = ((2 * j + 1) * x * out[..., j] - j * out[..., j - 1]) / (j + 1)
    return out


# --------------------------------------------------------------------------
# 2D rules
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree):
    # collapsed (Stroud) rule on the triangle (0,0), (1,0), (0,1)
    n = max(1, (degree + 2) // 2)
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + tj)
    wu = 0.25 * wj
    v, wv = _gauss_legendre(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    w = np.outer(wu, wv).ravel()
    return pts, w


def triangle_quadrature(a, b, c, degree):
    """Quadrature rule exact to ``degree`` on the triangle ``abc``."""
    ref, w = _reference_triangle_rule(int(degree))
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    J = np.column_stack([b - a, c - a])
    det = abs(np.linalg.det(J))
    return QuadratureRule(a + ref @ J.T, w * det, degree)


def polygon_area(vertices):
    v = np.asarray(vertices, dtype=float)
    v = v - v[0]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices):
    v0 = np.asarray(vertices, dtype=float)
    # shift first: the shoelace sums cancel badly far from the origin
    v = v0 - v0[0]
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy]) + v0[0]


def polygon_diameter(vertices):
    v = np.asarray(vertices, dtype=float)
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _tri_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _strip_duplicates(v, tol=DEDUP_TOL):
    keep = np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1) > tol
    return v[keep]


def _ear_clip(v):
    idx = list(range(len(v)))
    tris = []
    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for i in range(n):
            a, b, c = idx[i - 1], idx[i], idx[(i + 1) % n]
            if _tri_area(v[a], v[b], v[c]) <= 0:
                continue
            inside = False
            for j in idx:
                if j in (a, b, c):
                    continue
                p = v[j]
                if (_tri_area(v[a], v[b], p) >= 0 and _tri_area(v[b], v[c], p) >= 0
                        and _tri_area(v[c], v[a], p) >= 0):
                    inside = True
                    break
            if not inside:
                tris.append((v[a], v[b], v[c]))
                idx.pop(i)
                break
        else:
            raise ValueError("polygon is not simple; ear clipping failed")
        guard += 1
        if guard > 10 * len(v):
            raise ValueError("polygon is not simple; ear clipping failed")
    tris.append(tuple(v[j] for j in idx))
    return tris


def triangulate_polygon(vertices):
    """Split a CCW simple polygon into triangles.

    A fan from the centroid is used when every fan triangle is positively
    oriented, otherwise ear clipping.
    """
    v = _strip_duplicates(np.asarray(vertices, dtype=float))
    if len(v) < 3 or polygon_area(v) <= 0:
        raise ValueError("polygon must have >= 3 vertices and positive CCW area")
    c = polygon_centroid(v)
    n = len(v)
    fan = [(c, v[i], v[(i + 1) % n]) for i in range(n)]
    scale = polygon_diameter(v) ** 2
    if all(_tri_area(*t) > 1e-14 * scale for t in fan):
        return fan
    return _ear_clip(v)


def polygon_quadrature(vertices, degree):
    """Rule exact for bivariate polynomials up to ``degree`` on a polygon."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    pts, wts = [], []
    for a, b, c in triangulate_polygon(vertices):
        r = triangle_quadrature(a, b, c, degree)
        pts.append(r.points)
        wts.append(r.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)


# --------------------------------------------------------------------------
# bases
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """Exponents ``(a, b)`` of ``x^a y^b`` sorted by total degree."""
    return tuple((d - j, j) for d in range(degree + 1) for j in range(d + 1))


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """Monomials ``((x - xc) / hK)^alpha`` on an element."""

    degree: int
    centroid: np.ndarray
    diameter: float

    @classmethod
    def for_polygon(cls, vertices, degree):
        return cls(degree, polygon_centroid(vertices), polygon_diameter(vertices))

    @property
    def dim(self):
        return (self.degree + 1) * (self.degree + 2) // 2

    @property
    def exponents(self):
        return np.array(monomial_exponents(self.degree), dtype=int)

    def _powers(self, points, p):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts - self.centroid) / self.diameter
        powx = np.ones((len(pts), p + 1))
        powy = np.ones((len(pts), p + 1))
        for j in range(1, p + 1):
            powx[:, j] = powx[:, j - 1] * xi[:, 0]
            powy[:, j] = powy[:, j - 1] * xi[:, 1]
        return powx, powy

    def values(self, points):
        powx, powy = self._powers(points, self.degree)
        e = self.exponents
        return powx[:, e[:, 0]] * powy[:, e[:, 1]]

    def gradients(self, points):
        """Array of shape ``(npts, dim, 2)``."""
        powx, powy = self._powers(points, self.degree)
        e = self.exponents
        ax, ay = e[:, 0], e[:, 1]
        gx = ax * powx[:, np.maximum(ax - 1, 0)] * powy[:, ay]
        gy = ay * powx[:, ax] * powy[:, np.maximum(ay - 1, 0)]
        return np.stack([gx, gy], axis=-1) / self.diameter

    def evaluate(self, coeffs, points):
        return self.values(points) @ np.asarray(coeffs)

    def evaluate_gradient(self, coeffs, points):
        return np.einsum("pdi,d->pi", self.gradients(points), np.asarray(coeffs))


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre polynomials in the parameter running from ``p0`` to ``p1``."""

    degree: int
    p0: np.ndarray
    p1: np.ndarray

    @property
    def dim(self):
        return self.degree + 1

    @property
    def length(self):
        return float(np.linalg.norm(np.asarray(self.p1) - np.asarray(self.p0)))

    @property
    def tangent(self):
        return (np.asarray(self.p1) - np.asarray(self.p0)) / self.length

    @property
    def normal(self):
        """Right-hand normal of the direction ``p0 -> p1``."""
        t = self.tangent
        return np.array([t[1], -t[0]])

    def points(self, s):
        s = np.asarray(s, dtype=float)
        return np.asarray(self.p0) + s[:, None] * (np.asarray(self.p1) - np.asarray(self.p0))

    def values(self, s):
        return legendre_table(self.degree, s)

    def mass_diagonal(self):
        return self.length / (2.0 * np.arange(self.degree + 1) + 1.0)


def eval_basis(basis, points):
    """Return ``(values, gradients)`` tables of an element basis at points."""
    return basis.values(points), basis.gradients(points)
