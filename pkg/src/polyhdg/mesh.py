"""Polygonal tessellations of the unit square.

Two families are provided: Voronoi diagrams of a staggered lattice (clipped
hexagons, optionally deformed by a smooth map) and Lloyd-relaxed random
Voronoi diagrams. Meshes are stored as vertex coordinates plus CCW vertex
cycles; edges and their adjacency are derived.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .basis import polygon_area, polygon_centroid, polygon_diameter

__all__ = [
    "MeshError",
    "MeshParseError",
    "PolyMesh",
    "MeshFamilySpec",
    "generate_hexagonal",
    "generate_voronoi",
    "generate",
    "hexagonal_family",
    "voronoi_family",
    "read_mesh",
    "write_mesh",
    "mesh_io",
    "HEX_DEFORMATION",
    "HEX_RESOLUTIONS",
]

VERTEX_TOL = 1e-10
# Amplitude of (x, y) -> (x, y) + a sin(2 pi x) sin(2 pi y) (1, 1); reproduces
# the mesh sizes of the reference deformed-hexagon family.
HEX_DEFORMATION = 0.08
HEX_RESOLUTIONS = ((8, 10), (18, 20), (26, 30), (34, 40),
                      (44, 50), (52, 60), (60, 70), (70, 80))

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """Conforming polygonal mesh.

    ``edges[e] = (a, b)`` is oriented so that ``edge_elements[e, 0]`` (the
    left element) traverses it from ``a`` to ``b``; ``edge_elements[e, 1]``
    is the right element or ``-1`` on the boundary.
    """

    vertices: np.ndarray
    elements: tuple
    edges: np.ndarray = field(init=False)
    edge_elements: np.ndarray = field(init=False)
    element_edges: tuple = field(init=False)
    element_edge_signs: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        els = tuple(_frozen(e, np.int64) for e in self.elements)
        object.__setattr__(self, "elements", els)
        nv = len(self.vertices)
        lookup = {}
        edges, adj = [], []
        el_edges, el_signs = [], []
        for K, cyc in enumerate(els):
            if len(cyc) < 3:
                raise MeshError(f"element {K} has fewer than 3 vertices")
            if cyc.min() < 0 or cyc.max() >= nv:
                raise MeshError(f"element {K} references a missing vertex")
            ids, signs = [], []
            for j in range(len(cyc)):
                a, b = int(cyc[j]), int(cyc[(j + 1) % len(cyc)])
                if a == b:
                    raise MeshError(f"element {K} has a repeated vertex")
                key = (min(a, b), max(a, b))
                e = lookup.get(key)
                if e is None:
                    e = len(edges)
                    lookup[key] = e
                    edges.append((a, b))
                    adj.append([K, -1])
                    signs.append(1)
                else:
                    if adj[e][1] != -1 or edges[e] != (b, a):
                        raise MeshError(
                            f"edge ({a}, {b}) of element {K} is shared inconsistently")
                    adj[e][1] = K
                    signs.append(-1)
                ids.append(e)
            el_edges.append(_frozen(ids, np.int64))
            el_signs.append(_frozen(signs, np.int64))
        object.__setattr__(self, "edges", _frozen(edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_elements", _frozen(adj, np.int64).reshape(-1, 2))
        object.__setattr__(self, "element_edges", tuple(el_edges))
        object.__setattr__(self, "element_edge_signs", tuple(el_signs))

    # -- basic queries ----------------------------------------------------

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def element_vertices(self, K):
        return self.vertices[self.elements[K]]

    def boundary_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    def interior_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    def edge_length(self, e):
        a, b = self.edges[e]
        return float(np.linalg.norm(self.vertices[b] - self.vertices[a]))

    def areas(self):
        return np.array([polygon_area(self.element_vertices(K)) for K in range(self.n_elements)])

    def diameters(self):
        return np.array([polygon_diameter(self.element_vertices(K))
                         for K in range(self.n_elements)])

    def centroids(self):
        return np.array([polygon_centroid(self.element_vertices(K))
                         for K in range(self.n_elements)])

    @property
    def h(self):
        """Maximum element diameter."""
        return float(self.diameters().max())

    def shape_regularity(self):
        """Minimum over elements of ``|K| / h_K^2``."""
        return float((self.areas() / self.diameters() ** 2).min())

    def quasi_uniformity(self):
        d = self.diameters()
        return float(d.max() / d.min())

    def __eq__(self, other):
        if not isinstance(other, PolyMesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and len(self.elements) == len(other.elements)
                and all(np.array_equal(a, b) for a, b in zip(self.elements, other.elements)))

    __hash__ = None

    # -- validation -------------------------------------------------------

    def validate(self, domain_area=1.0, rho_min=0.0, unit_square=True):
        """Raise :class:`MeshError` unless the mesh invariants hold."""
        for K in range(self.n_elements):
            v = self.element_vertices(K)
            if polygon_area(v) <= 0:
                raise MeshError(f"element {K} is not counterclockwise or has zero area")
            if not _is_simple(v):
                raise MeshError(f"element {K} is not a simple polygon")
        total = float(self.areas().sum())
        if domain_area is not None and abs(total - domain_area) > 1e-12:
            raise MeshError(f"element areas sum to {total!r}, expected {domain_area}")
        if unit_square:
            for e in self.boundary_edges():
                p = self.vertices[self.edges[e]]
                on_side = [np.all(np.abs(p[:, ax] - val) < 1e-9)
                           for ax in (0, 1) for val in (0.0, 1.0)]
                if not any(on_side):
                    raise MeshError(f"boundary edge {e} lies inside the domain (hanging node?)")
        if rho_min > 0:
            rho = self.areas() / self.diameters() ** 2
            bad = np.flatnonzero(rho < rho_min)
            if bad.size:
                raise MeshError(f"element {int(bad[0])} violates shape regularity "
                                f"({rho[bad[0]]:.3g} < {rho_min})")
        return self


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(v):
    n = len(v)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


# --------------------------------------------------------------------------
# family parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MeshFamilySpec:
    kind: str = "hexagonal"
    nx: int = 8
    ny: int = 10
    n_seeds: int = 16
    lloyd_iterations: int = 50
    amplitude: float = HEX_DEFORMATION
    seed: int = 1

    def __post_init__(self):
        if self.kind not in ("hexagonal", "voronoi"):
            raise ValueError(f"unknown mesh kind {self.kind!r}")
        if self.kind == "hexagonal" and (self.nx < 2 or self.ny < 2):
            raise ValueError("hexagonal meshes need nx, ny >= 2")
        if self.kind == "voronoi" and self.n_seeds < 4:
            raise ValueError("Voronoi meshes need at least 4 seeds")
        if self.lloyd_iterations < 0:
            raise ValueError("lloyd_iterations must be non-negative")
        if not 0 <= self.amplitude < 1.0 / (2.0 * np.pi):
            raise ValueError("deformation amplitude must lie in [0, 1/(2 pi))")


# --------------------------------------------------------------------------
# clipped Voronoi machinery
# --------------------------------------------------------------------------


def _clip_halfplane(poly, normal, offset):
    """Sutherland-Hodgman step keeping ``normal . x <= offset``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = normal @ p - offset, normal @ q - offset
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


def _clip_to_unit_square(poly):
    for normal, offset in (((-1.0, 0.0), 0.0), ((1.0, 0.0), 1.0),
                           ((0.0, -1.0), 0.0), ((0.0, 1.0), 1.0)):
        poly = _clip_halfplane(poly, np.array(normal), offset)
        if not poly:
            break
    return np.array(poly).reshape(-1, 2)


def _voronoi_cells(seeds):
    """Voronoi cells of ``seeds`` restricted to the unit square."""
    seeds = np.asarray(seeds, dtype=float)
    pts = [seeds]
    for ax in (0, 1):
        for val in (0.0, 1.0):
            m = seeds.copy()
            m[:, ax] = 2.0 * val - m[:, ax]
            pts.append(m[np.abs(m[:, ax] - seeds[:, ax]) > VERTEX_TOL])
    vor = Voronoi(np.vstack(pts))
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or not region:
            raise MeshError(f"Voronoi cell of seed {i} is unbounded")
        poly = vor.vertices[region]
        c = poly.mean(axis=0)
        order = np.argsort(np.arctan2(poly[:, 1] - c[1], poly[:, 0] - c[0]))
        poly = poly[order]
        if poly.min() >= -VERTEX_TOL and poly.max() <= 1.0 + VERTEX_TOL:
            # mirrored seeds make the square sides Voronoi edges already
            cells.append(np.clip(poly, 0.0, 1.0))
        else:
            cells.append(_clip_to_unit_square(list(poly)))
    return cells


def _merge_cells(cells, tol=VERTEX_TOL):
    """Deduplicate vertices and return a conforming :class:`PolyMesh`."""
    allpts = np.vstack(cells)
    tree = cKDTree(allpts)
    rep = np.arange(len(allpts))
    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = rep[i], rep[j]
        while rep[ri] != ri:
            ri = rep[ri]
        while rep[rj] != rj:
            rj = rep[rj]
        if ri != rj:
            rep[max(ri, rj)] = min(ri, rj)
    for i in range(len(rep)):
        r = i
        while rep[r] != r:
            r = rep[r]
        rep[i] = r
    uniq, new_index = np.unique(rep, return_inverse=True)
    verts = allpts[uniq]
    # snap to the square boundary
    verts[np.abs(verts) < tol] = 0.0
    verts[np.abs(verts - 1.0) < tol] = 1.0
    elements = []
    start = 0
    for K, c in enumerate(cells):
        ids = new_index[start:start + len(c)]
        start += len(c)
        cyc = [int(ids[0])]
        for v in ids[1:]:
            if v != cyc[-1]:
                cyc.append(int(v))
        if len(cyc) > 1 and cyc[-1] == cyc[0]:
            cyc.pop()
        if len(cyc) < 3:
            raise MeshError(f"element {K} degenerates to zero area after clipping")
        elements.append(cyc)
    elements = _insert_hanging_vertices(verts, elements, tol)
    return verts, elements


def _insert_hanging_vertices(verts, elements, tol):
    tree = cKDTree(verts)
    out = []
    for cyc in elements:
        new = []
        n = len(cyc)
        for j in range(n):
            a, b = cyc[j], cyc[(j + 1) % n]
            new.append(a)
            pa, pb = verts[a], verts[b]
            L = np.linalg.norm(pb - pa)
            cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * L + tol)
            on = []
            for c in cand:
                if c in (a, b):
                    continue
                t = (verts[c] - pa) @ (pb - pa) / L**2
                dist = abs((pb - pa)[0] * (verts[c] - pa)[1] - (pb - pa)[1] * (verts[c] - pa)[0]) / L
                if 0 < t < 1 and dist < tol:
                    on.append((t, c))
            new.extend(c for _, c in sorted(on))
        out.append(new)
    return out


def _cell_centroids(cells):
    counts = np.array([len(c) for c in cells])
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    p = np.vstack(cells)
    # successor of each vertex within its own cell
    nxt = np.arange(len(p)) + 1
    nxt[start + counts - 1] = start
    q = p[nxt]
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    a = np.add.reduceat(cross, start)
    cx = np.add.reduceat((p[:, 0] + q[:, 0]) * cross, start)
    cy = np.add.reduceat((p[:, 1] + q[:, 1]) * cross, start)
    return np.column_stack([cx, cy]) / (3.0 * a)[:, None]


def _lloyd(seeds, iterations):
    for _ in range(iterations):
        seeds = _cell_centroids(_voronoi_cells(seeds))
    return seeds


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def _staggered_lattice(nx, ny):
    pts = []
    for j in range(ny + 1):
        if j % 2 == 0:
            xs = np.arange(nx + 1) / nx
        else:
            xs = (np.arange(nx) + 0.5) / nx
        pts.append(np.column_stack([xs, np.full(len(xs), j / ny)]))
    return np.vstack(pts)


def _deform(points, amplitude):
    s = np.sin(2 * np.pi * points[:, 0]) * np.sin(2 * np.pi * points[:, 1])
    out = points + amplitude * s[:, None]
    out[np.abs(out) < VERTEX_TOL] = 0.0
    out[np.abs(out - 1.0) < VERTEX_TOL] = 1.0
    return out


def _finish(verts, elements):
    mesh = PolyMesh(verts, elements)
    for K in range(mesh.n_elements):
        v = mesh.element_vertices(K)
        if polygon_area(v) <= 0 or not _is_simple(v):
            raise MeshError(f"generation produced an invalid element {K} "
                            "(orientation or simplicity lost)")
    return mesh.validate()


def generate_hexagonal(spec: MeshFamilySpec) -> PolyMesh:
    """Clipped hexagonal tiling with ``ny + 1`` staggered rows of cells.

    Even rows hold ``nx + 1`` cells (half cells at the left and right
    sides), odd rows ``nx``; the first and last row are half cells. The
    vertices are then moved by the smooth deformation of amplitude
    ``spec.amplitude``, which fixes the boundary of the square.
    """
    if spec.kind != "hexagonal":
        raise ValueError("spec.kind must be 'hexagonal'")
    cells = _voronoi_cells(_staggered_lattice(spec.nx, spec.ny))
    verts, elements = _merge_cells(cells)
    if spec.amplitude:
        verts = _deform(verts, spec.amplitude)
    return _finish(verts, elements)


def generate_voronoi(spec: MeshFamilySpec) -> PolyMesh:
    """Voronoi mesh of Lloyd-relaxed uniformly random seeds."""
    if spec.kind != "voronoi":
        raise ValueError("spec.kind must be 'voronoi'")
    rng = np.random.default_rng(spec.seed)
    seeds = rng.uniform(0.0, 1.0, size=(spec.n_seeds, 2))
    return voronoi_from_seeds(seeds, spec.lloyd_iterations)


def voronoi_from_seeds(seeds, lloyd_iterations=0):
    seeds = _lloyd(np.asarray(seeds, dtype=float), lloyd_iterations)
    cells = _voronoi_cells(seeds)
    for K, c in enumerate(cells):
        if len(c) < 3 or polygon_area(c) <= 1e-14:
            raise MeshError(f"Voronoi cell {K} has zero area after clipping")
    verts, elements = _merge_cells(cells)
    return _finish(verts, elements)


def generate(spec: MeshFamilySpec) -> PolyMesh:
    if spec.kind == "hexagonal":
        return generate_hexagonal(spec)
    return generate_voronoi(spec)


def hexagonal_family(levels, amplitude=HEX_DEFORMATION):
    """Specs for the first ``levels`` resolutions of the deformed-hexagon family."""
    if levels > len(HEX_RESOLUTIONS):
        raise ValueError(f"at most {len(HEX_RESOLUTIONS)} hexagonal levels available")
    return [MeshFamilySpec("hexagonal", nx=nx, ny=ny, amplitude=amplitude)
            for nx, ny in HEX_RESOLUTIONS[:levels]]


def voronoi_family(levels, n0=16, lloyd_iterations=50, seed=1):
    """Voronoi specs with the seed count quadrupling at each level."""
    return [MeshFamilySpec("voronoi", n_seeds=n0 * 4**i,
                           lloyd_iterations=lloyd_iterations, seed=seed)
            for i in range(levels)]


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------


def write_mesh(mesh: PolyMesh, path):
    lines = ["polymesh 1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(int(i)) for i in cyc) for cyc in mesh.elements]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, validate=True) -> PolyMesh:
    with open(path) as fh:
        raw = fh.read().splitlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    it = iter(rows)

    def expect(keyword):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise MeshParseError(f"unexpected end of file, expected '{keyword}'",
                                 len(raw)) from None
        parts = text.split()
        if parts[0] != keyword or len(parts) != 2:
            raise MeshParseError(f"expected '{keyword} <int>', got {text!r}", lineno)
        try:
            return int(parts[1]), lineno
        except ValueError:
            raise MeshParseError(f"bad integer in {text!r}", lineno) from None

    version, lineno = expect("polymesh")
    if version != 1:
        raise MeshParseError(f"unsupported format version {version}", lineno)
    nv, _ = expect("vertices")
    verts = []
    for _ in range(nv):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise MeshParseError("unexpected end of file in vertex block", len(raw)) from None
        parts = text.split()
        try:
            if len(parts) != 2:
                raise ValueError
            verts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MeshParseError(f"expected 'x y', got {text!r}", lineno) from None
    ne, _ = expect("elements")
    elements = []
    for _ in range(ne):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise MeshParseError("unexpected end of file in element block", len(raw)) from None
        try:
            cyc = [int(p) for p in text.split()]
        except ValueError:
            raise MeshParseError(f"bad vertex index in {text!r}", lineno) from None
        if len(cyc) < 3:
            raise MeshParseError("element needs at least 3 vertices", lineno)
        bad = [i for i in cyc if i < 0 or i >= nv]
        if bad:
            raise MeshParseError(f"element references missing vertex {bad[0]}", lineno)
        elements.append(cyc)
    extra = next(it, None)
    if extra is not None:
        raise MeshParseError(f"trailing content {extra[1]!r}", extra[0])
    mesh = PolyMesh(np.array(verts).reshape(-1, 2), elements)
    if validate:
        mesh.validate()
    return mesh


def mesh_io(path, direction, mesh=None):
    """Read (``direction='r'``) or write (``'w'``) a mesh file."""
    if direction in ("r", "read"):
        return read_mesh(path)
    if direction in ("w", "write"):
        if mesh is None:
            raise ValueError("writing needs a mesh")
        write_mesh(mesh, path)
        return path
    raise ValueError(f"unknown direction {direction!r}")
