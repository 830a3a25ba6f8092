"""Solving the assembled system, error measures and convergence rates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem, condense
from .basis import ScaledMonomialBasis, gauss_legendre, legendre_table, polygon_quadrature
from .mesh import PolyMesh

__all__ = [
    "SolverError",
    "SolutionFields",
    "ManufacturedSolution",
    "MANUFACTURED",
    "polynomial_solution",
    "solve",
    "compute_errors",
    "ecr",
    "convergence_rates",
    "LevelResult",
    "ConvergenceRecord",
    "DiagnosticReport",
    "diagnostic_norms",
]

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-15


class SolverError(RuntimeError):
    def __init__(self, message, pivot=None):
        super().__init__(message if pivot is None else f"{message} (pivot at unknown {pivot})")
        self.pivot = pivot


@dataclass
class SolutionFields:
    """Discrete ``u`` per element, ``lam`` per element edge, ``phi`` per edge.

    ``lam[K]`` has shape ``(E_K, k + 1)`` in global edge orientation;
    ``phi`` has a row for every mesh edge and zeros on the boundary.
    """

    k: int
    u: np.ndarray
    lam: list
    phi: np.ndarray
    residual: float = float("nan")
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        arrays = [self.u, self.phi] + list(self.lam)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise SolverError("solution contains non-finite values")


def factorize(A):
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    if d.size and d.min() <= PIVOT_TOL * d.max():
        i = int(np.argmin(d))
        raise SolverError("matrix is numerically singular", pivot=int(lu.perm_c[i]))
    return lu


def _split(system: SaddleSystem, x):
    L, mesh, k = system.layout, system.mesh, system.k
    u = x[: L.n_u].reshape(mesh.n_elements, L.dim_u)
    lam = [x[L.lam_slice(K, len(mesh.elements[K]))].reshape(-1, k + 1)
           for K in range(mesh.n_elements)]
    phi = np.zeros((mesh.n_edges, k + 1))
    for e in range(mesh.n_edges):
        d = L.phi_dofs(e)
        if d is not None:
            phi[e] = x[d]
    return u, lam, phi


def _local_residual(system: SaddleSystem, u, lam, phi):
    """``||A x - b|| / ||b||`` evaluated block by block (no global matrix)."""
    mesh, k = system.mesh, system.k
    r2 = 0.0
    b2 = 0.0
    coupling = np.zeros((mesh.n_edges, k + 1))
    for K, loc in enumerate(system.locals):
        x = np.concatenate([u[K], lam[K].ravel()])
        r = loc.A @ x - loc.b
        nu = len(u[K])
        for j, e in enumerate(mesh.element_edges[K]):
            if mesh.edge_elements[e, 1] >= 0:
                r[nu + j * (k + 1): nu + (j + 1) * (k + 1)] -= loc.edge_mass[j] * phi[e]
                coupling[e] += loc.edge_mass[j] * lam[K][j]
        r2 += r @ r
        b2 += loc.b @ loc.b
    interior = mesh.edge_elements[:, 1] >= 0
    r2 += float((coupling[interior] ** 2).sum())
    return math.sqrt(r2) / max(math.sqrt(b2), 1e-300)


def solve(system: SaddleSystem, method=None, check=True):
    """Solve directly (``"direct"``) or through the trace system (``"condensed"``)."""
    method = method or ("condensed" if system.condensed else "direct")
    if method == "direct":
        lu = factorize(system.matrix)
        x = lu.solve(system.rhs)
        u, lam, phi = _split(system, x)
    elif method == "condensed":
        cs = condense(system)
        L = system.layout
        xphi = factorize(cs.matrix).solve(cs.rhs) if L.n_phi else np.zeros(0)
        x = np.zeros(L.total)
        x[L.n_u + L.n_lam:] = xphi
        mesh = system.mesh
        for K, (xb, XP, pdofs) in enumerate(cs.factors):
            xk = xb - (XP @ x[pdofs] if len(pdofs) else 0.0)
            x[L.element_dofs(K, len(mesh.elements[K]))] = xk
        u, lam, phi = _split(system, x)
    else:
        raise ValueError(f"unknown solve method {method!r}")
    fields_ = SolutionFields(system.k, u, lam, phi)
    if check:
        res = _local_residual(system, u, lam, phi)
        fields_.residual = res
        if not res <= RESIDUAL_TOL:
            msg = f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}"
            fields_.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return fields_


# --------------------------------------------------------------------------
# manufactured solutions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: object
    grad: object
    f: object
    zero_on_boundary: bool = False


def _sine():
    c = 1.0 / (2.0 * np.pi**2)

    def u(X):
        return c * np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    def grad(X):
        sx, sy = np.sin(np.pi * X[:, 0]), np.sin(np.pi * X[:, 1])
        cx, cy = np.cos(np.pi * X[:, 0]), np.cos(np.pi * X[:, 1])
        return np.pi * c * np.column_stack([cx * sy, sx * cy])

    def f(X):
        return np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    return ManufacturedSolution("sine", u, grad, f, zero_on_boundary=True)


def polynomial_solution(coeffs, name="polynomial"):
    """``u = sum c_ab x^a y^b`` from a mapping ``{(a, b): c}``; ``f = -Laplace u``."""
    terms = [(int(a), int(b), float(c)) for (a, b), c in dict(coeffs).items()]

    def mono(x, y, a, b):
        return x**a * y**b if a >= 0 and b >= 0 else 0.0 * x

    def u(X):
        x, y = X[:, 0], X[:, 1]
        return sum(c * mono(x, y, a, b) for a, b, c in terms) + 0.0 * x

    def grad(X):
        x, y = X[:, 0], X[:, 1]
        gx = sum(c * a * mono(x, y, a - 1, b) for a, b, c in terms) + 0.0 * x
        gy = sum(c * b * mono(x, y, a, b - 1) for a, b, c in terms) + 0.0 * x
        return np.column_stack([gx, gy])

    def f(X):
        x, y = X[:, 0], X[:, 1]
        return -(sum(c * a * (a - 1) * mono(x, y, a - 2, b) for a, b, c in terms)
                 + sum(c * b * (b - 1) * mono(x, y, a, b - 2) for a, b, c in terms)) + 0.0 * x

    return ManufacturedSolution(name, u, grad, f)


MANUFACTURED = {
    "sine": _sine(),
    # long-standing id of the same solution, kept for existing configs
    "paper-sine": _sine(),
    "linear-x": polynomial_solution({(1, 0): 1.0}, "linear-x"),
    "quadratic": polynomial_solution({(2, 0): 1.0, (1, 1): -0.5, (0, 2): 0.25, (0, 0): 1.0},
                                     "quadratic"),
}


# --------------------------------------------------------------------------
# errors and rates
# --------------------------------------------------------------------------


def compute_errors(mesh: PolyMesh, k, fields: SolutionFields, u_exact, grad_exact, degree=None):
    """Relative broken ``L^2`` and ``H^1`` (full norm) errors."""
    degree = 2 * k + 4 if degree is None else degree
    e0 = e1 = n0 = n1 = 0.0
    for K in range(mesh.n_elements):
        v = mesh.element_vertices(K)
        basis = ScaledMonomialBasis.for_polygon(v, k)
        q = polygon_quadrature(v, degree)
        uh = basis.evaluate(fields.u[K], q.points)
        gh = basis.evaluate_gradient(fields.u[K], q.points)
        ue = np.asarray(u_exact(q.points), dtype=float)
        ge = np.asarray(grad_exact(q.points), dtype=float)
        du2 = q.weights @ (ue - uh) ** 2
        dg2 = q.weights @ ((ge - gh) ** 2).sum(1)
        e0 += du2
        e1 += du2 + dg2
        n0 += q.weights @ ue**2
        n1 += q.weights @ ue**2 + q.weights @ (ge**2).sum(1)
    if n0 <= 0 or n1 <= 0:
        return math.sqrt(e0), math.sqrt(e1)
    return math.sqrt(e0 / n0), math.sqrt(e1 / n1)


def ecr(e_coarse, e_fine, h_coarse, h_fine):
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def convergence_rates(errors, hs):
    """Rates between consecutive levels; ``None`` for the first level."""
    if len(errors) != len(hs):
        raise ValueError("errors and mesh sizes must have equal length")
    return [None] + [ecr(errors[i - 1], errors[i], hs[i - 1], hs[i]) for i in range(1, len(errors))]


@dataclass(frozen=True)
class LevelResult:
    level: int
    h: float
    n_dofs: int
    e0: float
    e1: float


@dataclass
class ConvergenceRecord:
    family: str
    k: int
    levels: list = field(default_factory=list)

    def add(self, result: LevelResult):
        if not (result.e0 >= 0 and result.e1 >= 0):
            raise ValueError("errors must be non-negative")
        self.levels.append(result)

    @property
    def hs(self):
        return [r.h for r in self.levels]

    @property
    def ecr0(self):
        return convergence_rates([r.e0 for r in self.levels], self.hs)

    @property
    def ecr1(self):
        return convergence_rates([r.e1 for r in self.levels], self.hs)

    def mean_rate(self, which="e1", last=3):
        rates = self.ecr1 if which == "e1" else self.ecr0
        tail = [r for r in rates[1:]][-last:]
        return float(np.mean(tail))

    def rows(self):
        for r, a, b in zip(self.levels, self.ecr0, self.ecr1):
            yield (self.family, self.k, r.level, r.h, r.n_dofs, r.e0, a, r.e1, b)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


@dataclass
class DiagnosticReport:
    broken_h1: float
    mean_jumps: np.ndarray        # per edge, jump of edge averages (value on boundary)
    flux_average: np.ndarray      # per interior edge, max |lam^+ + lam^-| coefficient
    stabilization_energy: float
    lam_scale: float

    @property
    def max_flux_average(self):
        return float(self.flux_average.max()) if self.flux_average.size else 0.0

    @property
    def relative_flux_average(self):
        return self.max_flux_average / max(self.lam_scale, 1e-300)


def diagnostic_norms(system: SaddleSystem, fields: SolutionFields):
    """Broken seminorm, mean jumps, flux averages and stabilization energy."""
    mesh, k = system.mesh, system.k
    gq = gauss_legendre(k + 1)
    h1 = 0.0
    energy = 0.0
    edge_means = np.zeros((mesh.n_edges, 2))
    flux_sum = np.zeros((mesh.n_edges, k + 1))
    for K, loc in enumerate(system.locals):
        aux = loc.aux
        basis = aux.basis_u
        q = polygon_quadrature(aux.vertices, max(2 * k - 2, 0))
        g = basis.evaluate_gradient(fields.u[K], q.points)
        h1 += q.weights @ (g**2).sum(1)
        eta = loc.flux @ fields.u[K] + loc.trace @ fields.lam[K].ravel()
        energy += system.alpha * eta @ aux.solve_S(eta)
        for j, e in enumerate(mesh.element_edges[K]):
            pts = aux.edge_parameter_points_at(j, gq.points)
            side = 0 if mesh.edge_elements[e, 0] == K else 1
            edge_means[e, side] = gq.weights @ basis.evaluate(fields.u[K], pts)
            flux_sum[e] += fields.lam[K][j]
    interior = mesh.edge_elements[:, 1] >= 0
    jumps = np.where(interior, edge_means[:, 0] - edge_means[:, 1], edge_means[:, 0])
    flux_avg = np.abs(flux_sum[interior]).max(axis=1) if interior.any() else np.zeros(0)
    lam_scale = max((np.abs(l).max() for l in fields.lam), default=0.0)
    return DiagnosticReport(math.sqrt(h1), jumps, flux_avg, float(energy), float(lam_scale))
