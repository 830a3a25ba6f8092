"""The discrete ``-1`` inner product ``s_K(F, G) = eta_F^T S^{-1} eta_G``.

The assumption checks compare ``s_K`` with the ``|.|_{-1,K}`` seminorm
computed by the fine element oracle on the finite family of functionals
``F = Du - gamma^* lam``. Both quantities are quadratic forms in the
coefficients ``(u, lam)``, so the extreme ratios are generalized
eigenvalues rather than sampled maxima.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .auxspace import AuxSpaceK, flux_matrix, trace_matrix
from .basis import legendre_table
from .dualnorms import DualNormOracle, ElementP1Space

__all__ = [
    "Stabilizer",
    "AssumptionReport",
    "s_apply",
    "functional_loads",
    "check_assumption_continuity",
    "check_assumption_coercivity",
]

RANGE_TOL = 1e-10


@dataclass
class Stabilizer:
    aux: AuxSpaceK
    alpha: float = 1.0
    t: float = 1.0
    subspace: np.ndarray | None = None  # columns spanning a subspace of W_K

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.subspace is not None:
            R = np.asarray(self.subspace, dtype=float)
            self._S = R.T @ self.aux.S @ R
            self._R = R
        else:
            self._S = None
            self._R = None

    @property
    def dim(self):
        return self.aux.n_dofs

    def solve(self, rhs):
        if self._R is None:
            return self.aux.solve_S(rhs)
        R = self._R
        return R @ np.linalg.lstsq(self._S, R.T @ rhs, rcond=None)[0]

    def energy_matrix(self, Ea, Eb=None):
        """``Ea^T S^{-1} Eb`` for residual matrices with ``dim`` rows."""
        Eb = Ea if Eb is None else Eb
        return Ea.T @ self.solve(Eb)


def s_apply(stab: Stabilizer, eta, zeta):
    """``eta^T S^{-1} zeta``."""
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if eta.shape[0] != stab.dim or zeta.shape[0] != stab.dim:
        raise ValueError(f"residual vectors must have length {stab.dim}")
    return float(eta @ stab.solve(zeta))


def functional_loads(aux: AuxSpaceK, space: ElementP1Space):
    """Fine-space loads of ``D m_b`` (``m_b in P_k``) and ``-gamma^* P_l`` on each edge.

    Columns are ordered like ``[E_u, E_lam]``.
    """
    cols = []
    for b in range(aux.basis_u.dim):
        cols.append(space.load_gradient(
            lambda X, b=b: aux.basis_u.gradients(X)[:, b, :], degree=2 * aux.k))
    k = aux.k
    for j in range(aux.n_edges):
        for l in range(k + 1):
            def lam(edge, t, j=j, l=l):
                return legendre_table(k, t)[..., l] * (edge == j)
            cols.append(-space.load_boundary(lam, order=k + 2))
    return np.column_stack(cols)


@dataclass(frozen=True)
class AssumptionReport:
    constant: float
    eigenvalues: np.ndarray


def _zero_mean_coefficients(aux: AuxSpaceK):
    # (u, lam) with int_dK lam = 0, i.e. <F, 1> = 0
    nu = aux.basis_u.dim
    k = aux.k
    n = nu + aux.n_edges * (k + 1)
    row = np.zeros(n)
    row[nu:: k + 1] = aux.lengths
    return sla.null_space(row[None, :])


def _pencil(stab: Stabilizer, oracle: DualNormOracle | None, multipliers_only: bool):
    aux = stab.aux
    oracle = oracle or DualNormOracle()
    space = ElementP1Space(aux.vertices, oracle.element_divisions)
    E = np.hstack([flux_matrix(aux), trace_matrix(aux)])
    L = functional_loads(aux, space)
    Z = _multiplier_block(aux) if multipliers_only else _zero_mean_coefficients(aux)
    A = Z.T @ stab.energy_matrix(E) @ Z
    B = Z.T @ space.dual_gram(L) @ Z
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    # restrict to the range of the oracle form: Du vanishes on constants
    w, V = np.linalg.eigh(B)
    keep = w > RANGE_TOL * w.max()
    V = V[:, keep]
    return V.T @ A @ V, V.T @ B @ V


def _multiplier_block(aux: AuxSpaceK):
    nu = aux.basis_u.dim
    k = aux.k
    n_lam = aux.n_edges * (k + 1)
    mean = np.zeros(n_lam)
    mean[:: k + 1] = aux.lengths
    Zl = sla.null_space(mean[None, :])
    return np.vstack([np.zeros((nu, Zl.shape[1])), Zl])


def check_assumption_continuity(stab: Stabilizer, oracle: DualNormOracle | None = None):
    """Largest ratio ``s_K(F, F) / |F|^2_{-1,K}`` over ``F = Du - gamma^* lam``."""
    A, B = _pencil(stab, oracle, multipliers_only=False)
    ev = sla.eigh(A, B, eigvals_only=True)
    return AssumptionReport(float(ev[-1]), ev)


def check_assumption_coercivity(stab: Stabilizer, oracle: DualNormOracle | None = None):
    """Smallest ratio ``s_K(gamma^* lam, gamma^* lam) / |gamma^* lam|^2_{-1,K}``."""
    A, B = _pencil(stab, oracle, multipliers_only=True)
    ev = sla.eigh(A, B, eigvals_only=True)
    return AssumptionReport(float(max(ev[0], 0.0)), ev)
