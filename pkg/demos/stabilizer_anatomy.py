"""Look inside the per-element stabilizer on a regular hexagon.

Run with ``python demos/stabilizer_anatomy.py``. Takes a few seconds.

The stabilizer measures the mismatch between a discrete flux and the
gradient of u in a negative boundary norm. That norm is realized through
an auxiliary virtual space W_K whose interior polynomial moments are zero.
This script builds W_K, reports the constants that make the method stable,
and shows what breaks if the zero-moment condition is dropped.
"""
import numpy as np

from polyhdg.auxspace import (build_aux_space, consistency_defect, infsup_constant,
                              normal_derivative_coefficients, residual_vector)
from polyhdg.diagnostics import regular_hexagon
from polyhdg.dualnorms import DualNormOracle
from polyhdg.stabilizer import (Stabilizer, check_assumption_coercivity,
                                check_assumption_continuity, s_apply)

oracle = DualNormOracle()
hexagon = regular_hexagon()

print("k  dim W_K  inf-sup  continuity  coercivity")
for k in (1, 2, 3):
    aux = build_aux_space(hexagon, k)
    stab = Stabilizer(aux)
    print(f"{k}  {aux.n_dofs:7d}  {infsup_constant(aux, oracle):7.4f}  "
          f"{check_assumption_continuity(stab, oracle).constant:10.4f}  "
          f"{check_assumption_coercivity(stab, oracle).constant:10.4f}")

# A flux that equals the normal derivative of u is invisible to the stabilizer.
k = 2
aux = build_aux_space(hexagon, k)
stab = Stabilizer(aux)
rng = np.random.default_rng(0)
u = rng.standard_normal(aux.basis_u.dim)
lam = normal_derivative_coefficients(aux, u)
r = residual_vector(aux, u, lam)
print(f"\nexact flux: |eta| = {np.abs(r.eta).max():.1e}, s(eta, eta) = {s_apply(stab, r.eta, r.eta):.1e}")
r = residual_vector(aux, u, lam + 0.1 * rng.standard_normal(lam.shape))
print(f"perturbed flux: s(eta, eta) = {s_apply(stab, r.eta, r.eta):.3e}")

# Without the zero-moment condition the boundary-only residual is wrong.
for zero in (True, False):
    defect = consistency_defect(build_aux_space(hexagon, k, zero_moments=zero))
    print(f"zero interior moments={zero!s:5}: consistency defect {defect:.1e}")
