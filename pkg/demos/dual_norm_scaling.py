"""Check how the negative boundary norm scales with edge length.

Run with ``python demos/dual_norm_scaling.py``. Takes a few seconds.

The H^{-1/2} seminorm of a zero-mean edge function is computed as a dual
norm against a fine piecewise-linear discretization of H^{1/2}. Shrinking
an edge by a factor h should shrink the seminorm by exactly h, and
refining the discretization should change the value less and less.
"""
from polyhdg.diagnostics import scaling_ratios
from polyhdg.dualnorms import DualNormOracle, estimate, minus_half_seminorm

ratios = scaling_ratios(hs=(0.5, 0.25, 0.125), degrees=(1, 2, 3))
print("degree  h      seminorm / (h * reference)")
for (p, h), r in sorted(ratios.items()):
    print(f"{p:6d}  {h:5.3f}  {r:.12f}")

print("\nresolution study for lambda = Legendre-2 on a unit edge")
lam = [0.0, 0.0, 1.0]
oracle = DualNormOracle(edge_intervals=16)
for _ in range(5):
    est = estimate(lambda o: minus_half_seminorm(lam, oracle=o), oracle)
    print(f"{oracle.edge_intervals:5d} intervals: {est.value:.8f}  (change on doubling {est.error:.1e})")
    oracle = oracle.refined()
