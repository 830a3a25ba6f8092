"""Solve the sine problem on two mesh families and watch the errors fall.

Run with ``python demos/convergence_walkthrough.py``. Takes about a minute.

The unit square is tiled first by deformed hexagons, then by Lloyd-relaxed
Voronoi cells. On each tiling we assemble the hybridized system (element
polynomials u, element-edge fluxes lambda, interior-edge traces phi), solve
it and compare with the exact solution. Halving h should divide the H1
error by about 2^k.
"""
from polyhdg.assembly import assemble
from polyhdg.mesh import generate, hexagonal_family, voronoi_family
from polyhdg.solve_post import (MANUFACTURED, ConvergenceRecord, LevelResult,
                                compute_errors, diagnostic_norms, solve)

LEVELS = 4
sol = MANUFACTURED["sine"]

for family, specs in (("hex", hexagonal_family(LEVELS)), ("voronoi", voronoi_family(LEVELS))):
    meshes = [generate(s) for s in specs]
    for k in (1, 2, 3):
        rec = ConvergenceRecord(family, k)
        worst_flux = 0.0
        for level, mesh in enumerate(meshes, start=1):
            system = assemble(mesh, k, f=sol.f)
            fields = solve(system)
            e0, e1 = compute_errors(mesh, k, fields, sol.u, sol.grad)
            rec.add(LevelResult(level, mesh.h, system.layout.total, e0, e1))
            worst_flux = max(worst_flux, diagnostic_norms(system, fields).relative_flux_average)
        print(f"\n{family} mesh, k={k}")
        print(f"{'level':>5} {'h':>9} {'dofs':>7} {'L2 err':>10} {'rate':>6} {'H1 err':>10} {'rate':>6}")
        for _, _, level, h, n, a, ra, b, rb in rec.rows():
            fa = f"{ra:6.2f}" if ra is not None else "     -"
            fb = f"{rb:6.2f}" if rb is not None else "     -"
            print(f"{level:>5} {h:9.4f} {n:>7} {a:10.3e} {fa} {b:10.3e} {fb}")
        # the stabilizer makes the two element fluxes on a shared edge cancel
        print(f"largest flux mismatch across an edge, relative: {worst_flux:.1e}")
