"""Command line driver: convergence studies and diagnostics.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import multiprocessing as mp
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

from .assembly import AssemblyError, apply_dirichlet, assemble, dump_coo
from .auxspace import AuxSpaceError
from .dualnorms import DualNormOracle, OracleError
from .mesh import MeshError, generate, hexagonal_family, voronoi_family
from .solve_post import (MANUFACTURED, ConvergenceRecord, LevelResult, SolverError,
                         compute_errors, solve)

log = logging.getLogger("polyhdg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
CSV_COLUMNS = ("family", "k", "level", "h", "n_dofs", "e0", "ecr0", "e1", "ecr1")
DIAGNOSTIC_DEGREES = [1, 2, 3]
FAMILY_ALIASES = {"hex": "hex", "hexagonal": "hex", "voronoi": "voronoi"}


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    mesh: str = "hex"
    degrees: list = field(default_factory=lambda: [1, 2])
    alpha: float = 1.0
    t: float = 1.0
    levels: int = 5
    solution: str = "sine"
    out: str = "results"
    solver: str = "direct"
    dump_system: bool = False
    parallel: int = 0
    plot: bool = False
    stab_scale: float = 1.0
    voronoi_seeds: int = 16
    lloyd_iterations: int = 50
    seed: int = 1
    edge_intervals: int = 512
    element_divisions: int = 40

    def validate(self):
        self.mesh = FAMILY_ALIASES.get(self.mesh, self.mesh)
        if self.mesh not in ("hex", "voronoi"):
            raise ConfigError(f"unknown mesh family {self.mesh!r}")
        if not self.degrees or any(int(k) != k or not 1 <= k <= 6 for k in self.degrees):
            raise ConfigError("degrees must be integers in [1, 6]")
        if self.levels < 2:
            raise ConfigError("levels must be >= 2 to estimate convergence rates")
        if self.mesh == "hex" and self.levels > 8:
            raise ConfigError("the hexagonal family has 8 levels")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.solution not in MANUFACTURED:
            raise ConfigError(f"unknown manufactured solution {self.solution!r}; "
                              f"choose from {sorted(MANUFACTURED)}")
        if self.solver not in ("direct", "condensed"):
            raise ConfigError("solver must be 'direct' or 'condensed'")
        return self

    @classmethod
    def from_sources(cls, path=None, overrides=None):
        data = {}
        if path:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()


def _family_meshes(cfg: StudyConfig):
    if cfg.mesh == "hex":
        specs = hexagonal_family(cfg.levels)
    else:
        specs = voronoi_family(cfg.levels, n0=cfg.voronoi_seeds,
                               lloyd_iterations=cfg.lloyd_iterations, seed=cfg.seed)
    return [generate(s) for s in specs]


_STUDY = None  # (cfg, meshes) shared with forked workers


def _run_job(job):
    k, level = job
    cfg, meshes = _STUDY
    mesh = meshes[level]
    sol = MANUFACTURED[cfg.solution]
    system = assemble(mesh, k, cfg.alpha, cfg.t, f=sol.f, stab_scale=cfg.stab_scale,
                      condensed=cfg.solver == "condensed", validate=False)
    if not sol.zero_on_boundary:
        system = apply_dirichlet(system, sol.u)
    fields_ = solve(system)
    e0, e1 = compute_errors(mesh, k, fields_, sol.u, sol.grad)
    dump = None
    if cfg.dump_system and level == 0:
        os.makedirs(cfg.out, exist_ok=True)
        dump = dump_coo(system.matrix, os.path.join(cfg.out, f"system_{cfg.mesh}_k{k}.coo"))
    return LevelResult(level + 1, mesh.h, system.layout.total, e0, e1), fields_.warnings, dump


def _fmt(x, spec):
    return "-" if x is None else format(x, spec)


def format_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        for fam, k, level, h, n, e0, r0, e1, r1 in rec.rows():
            w.writerow([fam, k, level, format(h, ".6e"), n, format(e0, ".6e"),
                        _fmt(r0, ".4f"), format(e1, ".6e"), _fmt(r1, ".4f")])
    return buf.getvalue()


def run_study(cfg: StudyConfig):
    """Run every ``(k, level)`` job and write ``convergence.csv`` into ``cfg.out``."""
    global _STUDY
    meshes = _family_meshes(cfg)
    jobs = [(k, i) for k in cfg.degrees for i in range(cfg.levels)]
    _STUDY = (cfg, meshes)
    try:
        if cfg.parallel and cfg.parallel > 1 and "fork" in mp.get_all_start_methods():
            with ProcessPoolExecutor(cfg.parallel, mp_context=mp.get_context("fork")) as pool:
                results = list(pool.map(_run_job, jobs))
        else:
            results = []
            for job in jobs:
                results.append(_run_job(job))
                r = results[-1][0]
                log.info("k=%d level=%d h=%.4f dofs=%d e0=%.3e e1=%.3e",
                         job[0], r.level, r.h, r.n_dofs, r.e0, r.e1)
    finally:
        _STUDY = None
    records = {k: ConvergenceRecord(cfg.mesh, k) for k in cfg.degrees}
    for (k, _), (res, warns, _dump) in zip(jobs, results):
        records[k].add(res)
        for w in warns:
            log.warning("k=%d level=%d: %s", k, res.level, w)
    records = [records[k] for k in cfg.degrees]
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "convergence.csv")
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(records))
    if cfg.plot:
        _plot(records, os.path.join(cfg.out, "convergence.png"))
    return records, path


def _plot(records, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping plot")
        return None
    fig, ax = plt.subplots(figsize=(5, 4))
    for rec in records:
        hs = rec.hs
        e1 = [r.e1 for r in rec.levels]
        ax.loglog(hs, e1, "o-", label=f"k={rec.k}")
        ax.loglog(hs, [e1[-1] * (h / hs[-1]) ** rec.k for h in hs], "k:", lw=0.8)
    ax.set_xlabel("h")
    ax.set_ylabel("relative H1 error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _cmd_study(args):
    cfg = StudyConfig.from_sources(args.config, {
        "degrees": args.degree, "levels": args.levels, "alpha": args.alpha, "t": args.t,
        "mesh": args.mesh, "out": args.out, "dump_system": args.dump_system or None,
        "parallel": args.parallel, "plot": args.plot or None, "solver": args.solver,
        "solution": args.solution,
    })
    records, path = run_study(cfg)
    sys.stdout.write(format_csv(records))
    log.info("wrote %s", path)
    return EXIT_OK


def _cmd_diagnostics(args):
    from .diagnostics import run_diagnostics
    cfg = StudyConfig.from_sources(args.config, {"degrees": args.degree or DIAGNOSTIC_DEGREES,
                                                 "out": args.out})
    oracle = DualNormOracle(edge_intervals=cfg.edge_intervals,
                            element_divisions=cfg.element_divisions)
    result = run_diagnostics(tuple(cfg.degrees), oracle, sabotage_moments=args.sabotage_moments)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "diagnostics.json")
    with open(path, "w") as fh:
        json.dump(result.as_dict(), fh, indent=2, sort_keys=True)
    for c in result.checks:
        exp = "" if c.expected is None else f" (stored {c.expected:g})"
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g}{exp}")
    return EXIT_OK if result.passed else EXIT_NUMERIC


def build_parser():
    p = argparse.ArgumentParser(prog="polyhdg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with StudyConfig fields")
        sp.add_argument("--degree", type=int, nargs="+", help="polynomial degrees k")
        sp.add_argument("--out", help="output directory")

    st = sub.add_parser("study", help="run a convergence study and write a CSV table")
    common(st)
    st.add_argument("--levels", type=int)
    st.add_argument("--alpha", type=float)
    st.add_argument("--t", type=float)
    st.add_argument("--mesh", choices=["hex", "voronoi"])
    st.add_argument("--solution", help="manufactured solution id")
    st.add_argument("--solver", choices=["direct", "condensed"])
    st.add_argument("--dump-system", action="store_true",
                    help="write the coarsest system matrix in coordinate format")
    st.add_argument("--parallel", type=int, metavar="N", help="run jobs in N processes")
    st.add_argument("--plot", action="store_true", help="write convergence.png")
    st.set_defaults(func=_cmd_study)

    dg = sub.add_parser("diagnostics", help="measure inf-sup, stabilizer and scaling constants")
    common(dg)
    dg.add_argument("--sabotage-moments", action="store_true",
                    help="use the space with non-zero interior moments (must fail)")
    dg.set_defaults(func=_cmd_diagnostics)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AssemblyError, AuxSpaceError, OracleError, MeshError,
            ArithmeticError, ValueError) as exc:
        print(f"error: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
