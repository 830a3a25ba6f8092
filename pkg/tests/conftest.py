import functools

import numpy as np
import pytest

from polyhdg.mesh import generate, hexagonal_family, voronoi_family

# criterion number -> {part: (passed, detail)}, printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, part, passed, detail):
    ACCEPTANCE.setdefault(number, {})[part] = (bool(passed), detail)
    print(f"criterion {number} [{part}]: {'pass' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for p, _ in parts.values())
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}")
        for name, (p, detail) in parts.items():
            terminalreporter.write_line(f"    {'ok  ' if p else 'FAIL'} {name}: {detail}")


@functools.lru_cache(maxsize=None)
def hex_mesh(level):
    return generate(hexagonal_family(level)[level - 1])


@functools.lru_cache(maxsize=None)
def voronoi_mesh(level):
    return generate(voronoi_family(level)[level - 1])


def unit_square():
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_convex_polygon(rng, n=None, h=1.0, center=(0.0, 0.0)):
    """Shape-regular convex polygon: perturbed points on an ellipse."""
    n = n or int(rng.integers(3, 9))
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if gaps.min() > 0.5 / n * np.pi:
            break
    ax = rng.uniform(0.7, 1.0)
    pts = np.column_stack([ax * np.cos(ang), np.sin(ang)])
    return 0.5 * h * pts + np.asarray(center)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
