import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from cansys import HalfLineHamiltonian, PSDMatrix2, WholeLineHamiltonian

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

unit = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def psd_matrices(draw, rank_one=None):
    ro = draw(st.booleans()) if rank_one is None else rank_one
    if ro:
        h = draw(st.floats(0.1, 3.0))
        phi = draw(st.floats(0.0, math.pi))
        return PSDMatrix2.rank_one(h, phi)
    l11 = draw(st.floats(0.1, 1.5))
    l21 = draw(unit)
    l22 = draw(st.floats(0.0, 1.5))
    return PSDMatrix2(l11 * l11, l11 * l21, l21 * l21 + l22 * l22)


@st.composite
def half_lines(draw, max_cells=4, side="right", extension=None, normalized=False):
    n = draw(st.integers(1, max_cells))
    cells = []
    for _ in range(n):
        M = draw(psd_matrices())
        if normalized:
            M = M.scaled(1.0 / M.trace)
        cells.append((draw(st.floats(0.1, 2.0)), M))
    dirs = {round(math.atan2(2 * M.a12, M.a11 - M.a22), 6) for _, M in cells if M.det <= 1e-12 * M.trace ** 2}
    if len(dirs) == 1 and all(M.det <= 1e-12 * M.trace ** 2 for _, M in cells):
        # a single rank-one direction everywhere has no Weyl disk at all
        cells[0] = (cells[0][0], PSDMatrix2(1.0, 0.2, 0.8))
    ext = extension or draw(st.sampled_from(["repeat-last", "periodic"]))
    return HalfLineHamiltonian(tuple(cells), ext, side)


@st.composite
def whole_lines(draw, max_cells=3):
    return WholeLineHamiltonian(draw(half_lines(max_cells, "right")), draw(half_lines(max_cells, "left")))


upper = st.builds(complex, st.floats(-3.0, 3.0), st.floats(0.2, 3.0))


def random_half_line(rng, max_cells=4, normalized=True, side="right"):
    cells = []
    for _ in range(rng.integers(1, max_cells + 1)):
        if rng.random() < 0.4:
            M = PSDMatrix2.rank_one(rng.uniform(0.2, 2.0), rng.uniform(0, math.pi))
        else:
            L = np.array([[rng.uniform(0.2, 1.5), 0.0], [rng.uniform(-1, 1), rng.uniform(0.0, 1.5)]])
            M = PSDMatrix2.from_array(L @ L.T)
        if normalized:
            M = M.scaled(1.0 / M.trace)
        cells.append((rng.uniform(0.1, 2.0), M))
    return HalfLineHamiltonian(tuple(cells), str(rng.choice(["repeat-last", "periodic"])), side)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


ACCEPTANCE_LINES = []


def acceptance_line(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
