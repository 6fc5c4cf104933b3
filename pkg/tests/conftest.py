from fractions import Fraction as F

import numpy as np
import pytest

from jomatch.instance import ObjectConfig, SolutionMaps

C32 = ObjectConfig.uniform(3, 2)


def frac_maps(config, blocks):
    """SolutionMaps with exact Fraction entries from 1-based ``{(i, j): rows}``."""
    return SolutionMaps.from_pairs(config, {k: [[F(v) for v in row] for row in b] for k, b in blocks.items()},
                                   dtype=object)


# worked-example points on C_{3,2}
POINTS = {
    # triangle row cut off by the basic LP
    "ex2": {(1, 2): [["3/4", "1/4"], ["1/4", "3/4"]], (1, 3): [["3/4", "1/4"], ["1/4", "3/4"]],
            (2, 3): [["1/4", "3/4"], ["3/4", "1/4"]]},
    "ex1": {(1, 2): [["1/2", "1/2"], [0, 0]], (2, 3): [[0, 0], [0, 0]], (1, 3): [[0, "1/2"], [0, 0]]},
    "exx3": {(1, 2): [[0, 0], [0, 0]], (2, 3): [[0, "1/3"], [0, "1/3"]], (1, 3): [[0, "1/3"], [0, "1/3"]]},
    "ex7": {(1, 2): [[0, "1/2"], [0, 0]], (2, 3): [["1/2", "1/2"], ["1/2", "1/2"]],
            (1, 3): [["1/2", "1/2"], [0, 0]]},
    "ex6": {(1, 2): [[0, "1/2"], ["1/2", 0]], (2, 3): [["1/2", 0], ["1/2", "1/2"]],
            (1, 3): [["1/2", "1/2"], [0, "1/2"]]},
    "ex3": {(1, 2): [[0, 0], [0, 0]], (1, 3): [[0, 0], [0, 1]], (2, 3): [[1, 0], [0, 0]]},
    "ex4": {(1, 2): [[0, 0], [0, 1]], (1, 3): [[0, 0], [0, 0]], (2, 3): [[0, 0], [0, 0]]},
}


@pytest.fixture
def point():
    def make(name):
        return frac_maps(C32, POINTS[name])
    return make


@pytest.fixture(scope="session")
def c32_vertices():
    from jomatch.polytope_lab import enumerate_vertices
    return enumerate_vertices(C32)


def rng(seed=0):
    return np.random.default_rng(seed)


# one line per acceptance criterion, echoed again at the end of the run
ACCEPTANCE: dict[int, str] = {}


def report_criterion(k: int, ok: bool, detail: str) -> bool:
    line = f"CRITERION {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
