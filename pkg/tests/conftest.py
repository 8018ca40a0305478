import itertools

import numpy as np
import pytest

from hdpolar.compiler import compile_kernel
from hdpolar.gf2 import builtin_kernel, validate_kernel

# Same-exponent kernels for m = 3 and m = 4 (partial distances 1,2,2 and 1,2,2,4).
G3_ROWS = [[1, 0, 0], [1, 1, 0], [1, 0, 1]]
G4_ROWS = [[1, 0, 0, 0], [1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1]]


def definition_pair(rows, i, pairs, knowns):
    """Bit-channel sums straight from the definition, one case at a time.

    ``rows`` is the kernel as nested 0/1 lists, ``i`` is 1-based, ``pairs``
    is ``(m, 2)``.  Deliberately shares no code with the package.
    """
    m = len(rows)
    out = [0.0, 0.0]
    for ui in (0, 1):
        for tail in itertools.product((0, 1), repeat=m - i):
            u = list(knowns) + [ui] + list(tail)
            term = 1.0
            for k in range(m):
                x = sum(u[r] * rows[r][k] for r in range(m)) % 2
                term *= pairs[k][x]
            out[ui] += term
    return np.array(out)


@pytest.fixture(scope="session")
def G2():
    return builtin_kernel("G2")


@pytest.fixture(scope="session")
def G5():
    return builtin_kernel("G5")


@pytest.fixture(scope="session")
def G6():
    return builtin_kernel("G6")


@pytest.fixture(scope="session")
def G3():
    return validate_kernel(G3_ROWS)


@pytest.fixture(scope="session")
def G4():
    return validate_kernel(G4_ROWS)


@pytest.fixture(scope="session")
def plans_cache():
    cache = {}

    def get(G, mode):
        key = (G.rows, mode)
        if key not in cache:
            cache[key] = compile_kernel(G, mode)
        return cache[key]

    return get


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def add(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
