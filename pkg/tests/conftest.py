import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cbbandit.generators import gen_random

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def small_instances():
    """A fixed pool of small random instances shared across modules."""
    return [gen_random(N, K, seed) for seed, (N, K) in enumerate([(3, 1), (4, 2), (5, 2), (6, 3), (8, 2)])]


def random_lp_data(rng, n_vars, n_rows):
    """Random bounded LP data: rows with mixed senses plus a box row keeping it bounded."""
    A = rng.integers(-3, 4, size=(n_rows, n_vars)).astype(float)
    b = rng.integers(0, 8, size=n_rows).astype(float)
    senses = rng.choice(["<=", ">=", "=="], size=n_rows, p=[0.6, 0.25, 0.15])
    c = rng.integers(-4, 5, size=n_vars).astype(float)
    return c, A, senses, b


def brute_force_lp(c, A, senses, b, bound=10.0):
    """Maximize ``c x`` by enumerating vertices of ``{A x (senses) b, 0 <= x, sum x <= bound}``.

    Returns ``None`` when no vertex is feasible.
    """
    from itertools import combinations

    n = len(c)
    rows, rhs = [], []
    for a, s, v in zip(A, senses, b):
        if s in ("<=", "=="):
            rows.append(a)
            rhs.append(v)
        if s in (">=", "=="):
            rows.append(-a)
            rhs.append(-v)
    rows.append(np.ones(n))
    rhs.append(bound)
    for j in range(n):
        e = np.zeros(n)
        e[j] = -1.0
        rows.append(e)
        rhs.append(0.0)
    G, h = np.array(rows), np.array(rhs)
    best = None
    for idx in combinations(range(len(h)), n):
        M = G[list(idx)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(idx)])
        if np.all(G @ x <= h + 1e-9):
            v = float(c @ x)
            if best is None or v > best:
                best = v
    return best


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Log one acceptance line; the summary hook reprints all of them at the end of the run."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
