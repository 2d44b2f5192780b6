import numpy as np
import pytest

from seqsample.model import MarginalDistribution, load_instance, make_instance

# one line per acceptance criterion, printed at the end of the session
CRITERIA_LINES: list[str] = []


def report(number, title, ok, detail=""):
    CRITERIA_LINES.append(f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def random_instance(rng: np.random.Generator, name="rand", n1=2, m2=2, n2_free=2, d=2, max_values=3):
    """Small enumerable instance with complete recourse.

    W = [W_free | -I] lets the slack block absorb any right-hand side and
    q >= 0 keeps the second stage bounded below.
    """
    W = np.hstack([rng.normal(size=(m2, n2_free)).round(2), -np.eye(m2)])
    q0 = rng.uniform(0.0, 3.0, size=n2_free + m2).round(2)
    R0 = rng.normal(size=m2).round(2)
    T0 = rng.normal(size=(m2, n1)).round(2)
    marginals = []
    for _ in range(d):
        k = int(rng.integers(2, max_values + 1))
        vals = np.sort(rng.choice(np.arange(-5, 6), size=k, replace=False)).astype(float)
        p = rng.dirichlet(np.ones(k)).round(3)
        p[-1] = 1.0 - p[:-1].sum()
        if p.min() <= 0:
            p = np.full(k, 1.0 / k)
        marginals.append(MarginalDistribution.discrete(vals, p))
    maps = []
    for j in range(d):
        maps.append(("R", int(rng.integers(m2)), j, float(rng.choice([-1.0, 1.0, 0.5]))))
    maps.append(("T", (int(rng.integers(m2)), int(rng.integers(n1))), 0, float(rng.choice([-0.5, 0.5]))))
    return make_instance(
        name=name, c=rng.uniform(-1.0, 1.0, size=n1).round(2), q0=q0, W=W, R0=R0, T0=T0,
        marginals=marginals, lower=np.zeros(n1), upper=np.full(n1, 5.0),
        maps=[(t, i, np.eye(d)[j] * coef) for t, i, j, coef in maps],
    )


@pytest.fixture(scope="session")
def newsvendor():
    return load_instance("newsvendor4.inst")


@pytest.fixture(scope="session")
def capacity():
    return load_instance("capacity4.inst")
