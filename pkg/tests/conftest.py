import numpy as np
import pytest

from dpmmrdd.cohort import Cohort, CovariateSchema


def make_cohort(x, y=None, t=None, cont=None, cat=None, cat_levels=None, x0=0.20, ids=None):
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    t = (x >= x0).astype(int) if t is None else np.asarray(t)
    cont = np.zeros((n, 0)) if cont is None else np.asarray(cont, dtype=float).reshape(n, -1)
    cat = np.zeros((n, 0), dtype=int) if cat is None else np.asarray(cat).reshape(n, -1)
    levels = tuple(cat_levels) if cat_levels is not None else tuple(
        int(cat[:, j].max()) for j in range(cat.shape[1]))
    schema = CovariateSchema(tuple(f"c{j}" for j in range(cont.shape[1])),
                             tuple(f"cat_{j}" for j in range(cat.shape[1])), levels)
    ids = np.array([f"u{i}" for i in range(n)], dtype=object) if ids is None else ids
    return Cohort(ids, x, t, y, cont, cat, schema, x0)


def mc_se(draws):
    draws = np.asarray(draws, dtype=float)
    return draws.std(ddof=1) / np.sqrt(len(draws))


def batch_se(draws, n_batches=50):
    """Batch-means standard error for an autocorrelated chain."""
    draws = np.asarray(draws, dtype=float)
    size = len(draws) // n_batches
    means = draws[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call" \
                    and outcome == "passed":
                continue
            name = nodeid.split("::")[-1]
            detail = dict(getattr(rep, "user_properties", ())).get("detail", "")
            lines.append((name, "PASS" if outcome == "passed" else "FAIL", detail))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(lines):
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
