import numpy as np
import pytest

from hypalign.lorentz import expm_origin, proj_tangent


def numeric_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def numeric_deriv(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(floor, float(np.max(np.abs(b)))))


def random_point(rng, n, c, scale=1.0):
    return expm_origin(rng.normal(size=n) * scale, c)


def random_tangent(rng, x, c, scale=1.0):
    return proj_tangent(x, rng.normal(size=x.shape[-1]) * scale, c)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def random_taxonomy(rng, max_depth=4, max_branch=3, leaf_prob=0.3):
    """Random rooted tree with string ids; leaves may sit at different depths."""
    from hypalign.taxonomy import Taxonomy

    parent = {}
    counter = [0]

    def grow(node, depth):
        if depth == max_depth or (depth > 0 and rng.random() < leaf_prob):
            return
        for _ in range(int(rng.integers(1, max_branch + 1))):
            counter[0] += 1
            child = f"n{counter[0]:03d}"
            parent[child] = node
            grow(child, depth + 1)

    grow("root", 0)
    return Taxonomy("root", parent)


def brute_force_mta(tax, scores, truth, cuts):
    """Per-cut accuracy computed with plain Python loops, averaged as fractions."""
    from fractions import Fraction

    total = Fraction(0)
    for cut in cuts:
        frontier = sorted(cut.frontier)
        hits = 0
        for row, leaf in zip(scores, truth):
            path = tax.path(leaf)
            gt = [n for n in frontier if n in path][0]
            best = frontier[0]
            for n in frontier[1:]:
                if row[tax.index[n]] > row[tax.index[best]]:
                    best = n
            hits += best == gt
        total += Fraction(hits, len(truth))
    return total / len(cuts)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
