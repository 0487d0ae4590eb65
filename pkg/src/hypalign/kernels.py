"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Each public kernel dispatches on :data:`hypalign._accel.USE_NUMBA`.  The
``*_loop`` functions are the numba sources (explicit loops); the ``*_numpy``
functions are vectorised numpy equivalents.  Both are importable so tests
and ``benchmarks/bench_kernels.py`` can compare them directly.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# intermediate-curvature objective
# ---------------------------------------------------------------------------


@njit
def _jc_scalar(c3, c1, c2, r):
    q = math.sqrt(c3)
    p1 = math.sqrt(c1)
    p2 = math.sqrt(c2)
    d1 = (-p1 + 2.0 * q * math.cosh((q - p1) * r)) / (2.0 * p1 * c3)
    d2 = (-p2 + 2.0 * q * math.cosh((q - p2) * r)) / (2.0 * p2 * c3)
    return d1 + d2


@njit
def jc_grid_loop(c3s, c1, c2, r):
    out = np.empty(c3s.shape[0])
    for i in range(c3s.shape[0]):
        out[i] = _jc_scalar(c3s[i], c1, c2, r)
    return out


def jc_grid_numpy(c3s, c1, c2, r):
    q = np.sqrt(c3s)
    p1 = math.sqrt(c1)
    p2 = math.sqrt(c2)
    d1 = (-p1 + 2.0 * q * np.cosh((q - p1) * r)) / (2.0 * p1 * c3s)
    d2 = (-p2 + 2.0 * q * np.cosh((q - p2) * r)) / (2.0 * p2 * c3s)
    return d1 + d2


def jc_grid(c3s, c1, c2, r):
    """Evaluate ``J_c`` at every curvature in ``c3s``."""
    c3s = np.ascontiguousarray(c3s, dtype=np.float64)
    if USE_NUMBA:
        return jc_grid_loop(c3s, float(c1), float(c2), float(r))
    return jc_grid_numpy(c3s, float(c1), float(c2), float(r))


@njit
def golden_jc_loop(c1, c2, r, low, high, tol):
    h = high - low
    n = 0
    if h > tol:
        n = int(math.ceil(math.log(h / tol) / math.log(1.0 / INV_PHI)))
    a = low
    b = high
    x1 = b - INV_PHI * h
    x2 = a + INV_PHI * h
    f1 = _jc_scalar(x1, c1, c2, r)
    f2 = _jc_scalar(x2, c1, c2, r)
    for _ in range(n):
        h *= INV_PHI
        if f1 <= f2:
            b = x2
            x2 = x1
            f2 = f1
            x1 = b - INV_PHI * h
            f1 = _jc_scalar(x1, c1, c2, r)
        else:
            a = x1
            x1 = x2
            f1 = f2
            x2 = a + INV_PHI * h
            f2 = _jc_scalar(x2, c1, c2, r)
    x = 0.5 * (a + b)
    return x, _jc_scalar(x, c1, c2, r), n


def golden_jc_numpy(c1, c2, r, low, high, tol):
    from .manifold import golden_section_minimize

    return golden_section_minimize(lambda x: _jc_python(x, c1, c2, r), low, high, tol)


def _jc_python(c3, c1, c2, r):
    q = math.sqrt(c3)
    p1 = math.sqrt(c1)
    p2 = math.sqrt(c2)
    d1 = (-p1 + 2.0 * q * math.cosh((q - p1) * r)) / (2.0 * p1 * c3)
    d2 = (-p2 + 2.0 * q * math.cosh((q - p2) * r)) / (2.0 * p2 * c3)
    return d1 + d2


def golden_jc(c1, c2, r, low, high, tol):
    """Golden-section minimisation of ``J_c`` on ``[low, high]``."""
    args = (float(c1), float(c2), float(r), float(low), float(high), float(tol))
    if USE_NUMBA:
        x, f, n = golden_jc_loop(*args)
        return float(x), float(f), int(n)
    return golden_jc_numpy(*args)


# ---------------------------------------------------------------------------
# entailment-cone hinge with gradients
# ---------------------------------------------------------------------------


@njit
def cone_violation_loop(child, parent, c, k):
    """Row-wise hinge ``max(0, angle(child, parent) - aperture(parent))`` and its gradients.

    Returns ``(loss, g_child, g_parent, g_c)`` where ``g_c`` is per row.
    Degenerate rows (apex at origin, coincident points) are flagged with
    ``loss = nan``.
    """
    nrow, dim = child.shape
    loss = np.zeros(nrow)
    g_child = np.zeros((nrow, dim))
    g_parent = np.zeros((nrow, dim))
    g_c = np.zeros(nrow)
    sc = math.sqrt(c)
    for i in range(nrow):
        s = 0.0
        rho2 = 0.0
        for j in range(dim - 1):
            s += parent[i, j] * child[i, j]
            rho2 += parent[i, j] * parent[i, j]
        s -= parent[i, dim - 1] * child[i, dim - 1]
        rho = math.sqrt(rho2)
        a = c * s
        disc = a * a - 1.0
        if rho == 0.0 or disc <= 1e-12:
            loss[i] = np.nan
            continue
        root = math.sqrt(disc)
        num = child[i, dim - 1] + parent[i, dim - 1] * a
        den = rho * root
        z = num / den
        if z > 1.0:
            z = 1.0
        elif z < -1.0:
            z = -1.0
        angle = math.acos(z)
        q = 2.0 * k / (sc * rho)
        if q >= 1.0:
            aperture = 0.5 * math.pi
        else:
            aperture = math.asin(q)
        val = angle - aperture
        if val <= 0.0:
            continue
        loss[i] = val
        # angle part
        if abs(num / den) < 1.0:
            dz = -1.0 / math.sqrt(1.0 - z * z)
        else:
            dz = 0.0
        dz_dnum = dz / den
        dz_dden = -dz * num / (den * den)
        da = dz_dnum * parent[i, dim - 1] + dz_dden * rho * a / root
        for j in range(dim - 1):
            g_child[i, j] = da * c * parent[i, j]
            g_parent[i, j] = da * c * child[i, j] + dz_dden * root / rho * parent[i, j]
        g_child[i, dim - 1] = -da * c * parent[i, dim - 1] + dz_dnum
        g_parent[i, dim - 1] = -da * c * child[i, dim - 1] + dz_dnum * a
        g_c[i] = da * s
        # minus aperture part
        if q < 1.0:
            dq = 1.0 / math.sqrt(1.0 - q * q)
            for j in range(dim - 1):
                g_parent[i, j] += dq * q / (rho * rho) * parent[i, j]
            g_c[i] += dq * q / (2.0 * c)
    return loss, g_child, g_parent, g_c


def cone_violation_numpy(child, parent, c, k):
    from .lorentz import (
        _angle_parts,
        exterior_angle_vjp,
        half_aperture_vjp,
    )

    nrow = child.shape[0]
    loss = np.zeros(nrow)
    g_child = np.zeros_like(child)
    g_parent = np.zeros_like(parent)
    g_c = np.zeros(nrow)
    s = np.sum(parent[:, :-1] * child[:, :-1], axis=1) - parent[:, -1] * child[:, -1]
    rho = np.linalg.norm(parent[:, :-1], axis=1)
    bad = (rho == 0.0) | ((c * s) ** 2 - 1.0 <= 1e-12)
    loss[bad] = np.nan
    ok = ~bad
    if not np.any(ok):
        return loss, g_child, g_parent, g_c
    ch, pa = child[ok], parent[ok]
    *_, num, den = _angle_parts(ch, pa, c)
    angle = np.arccos(np.clip(num / den, -1.0, 1.0))
    aperture = np.arcsin(np.minimum(1.0, 2.0 * k / (np.sqrt(c) * rho[ok])))
    val = angle - aperture
    active = val > 0.0
    loss[ok] = np.where(active, val, 0.0)
    w = active.astype(np.float64)
    rows = np.flatnonzero(ok)
    gv, gt, _ = exterior_angle_vjp(ch, pa, c, w)
    ga, _ = half_aperture_vjp(pa, c, w, k=k)
    g_child[rows] = gv
    g_parent[rows] = gt - ga
    # per-row curvature gradients
    sr = s[ok]
    z = num / den
    inside = np.abs(z) < 1.0
    dz = np.where(inside, -1.0 / np.sqrt(np.where(inside, 1.0 - z * z, 1.0)), 0.0) * w
    a = c * sr
    root = np.sqrt(a * a - 1.0)
    da = dz / den * pa[:, -1] + (-dz * num / (den * den)) * rho[ok] * a / root
    q = 2.0 * k / (np.sqrt(c) * rho[ok])
    qa = q < 1.0
    dq = np.where(qa, 1.0 / np.sqrt(np.where(qa, 1.0 - q * q, 1.0)), 0.0) * w
    g_c[rows] = da * sr + dq * q / (2.0 * c)
    return loss, g_child, g_parent, g_c


def cone_violation_batch(child, parent, c, k=0.1):
    """Batched entailment hinge; see :func:`cone_violation_loop` for the outputs."""
    child = np.ascontiguousarray(child, dtype=np.float64)
    parent = np.ascontiguousarray(parent, dtype=np.float64)
    if USE_NUMBA:
        return cone_violation_loop(child, parent, float(c), float(k))
    return cone_violation_numpy(child, parent, float(c), float(k))


# ---------------------------------------------------------------------------
# treecut accuracy
# ---------------------------------------------------------------------------


@njit
def treecut_hits_loop(scores, frontier, truth):
    """Per-cut correct counts.

    ``frontier[j]`` lists node columns (ascending, -1 padded) of cut ``j``;
    ``truth[i, j]`` is the ground-truth column of sample ``i`` under cut ``j``.
    Ties go to the lowest column.
    """
    ncut = frontier.shape[0]
    nsamp = scores.shape[0]
    hits = np.zeros(ncut, dtype=np.int64)
    for j in range(ncut):
        for i in range(nsamp):
            best = -1
            best_val = -np.inf
            for m in range(frontier.shape[1]):
                col = frontier[j, m]
                if col < 0:
                    break
                v = scores[i, col]
                if best < 0 or v > best_val:
                    best = col
                    best_val = v
            if best == truth[i, j]:
                hits[j] += 1
    return hits


def treecut_hits_numpy(scores, frontier, truth):
    hits = np.zeros(frontier.shape[0], dtype=np.int64)
    for j in range(frontier.shape[0]):
        cols = frontier[j][frontier[j] >= 0]
        pred = cols[np.argmax(scores[:, cols], axis=1)]
        hits[j] = int(np.sum(pred == truth[:, j]))
    return hits


def treecut_hits(scores, frontier, truth):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    frontier = np.ascontiguousarray(frontier, dtype=np.int64)
    truth = np.ascontiguousarray(truth, dtype=np.int64)
    if USE_NUMBA:
        return treecut_hits_loop(scores, frontier, truth)
    return treecut_hits_numpy(scores, frontier, truth)
