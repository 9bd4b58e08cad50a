"""Compiled inner loops shared by the energy and sampler modules."""

import math

import numpy as np
from numba import njit

# smearing patches: weight 1 up to PATCH_INNER * eta, 0 beyond PATCH_OUTER * eta
PATCH_INNER = 1.2
PATCH_OUTER = 2.0


@njit(cache=True)
def smooth_step(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a / (a + b)


@njit(cache=True)
def patch_weight(rho, eta):
    if eta <= 0.0:
        return 0.0
    t = (PATCH_OUTER * eta - rho) / ((PATCH_OUTER - PATCH_INNER) * eta)
    return smooth_step(t)


@njit(cache=True)
def point_field(xs, pts, eta):
    """Field of unit charges smeared on circles of radius ``eta``.

    Returns ``sum_i -(x - x_i)/|x - x_i|^2`` restricted to ``|x - x_i| >= eta_i``.
    """
    m = xs.shape[0]
    n = pts.shape[0]
    out = np.zeros((m, 2))
    for a in range(m):
        fx = 0.0
        fy = 0.0
        x0 = xs[a, 0]
        x1 = xs[a, 1]
        for i in range(n):
            dx = x0 - pts[i, 0]
            dy = x1 - pts[i, 1]
            r2 = dx * dx + dy * dy
            if r2 >= eta[i] * eta[i] and r2 > 0.0:
                fx -= dx / r2
                fy -= dy / r2
        out[a, 0] = fx
        out[a, 1] = fy
    return out


@njit(cache=True)
def point_field_and_patch(xs, pts, eta):
    """Like :func:`point_field`, also returning the summed patch weights."""
    m = xs.shape[0]
    n = pts.shape[0]
    out = np.zeros((m, 2))
    chi = np.zeros(m)
    for a in range(m):
        fx = 0.0
        fy = 0.0
        c = 0.0
        x0 = xs[a, 0]
        x1 = xs[a, 1]
        for i in range(n):
            dx = x0 - pts[i, 0]
            dy = x1 - pts[i, 1]
            r2 = dx * dx + dy * dy
            e = eta[i]
            if r2 >= e * e and r2 > 0.0:
                fx -= dx / r2
                fy -= dy / r2
            if r2 < (PATCH_OUTER * e) ** 2:
                c += patch_weight(math.sqrt(r2), e)
        out[a, 0] = fx
        out[a, 1] = fy
        chi[a] = c
    return out, chi


@njit(cache=True)
def pair_log_sum(pts):
    """``sum_{i<j} -log|x_i - x_j|``."""
    n = pts.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            s -= 0.5 * math.log(dx * dx + dy * dy)
    return s


@njit(cache=True)
def per_point_log_sums(pts):
    """``c_i = sum_{j != i} -log|x_i - x_j|`` for every point."""
    n = pts.shape[0]
    c = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            v = -0.5 * math.log(dx * dx + dy * dy)
            c[i] += v
            c[j] += v
    return c


@njit(cache=True)
def cross_log_sum(a, b):
    """``sum_{x in a, y in b} -log|x - y|``."""
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            s -= 0.5 * math.log(dx * dx + dy * dy)
    return s


@njit(cache=True)
def moved_pair_delta(old, new, moved):
    """Change of ``sum_{i<j} -log|x_i - x_j|`` when the flagged points move.

    Pairs with both points fixed are skipped, and every other pair enters
    through ``log(|old| / |new|)`` so that large energies never get
    subtracted from each other.
    """
    n = old.shape[0]
    s = 0.0
    for i in range(n):
        if not moved[i]:
            continue
        for j in range(n):
            if j == i or (moved[j] and j < i):
                continue
            dxo = old[i, 0] - old[j, 0]
            dyo = old[i, 1] - old[j, 1]
            dxn = new[i, 0] - new[j, 0]
            dyn = new[i, 1] - new[j, 1]
            s += 0.5 * math.log((dxo * dxo + dyo * dyo) / (dxn * dxn + dyn * dyn))
    return s
