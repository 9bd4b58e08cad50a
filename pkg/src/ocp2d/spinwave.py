"""
Localized translations generated by a divergence-free "spin wave".

For ``eps`` in (0, 1) the auxiliary function is

    f(x) = x_1                     for |x| <= 1,
           x_1 (1 - eps log|x|)    for 1 <= |x| <= exp(1/eps),
           0                       beyond.

It is smoothed in two collars, around ``|x| = 1`` (half-width
``mollify_scale_inner``) and around ``|x| = exp(1/eps)`` (half-width
``mollify_scale_outer``), by writing ``fbar(x) = x_1 gbar(|x|)`` with

    gbar(r) = (1 - eps S_1(r) log r) (1 - S_2(r)),

where ``S_1``, ``S_2`` are C-infinity steps rising across the two collars.
Outside the collars ``fbar = f`` exactly. The spin wave is the rotated
gradient ``W = (-d_2 fbar, d_1 fbar)``; it equals ``(0, 1)`` on
``|x| <= 1/2``, vanishes beyond ``2 exp(1/eps)`` and is divergence free.
All derivatives are analytic.

The rescaled field ``W_ell(x) = W(x / ell)`` generates the flow
``Phi_t``, integrated with classical RK4 and a step-doubling error
monitor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .background import BackgroundMeasure
from .energy import (
    PointConfiguration,
    SingularEnergyError,
    electric_energy,
    energy_difference,
    nn_truncation,
)
from .geometry import Disk, ParameterError

__all__ = [
    "SpinWaveParams",
    "f_eps",
    "f_bar",
    "spin_wave",
    "spin_wave_jacobian",
    "divergence",
    "radial_h1_integral",
    "h1_budget",
    "FlowTrajectory",
    "flow",
    "flow_trajectory",
    "flow_jacobian",
    "psi_gamma_decompose",
    "psi_gamma_audit",
    "err_ave",
    "anisotropy",
    "anisotropy_bound_ratio",
]

U = np.array([0.0, 1.0])


@dataclass(frozen=True)
class SpinWaveParams:
    """Parameters of the spin wave and of its rescaling.

    ``mollify_scale_outer`` defaults to ``exp(1/eps) / 2``.
    """

    epsilon: float
    ell: float = 1.0
    mollify_scale_inner: float = 0.5
    mollify_scale_outer: float | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1)")
        if not self.ell > 0:
            raise ParameterError("ell must be positive")
        if self.mollify_scale_outer is None:
            object.__setattr__(self, "mollify_scale_outer", 0.5 * self.outer_radius)
        if not 0 < self.mollify_scale_inner <= 0.5:
            raise ParameterError("mollify_scale_inner must lie in (0, 1/2]")
        if not 0 < self.mollify_scale_outer <= self.outer_radius:
            raise ParameterError("mollify_scale_outer must lie in (0, exp(1/eps)]")

    @property
    def outer_radius(self) -> float:
        """``exp(1/eps)``, where the unsmoothed function vanishes."""
        return math.exp(1.0 / self.epsilon)

    @property
    def support_radius(self) -> float:
        """Radius of the support of the rescaled field, ``2 ell exp(1/eps)``."""
        return 2.0 * self.ell * self.outer_radius

    def window_ok(self) -> bool:
        """``log ell <= 1/eps`` and ``1/eps <= ell^2 <= eps^-3``."""
        e = self.epsilon
        return math.log(self.ell) <= 1 / e and 1 / e <= self.ell**2 <= e**-3


# ---------------------------------------------------------------------------
# smooth steps
# ---------------------------------------------------------------------------


def _smooth_step(t):
    """C-infinity step ``S(t)`` from 0 (t <= 0) to 1 (t >= 1) and two derivatives."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    u = 1.0 - tc
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(tc > 0, np.exp(-1.0 / tc), 0.0)
        b = np.where(u > 0, np.exp(-1.0 / u), 0.0)
        a1 = np.where(tc > 0, a / tc**2, 0.0)
        b1 = np.where(u > 0, -b / u**2, 0.0)
        a2 = np.where(tc > 0, a * (1.0 / tc**4 - 2.0 / tc**3), 0.0)
        b2 = np.where(u > 0, b * (1.0 / u**4 - 2.0 / u**3), 0.0)
    D = a + b
    S = a / D
    Nn = a1 * b - a * b1
    S1 = Nn / D**2
    S2 = (a2 * b - a * b2) / D**2 - 2.0 * Nn * (a1 + b1) / D**3
    return S, S1, S2


def _radial_profile(p: SpinWaveParams, r):
    """``gbar(r)`` and its first two derivatives."""
    r = np.asarray(r, dtype=float)
    e = p.epsilon
    si = p.mollify_scale_inner
    so = p.mollify_scale_outer
    Re = p.outer_radius
    w1 = 2.0 * si
    w2 = 2.0 * so
    s1, s1p, s1pp = _smooth_step((r - (1.0 - si)) / w1)
    s1p, s1pp = s1p / w1, s1pp / w1**2
    s2, s2p, s2pp = _smooth_step((r - (Re - so)) / w2)
    s2p, s2pp = s2p / w2, s2pp / w2**2
    rr = np.maximum(r, 1e-300)
    lg = np.where(r > 1.0 - si, np.log(rr), 0.0)
    A = 1.0 - e * s1 * lg
    inv = np.where(r > 1.0 - si, 1.0 / rr, 0.0)
    Ap = -e * (s1p * lg + s1 * inv)
    App = -e * (s1pp * lg + 2.0 * s1p * inv - s1 * inv * inv)
    B = 1.0 - s2
    g = A * B
    gp = Ap * B - A * s2p
    gpp = App * B - 2.0 * Ap * s2p - A * s2pp
    return g, gp, gpp


def f_eps(params: SpinWaveParams, x) -> np.ndarray:
    """The unsmoothed auxiliary function (exact piecewise formula)."""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    with np.errstate(divide="ignore"):
        mid = x[..., 0] * (1.0 - params.epsilon * np.log(np.maximum(r, 1e-300)))
    out = np.where(r <= 1.0, x[..., 0], np.where(r < params.outer_radius, mid, 0.0))
    return out if out.ndim else float(out)


def f_bar(params: SpinWaveParams, x) -> np.ndarray:
    """Smoothed auxiliary function ``x_1 gbar(|x|)``."""
    x = np.asarray(x, dtype=float)
    g, _, _ = _radial_profile(params, np.hypot(x[..., 0], x[..., 1]))
    out = x[..., 0] * g
    return out if out.ndim else float(out)


def _w_parts(params, x):
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    g, gp, gpp = _radial_profile(params, r)
    small = r < 0.25
    rs = np.where(small, 1.0, r)
    q = np.where(small, 0.0, gp / rs)
    qr = np.where(small, 0.0, (gpp - q) / rs)
    return x[..., 0], x[..., 1], r, g, gp, q, qr, rs


def spin_wave(params: SpinWaveParams, x) -> np.ndarray:
    """``W(x) = rot grad fbar(x)`` at one point or an array of points."""
    x1, x2, _, g, _, q, _, _ = _w_parts(params, x)
    return np.stack([-x1 * x2 * q, g + x1 * x1 * q], axis=-1)


def spin_wave_jacobian(params: SpinWaveParams, x) -> np.ndarray:
    """Analytic ``DW(x)``, shape ``(..., 2, 2)`` with ``[i, j] = d_j W_i``."""
    x1, x2, r, g, gp, q, qr, rs = _w_parts(params, x)
    c1 = x1 / rs
    c2 = x2 / rs
    J = np.empty(np.shape(x1) + (2, 2))
    J[..., 0, 0] = -x2 * q - x1 * x2 * qr * c1
    J[..., 0, 1] = -x1 * q - x1 * x2 * qr * c2
    J[..., 1, 0] = gp * c1 + 2 * x1 * q + x1 * x1 * qr * c1
    J[..., 1, 1] = gp * c2 + x1 * x1 * qr * c2
    return J


def divergence(params: SpinWaveParams, x, h: float | None = None) -> np.ndarray:
    """Divergence of ``W`` by fourth-order central differences.

    The field is divergence free by construction; this is the numerical
    check. ``h`` defaults to ``1e-3`` of the local length scale (1 near the
    inner collar, ``exp(1/eps)`` near the outer one).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    if h is None:
        h = np.where(r < 0.5 * (1.5 + params.outer_radius - params.mollify_scale_outer), 1e-3, 1e-3 * params.mollify_scale_outer)
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(x),))[:, None]
    out = np.zeros(len(x))
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        f = lambda s: spin_wave(params, x + s * h * e)[:, k]  # noqa: E731
        out += (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h[:, 0])
    return out


# ---------------------------------------------------------------------------
# H1 budget
# ---------------------------------------------------------------------------


def _log_panels(a: float, b: float, per_decade: int = 8):
    m = max(1, int(math.ceil(per_decade * math.log10(b / a))))
    return np.geomspace(a, b, m + 1)


def radial_h1_integral(density: Callable[[np.ndarray], np.ndarray], breakpoints, n: int = 32) -> float:
    """``int density(r) 2 pi r dr`` over ``[breakpoints[0], breakpoints[-1]]``.

    Gauss-Legendre panels between consecutive breakpoints, with geometric
    sub-panels so that long ranges of ``1/r^2`` decay are resolved.
    """
    u, w = np.polynomial.legendre.leggauss(n)
    bp = np.asarray(breakpoints, dtype=float)
    total = 0.0
    for a, b in zip(bp[:-1], bp[1:]):
        if b <= a:
            continue
        edges = _log_panels(a, b) if a > 0 else np.array([a, b])
        for lo, hi in zip(edges[:-1], edges[1:]):
            r = lo + (hi - lo) * 0.5 * (u + 1)
            total += float(np.sum(0.5 * (hi - lo) * w * 2 * math.pi * r * density(r)))
    return total


@dataclass
class H1Budget:
    value: float
    epsilon: float

    @property
    def ratio(self) -> float:
        return self.value / self.epsilon


def h1_budget(params: SpinWaveParams, n_theta: int = 32) -> H1Budget:
    """``int |DW|^2`` over the plane (Frobenius norm of the Jacobian).

    The angular integral uses the trapezoid rule, exact here because the
    integrand is a trigonometric polynomial of degree at most six in the
    angle; the radial integral uses :func:`radial_h1_integral`. Where
    ``DW ~ eps / |x|`` the budget is about ``2 pi eps``.
    """
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], 1)

    def dens(r):
        pts = r[:, None, None] * e[None, :, :]
        J = spin_wave_jacobian(params, pts)
        return np.mean(np.sum(J * J, axis=(-1, -2)), axis=1)

    si, so, Re = params.mollify_scale_inner, params.mollify_scale_outer, params.outer_radius
    bps = sorted({1.0 - si, 1.0 + si, max(1.0 + si, Re - so), Re + so})
    return H1Budget(radial_h1_integral(dens, bps), params.epsilon)


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------


def _field(params: SpinWaveParams, x):
    return spin_wave(params, x / params.ell)


def _rk4(params, x, t, n):
    dt = t / n
    y = np.array(x, dtype=float, copy=True)
    for _ in range(n):
        k1 = _field(params, y)
        k2 = _field(params, y + 0.5 * dt * k1)
        k3 = _field(params, y + 0.5 * dt * k2)
        k4 = _field(params, y + dt * k3)
        y += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _check_time(params, t):
    if abs(t) > params.ell / 10 * (1 + 1e-12):
        raise ParameterError(f"|t| = {abs(t)} exceeds ell/10 = {params.ell / 10}")


def flow(params: SpinWaveParams, t: float, x, tol: float = 1e-10, max_refine: int = 6) -> np.ndarray:
    """``Phi_t(x)`` for the flow of ``W_ell``.

    RK4 with step ``ell / 2048`` (rounded so the step count is an integer).
    The result is compared with a run at half the step; while the
    step-doubling error estimate exceeds ``tol * ell`` the step is halved
    again. Returns the finer of the last two runs.
    """
    _check_time(params, t)
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    n = max(1, int(math.ceil(abs(t) / (params.ell / 2048))))
    coarse = _rk4(params, x, t, n)
    for _ in range(max_refine):
        fine = _rk4(params, x, t, 2 * n)
        err = float(np.max(np.abs(fine - coarse))) / 15.0 if fine.size else 0.0
        if err <= tol * params.ell:
            return fine
        coarse, n = fine, 2 * n
    warnings.warn(f"flow error estimate {err:.2e} above tolerance", RuntimeWarning, stacklevel=2)
    return fine


@dataclass
class FlowTrajectory:
    times: np.ndarray
    positions: np.ndarray
    jacobians: np.ndarray

    @property
    def det_error(self) -> float:
        return float(np.max(np.abs(np.linalg.det(self.jacobians) - 1.0)))


def flow_trajectory(params: SpinWaveParams, t: float, x, n_record: int = 16, h: float | None = None) -> FlowTrajectory:
    """Positions and finite-difference Jacobians of ``Phi_s(x)`` for ``s`` in ``[0, t]``.

    Four shifted copies of ``x`` are carried along to form central
    differences with spacing ``h`` (default ``1e-5 ell``).
    """
    _check_time(params, t)
    x = np.asarray(x, dtype=float).reshape(2)
    h = 1e-5 * params.ell if h is None else h
    stencil = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
    n = max(n_record, int(math.ceil(abs(t) / (params.ell / 2048))))
    n = int(math.ceil(n / n_record) * n_record)
    per = n // n_record
    times = [0.0]
    pos = [x.copy()]
    jac = [np.eye(2)]
    y = stencil
    for k in range(n_record):
        y = _rk4(params, y, t / n_record, per)
        times.append(t * (k + 1) / n_record)
        pos.append(y[0].copy())
        J = np.column_stack([(y[1] - y[2]) / (2 * h), (y[3] - y[4]) / (2 * h)])
        jac.append(J)
    return FlowTrajectory(np.array(times), np.array(pos), np.array(jac))


def flow_jacobian(params: SpinWaveParams, t: float, x, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``Phi_t`` at each point, shape ``(m, 2, 2)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = 1e-5 * params.ell if h is None else h
    shifts = np.array([[h, 0], [-h, 0], [0, h], [0, -h]])
    y = flow(params, t, (x[:, None, :] + shifts[None]).reshape(-1, 2)).reshape(len(x), 4, 2)
    J = np.empty((len(x), 2, 2))
    J[:, :, 0] = (y[:, 0] - y[:, 1]) / (2 * h)
    J[:, :, 1] = (y[:, 2] - y[:, 3]) / (2 * h)
    return J


def psi_gamma_decompose(params: SpinWaveParams, t: float, x):
    """``psi_t = Phi_t - Id`` and ``gamma_t = psi_t - t W_ell``."""
    x = np.asarray(x, dtype=float)
    psi = flow(params, t, x) - x
    gamma = psi - t * _field(params, x)
    return psi, gamma


@dataclass
class PsiGammaAudit:
    psi_max_over_t: float
    psi_violations: int
    gamma_inner_max: float
    gamma_constant: float
    n_points: int


def psi_gamma_audit(params: SpinWaveParams, t: float, x) -> PsiGammaAudit:
    """Check ``|psi_t| <= 2|t|`` and ``gamma_t = 0`` on ``|x| <= ell/4``.

    ``gamma_constant`` is the smallest ``C`` with
    ``|gamma_t(x)| <= C t^2 eps / |x|`` on the sampled points outside
    ``ell/4``; it is a fitted value, not a certified one.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    psi, gamma = psi_gamma_decompose(params, t, x)
    pn = np.hypot(psi[:, 0], psi[:, 1])
    gn = np.hypot(gamma[:, 0], gamma[:, 1])
    r = np.hypot(x[:, 0], x[:, 1])
    inner = r <= params.ell / 4
    outer = ~inner
    C = float(np.max(gn[outer] * r[outer] / (t * t * params.epsilon))) if outer.any() and t != 0 else 0.0
    return PsiGammaAudit(
        float(np.max(pn) / abs(t)) if t != 0 else 0.0,
        int(np.sum(pn > 2 * abs(t) * (1 + 1e-12))),
        float(np.max(gn[inner])) if inner.any() else 0.0,
        C,
        len(x),
    )


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------


def _transport(params, t, pts):
    out = flow(params, t, pts)
    if len(out) > 1 and np.min(cKDTree(out).query(out, k=2)[0][:, 1]) <= 0:
        raise SingularEnergyError("transported points collide")
    return out


def err_ave(params: SpinWaveParams, t: float, config: PointConfiguration, bg: BackgroundMeasure) -> float:
    """Averaging error ``F(X) - (F(Phi_t X) + F(Phi_-t X)) / 2``.

    Computed from the two energy differences, so the large common part of
    the energies never enters.
    """
    pts = config.points
    if t == 0 or len(pts) == 0:
        return 0.0
    plus = _transport(params, t, pts)
    minus = _transport(params, -t, pts)
    return -0.5 * (energy_difference(pts, plus, bg) + energy_difference(pts, minus, bg))


def _chord(p, e, center, R):
    """Parameter interval of the ray ``p + rho e`` (rho >= 0) inside a disk."""
    d = p - np.asarray(center, dtype=float)
    b = e @ d
    disc = b * b - (d @ d - R * R)
    s = np.sqrt(np.maximum(disc, 0.0))
    lo = np.maximum(-b - s, 0.0)
    hi = np.where(disc > 0, -b + s, 0.0)
    return lo, np.maximum(hi, lo)


def _ray_rule(p, disks, n_theta, n_rho):
    """Nodes on rays from ``p`` through the intersection of ``disks``.

    Returns nodes, weights for ``d rho d theta`` and the unit directions.
    """
    th = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], 1)
    lo = np.zeros(n_theta)
    hi = np.full(n_theta, np.inf)
    for c, R in disks:
        a, b = _chord(p, e, c, R)
        lo = np.maximum(lo, a)
        hi = np.minimum(hi, b)
    hi = np.maximum(hi, lo)
    u, w = np.polynomial.legendre.leggauss(n_rho)
    rho = lo[:, None] + (hi - lo)[:, None] * 0.5 * (u[None, :] + 1)
    wt = (hi - lo)[:, None] * 0.5 * w[None, :] * (2 * math.pi / n_theta)
    nodes = p[None, None, :] + rho[:, :, None] * e[:, None, :]
    dirs = np.broadcast_to(e[:, None, :], nodes.shape)
    return nodes.reshape(-1, 2), wt.ravel(), dirs.reshape(-1, 2), rho.ravel()


def _mass_disks(bg: BackgroundMeasure, support: Disk):
    disks = [(np.asarray(support.center, dtype=float), support.radius)]
    reg = bg.region
    if isinstance(reg, Disk) and bg.radial_profile is None and bg.hole is None:
        disks.append((np.asarray(reg.center, dtype=float), reg.radius))
    return disks


def anisotropy(
    config: PointConfiguration,
    bg: BackgroundMeasure,
    psi: Callable[[np.ndarray], np.ndarray],
    support: Disk,
    div_psi: Callable[[np.ndarray], np.ndarray] | None = None,
    n_theta: int = 128,
    n_rho: int = 24,
) -> tuple[float, float]:
    """Anisotropy functional ``A_1`` and its corrected form ``Ani``.

    ``A_1`` is the double integral of ``psi(x) . grad_x log|x - y|`` against
    ``(X - m)`` in both variables, off the diagonal. Point-point terms are
    summed exactly. Each point-background term is integrated in polar
    coordinates around the point, where the kernel singularity cancels
    with the area element, and the background-background term on a polar
    rule around the centre of ``support``. ``psi`` must vanish outside
    ``support``. ``Ani = A_1 - (1/4) sum_i div psi(x_i)``; ``div_psi``
    defaults to fourth-order central differences.
    """
    arc = getattr(bg, "arc_component", None)
    if arc is not None:
        c = np.asarray(arc.circle.center, dtype=float)
        dc = np.hypot(*(c - np.asarray(support.center, dtype=float)))
        if abs(dc - arc.circle.radius) < support.radius or dc + arc.circle.radius < support.radius:
            raise ParameterError("the support of psi meets the singular arc of the background")
    pts = config.points
    disks = _mass_disks(bg, support)
    A1 = 0.0
    if len(pts):
        inside = support.contains(pts)
        P = pts[inside]
        if len(P):
            v = P[:, None, :] - pts[None, :, :]
            d2 = np.sum(v * v, axis=-1)
            d2[d2 == 0] = np.inf
            G = np.sum(v / d2[..., None], axis=1)
            A1 += float(np.sum(psi(P) * (G + bg.gradient(P))))
        # point-background cross terms
        for p in pts:
            nodes, wt, dirs, _ = _ray_rule(p, disks, n_theta, n_rho)
            if not np.any(wt > 0):
                continue
            A1 -= float(np.sum(wt * bg.density(nodes) * np.einsum("ij,ij->i", psi(nodes), dirs)))
    # background-background term
    c = np.asarray(support.center, dtype=float)
    nodes, wt, _, rho = _ray_rule(c, disks, n_theta, 2 * n_rho)
    A1 -= float(np.sum(wt * rho * bg.density(nodes) * np.einsum("ij,ij->i", psi(nodes), bg.gradient(nodes))))
    if len(pts):
        if div_psi is None:
            h = 1e-4 * support.radius
            dv = np.zeros(len(pts))
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                f = lambda s: psi(pts + s * e)[:, k]  # noqa: E731
                dv += (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h)
        else:
            dv = np.asarray(div_psi(pts), dtype=float)
        ani = A1 - 0.25 * float(np.sum(dv))
    else:
        ani = A1
    return A1, ani


def anisotropy_bound_ratio(
    config: PointConfiguration,
    bg: BackgroundMeasure,
    psi: Callable,
    support: Disk,
    lip: float,
    grid_h: float = 0.1,
) -> float:
    """``|A_1| / (|psi|_1 (Ener + Pts)(support))``, the constant of the bound.

    ``lip`` is the Lipschitz constant of ``psi``; ``Ener`` uses the
    nearest-neighbour truncation.
    """
    a1, _ = anisotropy(config, bg, psi, support)
    ener = electric_energy(config, bg, nn_truncation(config), support, grid_h=grid_h)
    n_in = config.count(support) if len(config) else 0
    denom = lip * (ener + n_in)
    return abs(a1) / denom if denom > 0 else math.inf
