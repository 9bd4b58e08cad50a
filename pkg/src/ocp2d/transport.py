"""
Radial transport of the background and diagnostics of external potentials.

For a C^2 radial test function ``phi`` with compactly supported gradient,
the perturbed background

    m_s = m_0 - (s / (2 pi beta)) Laplacian(phi)

has the same total mass as ``m_0``. Its radial distribution function

    F_s(r) = pi r^2 - (s / beta) int_0^r Laplacian(phi)(rho) rho d rho
           = pi r^2 - (s / beta) r phi'(r)

is strictly increasing when ``|s| <= pi beta / (4 |phi|_2)``, and the
monotone rearrangement ``Phi_s(r) = F_s^{-1}(pi r^2)`` pushes ``m_0``
forward to ``m_s``. The logarithmic potential of ``m_s`` is
``h^{m_0} + (s / beta) phi``, which gives the energy change of a
configuration transported together with its background in closed form.

The module also evaluates the numerical quantities that make an external
potential "good" on a disk, and builds the parametric equilibrium measures
(uniform bulk, depleted edge band, charge on the boundary circle) used as
backgrounds for subsystems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .background import ArcComponent, BackgroundMeasure
from .energy import (
    PointConfiguration,
    electric_energy,
    energy_difference,
    nn_truncation,
    v_ext,
    v_ext_gradient,
)
from .geometry import Annulus, Disk, ParameterError

__all__ = [
    "MonotonicityError",
    "RadialTestFunction",
    "PerturbedMeasureParams",
    "perturbed_density",
    "radial_cdf",
    "monotone_rearrangement",
    "transport_map",
    "psi_s_norm",
    "psi_s_norm_fd",
    "mass_residual",
    "perturbed_background",
    "KSResult",
    "pushforward_check",
    "transport_energy_delta",
    "energy_delta_slope",
    "transport_energy_ratio",
    "chi_uv",
    "regularized_potential",
    "GoodPotentialReport",
    "good_potential_diagnostics",
    "mu_w_background",
]


class MonotonicityError(ValueError):
    """The perturbed density is not positive, so ``F_s`` is not invertible."""


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


def _quintic(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t * t), 30 * t * t * (1 - t) ** 2, 60 * t * (1 - t) * (1 - 2 * t)


@dataclass
class RadialTestFunction:
    """C^2 radial function with compactly supported gradient.

    Parameters
    ----------
    profile, d1, d2 : callables
        ``phi(r)`` and its first two radial derivatives.
    r_lo, r_hi : float
        ``phi' = 0`` outside ``[r_lo, r_hi]``.
    center : point
    """

    profile: Callable
    d1: Callable
    d2: Callable
    r_lo: float
    r_hi: float
    center: tuple = (0.0, 0.0)

    @classmethod
    def plateau(cls, a: float, b: float, height: float = 1.0, center=(0.0, 0.0)) -> "RadialTestFunction":
        """``height`` on ``r <= a``, 0 on ``r >= b``, quintic smoothstep between."""
        if not 0 <= a < b:
            raise ParameterError("need 0 <= a < b")
        w = b - a

        def f(r):
            return height * (1.0 - _quintic((np.asarray(r, dtype=float) - a) / w)[0])

        def f1(r):
            return -height * _quintic((np.asarray(r, dtype=float) - a) / w)[1] / w

        def f2(r):
            return -height * _quintic((np.asarray(r, dtype=float) - a) / w)[2] / w**2

        return cls(f, f1, f2, a, b, tuple(center))

    @classmethod
    def gaussian(cls, width: float, height: float = 1.0, cutoff: float = 10.0) -> "RadialTestFunction":
        """``height exp(-r^2 / (2 width^2))``, treated as flat beyond ``cutoff`` widths."""

        def f(r):
            return height * np.exp(-0.5 * (np.asarray(r, dtype=float) / width) ** 2)

        def f1(r):
            r = np.asarray(r, dtype=float)
            return -r / width**2 * f(r)

        def f2(r):
            r = np.asarray(r, dtype=float)
            return (r * r / width**4 - 1 / width**2) * f(r)

        return cls(f, f1, f2, 0.0, cutoff * width)

    def laplacian(self, r):
        """``phi'' + phi'/r``; at ``r = 0`` this is ``2 phi''(0)``."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.d2(r) + self.d1(r) / safe, 2.0 * self.d2(r))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.profile(np.hypot(*(x - np.asarray(self.center)).T))

    def _grid(self, n=4001):
        return np.linspace(self.r_lo, self.r_hi, n)

    @property
    def second_derivative_bound(self) -> float:
        """``|phi|_2 = sup |D^2 phi|``; the Hessian eigenvalues are ``phi''`` and ``phi'/r``."""
        r = self._grid()
        safe = np.where(r > 0, r, 1.0)
        ang = np.where(r > 0, np.abs(self.d1(r)) / safe, np.abs(self.d2(r)))
        return float(max(np.max(np.abs(self.d2(r))), np.max(ang)))

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.d1(self._grid()))))

    def laplacian_mass(self) -> float:
        """``int Laplacian(phi) 2 pi r dr``, zero for compactly supported gradients."""
        val, _ = integrate.quad(lambda r: float(self.laplacian(r)) * 2 * math.pi * r, self.r_lo, self.r_hi, epsabs=1e-11, epsrel=0.0, limit=200)
        return val

    def dirichlet(self) -> float:
        """``int |grad phi|^2``."""
        val, _ = integrate.quad(lambda r: float(self.d1(r)) ** 2 * 2 * math.pi * r, self.r_lo, self.r_hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val

    def integral(self, density: float = 1.0, r_max: float | None = None) -> float:
        """``int_{D(center, r_max)} phi`` against a uniform density."""
        r_max = self.r_hi if r_max is None else r_max
        pts = sorted({0.0, min(self.r_lo, r_max), min(self.r_hi, r_max), r_max})
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi > lo:
                total += integrate.quad(lambda r: float(self.profile(r)) * 2 * math.pi * r, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        return density * total

    def annulus(self) -> Annulus:
        return Annulus(tuple(self.center), self.r_lo, self.r_hi)


@dataclass(frozen=True)
class PerturbedMeasureParams:
    """``s``, ``beta`` and the test function; ``|s|`` is capped."""

    s: float
    beta: float
    phi: RadialTestFunction

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if abs(self.s) > self.s_cap * (1 + 1e-12):
            raise ParameterError(f"|s| = {abs(self.s)} exceeds the cap {self.s_cap}")

    @property
    def s_cap(self) -> float:
        """``pi beta / (4 |phi|_2)``."""
        return math.pi * self.beta / (4.0 * self.phi.second_derivative_bound)


def perturbed_density(params: PerturbedMeasureParams, r) -> np.ndarray:
    """Density of ``m_s`` at radius ``r``: ``1 - (s / (2 pi beta)) Laplacian(phi)``."""
    return 1.0 - params.s / (2 * math.pi * params.beta) * params.phi.laplacian(r)


def _cdf_exact(params, r):
    r = np.asarray(r, dtype=float)
    return math.pi * r * r - params.s / params.beta * r * params.phi.d1(r)


def radial_cdf(params: PerturbedMeasureParams, r, method: str = "quad") -> np.ndarray:
    """Mass of ``m_s`` in ``D(center, r)``.

    ``method="quad"`` integrates the Laplacian with adaptive quadrature
    (absolute and relative tolerance 1e-10); ``"exact"`` uses the identity
    ``int_0^r Laplacian(phi) rho d rho = r phi'(r)``.
    """
    if method == "exact":
        return _cdf_exact(params, r)
    if method != "quad":
        raise ParameterError("method must be 'quad' or 'exact'")
    phi = params.phi
    rs = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty(len(rs))
    for i, ri in enumerate(rs):
        if ri < 0:
            raise ParameterError("r must be nonnegative")
        hi = min(ri, phi.r_hi)
        lo = phi.r_lo
        lap = 0.0
        if hi > lo:
            lap = integrate.quad(lambda p: float(phi.laplacian(p)) * p, lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200)[0]
        out[i] = math.pi * ri * ri - params.s / params.beta * lap
    return out if np.ndim(r) else float(out[0])


def _guard_monotone(params):
    r = params.phi._grid(2001)
    dens = perturbed_density(params, r)
    if np.min(dens) <= 0:
        raise MonotonicityError("the perturbed density is not positive; F_s is not increasing")


def monotone_rearrangement(params: PerturbedMeasureParams, r, rtol: float = 1e-12) -> np.ndarray:
    """``Phi_s(r) = F_s^{-1}(pi r^2)``.

    Bisection on the bracket ``[0, r_hi + 1]`` followed by Newton steps,
    vectorised over ``r``; the positivity of the density is checked first.
    """
    _guard_monotone(params)
    r = np.asarray(r, dtype=float)
    flat = np.atleast_1d(r).ravel()
    target = math.pi * flat * flat
    out = flat.copy()
    phi = params.phi
    idx = np.nonzero((flat > phi.r_lo) & (flat < phi.r_hi))[0]
    if len(idx):
        t = target[idx]
        lo = np.zeros(len(idx))
        hi = np.full(len(idx), phi.r_hi + 1.0)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = _cdf_exact(params, mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = 0.5 * (lo + hi)
        for _ in range(4):
            f = _cdf_exact(params, x) - t
            df = 2 * math.pi * x * perturbed_density(params, x)
            step = f / df
            x = np.clip(x - step, lo - (hi - lo), hi + (hi - lo))
            if np.all(np.abs(step) <= rtol * np.maximum(x, 1e-300)):
                break
        out[idx] = x
    return out.reshape(r.shape) if r.ndim else float(out[0])


def transport_map(params: PerturbedMeasureParams, x) -> np.ndarray:
    """``Phi_s(|x|) x / |x|`` about the test function centre; the centre is fixed."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(params.phi.center, dtype=float)
    v = np.atleast_2d(x - c)
    r = np.hypot(v[:, 0], v[:, 1])
    R = monotone_rearrangement(params, r)
    scale = np.where(r > 0, R / np.where(r > 0, r, 1.0), 1.0)
    out = c + v * scale[:, None]
    return out if x.ndim > 1 else out[0]


def psi_s_norm(params: PerturbedMeasureParams, n: int = 4001) -> float:
    """``|psi_s|_1 = sup |D(Phi_s - Id)|`` on a radial grid.

    The Jacobian of the radial map has eigenvalues ``Phi_s'`` and
    ``Phi_s / r``, with ``Phi_s'(r) = r / (Phi_s rho_s(Phi_s))``.
    """
    phi = params.phi
    r = np.linspace(phi.r_lo, phi.r_hi, n)
    r = r[r > 0]
    R = monotone_rearrangement(params, r)
    d = r / (R * perturbed_density(params, R))
    return float(max(np.max(np.abs(d - 1)), np.max(np.abs(R / r - 1))))


def psi_s_norm_fd(params: PerturbedMeasureParams, n: int = 801, h: float = 1e-5) -> float:
    """Same quantity as :func:`psi_s_norm` from central differences of ``Phi_s``."""
    phi = params.phi
    r = np.linspace(phi.r_lo, phi.r_hi, n)
    r = r[r > 2 * h]
    d = (monotone_rearrangement(params, r + h) - monotone_rearrangement(params, r - h)) / (2 * h)
    R = monotone_rearrangement(params, r)
    return float(max(np.max(np.abs(d - 1)), np.max(np.abs(R / r - 1))))


def mass_residual(params: PerturbedMeasureParams) -> float:
    """``|m_s(R^2) - m_0(R^2)|`` by adaptive quadrature."""
    lap = integrate.quad(lambda p: float(params.phi.laplacian(p)) * p, params.phi.r_lo, params.phi.r_hi, epsabs=1e-12, epsrel=0.0, limit=200)[0]
    return abs(params.s / params.beta * lap)


def perturbed_background(params: PerturbedMeasureParams, N: float) -> BackgroundMeasure:
    """``m_s`` on the disk of area ``N`` as a radial-profile background."""
    R = math.sqrt(N / math.pi)
    if params.phi.r_hi > R:
        raise ParameterError("the test function must be supported inside the disk")
    return BackgroundMeasure(
        1.0,
        Disk(params.phi.center, R),
        radial_profile=lambda r: perturbed_density(params, r),
        profile_breakpoints=(params.phi.r_lo, params.phi.r_hi),
    )


@dataclass
class KSResult:
    statistic: float
    pvalue: float
    threshold: float
    n: int

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold


def pushforward_check(params: PerturbedMeasureParams, n_samples: int = 100_000, seed: int = 0, level: float = 0.01, r_max: float | None = None) -> KSResult:
    """Kolmogorov-Smirnov test that ``Phi_s`` pushes ``m_0`` to ``m_s``.

    Uniform points in ``D(center, r_max)`` (default ``r_hi + 1``) are
    transported and their radii compared with ``F_s(r) / (pi r_max^2)``.
    """
    if n_samples < 10_000:
        raise ParameterError("need at least 10^4 samples")
    from .sampler import make_rng

    rng = make_rng(seed)
    R0 = params.phi.r_hi + 1.0 if r_max is None else r_max
    rad = R0 * np.sqrt(rng.random(n_samples))
    th = 2 * math.pi * rng.random(n_samples)
    c = np.asarray(params.phi.center, dtype=float)
    pts = c + np.stack([rad * np.cos(th), rad * np.sin(th)], 1)
    y = transport_map(params, pts)
    ry = np.hypot(*(y - c).T)
    res = stats.kstest(ry, lambda r: _cdf_exact(params, np.minimum(r, R0)) / (math.pi * R0 * R0))
    thr = float(stats.kstwo(n_samples).ppf(1 - level))
    return KSResult(float(res.statistic), float(res.pvalue), thr, n_samples)


def transport_energy_delta(config: PointConfiguration, params: PerturbedMeasureParams, bg0: BackgroundMeasure) -> float:
    """``F(Phi_s X, m_s) - F(X, m_0)``.

    With ``h^{m_s} = h^{m_0} + (s / beta) phi`` the difference is the
    transport at fixed background plus
    ``-(s/beta) sum phi(Phi_s x_i) + (s/beta) int phi dm_0
    + (s^2 / (4 pi beta^2)) int |grad phi|^2``. ``bg0`` must be uniform
    on a disk containing the support of ``phi``.
    """
    s, beta, phi = params.s, params.beta, params.phi
    if s == 0:
        return 0.0
    if not (bg0.is_uniform and isinstance(bg0.region, Disk)):
        raise ParameterError("m_0 must be a uniform disk")
    pts = config.points
    y = transport_map(params, pts) if len(pts) else pts
    delta = energy_difference(pts, y, bg0) if len(pts) else 0.0
    if len(pts):
        delta -= s / beta * float(np.sum(phi(y)))
    delta += s / beta * phi.integral(bg0.base_density, bg0.region.radius)
    delta += s * s / (4 * math.pi * beta * beta) * phi.dirichlet()
    return delta


def energy_delta_slope(config: PointConfiguration, phi: RadialTestFunction, beta: float, bg0: BackgroundMeasure, h: float | None = None) -> float:
    """Derivative in ``s`` at 0 of :func:`transport_energy_delta` (three-point stencil)."""
    cap = math.pi * beta / (4 * phi.second_derivative_bound)
    h = 1e-3 * cap if h is None else h
    plus = transport_energy_delta(config, PerturbedMeasureParams(h, beta, phi), bg0)
    minus = transport_energy_delta(config, PerturbedMeasureParams(-h, beta, phi), bg0)
    return (plus - minus) / (2 * h)


def transport_energy_ratio(config: PointConfiguration, params: PerturbedMeasureParams, bg0: BackgroundMeasure, grid_h: float = 0.1) -> float:
    """``|Delta| / (s |phi|_2 (Ener + Pts)(A))`` with ``A`` the gradient annulus."""
    d = transport_energy_delta(config, params, bg0)
    A = params.phi.annulus()
    ener = electric_energy(config, bg0, nn_truncation(config), A, grid_h=grid_h)
    n_in = config.count(A) if len(config) else 0
    denom = abs(params.s) * params.phi.second_derivative_bound * (ener + n_in)
    return abs(d) / denom if denom > 0 else math.inf


# ---------------------------------------------------------------------------
# good external potentials
# ---------------------------------------------------------------------------


def chi_uv(rho):
    """Radial cut-off: 0 for ``rho <= 1/4``, 1 for ``rho >= 1``, cubic smoothstep between."""
    t = np.clip((np.asarray(rho, dtype=float) - 0.25) / 0.75, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def regularized_potential(ext_config: PointConfiguration, ext_bg: BackgroundMeasure, Lambda: Disk, x, n_theta: int = 96, n_rho: int = 24) -> np.ndarray:
    """External potential with the short-distance part removed.

    ``V~(x) = V(x) - int_{|x - y| < 1, y outside Lambda} -log|x - y|
    (1 - chi_uv(x - y)) d(X - m)(y)``, which coincides with ``V`` at
    distance at least 1 from the boundary of ``Lambda``.
    """
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    V = np.atleast_1d(v_ext(ext_config, ext_bg, [Lambda], xs))
    ext = ext_config.points
    if len(ext):
        ext = ext[~Lambda.contains(ext)]
    u, w = np.polynomial.legendre.leggauss(n_rho)
    th = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], 1)
    c = np.asarray(Lambda.center, dtype=float)
    out = V.copy()
    for i, p in enumerate(xs):
        corr = 0.0
        if len(ext):
            d = np.hypot(*(ext - p).T)
            near = d < 1.0
            if near.any():
                corr += float(np.sum(-np.log(d[near]) * (1 - chi_uv(d[near]))))
        if Lambda.radius - np.hypot(*(p - c)) < 1.0:
            # background outside Lambda within distance 1: rays from p
            dv = p - c
            b = e @ dv
            exit_ = -b + np.sqrt(np.maximum(b * b - (dv @ dv - Lambda.radius**2), 0.0))
            lo = np.minimum(exit_, 1.0)
            rho = lo[:, None] + (1.0 - lo)[:, None] * 0.5 * (u[None, :] + 1)
            wt = (1.0 - lo)[:, None] * 0.5 * w[None, :] * (2 * math.pi / n_theta)
            nodes = p + rho[..., None] * e[:, None, :]
            dens = ext_bg.density(nodes.reshape(-1, 2)).reshape(rho.shape)
            corr -= float(np.sum(wt * rho * (-np.log(rho)) * (1 - chi_uv(rho)) * dens))
        out[i] = V[i] - corr
    return out if np.ndim(x) > 1 else float(out[0])


@dataclass
class GoodPotentialReport:
    T: float
    grad_center: float
    hessian_weighted_max: float
    edge_variation_max: float
    grad_ratio: float
    edge_ratio: float
    n_probe: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _probe_points(Lambda: Disk, n_r: int, n_theta: int):
    c = np.asarray(Lambda.center, dtype=float)
    T = Lambda.radius
    # radial levels concentrated near the edge
    depth = np.geomspace(0.05, T, n_r)
    rr = np.unique(np.concatenate([[0.0], T - depth]))
    rr = rr[rr >= 0]
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    pts = [c]
    for r in rr[rr > 0]:
        pts.append(c + r * np.stack([np.cos(th), np.sin(th)], 1))
    return np.vstack(pts)


def good_potential_diagnostics(
    ext_config: PointConfiguration,
    ext_bg: BackgroundMeasure,
    Lambda: Disk,
    n_r: int = 12,
    n_theta: int = 32,
    fd_h: float = 1e-4,
) -> GoodPotentialReport:
    """Numerical ingredients of the good-potential conditions on ``Lambda``.

    Reports ``|grad V(center)|``, ``sup |D^2 V(x)| (1 + dist(x, boundary))``
    on probe points (Hessian by central differences of the analytic
    gradient), and ``sup |V~(x) - V~(center)|``. The ratios to ``log^2 T``
    and to ``T log^3 T`` are the constants the conditions ask to be bounded.
    """
    T = Lambda.radius
    c = np.asarray(Lambda.center, dtype=float)
    g0 = np.atleast_2d(v_ext_gradient(ext_config, ext_bg, [Lambda], c[None, :]))[0]
    grad_center = float(np.hypot(*g0))
    probes = _probe_points(Lambda, n_r, n_theta)
    dist = T - np.hypot(*(probes - c).T)
    # keep the finite-difference stencil inside Lambda
    probes = probes[dist > 2 * fd_h]
    dist = dist[dist > 2 * fd_h]
    H = np.empty((len(probes), 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = fd_h
        gp = v_ext_gradient(ext_config, ext_bg, [Lambda], probes + e)
        gm = v_ext_gradient(ext_config, ext_bg, [Lambda], probes - e)
        H[:, :, k] = (gp - gm) / (2 * fd_h)
    H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
    hnorm = np.max(np.abs(np.linalg.eigvalsh(H)), axis=1)
    hess = float(np.max(hnorm * (1 + dist)))
    Vt = regularized_potential(ext_config, ext_bg, Lambda, np.vstack([c[None, :], probes]))
    var = float(np.max(np.abs(Vt[1:] - Vt[0])))
    lT = math.log(T)
    return GoodPotentialReport(T, grad_center, hess, var, grad_center / lT**2, var / (T * lT**3), len(probes))


def mu_w_background(Lambda: Disk, kappa: float, deficit: float, arc_density: Callable | float) -> BackgroundMeasure:
    """Parametric equilibrium measure of a subsystem.

    Density 1 on ``|x - center| < T - kappa`` and ``1 - deficit`` on the
    edge band of width ``kappa``, plus a charge on the circle
    ``|x - center| = T`` with the given linear density (a constant or a
    function of the angle). No obstacle problem is solved: the parameters
    are supplied by the caller.
    """
    T = Lambda.radius
    if not 0 < kappa < T:
        raise ParameterError("need 0 < kappa < T")
    if not 0 <= deficit <= 1:
        raise ParameterError("deficit must lie in [0, 1]")
    lam = arc_density if callable(arc_density) else (lambda th, a=float(arc_density): np.full_like(np.asarray(th, dtype=float), a))
    return BackgroundMeasure(
        1.0,
        Lambda,
        radial_profile=lambda r: np.where(np.asarray(r) < T - kappa, 1.0, 1.0 - deficit),
        arc_component=ArcComponent(Lambda, lam),
        profile_breakpoints=(T - kappa,),
    )
