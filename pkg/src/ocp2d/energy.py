"""
Energies of point configurations against a neutralising background, and
the electric-field machinery around them.

The basic object is the interaction energy

    F(X, m) = 1/2 iint_{x != y} -log|x - y| d(X - m)(x) d(X - m)(y),

split into a pair sum, a point/background term and a background self
energy. On top of it the module provides:

* truncated (smeared) electric fields and the grid quadrature of their
  squared norm over a region,
* a checker for the identity expressing ``F`` through the electric energy of
  smeared charges,
* the external potential felt by points inside holes of a configuration, and
  the interaction of well separated subsystems,
* linear statistics (fluctuations) of test functions.

All quantities use natural logarithms and blown-up units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .background import BackgroundMeasure, uniform_disk_gradient, uniform_disk_potential
from .geometry import Disk, DomainRegion, GeometryError, ParameterError, WellSeparatedFamily

__all__ = [
    "SingularEnergyError",
    "DivergentIntegralError",
    "NeutralityError",
    "PointConfiguration",
    "TruncationVector",
    "EnergyBreakdown",
    "nn_truncation",
    "disk_background_potential",
    "interaction_energy",
    "energy_difference",
    "truncated_field",
    "electric_energy",
    "IdentityCheck",
    "energy_identity_check",
    "smearing_correction",
    "EnerSCorrection",
    "ener_s_correction",
    "multipole_coefficients",
    "v_ext",
    "v_ext_gradient",
    "SubsystemInteraction",
    "subsystem_interaction",
    "fluctuation",
]

TWO_PI = 2.0 * math.pi


class SingularEnergyError(ValueError):
    """Two charges coincide, or a point sits on a charged circle."""


class DivergentIntegralError(ValueError):
    """An electric energy integral diverges (untruncated point in the region)."""


class NeutralityError(ValueError):
    """The configuration and the background carry different total charge."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


class PointConfiguration:
    """Finite set of distinct points in the plane, with an ambient domain.

    Parameters
    ----------
    points : array_like, shape (n, 2)
    domain : DomainRegion, optional
        Every point must lie in the (closed) domain.
    check : bool
        Validate containment and distinctness. Samplers that already
        guarantee both pass ``False``.
    """

    def __init__(self, points, domain: DomainRegion | None = None, check: bool = True, tol: float = 1e-9):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        self.points = np.ascontiguousarray(pts)
        self.points.setflags(write=False)
        self.domain = domain
        if check:
            if domain is not None and len(pts) and not np.all(domain.contains(pts, tol=tol)):
                raise ParameterError("some points lie outside the domain")
            if len(pts) > 1:
                d, _ = cKDTree(pts).query(pts, k=2)
                if np.any(d[:, 1] <= 0.0):
                    raise SingularEnergyError("configuration contains coincident points")

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"PointConfiguration(n={len(self)}, domain={self.domain!r})"

    def count(self, region: DomainRegion) -> int:
        return region.count(self.points)

    def restrict(self, region: DomainRegion) -> "PointConfiguration":
        if len(self) == 0:
            return PointConfiguration(self.points, region, check=False)
        return PointConfiguration(self.points[region.contains(self.points)], region, check=False)

    def translate(self, v) -> "PointConfiguration":
        dom = None if self.domain is None else self.domain.translate(v)
        return PointConfiguration(self.points + np.asarray(v, dtype=float), dom, check=False)


class TruncationVector(np.ndarray):
    """Per-point smearing radii (a float array with a descriptive type)."""

    def __new__(cls, radii):
        arr = np.asarray(radii, dtype=float).reshape(-1).view(cls)
        if np.any(arr < 0):
            raise ParameterError("truncation radii must be nonnegative")
        return arr


@dataclass(frozen=True)
class EnergyBreakdown:
    pair_sum: float
    point_background: float
    background_self: float

    @property
    def total(self) -> float:
        return self.pair_sum + self.point_background + self.background_self


# ---------------------------------------------------------------------------
# basic energies
# ---------------------------------------------------------------------------


def nn_truncation(config: PointConfiguration, s: float = 1.0) -> TruncationVector:
    """Nearest-neighbour truncation ``s * min(d_nn, 1) / 4``.

    For a single point the nearest-neighbour distance is taken to be 1.
    """
    if not (0 < s <= 1):
        raise ParameterError("s must lie in (0, 1]")
    pts = config.points
    n = len(pts)
    if n == 0:
        return TruncationVector([])
    if n == 1:
        return TruncationVector([0.25 * s])
    d, _ = cKDTree(pts).query(pts, k=2)
    return TruncationVector(0.25 * s * np.minimum(d[:, 1], 1.0))


def disk_background_potential(R: float, x) -> np.ndarray:
    """``int_{D(0, R)} -log|x - y| dy`` for one or several points ``x``."""
    if not R > 0:
        raise ParameterError("R must be positive")
    p = np.asarray(x, dtype=float).reshape(-1, 2)
    out = uniform_disk_potential(R, np.hypot(p[:, 0], p[:, 1]))
    return out if np.ndim(x) > 1 else float(out[0])


def _check_arc_contact(config, bg):
    if bg.arc_component is not None and len(config):
        if np.any(bg.arc_distance(config.points) <= 1e-12 * bg.arc_component.circle.radius):
            raise SingularEnergyError("a point lies on the charged circle of the background")


def interaction_energy(config: PointConfiguration, bg: BackgroundMeasure) -> EnergyBreakdown:
    """Interaction energy of ``config`` with the background ``bg``.

    Examples
    --------
    >>> from ocp2d.geometry import Disk
    >>> bg = BackgroundMeasure(0.0, Disk((0, 0), 1.0))
    >>> round(interaction_energy(PointConfiguration([[0, 0], [2, 0]]), bg).pair_sum, 6)
    -0.693147
    """
    pts = config.points
    if len(pts) > 1 and np.min(cKDTree(pts).query(pts, k=2)[0][:, 1]) <= 0:
        raise SingularEnergyError("coincident points")
    _check_arc_contact(config, bg)
    pair = float(K.pair_log_sum(pts)) if len(pts) > 1 else 0.0
    pb = -float(np.sum(bg.potential(pts))) if len(pts) else 0.0
    return EnergyBreakdown(pair, pb, bg.self_energy())


def energy_difference(old, new, bg: BackgroundMeasure, bg_new: BackgroundMeasure | None = None) -> float:
    """``F(new, bg_new) - F(old, bg)`` for two labelled configurations.

    Only points whose position changed contribute pair terms, and each
    pair enters as a log ratio, which keeps the result accurate when the
    energies themselves are large.
    """
    a = np.ascontiguousarray(getattr(old, "points", old), dtype=float)
    b = np.ascontiguousarray(getattr(new, "points", new), dtype=float)
    if a.shape != b.shape:
        raise ParameterError("configurations must have the same labelled points")
    moved = np.any(a != b, axis=1)
    bg_new = bg if bg_new is None else bg_new
    delta = float(K.moved_pair_delta(a, b, moved)) if moved.any() else 0.0
    if bg_new is bg:
        if moved.any():
            delta += float(np.sum(bg.potential(a[moved]) - bg.potential(b[moved])))
    else:
        delta += float(np.sum(bg.potential(a)) - np.sum(bg_new.potential(b)))
        delta += bg_new.self_energy() - bg.self_energy()
    return delta


# ---------------------------------------------------------------------------
# truncated fields and electric energy
# ---------------------------------------------------------------------------


def truncated_field(config: PointConfiguration, bg: BackgroundMeasure, trunc, x) -> np.ndarray:
    """Gradient of the truncated potential ``h_eta`` at the points ``x``.

    Each charge is replaced by a unit charge spread on the circle of radius
    ``eta`` around it, whose field vanishes inside the circle.
    """
    xs = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
    eta = np.ascontiguousarray(np.asarray(trunc, dtype=float))
    out = K.point_field(xs, config.points, eta) - bg.gradient(xs)
    return out if np.ndim(x) > 1 else out[0]


def _field_chunks(xs, pts, eta, bg, want_chi=False, chunk=20000):
    E = np.empty((len(xs), 2))
    chi = np.empty(len(xs)) if want_chi else None
    for s in range(0, len(xs), chunk):
        sl = slice(s, s + chunk)
        block = np.ascontiguousarray(xs[sl])
        if want_chi:
            f, c = K.point_field_and_patch(block, pts, eta)
            chi[sl] = c
        else:
            f = K.point_field(block, pts, eta)
        E[sl] = f - bg.gradient(block)
    return E, chi


_PATCH_PANELS = ((0.0, 1.0, 12), (1.0, K.PATCH_INNER, 8), (K.PATCH_INNER, K.PATCH_OUTER, 24))
_PATCH_ANGLES = 48


def _patch_rule(eta: float):
    rs, ws = [], []
    for a, b, n in _PATCH_PANELS:
        t, w = np.polynomial.legendre.leggauss(n)
        rs.append(eta * (a + 0.5 * (b - a) * (t + 1)))
        ws.append(eta * 0.5 * (b - a) * w)
    r = np.concatenate(rs)
    w = np.concatenate(ws)
    th = (np.arange(_PATCH_ANGLES) + 0.5) * (TWO_PI / _PATCH_ANGLES)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    off = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], 1)
    wt = (w[:, None] * rr * (TWO_PI / _PATCH_ANGLES)).ravel()
    return off, wt, rr.ravel()


def electric_energy(
    config: PointConfiguration,
    bg: BackgroundMeasure,
    trunc,
    omega: DomainRegion,
    grid_h: float = 0.1,
    rho_ref: float = 1.0,
) -> float:
    """Quadrature of ``int_omega |grad h_eta|^2``.

    The plane is covered by a partition of unity: a smooth polar patch of
    radius ``2 eta`` around every smeared charge, integrated with Gauss
    rules in the radius and the trapezoid rule in the angle, and a midpoint
    grid of pitch ``grid_h`` for the rest. Grid cells close to a charge are
    subdivided with a pitch that grows linearly with the distance, which
    keeps the error of the ``1/r^2`` tail of order ``grid_h**2``. Cells cut
    by the boundary of ``omega`` use the covered fraction of the cell.

    Parameters
    ----------
    config, bg : configuration and background
    trunc : array of float
        Smearing radius of each point.
    omega : DomainRegion
        Integration region.
    grid_h : float
        Pitch of the coarse grid.
    rho_ref : float
        Distance from a charge beyond which cells are never subdivided.

    Returns
    -------
    float
        The raw integral, without any ``1/(2 pi)`` normalisation.
    """
    if not grid_h > 0:
        raise ParameterError("grid_h must be positive")
    pts = np.ascontiguousarray(config.points)
    eta = np.ascontiguousarray(np.asarray(trunc, dtype=float).reshape(-1))
    if len(eta) != len(pts):
        raise ParameterError("truncation vector length differs from the point count")
    if len(pts):
        bad = (eta <= 0) & omega.contains(pts)
        if bad.any():
            raise DivergentIntegralError("an untruncated point lies inside the integration region")

    h = float(grid_h)
    x0, x1, y0, y1 = omega.bounding_box()
    nx = max(1, int(math.ceil((x1 - x0) / h - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / h - 1e-9)))
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    CX, CY = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([CX.ravel(), CY.ravel()], 1)
    bd = omega.boundary_distance(centers)
    half_diag = 0.5 * math.hypot(hx, hy)
    keep = bd > -half_diag
    centers = centers[keep]
    bd = bd[keep]

    # subdivision factor from the distance to the closest charge
    sub = np.ones(len(centers), dtype=int)
    active = eta > 0
    if active.any() and len(centers):
        tree = cKDTree(pts[active])
        dist, idx = tree.query(centers, k=1)
        eta_near = eta[active][idx]
        dmin = np.maximum(dist - half_diag, 0.0)
        floor = np.minimum(h, eta_near) / 8.0
        pitch = np.maximum(floor, h * np.minimum(1.0, dmin / rho_ref))
        sub = np.maximum(1, np.ceil(h / pitch - 1e-9).astype(int))
        sub[dmin > rho_ref] = 1
    boundary = np.abs(bd) < half_diag

    nodes, weights = [], []
    # plain cells
    plain = (sub == 1) & ~boundary
    nodes.append(centers[plain])
    weights.append(np.full(int(plain.sum()), hx * hy))
    # boundary cells without refinement: covered fraction by subsampling
    bnd = (sub == 1) & boundary
    if bnd.any():
        q = 8
        u = (np.arange(q) + 0.5) / q - 0.5
        UX, UY = np.meshgrid(u * hx, u * hy, indexing="ij")
        offs = np.stack([UX.ravel(), UY.ravel()], 1)
        cb = centers[bnd]
        frac = omega.contains((cb[:, None, :] + offs[None, :, :]).reshape(-1, 2)).reshape(len(cb), -1).mean(axis=1)
        nodes.append(cb)
        weights.append(frac * hx * hy)
    # refined cells
    for m in np.unique(sub[sub > 1]):
        sel = sub == m
        u = (np.arange(m) + 0.5) / m - 0.5
        UX, UY = np.meshgrid(u * hx, u * hy, indexing="ij")
        offs = np.stack([UX.ravel(), UY.ravel()], 1)
        sn = (centers[sel][:, None, :] + offs[None, :, :]).reshape(-1, 2)
        inside = omega.contains(sn)
        nodes.append(sn[inside])
        weights.append(np.full(int(inside.sum()), hx * hy / (m * m)))
    gnodes = np.ascontiguousarray(np.concatenate(nodes)) if nodes else np.zeros((0, 2))
    gw = np.concatenate(weights) if weights else np.zeros(0)

    total = 0.0
    if len(gnodes):
        E, chi = _field_chunks(gnodes, pts, eta, bg, want_chi=True)
        total += float(np.sum(gw * (1.0 - np.minimum(chi, 1.0)) * np.einsum("ij,ij->i", E, E)))

    # smooth polar patches around the charges
    if active.any():
        pb = omega.boundary_distance(pts)
        for i in np.nonzero(active & (pb > -K.PATCH_OUTER * eta))[0]:
            off, wt, rr = _patch_rule(eta[i])
            y = np.ascontiguousarray(pts[i] + off)
            inside = omega.contains(y) if pb[i] < K.PATCH_OUTER * eta[i] else np.ones(len(y), bool)
            if not inside.any():
                continue
            y, wt, rr = y[inside], wt[inside], rr[inside]
            E, chi = _field_chunks(y, pts, eta, bg, want_chi=True)
            own = np.array([K.patch_weight(r, eta[i]) for r in rr])
            wgt = own / np.maximum(chi, 1.0)
            total += float(np.sum(wt * wgt * np.einsum("ij,ij->i", E, E)))
    return total


# ---------------------------------------------------------------------------
# the electric formulation of the energy
# ---------------------------------------------------------------------------


def smearing_correction(config: PointConfiguration, bg: BackgroundMeasure, trunc) -> float:
    """``sum_x int_{D(x, eta)} log(eta / |t - x|) dm(t)``.

    For a locally uniform density ``rho`` every term equals
    ``pi * rho * eta**2 / 2``. Otherwise the radial integral is computed
    on rays with Gauss rules after the change of variables ``r = eta u**2``.
    """
    eta = np.asarray(trunc, dtype=float)
    pts = config.points
    tot = 0.0
    t, w = np.polynomial.legendre.leggauss(24)
    u = 0.5 * (t + 1)
    wu = 0.5 * w
    th = (np.arange(64) + 0.5) * (TWO_PI / 64)
    for x, e in zip(pts, eta):
        if e <= 0:
            continue
        ring = x + e * np.stack([np.cos(th), np.sin(th)], 1)
        d_ring = bg.density(ring)
        d0 = bg.density(x[None, :])[0]
        if np.allclose(d_ring, d0, rtol=0, atol=1e-14) and bg.arc_distance(x[None, :])[0] > e:
            tot += 0.5 * math.pi * d0 * e * e
            continue
        r = e * u**2  # dr = 2 e u du ; log(e/r) = -2 log u
        R, TH = np.meshgrid(r, th, indexing="ij")
        y = x + np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], 1)
        dens = bg.density(y).reshape(R.shape)
        integrand = (-2.0 * np.log(u))[:, None] * R * dens * (2 * e * u)[:, None]
        tot += float(np.sum(wu[:, None] * integrand) * (TWO_PI / 64))
    return tot


@dataclass
class EnerSCorrection:
    """Change of ``(1/2pi) int_omega |grad h|^2`` under ``eta -> s eta``.

    ``log_term`` is ``-Pts(X, omega) log s``; ``smearing_term`` is the
    contribution of the background inside the smearing disks, which vanishes
    when the background is absent there.
    """

    log_term: float
    smearing_term: float
    n_points: int

    @property
    def total(self) -> float:
        return self.log_term + self.smearing_term


def ener_s_correction(config: PointConfiguration, bg: BackgroundMeasure, trunc, omega: DomainRegion, s: float) -> EnerSCorrection:
    """Analytic per-point change of the electric energy when truncations shrink by ``s``.

    For a point ``x`` with smearing radius ``eta``, the potentials of the
    circles of radii ``eta`` and ``s eta`` agree outside ``D(x, eta)``, and
    inside it the difference integrates to

        (1/2pi) delta int |grad h|^2 = -log s
            + 2 (int_{D(x, s eta)} log(s eta/|t-x|) dm - int_{D(x, eta)} log(eta/|t-x|) dm),

    which is ``-log s - pi rho eta^2 (1 - s^2)`` for a locally uniform
    density ``rho``. The disks ``D(x, eta)`` must not overlap each other and
    must lie entirely inside or entirely outside ``omega``.
    """
    if not 0 < s <= 1:
        raise ParameterError("s must lie in (0, 1]")
    eta = np.asarray(trunc, dtype=float).reshape(-1)
    pts = config.points
    if len(pts) == 0:
        return EnerSCorrection(0.0, 0.0, 0)
    inside = omega.contains(pts)
    gap = omega.boundary_distance(pts)
    if np.any(np.abs(gap) < eta):
        raise ParameterError("a smearing disk crosses the boundary of omega")
    sel = PointConfiguration(pts[inside], None, check=False)
    e = eta[inside]
    n = int(inside.sum())
    smear = 2.0 * float(smearing_correction(sel, bg, s * e) - smearing_correction(sel, bg, e))
    return EnerSCorrection(-n * math.log(s), smear, n)


def multipole_coefficients(config: PointConfiguration, bg: BackgroundMeasure, center, kmax: int) -> tuple[float, np.ndarray]:
    """Net charge ``Q`` and coefficients ``c_k`` of the far potential.

    Outside a disk around ``center`` that contains every charge and the
    whole background, the truncated potential reads
    ``-Q log|z| + Re sum_k c_k z**(-k)``.
    """
    z = (config.points[:, 0] - center[0]) + 1j * (config.points[:, 1] - center[1])
    mom_pts = np.array([np.sum(z**k) for k in range(kmax + 1)]) if len(z) else np.zeros(kmax + 1, complex)
    mom_bg = bg.moments(kmax, center)
    Q = float((mom_pts[0] - mom_bg[0]).real)
    k = np.arange(1, kmax + 1)
    return Q, (mom_pts[1:] - mom_bg[1:]) / k


@dataclass(frozen=True)
class IdentityCheck:
    energy: float
    electric_form: float
    field_term: float
    log_term: float
    smearing: float
    exterior: float
    residual: float

    @property
    def relative(self) -> float:
        return abs(self.residual) / max(abs(self.field_term), 1e-300)


def energy_identity_check(
    config: PointConfiguration,
    bg: BackgroundMeasure,
    trunc,
    grid_h: float = 0.05,
    require_neutral: bool = True,
    pad: float = 1.5,
    kmax: int = 160,
) -> IdentityCheck:
    """Compare ``F`` with its expression through smeared electric fields.

    The electric form is

        1/2 * (1/(2 pi) * int |grad h_eta|^2 + sum log eta) - sum_x int_{D(x,eta)} f_eta dm,

    with ``f_eta(v) = log(eta/|v|)`` inside ``D(0, eta)``. The field integral
    is split at a disk ``D_a`` containing every charge. The inside part uses
    :func:`electric_energy`; outside, the potential is harmonic and its
    contribution follows exactly from the multipole coefficients:
    ``sum_k pi k |c_k|^2 a^(-2k) - 2 pi Q^2 log a`` (Green's formula on
    ``D_a``, so the same expression is valid for a charged system).

    Preconditions: ``eta <= r`` (the nearest-neighbour radius), smeared
    disks inside the background region and away from its charged circle,
    and, unless ``require_neutral`` is false, equal total charges.
    """
    pts = config.points
    eta = np.asarray(trunc, dtype=float)
    N = len(pts)
    if require_neutral and abs(N - bg.mass()) > 1e-8 * max(1.0, N):
        raise NeutralityError(f"{N} points against background mass {bg.mass():.12g}")
    if N:
        if np.any(eta <= 0):
            raise DivergentIntegralError("every point needs a positive smearing radius")
        if N > 1 and np.any(eta > nn_truncation(config, 1.0) * (1 + 1e-12)):
            raise ParameterError("smearing radii must not exceed the nearest-neighbour radius")
        if np.any(bg.region.boundary_distance(pts) < eta):
            raise ParameterError("smeared disks must lie inside the background region")
        if np.any(bg.arc_distance(pts) <= eta):
            raise ParameterError("smeared disks must stay away from the charged circle")
    F = interaction_energy(config, bg).total
    c = np.asarray(bg.region.center, dtype=float)
    reach = bg.support_radius(c)
    if N:
        reach = max(reach, float(np.max(np.hypot(*(pts - c).T) + K.PATCH_OUTER * eta)))
    a = pad * reach
    inner = electric_energy(config, bg, eta, Disk(tuple(c), a), grid_h)
    Q, ck = multipole_coefficients(config, bg, c, kmax)
    k = np.arange(1, kmax + 1)
    exterior = float(np.sum(math.pi * k * np.abs(ck) ** 2 * a ** (-2.0 * k))) - TWO_PI * Q * Q * math.log(a)
    field_term = 0.5 * (inner + exterior) / TWO_PI
    log_term = 0.5 * float(np.sum(np.log(eta))) if N else 0.0
    smear = smearing_correction(config, bg, eta)
    rhs = field_term + log_term - smear
    return IdentityCheck(F, rhs, field_term, log_term, smear, exterior, F - rhs)


# ---------------------------------------------------------------------------
# external potential and subsystem interactions
# ---------------------------------------------------------------------------


def v_ext(ext_config: PointConfiguration, ext_bg: BackgroundMeasure, holes: Sequence[Disk], x) -> np.ndarray:
    """Potential created inside the holes by everything outside them.

    ``V(x) = sum_{y in Ext} -log|x - y| - h^m(x) + sum_i h^{m|hole_i}(x)``,
    where the background restricted to each hole is assumed uniform with
    the base density of ``ext_bg``. Points of ``ext_config`` lying inside
    a hole are ignored.
    """
    xs = np.asarray(x, dtype=float).reshape(-1, 2)
    inside_any = np.zeros(len(xs), bool)
    for d in holes:
        inside_any |= d.contains(xs)
    if not inside_any.all():
        raise ParameterError("v_ext is only defined inside the holes")
    ext = _exterior_points(ext_config, holes)
    out = -ext_bg.potential(xs)
    for d in holes:
        v = xs - np.asarray(d.center)
        out += ext_bg.base_density * uniform_disk_potential(d.radius, np.hypot(v[:, 0], v[:, 1]))
    if len(ext):
        out += np.array([K.cross_log_sum(np.ascontiguousarray(p[None, :]), ext) for p in xs])
    return out if np.ndim(x) > 1 else float(out[0])


def v_ext_gradient(ext_config: PointConfiguration, ext_bg: BackgroundMeasure, holes: Sequence[Disk], x) -> np.ndarray:
    """Gradient of :func:`v_ext`."""
    xs = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
    ext = _exterior_points(ext_config, holes)
    g = -ext_bg.gradient(xs)
    for d in holes:
        g += ext_bg.base_density * uniform_disk_gradient(d.radius, xs - np.asarray(d.center))
    if len(ext):
        g += K.point_field(xs, ext, np.zeros(len(ext)))
    return g if np.ndim(x) > 1 else g[0]


def _exterior_points(cfg: PointConfiguration, holes: Sequence[Disk]) -> np.ndarray:
    pts = cfg.points
    keep = np.ones(len(pts), bool)
    for d in holes:
        keep &= ~d.contains(pts)
    return np.ascontiguousarray(pts[keep])


@dataclass(frozen=True)
class SubsystemInteraction:
    interaction: float
    approximation: float
    discrepancies: np.ndarray

    @property
    def error(self) -> float:
        return abs(self.interaction - self.approximation)


def subsystem_interaction(config: PointConfiguration, bg: BackgroundMeasure, family: WellSeparatedFamily) -> SubsystemInteraction:
    """True interaction between subsystems and its monopole approximation.

    For disks ``Lambda_i`` of radius ``T_i`` carrying the background with
    uniform density ``rho`` and the points ``X_i = X cap Lambda_i``, Newton's
    theorem gives

        Int_ij = sum_{x in X_i, y in X_j} -log|x - y|
                 + rho pi T_j^2 sum_{x in X_i} log|x - w_j|
                 + rho pi T_i^2 sum_{y in X_j} log|y - w_i|
                 - rho^2 pi^2 T_i^2 T_j^2 log|w_i - w_j|,

    and ``Int = sum_{i<j} Int_ij``. The approximation replaces every
    subsystem by its discrepancy ``D_i`` placed at the centre ``w_i``.
    ``ErrorCI`` is ``|Int - approximation|`` (see ``.error``).
    """
    if not family.is_disjoint():
        raise GeometryError("subsystem disks overlap")
    if not bg.is_uniform:
        raise ParameterError("subsystem interactions need a uniform background")
    rho = bg.base_density
    for d in family.disks:
        if not (rho == 0 or _disk_in_region(d, bg.region)):
            raise ParameterError("every subsystem disk must lie in the background region")
    groups = [np.ascontiguousarray(config.points[d.contains(config.points)]) for d in family.disks]
    cen = family.centers
    rad = np.array([d.radius for d in family.disks])
    mass = rho * math.pi * rad**2
    D = np.array([len(g) for g in groups]) - mass
    n = len(groups)
    tot = 0.0
    approx = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dij = float(np.hypot(*(cen[i] - cen[j])))
            t = 0.0
            if len(groups[i]) and len(groups[j]):
                t += float(K.cross_log_sum(groups[i], groups[j]))
            if len(groups[i]):
                t += mass[j] * float(np.sum(np.log(np.hypot(*(groups[i] - cen[j]).T))))
            if len(groups[j]):
                t += mass[i] * float(np.sum(np.log(np.hypot(*(groups[j] - cen[i]).T))))
            t -= mass[i] * mass[j] * math.log(dij)
            tot += t
            approx -= D[i] * D[j] * math.log(dij)
    return SubsystemInteraction(tot, approx, D)


def _disk_in_region(d: Disk, region: DomainRegion) -> bool:
    th = np.linspace(0, TWO_PI, 64, endpoint=False)
    ring = np.asarray(d.center) + d.radius * np.stack([np.cos(th), np.sin(th)], 1)
    return bool(np.all(region.contains(ring, tol=1e-9)))


# ---------------------------------------------------------------------------
# linear statistics
# ---------------------------------------------------------------------------


def fluctuation(
    config: PointConfiguration,
    bg: BackgroundMeasure,
    phi: Callable | DomainRegion,
    radial: bool = False,
    breakpoints: Sequence[float] = (),
    n: int = 64,
) -> float:
    """``sum_i phi(x_i) - int phi dm``.

    Parameters
    ----------
    phi : callable or DomainRegion
        A function of an (m, 2) array, a function of the radius when
        ``radial`` is true, or a region (its indicator).
    radial : bool
        ``phi`` depends only on the distance to the background centre.
    breakpoints : sequence of float
        Radii where a radial ``phi`` is not smooth.
    """
    pts = config.points
    if isinstance(phi, DomainRegion):
        return float(phi.count(pts)) - bg.mass_in(phi)
    if radial:
        c = np.asarray(bg.region.center, dtype=float)
        lin = float(np.sum(phi(np.hypot(*(pts - c).T)))) if len(pts) else 0.0
        return lin - bg.integrate_radial(phi, breakpoints, n=n)
    lin = float(np.sum(phi(pts))) if len(pts) else 0.0
    return lin - bg.integrate(phi, n=n)
