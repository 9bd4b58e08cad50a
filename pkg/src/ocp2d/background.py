"""
Neutralising background measures and their logarithmic potentials.

A :class:`BackgroundMeasure` is a sum of simple pieces: a uniform disk,
square or annulus, an optional radially varying profile, an optional hole
where the density drops to zero, and an optional density carried by a
circle. Every piece knows its potential

    h(x) = int -log|x - y| dm(y),

its gradient, its total mass and the complex moments ``int (y - p)**k dm``.
Disks and squares use closed forms. Radial profiles use the shell theorem,
which reduces everything to one dimensional integrals. Circle densities are
handled through their Fourier coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Annulus, Disk, DomainRegion, ParameterError, Square

__all__ = [
    "ArcComponent",
    "BackgroundMeasure",
    "uniform_disk_potential",
    "uniform_disk_gradient",
    "square_potential",
    "square_gradient",
    "SQUARE_LOG_CONSTANT",
]

TWO_PI = 2.0 * math.pi

#: int_{[0,1]^2 x [0,1]^2} log|x - y| dx dy
SQUARE_LOG_CONSTANT = math.log(2.0) / 3.0 + math.pi / 3.0 - 25.0 / 12.0


def _pts(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a.reshape(-1, 2)


def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gauss_interval(a: float, b: float, n: int):
    t, w = _gauss(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def uniform_disk_potential(R: float, r) -> np.ndarray:
    """Potential at distance ``r`` from the centre of a unit density disk."""
    r = np.asarray(r, dtype=float)
    inside = -math.pi * R**2 * math.log(R) + 0.5 * math.pi * (R**2 - r**2)
    with np.errstate(divide="ignore"):
        outside = -math.pi * R**2 * np.log(np.where(r > 0, r, 1.0))
    return np.where(r < R, inside, outside)


def uniform_disk_gradient(R: float, v) -> np.ndarray:
    """Gradient of the unit density disk potential at offset ``v``."""
    v = _pts(v)
    r2 = np.einsum("ij,ij->i", v, v)
    inside = r2 < R * R
    coef = np.where(inside, -math.pi, -math.pi * R**2 / np.where(inside, 1.0, r2))
    return coef[:, None] * v


def _G(u, v):
    # antiderivative in both variables of log(u^2 + v^2) / 2
    r2 = u * u + v * v
    safe = np.where(r2 > 0, r2, 1.0)
    us = np.where(u != 0, u, 1.0)
    vs = np.where(v != 0, v, 1.0)
    t1 = np.where(r2 > 0, u * v * np.log(safe), 0.0)
    t3 = np.where(u != 0, u * u * np.arctan(v / us), 0.0)
    t4 = np.where(v != 0, v * v * np.arctan(u / vs), 0.0)
    return 0.5 * (t1 - 3.0 * u * v + t3 + t4)


def _H(u, v):
    # antiderivative in v of log(u^2 + v^2) / 2
    r2 = u * u + v * v
    safe = np.where(r2 > 0, r2, 1.0)
    us = np.where(u != 0, u, 1.0)
    t1 = np.where(r2 > 0, v * np.log(safe), 0.0)
    t3 = np.where(u != 0, 2.0 * u * np.arctan(v / us), 0.0)
    return 0.5 * (t1 - 2.0 * v + t3)


def square_potential(center, side: float, x) -> np.ndarray:
    """Potential of the unit density square at the points ``x``."""
    p = _pts(x)
    h = 0.5 * side
    u1 = center[0] - h - p[:, 0]
    u2 = center[0] + h - p[:, 0]
    v1 = center[1] - h - p[:, 1]
    v2 = center[1] + h - p[:, 1]
    val = _G(u2, v2) - _G(u1, v2) - _G(u2, v1) + _G(u1, v1)
    return -val


def square_gradient(center, side: float, x) -> np.ndarray:
    """Gradient of :func:`square_potential`."""
    p = _pts(x)
    h = 0.5 * side
    u1 = center[0] - h - p[:, 0]
    u2 = center[0] + h - p[:, 0]
    v1 = center[1] - h - p[:, 1]
    v2 = center[1] + h - p[:, 1]
    # d/dx1 of int int log/2 with u = y1 - x1 flips the sign of the bounds
    gx = _H(u2, v2) - _H(u1, v2) - _H(u2, v1) + _H(u1, v1)
    gy = _H(v2, u2) - _H(v2, u1) - _H(v1, u2) + _H(v1, u1)
    return np.stack([gx, gy], axis=1)


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------


class _Piece:
    """One signed ingredient of a background measure."""

    def potential(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def density(self, x) -> np.ndarray:
        raise NotImplementedError

    def mass(self) -> float:
        raise NotImplementedError

    def self_pair(self) -> float:
        raise NotImplementedError

    def rule(self, n: int = 64):
        """Quadrature nodes and weights (weights include the density)."""
        raise NotImplementedError

    def moments(self, kmax: int, about) -> np.ndarray:
        nodes, w = self.rule(max(32, kmax + 8))
        z = (nodes[:, 0] - about[0]) + 1j * (nodes[:, 1] - about[1])
        out = np.empty(kmax + 1, dtype=complex)
        zk = np.ones_like(z)
        for k in range(kmax + 1):
            out[k] = np.sum(w * zk)
            zk = zk * z
        return out

    def support_radius(self, about) -> float:
        raise NotImplementedError


class _DiskPiece(_Piece):
    def __init__(self, center, R, rho):
        self.center = np.asarray(center, dtype=float)
        self.R = float(R)
        self.rho = float(rho)

    def potential(self, x):
        v = _pts(x) - self.center
        return self.rho * uniform_disk_potential(self.R, np.hypot(v[:, 0], v[:, 1]))

    def gradient(self, x):
        return self.rho * uniform_disk_gradient(self.R, _pts(x) - self.center)

    def density(self, x):
        v = _pts(x) - self.center
        return np.where(np.hypot(v[:, 0], v[:, 1]) <= self.R, self.rho, 0.0)

    def mass(self):
        return self.rho * math.pi * self.R**2

    def self_pair(self):
        R = self.R
        return self.rho**2 * (-(math.pi**2) * R**4 * math.log(R) + math.pi**2 * R**4 / 4.0)

    def rule(self, n=64):
        r, wr = _gauss_interval(0.0, self.R, n)
        th = np.arange(2 * n) * (TWO_PI / (2 * n))
        rr, tt = np.meshgrid(r, th, indexing="ij")
        w = (wr[:, None] * rr * (TWO_PI / (2 * n))).ravel() * self.rho
        nodes = np.stack([self.center[0] + (rr * np.cos(tt)).ravel(), self.center[1] + (rr * np.sin(tt)).ravel()], 1)
        return nodes, w

    def moments(self, kmax, about):
        # rotation invariance about the centre kills every moment but k = 0
        d = complex(self.center[0] - about[0], self.center[1] - about[1])
        return self.mass() * d ** np.arange(kmax + 1)

    def support_radius(self, about):
        return float(np.hypot(*(self.center - np.asarray(about)))) + self.R


class _SquarePiece(_Piece):
    def __init__(self, center, side, rho):
        self.center = np.asarray(center, dtype=float)
        self.side = float(side)
        self.rho = float(rho)

    def potential(self, x):
        return self.rho * square_potential(self.center, self.side, x)

    def gradient(self, x):
        return self.rho * square_gradient(self.center, self.side, x)

    def density(self, x):
        v = np.abs(_pts(x) - self.center)
        return np.where((v[:, 0] <= self.side / 2) & (v[:, 1] <= self.side / 2), self.rho, 0.0)

    def mass(self):
        return self.rho * self.side**2

    def self_pair(self):
        a = self.side
        return self.rho**2 * a**4 * (-math.log(a) - SQUARE_LOG_CONSTANT)

    def rule(self, n=64):
        h = self.side / 2
        x, wx = _gauss_interval(self.center[0] - h, self.center[0] + h, n)
        y, wy = _gauss_interval(self.center[1] - h, self.center[1] + h, n)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], 1), (wx[:, None] * wy[None, :]).ravel() * self.rho

    def support_radius(self, about):
        return float(np.hypot(*(self.center - np.asarray(about)))) + self.side / math.sqrt(2)


class _RadialPiece(_Piece):
    """Radially symmetric density ``profile(r)`` on ``r_in <= r <= r_out``."""

    n_gauss = 40

    def __init__(self, center, r_in, r_out, profile, breakpoints=()):
        self.center = np.asarray(center, dtype=float)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.profile = profile
        bp = sorted({float(b) for b in breakpoints if self.r_in < b < self.r_out})
        self.breaks = np.array([self.r_in] + bp + [self.r_out])
        self._t, self._w = _gauss(self.n_gauss)
        self._mass = float(self._cum(np.array([self.r_out]), self._mass_density)[0])
        self._log_moment_total = float(self._cum(np.array([self.r_out]), self._log_density)[0])

    def prof(self, r):
        r = np.asarray(r, dtype=float)
        try:
            out = np.asarray(self.profile(r), dtype=float)
            if out.shape != r.shape:
                out = np.broadcast_to(out, r.shape).copy()
        except (TypeError, ValueError):
            out = np.vectorize(lambda t: float(self.profile(float(t))))(r)
        return out

    def _mass_density(self, r):
        return TWO_PI * r * self.prof(r)

    def _log_density(self, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, TWO_PI * r * np.log(np.where(r > 0, r, 1.0)) * self.prof(r), 0.0)

    def _cum(self, a, f):
        """``int_{r_in}^{a} f`` for each entry of ``a`` by panelwise Gauss rules."""
        a = np.clip(np.asarray(a, dtype=float), self.r_in, self.r_out)
        out = np.zeros(a.shape)
        for lo, hi in zip(self.breaks[:-1], self.breaks[1:]):
            up = np.clip(a, lo, hi)
            half = 0.5 * (up - lo)
            sel = half > 0
            if not np.any(sel):
                continue
            if lo == 0.0:
                # r = up * u^2 softens the r log r behaviour at the origin
                u = 0.5 * (self._t + 1.0)
                upp = up[sel, None]
                nodes = upp * u[None, :] ** 2
                out[sel] += (f(nodes) * (upp * u[None, :])) @ self._w
                continue
            nodes = lo + half[sel, None] * (self._t[None, :] + 1.0)
            out[sel] += half[sel] * (f(nodes) @ self._w)
        return out

    def _cum_mass(self, a):
        return float(self._cum(np.array([a]), self._mass_density)[0])

    def radial_potential(self, r) -> np.ndarray:
        # shell theorem: inner shells act as a point mass, outer shells are flat
        r = np.atleast_1d(np.asarray(r, dtype=float))
        m_in = self._cum(r, self._mass_density)
        log_in = self._cum(r, self._log_density)
        with np.errstate(divide="ignore"):
            lr = np.log(np.where(r > 0, r, 1.0))
        inner = -lr * m_in - (self._log_moment_total - log_in)
        return np.where(r <= self.r_in, -self._log_moment_total, inner)

    def potential(self, x):
        v = _pts(x) - self.center
        return self.radial_potential(np.hypot(v[:, 0], v[:, 1]))

    def gradient(self, x):
        v = _pts(x) - self.center
        r = np.hypot(v[:, 0], v[:, 1])
        m = self._cum(r, self._mass_density)
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(r > 0, -m / np.where(r > 0, r * r, 1.0), 0.0)
        return coef[:, None] * v

    def density(self, x):
        v = _pts(x) - self.center
        r = np.hypot(v[:, 0], v[:, 1])
        out = np.zeros(len(r))
        sel = (r >= self.r_in) & (r <= self.r_out)
        out[sel] = self.prof(r[sel])
        return out

    def mass(self):
        return self._mass

    def self_pair(self):
        r, w = self.radial_rule(self.n_gauss)
        return float(np.sum(w * self._mass_density(r) * self.radial_potential(r)))

    def radial_rule(self, n=48):
        rs, ws = [], []
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            r, w = _gauss_interval(a, b, n)
            rs.append(r)
            ws.append(w)
        return np.concatenate(rs), np.concatenate(ws)

    def rule(self, n=64):
        r, wr = self.radial_rule(n)
        dens = self.prof(r)
        th = np.arange(2 * n) * (TWO_PI / (2 * n))
        rr, tt = np.meshgrid(r, th, indexing="ij")
        w = ((wr * r * dens)[:, None] * np.full_like(tt, TWO_PI / (2 * n))).ravel()
        nodes = np.stack([self.center[0] + (rr * np.cos(tt)).ravel(), self.center[1] + (rr * np.sin(tt)).ravel()], 1)
        return nodes, w

    def moments(self, kmax, about):
        d = complex(self.center[0] - about[0], self.center[1] - about[1])
        return self.mass() * d ** np.arange(kmax + 1)

    def support_radius(self, about):
        return float(np.hypot(*(self.center - np.asarray(about)))) + self.r_out


@dataclass(frozen=True)
class ArcComponent:
    """Density carried by a circle.

    Parameters
    ----------
    circle : Disk
        The circle is the boundary of this disk.
    linear_density : callable
        Maps an angle (array) to a nonnegative density per unit arclength.
    """

    circle: Disk
    linear_density: Callable


class _ArcPiece(_Piece):
    def __init__(self, arc: ArcComponent, n_modes: int = 4096):
        self.center = np.asarray(arc.circle.center, dtype=float)
        self.R = arc.circle.radius
        self.n = int(n_modes)
        th = np.arange(self.n) * (TWO_PI / self.n)
        lam = np.asarray(arc.linear_density(th), dtype=float) * np.ones_like(th)
        if np.any(lam < 0):
            raise ParameterError("arc density must be nonnegative")
        self.lam = arc.linear_density
        self._theta = th
        self._mu = lam * self.R  # mass per unit angle
        # c_k = int mu(theta) exp(i k theta) dtheta by the trapezoid rule
        self.c = np.conj(np.fft.fft(self._mu)) * (TWO_PI / self.n)
        self.kmax = self.n // 2 - 1

    def mass(self):
        return float(self.c[0].real)

    def _series(self, x, grad=False):
        v = _pts(x) - self.center
        rho = np.hypot(v[:, 0], v[:, 1])
        alpha = np.arctan2(v[:, 1], v[:, 0])
        k = np.arange(1, self.kmax + 1)
        ck = self.c[1 : self.kmax + 1]
        inside = rho < self.R
        q = np.where(inside, rho / self.R, self.R / np.maximum(rho, 1e-300))
        # truncate when q**k is negligible
        qmax = float(np.max(q)) if len(q) else 0.0
        K = self.kmax if qmax >= 1 else min(self.kmax, int(40.0 / max(-math.log(max(qmax, 1e-300)), 1e-3)) + 2)
        k = k[:K]
        ck = ck[:K]
        qk = q[:, None] ** k[None, :]
        phase = np.exp(-1j * np.outer(alpha, k))
        a0 = self.mass()
        if not grad:
            base = -a0 * np.where(inside, math.log(self.R), np.log(np.maximum(rho, 1e-300)))
            return base + np.real((qk / k * ck[None, :] * phase).sum(axis=1))
        # gradient in polar coordinates, converted to Cartesian
        term = ck[None, :] * phase * qk
        dq = np.where(inside, 1.0, -1.0)  # d(log q)/d(log rho)
        d_rho = np.real(term.sum(axis=1)) * dq / np.maximum(rho, 1e-300)
        d_rho = d_rho + np.where(inside, 0.0, -a0 / np.maximum(rho, 1e-300))
        d_alpha = np.real((-1j * term).sum(axis=1)) / np.maximum(rho, 1e-300)
        c, s = np.cos(alpha), np.sin(alpha)
        return np.stack([d_rho * c - d_alpha * s, d_rho * s + d_alpha * c], 1)

    def potential(self, x):
        return self._series(x)

    def gradient(self, x):
        return self._series(x, grad=True)

    def density(self, x):
        return np.zeros(len(_pts(x)))

    def self_pair(self):
        k = np.arange(1, self.kmax + 1)
        return float(-math.log(self.R) * self.mass() ** 2 + np.sum(np.abs(self.c[1 : self.kmax + 1]) ** 2 / k))

    def rule(self, n=64):
        nodes = np.stack([self.center[0] + self.R * np.cos(self._theta), self.center[1] + self.R * np.sin(self._theta)], 1)
        return nodes, self._mu * (TWO_PI / self.n)

    def moments(self, kmax, about):
        nodes, w = self.rule()
        z = (nodes[:, 0] - about[0]) + 1j * (nodes[:, 1] - about[1])
        return np.array([np.sum(w * z**k) for k in range(kmax + 1)])

    def support_radius(self, about):
        return float(np.hypot(*(self.center - np.asarray(about)))) + self.R

    def distance_to_charge(self, x) -> np.ndarray:
        """Distance to the circle, infinite where the density vanishes."""
        v = _pts(x) - self.center
        rho = np.hypot(v[:, 0], v[:, 1])
        lam = np.asarray(self.lam(np.mod(np.arctan2(v[:, 1], v[:, 0]), TWO_PI)), dtype=float) * np.ones(len(rho))
        return np.where(lam > 0, np.abs(rho - self.R), np.inf)


# ---------------------------------------------------------------------------
# the public measure
# ---------------------------------------------------------------------------


class BackgroundMeasure:
    """Nonnegative neutralising measure.

    Parameters
    ----------
    base_density : float
        Density of the uniform part (1 for the reference measure).
    region : Disk, Square or Annulus
        Support of the absolutely continuous part.
    radial_profile : callable, optional
        Density as a function of the distance to the region centre. When
        given it replaces ``base_density``; the region must then be a disk
        or an annulus.
    hole : Disk or Square, optional
        Subregion of ``region`` where the density is zero.
    arc_component : ArcComponent, optional
        Density carried by a circle.
    profile_breakpoints : sequence of float
        Radii where ``radial_profile`` is not smooth; passed to the
        adaptive integrator.
    """

    def __init__(
        self,
        base_density: float = 1.0,
        region: DomainRegion | None = None,
        radial_profile: Callable[[float], float] | None = None,
        hole: DomainRegion | None = None,
        arc_component: ArcComponent | None = None,
        profile_breakpoints: Sequence[float] = (),
    ):
        if base_density < 0:
            raise ParameterError("base_density must be nonnegative")
        if region is None:
            raise ParameterError("a background needs a region")
        self.base_density = float(base_density)
        self.region = region
        self.radial_profile = radial_profile
        self.hole = hole
        self.arc_component = arc_component
        self.pieces: list[tuple[float, _Piece]] = []
        c = region.center
        if radial_profile is not None:
            if isinstance(region, Disk):
                r_in, r_out = 0.0, region.radius
            elif isinstance(region, Annulus):
                r_in, r_out = region.r_in, region.r_out
            else:
                raise ParameterError("radial profiles need a disk or annulus region")
            if hole is not None:
                raise ParameterError("holes are only supported on uniform backgrounds")
            self.pieces.append((1.0, _RadialPiece(c, r_in, r_out, radial_profile, profile_breakpoints)))
        elif base_density > 0:
            if isinstance(region, Disk):
                self.pieces.append((1.0, _DiskPiece(c, region.radius, base_density)))
            elif isinstance(region, Annulus):
                self.pieces.append((1.0, _DiskPiece(c, region.r_out, base_density)))
                if region.r_in > 0:
                    self.pieces.append((-1.0, _DiskPiece(c, region.r_in, base_density)))
            elif isinstance(region, Square):
                self.pieces.append((1.0, _SquarePiece(c, region.side, base_density)))
            else:
                raise ParameterError(f"unsupported background region {type(region).__name__}")
            if hole is not None:
                if isinstance(hole, Disk):
                    self.pieces.append((-1.0, _DiskPiece(hole.center, hole.radius, base_density)))
                elif isinstance(hole, Square):
                    self.pieces.append((-1.0, _SquarePiece(hole.center, hole.side, base_density)))
                else:
                    raise ParameterError("holes must be disks or squares")
        self._arc = None
        if arc_component is not None:
            self._arc = _ArcPiece(arc_component)
            self.pieces.append((1.0, self._arc))
        self._self_energy = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def uniform_disk(cls, N: float, center=(0.0, 0.0), density: float = 1.0) -> "BackgroundMeasure":
        """Uniform density on the disk of mass ``N``."""
        return cls(density, Disk(center, math.sqrt(N / (math.pi * density))))

    # -- pointwise quantities ------------------------------------------------

    def potential(self, x) -> np.ndarray:
        """``h^m(x) = int -log|x - y| dm(y)``."""
        p = _pts(x)
        out = np.zeros(len(p))
        for sgn, pc in self.pieces:
            out += sgn * pc.potential(p)
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient of :meth:`potential`."""
        p = _pts(x)
        out = np.zeros((len(p), 2))
        for sgn, pc in self.pieces:
            out += sgn * pc.gradient(p)
        return out

    def density(self, x) -> np.ndarray:
        """Density of the absolutely continuous part."""
        p = _pts(x)
        out = np.zeros(len(p))
        for sgn, pc in self.pieces:
            out += sgn * pc.density(p)
        return np.maximum(out, 0.0)

    def arc_distance(self, x) -> np.ndarray:
        """Distance from ``x`` to the charged part of the circle component."""
        if self._arc is None:
            return np.full(len(_pts(x)), np.inf)
        return self._arc.distance_to_charge(x)

    @property
    def is_uniform(self) -> bool:
        return self.radial_profile is None and self.hole is None and self.arc_component is None

    # -- global quantities ---------------------------------------------------

    def mass(self) -> float:
        return float(sum(sgn * pc.mass() for sgn, pc in self.pieces))

    def self_energy(self) -> float:
        """``(1/2) int int -log|x - y| dm dm`` (cached)."""
        if self._self_energy is None:
            tot = 0.0
            for i, (si, pi) in enumerate(self.pieces):
                tot += si * si * pi.self_pair()
                for sj, pj in self.pieces[i + 1 :]:
                    nodes, w = pj.rule(96)
                    tot += 2.0 * si * sj * float(np.sum(w * pi.potential(nodes)))
            self._self_energy = 0.5 * tot
        return self._self_energy

    def moments(self, kmax: int, about=None) -> np.ndarray:
        """Complex moments ``int (y - about)**k dm(y)`` for ``k = 0..kmax``."""
        about = self.region.center if about is None else about
        out = np.zeros(kmax + 1, dtype=complex)
        for sgn, pc in self.pieces:
            out += sgn * pc.moments(kmax, about)
        return out

    def support_radius(self, about=None) -> float:
        about = self.region.center if about is None else about
        if not self.pieces:
            return 0.0
        return max(pc.support_radius(about) for _, pc in self.pieces)

    def integrate(self, f: Callable, n: int = 64) -> float:
        """``int f dm`` for a smooth function ``f`` of an (m, 2) array."""
        tot = 0.0
        for sgn, pc in self.pieces:
            nodes, w = pc.rule(n)
            tot += sgn * float(np.sum(w * np.asarray(f(nodes), dtype=float)))
        return tot

    def integrate_radial(self, f: Callable[[np.ndarray], np.ndarray], breakpoints: Sequence[float] = (), n: int = 48) -> float:
        """``int f(|y - c|) dm(y)`` with ``c`` the region centre.

        Uses composite Gauss rules split at ``breakpoints`` and at the
        radii where the background jumps. Only rotation invariant pieces
        centred at ``c`` are accepted.
        """
        c = np.asarray(self.region.center, dtype=float)
        tot = 0.0
        for sgn, pc in self.pieces:
            if isinstance(pc, _DiskPiece) and np.allclose(pc.center, c):
                knots = sorted({0.0, pc.R, *[b for b in breakpoints if 0 < b < pc.R]})
                for a, b in zip(knots[:-1], knots[1:]):
                    r, w = _gauss_interval(a, b, n)
                    tot += sgn * pc.rho * float(np.sum(w * TWO_PI * r * f(r)))
            elif isinstance(pc, _RadialPiece) and np.allclose(pc.center, c):
                knots = sorted({*pc.breaks, *[b for b in breakpoints if pc.r_in < b < pc.r_out]})
                for a, b in zip(knots[:-1], knots[1:]):
                    r, w = _gauss_interval(a, b, n)
                    dens = pc.prof(r)
                    tot += sgn * float(np.sum(w * TWO_PI * r * dens * f(r)))
            else:
                tot += sgn * self._integrate_piece(pc, lambda y: f(np.hypot(y[:, 0] - c[0], y[:, 1] - c[1])))
        return tot

    @staticmethod
    def _integrate_piece(pc, f, n=96):
        nodes, w = pc.rule(n)
        return float(np.sum(w * f(nodes)))

    def mass_in(self, omega: DomainRegion, resolution: int = 600) -> float:
        """Background mass of the region ``omega``.

        Exact when ``omega`` lies inside a uniform region without holes, or
        for disks against a uniform disk background. Otherwise a fine
        midpoint rule is used.
        """
        if self.is_uniform and self.pieces:
            if _region_inside(omega, self.region):
                return self.base_density * omega.area()
            if isinstance(self.region, Disk) and isinstance(omega, Disk):
                return self.base_density * _lens_area(self.region, omega)
            if (
                isinstance(self.region, Annulus)
                and isinstance(omega, Disk)
                and self.hole is None
                and np.allclose(omega.center, self.region.center)
            ):
                r = min(max(omega.radius, self.region.r_in), self.region.r_out)
                return self.base_density * math.pi * (r * r - self.region.r_in**2)
        if (
            self.radial_profile is not None
            and isinstance(omega, Disk)
            and np.allclose(omega.center, self.region.center)
        ):
            (pc,) = [p for _, p in self.pieces if isinstance(p, _RadialPiece)]
            return pc._cum_mass(omega.radius)
        x0, x1, y0, y1 = omega.bounding_box()
        hx = (x1 - x0) / resolution
        hy = (y1 - y0) / resolution
        xs = x0 + hx * (np.arange(resolution) + 0.5)
        ys = y0 + hy * (np.arange(resolution) + 0.5)
        tot = 0.0
        for row in np.array_split(np.arange(resolution), 8):
            X, Y = np.meshgrid(xs[row], ys, indexing="ij")
            P = np.stack([X.ravel(), Y.ravel()], 1)
            m = omega.contains(P)
            if m.any():
                tot += float(self.density(P[m]).sum()) * hx * hy
        return tot

    def to_record(self) -> dict:
        rec = {"base_density": self.base_density, "region": self.region.to_record()}
        if self.hole is not None:
            rec["hole"] = self.hole.to_record()
        if self.radial_profile is not None:
            rec["radial_profile"] = getattr(self.radial_profile, "__name__", "callable")
        if self.arc_component is not None:
            rec["arc_circle"] = self.arc_component.circle.to_record()
        return rec


def _region_inside(inner: DomainRegion, outer: DomainRegion) -> bool:
    """Conservative containment test through boundary sampling."""
    if isinstance(outer, Disk):
        c = np.asarray(outer.center)
        if isinstance(inner, (Disk, Annulus)):
            rad = inner.radius if isinstance(inner, Disk) else inner.r_out
            return float(np.hypot(*(np.asarray(inner.center) - c))) + rad <= outer.radius * (1 + 1e-14)
        if isinstance(inner, Square):
            h = inner.side / 2
            corners = np.asarray(inner.center) + np.array([[h, h], [h, -h], [-h, h], [-h, -h]])
            return bool(np.all(np.hypot(*(corners - c).T) <= outer.radius * (1 + 1e-14)))
    if isinstance(outer, Square):
        x0, x1, y0, y1 = inner.bounding_box()
        X0, X1, Y0, Y1 = outer.bounding_box()
        return x0 >= X0 and x1 <= X1 and y0 >= Y0 and y1 <= Y1
    if hasattr(inner, "corners") and isinstance(outer, Disk):
        return False
    # sample the boundary of the bounding box as a last resort
    x0, x1, y0, y1 = inner.bounding_box()
    pts = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    return bool(np.all(outer.contains(pts)))


def _lens_area(a: Disk, b: Disk) -> float:
    d = float(np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]))
    r1, r2 = a.radius, b.radius
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    c1 = (d * d + r1 * r1 - r2 * r2) / (2 * d * r1)
    c2 = (d * d + r2 * r2 - r1 * r1) / (2 * d * r2)
    k = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return r1 * r1 * math.acos(c1) + r2 * r2 * math.acos(c2) - k
