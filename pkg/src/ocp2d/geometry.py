"""
Planar regions and the box machinery used to split an annulus into
well-separated pieces.

All lengths are in blown-up units, where the mean density of points is one.
Regions are immutable value objects that can be serialized to plain
dictionaries and rebuilt from them.

Examples
--------
>>> from ocp2d.geometry import Disk, box_decompose
>>> Disk((0.0, 0.0), 2.0).area()
12.566370614359172
>>> boxes = box_decompose((0.0, 0.0), R=1000.0, r=850.0, L=100.0)
>>> len(boxes)
10
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "GeometryError",
    "DomainRegion",
    "Disk",
    "Square",
    "Annulus",
    "Box",
    "region_from_record",
    "BoxList",
    "box_decompose",
    "box_bound_diagnostic",
    "FamilySelection",
    "select_family",
    "WellSeparatedFamily",
    "family_from_boxes",
    "DistanceSums",
    "distance_sums",
]

TWO_PI = 2.0 * math.pi


class ParameterError(ValueError):
    """Raised when the arguments of an operation are out of range."""


class GeometryError(ValueError):
    """Raised for degenerate geometric input (overlaps, empty gaps)."""


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape == (2,):
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[-1] != 2:
        raise ParameterError(f"expected points of shape (n, 2), got {pts.shape}")
    return pts


class DomainRegion:
    """Common interface of the planar regions.

    Subclasses provide ``area``, ``contains``, ``bounding_box`` and
    ``to_record``. ``contains`` treats the region as closed.
    """

    kind = "region"

    def area(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def contains(self, x, tol: float = 0.0) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def bounding_box(self) -> tuple[float, float, float, float]:  # pragma: no cover
        raise NotImplementedError

    def to_record(self) -> dict:  # pragma: no cover
        raise NotImplementedError

    def translate(self, v) -> "DomainRegion":  # pragma: no cover
        raise NotImplementedError

    def count(self, points) -> int:
        """Number of points of ``points`` lying in the closed region."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return 0
        return int(np.count_nonzero(self.contains(pts)))

    def boundary_distance(self, x) -> np.ndarray:  # pragma: no cover
        """Signed distance to the boundary, positive inside."""
        raise NotImplementedError


@dataclass(frozen=True)
class Disk(DomainRegion):
    """Closed disk ``D(center, radius)``."""

    center: tuple
    radius: float
    kind = "disk"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.radius > 0):
            raise ParameterError(f"disk radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def area(self) -> float:
        return math.pi * self.radius**2

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        pts = _as_points(x)
        d = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return d <= self.radius + tol

    def boundary_distance(self, x) -> np.ndarray:
        pts = _as_points(x)
        d = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return self.radius - d

    def bounding_box(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def translate(self, v) -> "Disk":
        return Disk((self.center[0] + v[0], self.center[1] + v[1]), self.radius)

    def to_record(self) -> dict:
        return {"kind": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Square(DomainRegion):
    """Closed axis-aligned square of side ``side`` centred at ``center``."""

    center: tuple
    side: float
    kind = "square"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.side > 0):
            raise ParameterError(f"square side must be positive, got {self.side}")
        object.__setattr__(self, "side", float(self.side))

    def area(self) -> float:
        return self.side**2

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        pts = _as_points(x)
        h = 0.5 * self.side + tol
        return (np.abs(pts[:, 0] - self.center[0]) <= h) & (
            np.abs(pts[:, 1] - self.center[1]) <= h
        )

    def boundary_distance(self, x) -> np.ndarray:
        pts = _as_points(x)
        h = 0.5 * self.side
        dx = h - np.abs(pts[:, 0] - self.center[0])
        dy = h - np.abs(pts[:, 1] - self.center[1])
        inside = np.minimum(dx, dy)
        outside = -np.hypot(np.minimum(dx, 0.0), np.minimum(dy, 0.0))
        return np.where((dx >= 0) & (dy >= 0), inside, np.where((dx < 0) & (dy < 0), outside, np.minimum(dx, dy)))

    def bounding_box(self):
        cx, cy = self.center
        h = 0.5 * self.side
        return (cx - h, cx + h, cy - h, cy + h)

    def translate(self, v) -> "Square":
        return Square((self.center[0] + v[0], self.center[1] + v[1]), self.side)

    def to_record(self) -> dict:
        return {"kind": "square", "center": list(self.center), "side": self.side}


@dataclass(frozen=True)
class Annulus(DomainRegion):
    """Closed annulus ``r_in <= |x - center| <= r_out``."""

    center: tuple
    r_in: float
    r_out: float
    kind = "annulus"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (0.0 <= self.r_in < self.r_out):
            raise ParameterError(
                f"annulus needs 0 <= r_in < r_out, got r_in={self.r_in}, r_out={self.r_out}"
            )
        object.__setattr__(self, "r_in", float(self.r_in))
        object.__setattr__(self, "r_out", float(self.r_out))

    def area(self) -> float:
        return math.pi * (self.r_out**2 - self.r_in**2)

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        pts = _as_points(x)
        d = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return (d >= self.r_in - tol) & (d <= self.r_out + tol)

    def boundary_distance(self, x) -> np.ndarray:
        pts = _as_points(x)
        d = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return np.minimum(self.r_out - d, d - self.r_in)

    def bounding_box(self):
        cx, cy = self.center
        r = self.r_out
        return (cx - r, cx + r, cy - r, cy + r)

    def translate(self, v) -> "Annulus":
        return Annulus((self.center[0] + v[0], self.center[1] + v[1]), self.r_in, self.r_out)

    def to_record(self) -> dict:
        return {
            "kind": "annulus",
            "center": list(self.center),
            "r_in": self.r_in,
            "r_out": self.r_out,
        }


@dataclass(frozen=True)
class Box(DomainRegion):
    """Annular sector ``r_in <= |x - c| <= r_out``, ``angle_lo <= arg <= angle_hi``.

    Angles are measured counter-clockwise from the positive first axis and
    must satisfy ``0 <= angle_lo < angle_hi <= 2*pi``.
    """

    center: tuple
    r_in: float
    r_out: float
    angle_lo: float
    angle_hi: float
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (0.0 <= self.r_in < self.r_out):
            raise ParameterError("box needs 0 <= r_in < r_out")
        if not (0.0 <= self.angle_lo < self.angle_hi <= TWO_PI + 1e-12):
            raise ParameterError("box needs 0 <= angle_lo < angle_hi <= 2 pi")
        for name in ("r_in", "r_out", "angle_lo", "angle_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def opening(self) -> float:
        return self.angle_hi - self.angle_lo

    def area(self) -> float:
        return 0.5 * self.opening * (self.r_out**2 - self.r_in**2)

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        pts = _as_points(x)
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        d = np.hypot(dx, dy)
        ang = np.mod(np.arctan2(dy, dx), TWO_PI)
        # the angular test is done on arclength so that ``tol`` is a length
        slack = tol / np.maximum(d, 1e-300)
        in_ang = (ang >= self.angle_lo - slack) & (ang <= self.angle_hi + slack)
        if self.angle_hi >= TWO_PI - 1e-12:
            in_ang |= ang <= slack
        return (d >= self.r_in - tol) & (d <= self.r_out + tol) & in_ang

    def corners(self) -> np.ndarray:
        """The four corner points, ordered inner-lo, inner-hi, outer-hi, outer-lo."""
        cx, cy = self.center
        out = []
        for r, a in (
            (self.r_in, self.angle_lo),
            (self.r_in, self.angle_hi),
            (self.r_out, self.angle_hi),
            (self.r_out, self.angle_lo),
        ):
            out.append((cx + r * math.cos(a), cy + r * math.sin(a)))
        return np.array(out)

    @property
    def reference_point(self) -> np.ndarray:
        """Arithmetic mean of the four corners, used as the box centre."""
        return self.corners().mean(axis=0)

    def arc_lengths(self) -> tuple[float, float]:
        return (self.r_in * self.opening, self.r_out * self.opening)

    def radial_length(self) -> float:
        return self.r_out - self.r_in

    def bounding_box(self):
        # conservative: the bounding box of the full outer disk, clipped by
        # the sampled arc when the opening is small
        th = np.linspace(self.angle_lo, self.angle_hi, 257)
        xs = np.concatenate([self.r_in * np.cos(th), self.r_out * np.cos(th)]) + self.center[0]
        ys = np.concatenate([self.r_in * np.sin(th), self.r_out * np.sin(th)]) + self.center[1]
        return (xs.min(), xs.max(), ys.min(), ys.max())

    def boundary_distance(self, x) -> np.ndarray:
        # only the sign is exact near the angular edges; good enough for
        # masking and tolerance tests
        pts = _as_points(x)
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        d = np.hypot(dx, dy)
        ang = np.mod(np.arctan2(dy, dx), TWO_PI)
        radial = np.minimum(self.r_out - d, d - self.r_in)
        angular = np.minimum(ang - self.angle_lo, self.angle_hi - ang) * d
        return np.minimum(radial, angular)

    def translate(self, v) -> "Box":
        return Box(
            (self.center[0] + v[0], self.center[1] + v[1]),
            self.r_in,
            self.r_out,
            self.angle_lo,
            self.angle_hi,
        )

    def to_record(self) -> dict:
        return {
            "kind": "box",
            "center": list(self.center),
            "r_in": self.r_in,
            "r_out": self.r_out,
            "angle_lo": self.angle_lo,
            "angle_hi": self.angle_hi,
        }


_KINDS = {"disk": Disk, "square": Square, "annulus": Annulus, "box": Box}


def region_from_record(rec: dict) -> DomainRegion:
    """Rebuild a region from the dictionary produced by ``to_record``."""
    rec = dict(rec)
    try:
        cls = _KINDS[rec.pop("kind")]
    except KeyError as exc:
        raise ParameterError(f"unknown or missing region kind in {rec!r}") from exc
    return cls(**rec)


# ---------------------------------------------------------------------------
# box decomposition of an annulus
# ---------------------------------------------------------------------------


class BoxList(list):
    """List of boxes carrying the uncovered angular remainder.

    Attributes
    ----------
    remainder_angle : float
        Angle of the sector not covered by any box.
    remainder_area : float
        Area of that sector inside the annulus.
    """

    remainder_angle: float = 0.0
    remainder_area: float = 0.0


def box_decompose(center, R: float, r: float, L: float, min_L: float = 100.0) -> BoxList:
    """Split the annulus ``D_R \\ D_r`` into ``floor(R/L)`` boxes.

    Every box has opening ``2*pi*L/R``, so that the outer arc has length
    ``2*pi*L``; when ``R/L`` is not an integer the sector left after the
    last box is reported through ``remainder_angle`` and ``remainder_area``
    rather than spread over the boxes.

    Parameters
    ----------
    center : pair of float
    R, r : float
        Outer and inner radius, with ``R - 2L <= r <= R - L``.
    L : float
        Box size. Must be at least ``min_L``.
    min_L : float, optional
        Lower bound on ``L``; lower it only for small illustrative runs.

    Returns
    -------
    BoxList
    """
    if not (L > 0 and R > 0):
        raise ParameterError("R and L must be positive")
    if L < min_L:
        raise ParameterError(f"L={L} is below the minimal box size {min_L}")
    if not (R - 2 * L - 1e-12 <= r <= R - L + 1e-12) or r < 0:
        raise ParameterError(f"inner radius r={r} must lie in [R-2L, R-L] = [{R - 2 * L}, {R - L}]")
    count = int(math.floor(R / L + 1e-12))
    if count < 1:
        raise ParameterError("R/L must be at least 1")
    opening = TWO_PI * L / R
    if count * opening > TWO_PI:
        opening = TWO_PI / count
    boxes = BoxList(
        Box(center, r, R, i * opening, min((i + 1) * opening, TWO_PI)) for i in range(count)
    )
    boxes.remainder_angle = max(TWO_PI - count * opening, 0.0)
    boxes.remainder_area = 0.5 * boxes.remainder_angle * (R**2 - r**2)
    return boxes


def box_bound_diagnostic(boxes: Sequence[Box], L: float) -> dict:
    """Check the nominal size bounds of a decomposition.

    Reports whether each arc length lies in ``(L/2, L)`` and whether the
    radial sides lie in ``(L, 2L)``. With ``R/L`` boxes the outer arc is
    close to ``2*pi*L``, so the arc bound is only expected to hold in special
    regimes; the result is informational.
    """
    arcs = np.array([b.arc_lengths() for b in boxes]).reshape(-1, 2)
    radial = np.array([b.radial_length() for b in boxes])
    arc_ok = (arcs > L / 2) & (arcs < L)
    rad_ok = (radial > L) & (radial < 2 * L)
    return {
        "inner_arc": arcs[:, 0].tolist(),
        "outer_arc": arcs[:, 1].tolist(),
        "radial": radial.tolist(),
        "arc_bound_holds": bool(arc_ok.all()),
        "radial_bound_holds": bool(rad_ok.all()),
    }


# ---------------------------------------------------------------------------
# pigeonhole selection and well separated families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySelection:
    residue: int
    achieved: float
    guaranteed: bool
    class_sums: np.ndarray = field(repr=False)


def select_family(discrepancies: Sequence[float], M: int, threshold: float) -> FamilySelection:
    """Pick the residue class modulo ``M`` with the largest total discrepancy.

    Ties go to the smallest residue. When the grand total is at least
    ``threshold * M`` the pigeonhole principle guarantees that the selected
    class reaches ``threshold``; ``guaranteed`` records whether that
    hypothesis held.
    """
    if not isinstance(M, (int, np.integer)) or M <= 0:
        raise ParameterError(f"M must be a positive integer, got {M!r}")
    d = np.asarray(discrepancies, dtype=float)
    if M > len(d):
        raise ParameterError(f"M={M} exceeds the number of boxes {len(d)}")
    idx = np.arange(len(d)) % M
    sums = np.bincount(idx, weights=d, minlength=M)
    l = int(np.argmax(sums))  # argmax returns the first maximiser
    total = float(d.sum())
    return FamilySelection(l, float(sums[l]), total >= threshold * M, sums)


@dataclass(frozen=True)
class WellSeparatedFamily:
    """Disks of a common radius around selected box centres.

    ``pair_distances[i, j]`` is the distance between disk ``i`` and disk
    ``j``, that is the distance of the centres minus twice the radius.
    """

    disks: tuple
    boxes: tuple = ()
    residue: int | None = None
    modulus: int | None = None
    pair_distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        disks = tuple(self.disks)
        object.__setattr__(self, "disks", disks)
        object.__setattr__(self, "boxes", tuple(self.boxes))
        c = np.array([d.center for d in disks], dtype=float).reshape(-1, 2)
        rad = np.array([d.radius for d in disks], dtype=float)
        gap = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        gap = gap - rad[:, None] - rad[None, :]
        gap = np.maximum(gap, 0.0)
        np.fill_diagonal(gap, 0.0)
        object.__setattr__(self, "pair_distances", gap)

    @property
    def centers(self) -> np.ndarray:
        return np.array([d.center for d in self.disks], dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.disks)

    def min_distance(self) -> float:
        n = len(self.disks)
        if n < 2:
            return math.inf
        d = self.pair_distances[~np.eye(n, dtype=bool)]
        return float(d.min())

    def is_disjoint(self) -> bool:
        n = len(self.disks)
        if n < 2:
            return True
        c = self.centers
        rad = np.array([d.radius for d in self.disks])
        cc = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        off = ~np.eye(n, dtype=bool)
        return bool(np.all(cc[off] > (rad[:, None] + rad[None, :])[off]))


def family_from_boxes(boxes: Sequence[Box], residue: int, M: int, T: float) -> WellSeparatedFamily:
    """Disks of radius ``T`` around the boxes of index ``residue (mod M)``."""
    chosen = [b for i, b in enumerate(boxes) if i % M == residue]
    disks = [Disk(tuple(b.reference_point), T) for b in chosen]
    return WellSeparatedFamily(tuple(disks), tuple(chosen), residue, M)


@dataclass(frozen=True)
class DistanceSums:
    per_disk: np.ndarray
    inverse_total: float
    inverse_square_total: float
    log_ratio: float | None = None
    square_ratio: float | None = None


def distance_sums(
    family: WellSeparatedFamily, M: float | None = None, L: float | None = None, R: float | None = None
) -> DistanceSums:
    """Harmonic sums of the mutual distances of a family.

    Returns ``sum_{j != i} 1/d_ij`` for each ``i`` together with the totals
    ``sum_{i != j} 1/d_ij`` and ``sum_{i != j} 1/d_ij**2``. When ``M``,
    ``L`` and ``R`` are given, the normalised ratios ``total * M L / log R``
    and ``total_sq * (M L)**2`` are filled in as well.
    """
    d = family.pair_distances
    n = len(d)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(d[off] <= 0):
        raise GeometryError("family contains overlapping or touching disks")
    inv = np.zeros_like(d)
    inv[off] = 1.0 / d[off]
    per = inv.sum(axis=1)
    tot = float(inv.sum())
    tot2 = float((inv**2).sum())
    lr = sr = None
    if M is not None and L is not None and R is not None:
        lr = tot * M * L / math.log(R)
        sr = tot2 * (M * L) ** 2
    return DistanceSums(per, tot, tot2, lr, sr)

