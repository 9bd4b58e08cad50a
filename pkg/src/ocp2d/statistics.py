"""
Point-process statistics and inequality audits.

Counting statistics (discrepancies, number variance, power-law fits,
tail probabilities) work on plain point arrays or
:class:`~ocp2d.energy.PointConfiguration` objects. The audits compare
sampled configurations against inequalities that hold for the plasma:
local laws for points and energy in squares, the ``WellSpread`` event,
small-ball (Wegner) estimates and the a priori bound on linear statistics
of Lipschitz test functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .background import BackgroundMeasure
from .energy import PointConfiguration, electric_energy, fluctuation, nn_truncation
from .geometry import Annulus, Disk, DomainRegion, ParameterError, Square

__all__ = [
    "BulkViolationWarning",
    "FitError",
    "discrepancy",
    "count_matrix",
    "integrated_autocorrelation_time",
    "VarianceCurve",
    "number_variance",
    "ScalingFit",
    "scaling_fit",
    "DiscrepancyProfile",
    "discrepancy_profile",
    "AnnulusCapture",
    "annulus_capture",
    "TailEstimate",
    "tail_estimate",
    "wilson_interval",
    "local_law_audit",
    "wellspread_check",
    "wegner_audit",
    "AprioriCheck",
    "apriori_check",
    "apriori_audit",
    "LipschitzRamp",
    "lattice_squares",
    "bulk_ok",
]

DEFAULT_BULK_MARGIN = 0.15
DEFAULT_CONFIDENCE = 0.90


class BulkViolationWarning(UserWarning):
    """A window is closer to the edge of the system than the bulk margin."""


class FitError(ValueError):
    """Too few usable points for a fit."""


def _points(sample) -> np.ndarray:
    if isinstance(sample, PointConfiguration):
        return sample.points
    return np.asarray(sample, dtype=float).reshape(-1, 2)


def discrepancy(config, omega: DomainRegion, bg: BackgroundMeasure | None = None) -> float:
    """``Pts(X, omega)`` minus the background mass of ``omega``.

    Without ``bg`` the background is the Lebesgue measure (density 1).
    """
    pts = _points(config)
    n = omega.count(pts) if len(pts) else 0
    mass = omega.area() if bg is None else bg.mass_in(omega)
    return float(n) - float(mass)


def count_matrix(samples, center, radii) -> np.ndarray:
    """Counts of points in ``D(center, R)`` for every sample and radius.

    Returns an integer array of shape ``(len(samples), len(radii))``.
    """
    c = np.asarray(center, dtype=float)
    r2 = np.asarray(radii, dtype=float) ** 2
    out = np.zeros((len(samples), len(r2)), dtype=np.int64)
    for i, s in enumerate(samples):
        p = _points(s)
        if len(p):
            d2 = np.sort(np.sum((p - c) ** 2, axis=1))
            out[i] = np.searchsorted(d2, r2, side="right")
    return out


def integrated_autocorrelation_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with an adaptive window.

    The window is the smallest ``M`` with ``M >= c * tau(M)``. A constant
    series has ``tau = 1``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n] / var
    tau = 1.0
    for m in range(1, n):
        tau = 1.0 + 2.0 * float(np.sum(ac[1 : m + 1]))
        if m >= c * tau:
            break
    return max(tau, 1.0)


def _block_jackknife_variance(x: np.ndarray, block: int) -> tuple[float, float]:
    """Unbiased variance of ``x`` and its jackknife standard error.

    Observations are grouped in consecutive blocks of length ``block``; one
    block is left out at a time.
    """
    n = len(x)
    var = float(np.var(x, ddof=1))
    nb = n // block
    if nb < 2:
        return var, float("nan")
    xs = x[: nb * block].reshape(nb, block)
    s1 = xs.sum(axis=1)
    s2 = (xs * xs).sum(axis=1)
    m = n - block
    t1 = x.sum() - s1
    t2 = (x * x).sum() - s2
    # leave-one-block-out estimates (the tail beyond nb*block is always kept)
    loo = (t2 - t1 * t1 / m) / (m - 1)
    se = math.sqrt((nb - 1) / nb * float(np.sum((loo - loo.mean()) ** 2)))
    return var, se


@dataclass
class VarianceCurve:
    """Number variance of ``Pts(D(center, R))`` as a function of ``R``."""

    radii: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    n_samples: int
    center_policy: str
    mean: np.ndarray = None
    tau: np.ndarray = None
    ess: np.ndarray = None
    bulk_ok: np.ndarray = None

    def rows(self):
        """Rows ``(R, var, stderr, ess)``."""
        return [(float(r), float(v), float(s), float(e)) for r, v, s, e in zip(self.radii, self.variance, self.stderr, self.ess)]


def bulk_ok(center, radii, domain: Disk, N: float, delta: float = DEFAULT_BULK_MARGIN) -> np.ndarray:
    """``dist(D(center, R), boundary) >= delta * sqrt(N)`` for each radius."""
    c = np.asarray(center, dtype=float)
    gap = domain.radius - np.hypot(*(c - np.asarray(domain.center, dtype=float))) - np.asarray(radii, dtype=float)
    return gap >= delta * math.sqrt(N)


def number_variance(
    samples,
    center,
    radii,
    from_chain: bool = False,
    domain: Disk | None = None,
    N: float | None = None,
    delta: float = DEFAULT_BULK_MARGIN,
    center_policy: str = "fixed",
    counts: np.ndarray | None = None,
) -> VarianceCurve:
    """Sample variance of the number of points in centred disks.

    Parameters
    ----------
    samples : sequence of configurations or (n, 2) arrays
    center : point
    radii : increasing sequence of float
    from_chain : bool
        The samples are consecutive states of one Markov chain. The standard
        error then uses blocks of the length of the integrated
        autocorrelation time, and the effective sample size is ``n / tau``.
    domain, N : optional
        System disk and particle number for the bulk check. By default they
        are taken from the first sample (its domain, or the disk of area
        ``N`` around the origin when it has none).
    delta : float
        Bulk margin; disks closer than ``delta * sqrt(N)`` to the boundary
        raise :class:`BulkViolationWarning` and are flagged.
    counts : (n, len(radii)) array, optional
        Precomputed disk counts. ``samples`` is then ignored except for the
        defaults of ``domain`` and ``N``, which must be given explicitly.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) == 0 or np.any(np.diff(radii) <= 0):
        raise ParameterError("radii must be strictly increasing")
    if counts is not None:
        counts = np.asarray(counts, dtype=float).reshape(-1, len(radii))
        if domain is None or N is None:
            raise ParameterError("precomputed counts need explicit domain and N")
    elif len(samples) < 2:
        raise ParameterError("need at least two samples")
    if counts is not None and len(counts) < 2:
        raise ParameterError("need at least two samples")
    first = samples[0] if counts is None else None
    if N is None:
        N = float(len(_points(first)))
    if domain is None:
        dom = getattr(first, "domain", None)
        domain = dom if isinstance(dom, Disk) else Disk((0.0, 0.0), math.sqrt(max(N, 1.0) / math.pi))
    ok = bulk_ok(center, radii, domain, N, delta)
    if not ok.all():
        warnings.warn(
            f"disks of radius {radii[~ok].tolist()} leave the bulk (margin {delta} sqrt(N))",
            BulkViolationWarning,
            stacklevel=2,
        )
    if counts is None:
        counts = count_matrix(samples, center, radii).astype(float)
    n = len(counts)
    var = np.empty(len(radii))
    se = np.empty(len(radii))
    tau = np.ones(len(radii))
    for j in range(len(radii)):
        x = counts[:, j]
        if from_chain:
            tau[j] = integrated_autocorrelation_time(x)
            # the variance estimator involves squared deviations; block on the
            # slower of the two series
            tau[j] = max(tau[j], integrated_autocorrelation_time((x - x.mean()) ** 2))
        block = max(1, int(math.ceil(tau[j]))) if from_chain else 1
        var[j], se[j] = _block_jackknife_variance(x, block)
    return VarianceCurve(
        radii=radii,
        variance=var,
        stderr=se,
        n_samples=n,
        center_policy=center_policy,
        mean=counts.mean(axis=0),
        tau=tau,
        ess=n / tau,
        bulk_ok=ok,
    )


@dataclass
class ScalingFit:
    """``Var ~ c R^gamma`` fitted on log-log axes."""

    gamma: float
    c: float
    residual: float
    gamma_ci: tuple[float, float]
    used: int


def scaling_fit(curve: VarianceCurve, confidence: float = 0.95) -> ScalingFit:
    """Least squares fit of ``log Var = log c + gamma log R``.

    Nonpositive variances are dropped; fewer than three remaining radii
    raise :class:`FitError`. The confidence interval for ``gamma`` uses the
    Student distribution with ``n - 2`` degrees of freedom.
    """
    r = np.asarray(curve.radii, dtype=float)
    v = np.asarray(curve.variance, dtype=float)
    keep = v > 0
    if keep.sum() < 3:
        raise FitError("fewer than three positive variance values")
    x, y = np.log(r[keep]), np.log(v[keep])
    res = stats.linregress(x, y)
    pred = res.intercept + res.slope * x
    resid = float(np.sqrt(np.mean((y - pred) ** 2)))
    q = stats.t.ppf(0.5 + confidence / 2, len(x) - 2)
    half = float(q * res.stderr)
    return ScalingFit(float(res.slope), float(math.exp(res.intercept)), resid, (res.slope - half, res.slope + half), int(keep.sum()))


# ---------------------------------------------------------------------------
# discrepancy in growing disks
# ---------------------------------------------------------------------------


@dataclass
class DiscrepancyProfile:
    """``r -> Dis(D(center, r))`` on a grid, with the sorted point radii."""

    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    point_radii: np.ndarray

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.searchsorted(self.point_radii, r, side="right") - math.pi * r * r

    def left_limit(self, r):
        r = np.asarray(r, dtype=float)
        return np.searchsorted(self.point_radii, r, side="left") - math.pi * r * r

    def as_dict(self) -> dict:
        return dict(zip(self.radii.tolist(), self.values.tolist()))


def discrepancy_profile(config, center, r_grid) -> DiscrepancyProfile:
    """Discrepancy of the disks ``D(center, r)`` against density 1.

    Between two point radii the profile decreases like ``-pi r^2``; it jumps
    by one at every point radius (disks are closed).
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) < 0):
        raise ParameterError("r_grid must be increasing")
    c = np.asarray(center, dtype=float)
    pts = _points(config)
    pr = np.sort(np.hypot(*(pts - c).T)) if len(pts) else np.zeros(0)
    prof = DiscrepancyProfile(c, r_grid, np.zeros(len(r_grid)), pr)
    prof.values = prof(r_grid).astype(float)
    return prof


@dataclass
class AnnulusCapture:
    k: int
    annulus: Annulus
    captured: float
    radius_found: float
    sign: int


def annulus_capture(config, center, R: float, L: float, eps: float) -> AnnulusCapture | None:
    """Locate a thin annulus near ``D(center, R)`` carrying discrepancy.

    Suppose ``Dis(D_R) >= eps R``. If some ``r`` in ``[R - 2L, R - L]`` has
    ``Dis(D_r) < eps R / 2`` (the first such ``r`` is used), the annulus
    ``D_R \\ D_r`` carries more than ``eps R / 2``. Radii are then
    discretised as ``r_k = R - 2L + k L / R^2`` and the smallest integer
    ``k`` in ``[0, R^2]`` with ``r_k <= r`` and
    ``Dis(D_R \\ D_{r_k}) >= eps R / 4`` is returned together with the
    annulus and its recounted discrepancy.

    When ``Dis(D_R) <= -eps R`` the mirror statement is used: the first
    ``r`` with ``Dis(D_r) > -eps R / 2``, then the smallest ``k`` with
    ``r_k >= r`` and ``Dis(D_R \\ D_{r_k}) <= -eps R / 4``.

    Returns ``None`` when neither hypothesis holds.
    """
    if not (R > 0 and L > 0 and eps > 0):
        raise ParameterError("R, L and eps must be positive")
    if not R > 2 * L:
        raise ParameterError("need R > 2L")
    prof = discrepancy_profile(config, center, [R])
    dR = float(prof.values[0])
    if dR >= eps * R:
        sign = 1
    elif dR <= -eps * R:
        sign = -1
    else:
        return None
    lo, hi = R - 2 * L, R - L
    # candidate radii: a fine grid together with both one-sided limits at
    # every point radius in the window
    jumps = prof.point_radii[(prof.point_radii >= lo) & (prof.point_radii <= hi)]
    grid = np.unique(np.concatenate([np.linspace(lo, hi, 2001), jumps]))
    left = prof.left_limit(grid)
    right = prof(grid)
    half = 0.5 * eps * R
    ok_left = sign * left < half
    ok_right = sign * right < half
    hit = np.nonzero(ok_left | ok_right)[0]
    if len(hit) == 0:
        return None
    j = hit[0]
    r = float(grid[j])
    if not ok_right[j]:
        # only the limit from below qualifies: step just inside the jump
        r = float(np.nextafter(r, -np.inf))
    kmax = int(math.floor(R * R))
    ks = np.arange(kmax + 1)
    rk = lo + ks * L / (R * R)
    ann = dR - prof(rk)
    if sign > 0:
        ok = (rk <= r) & (ann >= 0.25 * eps * R)
    else:
        ok = (rk >= r) & (ann <= -0.25 * eps * R)
    if not ok.any():
        return None
    k = int(ks[np.argmax(ok)])
    a = Annulus(tuple(np.asarray(center, dtype=float)), float(rk[k]), float(R))
    pts = _points(config)
    # direct recount on the half-open annulus D_R minus D_{r_k}
    d = np.hypot(*(pts - np.asarray(center, dtype=float)).T) if len(pts) else np.zeros(0)
    captured = float(np.sum((d > rk[k]) & (d <= R))) - math.pi * (R * R - rk[k] ** 2)
    return AnnulusCapture(k, a, captured, r, sign)


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------


def wilson_interval(k: int, n: int, confidence: float = DEFAULT_CONFIDENCE) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TailEstimate:
    thresholds: np.ndarray
    exceed_prob: np.ndarray
    wilson_ci: list
    n: int

    def rows(self):
        """Rows ``(threshold, p, lo, hi)``."""
        return [(float(t), float(p), lo, hi) for t, p, (lo, hi) in zip(self.thresholds, self.exceed_prob, self.wilson_ci)]


def tail_estimate(samples, omega: DomainRegion, thresholds, bg: BackgroundMeasure | None = None, confidence: float = DEFAULT_CONFIDENCE) -> TailEstimate:
    """Empirical ``P(|Dis(X, omega)| >= t)`` with Wilson intervals.

    With the default two-sided level 0.90 the upper end of the interval
    for zero exceedances is about ``2.7 / n``, below the rule of three.
    """
    if len(samples) < 100:
        raise ParameterError("tail estimation needs at least 100 samples")
    t = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ParameterError("thresholds must be increasing")
    mass = omega.area() if bg is None else bg.mass_in(omega)
    dis = np.array([abs(float(omega.count(_points(s))) - mass) for s in samples])
    n = len(dis)
    k = np.array([int(np.sum(dis >= x)) for x in t])
    return TailEstimate(t, k / n, [wilson_interval(int(kk), n, confidence) for kk in k], n)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


@dataclass
class AuditRow:
    check: str
    region_id: str
    value: float
    bound: float
    passed: bool


@dataclass
class LocalLawReport:
    rows: list = field(default_factory=list)
    pts_freq: np.ndarray = None
    ener_freq: np.ndarray = None
    reference: np.ndarray = None
    dis_moment: np.ndarray = None


def local_law_audit(
    samples,
    squares: Sequence[Square],
    C_beta: float,
    bg: BackgroundMeasure | None = None,
    beta: float = 2.0,
    energy: bool = True,
    grid_h: float = 0.1,
) -> LocalLawReport:
    """Frequencies of ``Pts > C l^2`` and ``Ener > C l^2`` per square.

    Each frequency is compared against ``exp(-l^2 / C)``; a square passes
    when the frequency does not exceed the reference. This is a diagnostic:
    the inequality is only claimed for ``C`` large enough. The empirical
    moment ``E[exp(beta Dis^2 / (C l^2))]`` is reported as well.
    """
    if not C_beta > 0:
        raise ParameterError("C_beta must be positive")
    ns = len(samples)
    pf = np.zeros(len(squares))
    ef = np.zeros(len(squares))
    ref = np.zeros(len(squares))
    mom = np.zeros(len(squares))
    for q, sq in enumerate(squares):
        l2 = sq.side**2
        ref[q] = math.exp(-l2 / C_beta)
        mass = sq.area() if bg is None else bg.mass_in(sq)
        over_p = over_e = 0
        acc = 0.0
        for s in samples:
            pts = _points(s)
            n_in = sq.count(pts) if len(pts) else 0
            over_p += n_in > C_beta * l2
            acc += math.exp(min(beta * (n_in - mass) ** 2 / (C_beta * l2), 700.0))
            if energy and bg is not None:
                cfg = s if isinstance(s, PointConfiguration) else PointConfiguration(pts, None, check=False)
                e = electric_energy(cfg, bg, nn_truncation(cfg), sq, grid_h=grid_h)
                over_e += e > C_beta * l2
        pf[q] = over_p / ns
        ef[q] = over_e / ns
        mom[q] = acc / ns
    rep = LocalLawReport(pts_freq=pf, ener_freq=ef, reference=ref, dis_moment=mom)
    for q in range(len(squares)):
        rep.rows.append(AuditRow("local_law_pts", f"square{q}", float(pf[q]), float(ref[q]), bool(pf[q] <= ref[q])))
        if energy and bg is not None:
            rep.rows.append(AuditRow("local_law_ener", f"square{q}", float(ef[q]), float(ref[q]), bool(ef[q] <= ref[q])))
        rep.rows.append(AuditRow("dis_moment", f"square{q}", float(mom[q]), float("inf"), bool(np.isfinite(mom[q]))))
    return rep


@dataclass
class WellSpreadResult:
    ok: bool
    table: list
    offending: list


def lattice_squares(omega: DomainRegion, ell: float) -> list[Square]:
    """Squares ``square(x, ell)`` for ``x`` in ``(ell Z)^2`` inside ``omega``."""
    x0, x1, y0, y1 = omega.bounding_box()
    xs = ell * np.arange(math.ceil(x0 / ell), math.floor(x1 / ell) + 1)
    ys = ell * np.arange(math.ceil(y0 / ell), math.floor(y1 / ell) + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    c = np.stack([X.ravel(), Y.ravel()], 1)
    if len(c) == 0:
        return []
    c = c[omega.contains(c)]
    return [Square((float(a), float(b)), float(ell)) for a, b in c]


def wellspread_check(config, omega: DomainRegion, ell: float, K: float, bg: BackgroundMeasure, grid_h: float = 0.1) -> WellSpreadResult:
    """Test the event that every lattice square has few points and little energy.

    For each ``x`` in ``(ell Z)^2`` inside ``omega`` the square of centre
    ``x`` and side ``ell`` must have ``Pts <= K ell^2`` and
    ``Ener <= K ell^2``, with ``Ener`` the electric energy for the
    nearest-neighbour truncation.
    """
    if ell < 1:
        raise ParameterError("ell must be at least 1")
    if K < 10:
        raise ParameterError("K must be at least 10")
    cfg = config if isinstance(config, PointConfiguration) else PointConfiguration(config, None, check=False)
    trunc = nn_truncation(cfg)
    bound = K * ell * ell
    table = []
    offending = []
    for q, sq in enumerate(lattice_squares(omega, ell)):
        n_in = cfg.count(sq) if len(cfg) else 0
        if n_in > bound:
            e = float("nan")  # already failing; skip the quadrature
        else:
            e = electric_energy(cfg, bg, trunc, sq, grid_h=grid_h)
        ok = n_in <= bound and e <= bound
        row = {"square": q, "center": sq.center, "pts": int(n_in), "ener": e, "bound": bound, "pass": bool(ok)}
        table.append(row)
        if not ok:
            offending.append(row)
    return WellSpreadResult(not offending, table, offending)


@dataclass
class WegnerRow:
    radius: float
    hits: int
    trials: int
    prob: float
    ci: tuple[float, float]
    ratio: float
    ratio_ci: tuple[float, float]


@dataclass
class WegnerReport:
    rows: list
    max_ratio: float
    growing: bool


def wegner_audit(samples, disks: Sequence[Disk], confidence: float = DEFAULT_CONFIDENCE) -> WegnerReport:
    """Estimate ``P(Pts(D(x, r)) >= 1) / r^2`` for small disks.

    Disks with the same radius are pooled over all samples. ``growing`` is
    set when the ratio confidence interval at the smallest radius lies
    entirely above the interval at the largest radius, which would indicate
    a probability decaying slower than ``r^2``.
    """
    by_r: dict[float, list[Disk]] = {}
    for d in disks:
        by_r.setdefault(float(d.radius), []).append(d)
    rows = []
    for r in sorted(by_r):
        hits = trials = 0
        for s in samples:
            pts = _points(s)
            for d in by_r[r]:
                trials += 1
                hits += bool(len(pts)) and d.count(pts) >= 1
        lo, hi = wilson_interval(hits, trials, confidence)
        p = hits / trials
        rows.append(WegnerRow(r, hits, trials, p, (lo, hi), p / r**2, (lo / r**2, hi / r**2)))
    max_ratio = max((w.ratio for w in rows), default=0.0)
    growing = len(rows) >= 2 and rows[0].ratio_ci[0] > rows[-1].ratio_ci[1]
    return WegnerReport(rows, max_ratio, growing)


@dataclass
class AprioriCheck:
    """One evaluation of the a priori bound on a linear statistic."""

    lhs: float
    rhs: float
    grad_term: float
    energy: float
    lip_term: float
    margin: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    @property
    def holds(self) -> bool:
        return self.lhs <= (1.0 + self.margin) * self.rhs


@dataclass
class LipschitzRamp:
    """C^1 radial plateau: 1 on ``r <= a``, 0 on ``r >= b``, cosine in between.

    ``center`` may differ from the background centre; then the fluctuation
    is integrated on a 2D rule instead of radially.
    """

    a: float
    b: float
    center: tuple = (0.0, 0.0)
    height: float = 1.0

    def __post_init__(self):
        if not (0 <= self.a < self.b):
            raise ParameterError("need 0 <= a < b")

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.a) / (self.b - self.a), 0.0, 1.0)
        return self.height * 0.5 * (1.0 + np.cos(math.pi * t))

    def dprofile(self, r):
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.a) / (self.b - self.a), 0.0, 1.0)
        inside = (r > self.a) & (r < self.b)
        return np.where(inside, -self.height * 0.5 * math.pi / (self.b - self.a) * np.sin(math.pi * t), 0.0)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.profile(np.hypot(*(x - np.asarray(self.center)).T))

    @property
    def lipschitz(self) -> float:
        return self.height * 0.5 * math.pi / (self.b - self.a)

    @property
    def dirichlet(self) -> float:
        """``int |grad phi|^2``, by Gauss quadrature in the radius."""
        u, w = np.polynomial.legendre.leggauss(64)
        r = self.a + (self.b - self.a) * 0.5 * (u + 1)
        return float(np.sum(0.5 * (self.b - self.a) * w * 2 * math.pi * r * self.dprofile(r) ** 2))

    def gradient_support(self) -> Annulus:
        return Annulus(tuple(self.center), self.a, self.b)


def apriori_check(
    config,
    bg: BackgroundMeasure,
    phi: LipschitzRamp,
    omega: DomainRegion | None = None,
    grid_h: float = 0.1,
    margin: float = 0.02,
) -> AprioriCheck:
    """Evaluate the a priori bound on ``int phi d(X - m)``.

    The bound reads ``(int |grad phi|^2)^(1/2) (int_omega |E_r|^2)^(1/2)
    + |phi|_1 Pts(X, omega)``, where ``E_r`` is the electric field truncated
    at the nearest-neighbour distances and ``omega`` contains the
    1-neighbourhood of the support of ``grad phi`` (by default the annulus
    ``a - 1 <= |x - c| <= b + 1``). ``margin`` is the relative slack
    allowed for quadrature error.
    """
    cfg = config if isinstance(config, PointConfiguration) else PointConfiguration(config, None, check=False)
    if omega is None:
        omega = Annulus(tuple(phi.center), max(phi.a - 1.0, 0.0), phi.b + 1.0)
    c = np.asarray(phi.center, dtype=float)
    if bg.is_uniform and bg.radial_profile is None and np.allclose(c, bg.region.center):
        lhs = abs(fluctuation(cfg, bg, phi.profile, radial=True, breakpoints=(phi.a, phi.b), n=48))
    else:
        lhs = abs(fluctuation(cfg, bg, phi, n=96))
    ener = electric_energy(cfg, bg, nn_truncation(cfg), omega, grid_h=grid_h)
    grad = math.sqrt(phi.dirichlet) * math.sqrt(ener)
    lip = phi.lipschitz * (cfg.count(omega) if len(cfg) else 0)
    return AprioriCheck(lhs, grad + lip, grad, ener, lip, margin)


def apriori_audit(samples, bg: BackgroundMeasure, functions: Sequence[LipschitzRamp], grid_h: float = 0.1, margin: float = 0.02) -> list[AuditRow]:
    """Run :func:`apriori_check` for every sample and test function."""
    rows = []
    for i, s in enumerate(samples):
        for j, f in enumerate(functions):
            chk = apriori_check(s, bg, f, grid_h=grid_h, margin=margin)
            rows.append(AuditRow("apriori", f"sample{i}/phi{j}", chk.lhs, (1 + margin) * chk.rhs, chk.holds))
    return rows
