"""Experiment pipelines shared by the command line and the test-suite.

Every pipeline is a pure function of its arguments and an integer seed.
Child seeds are derived with :class:`numpy.random.SeedSequence`, so the
result of a pipeline does not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundMeasure
from .energy import PointConfiguration, subsystem_interaction
from .geometry import Disk, ParameterError, WellSeparatedFamily
from .sampler import (
    SamplerConfig,
    ginibre_sample,
    kostlan_count_variance,
    make_rng,
    poisson_sample,
    run_chain,
)
from .spinwave import (
    SpinWaveParams,
    divergence,
    err_ave,
    flow,
    flow_jacobian,
    h1_budget,
    psi_gamma_audit,
    spin_wave,
)
from .statistics import (
    AuditRow,
    LipschitzRamp,
    VarianceCurve,
    apriori_audit,
    number_variance,
)
from .transport import (
    PerturbedMeasureParams,
    RadialTestFunction,
    energy_delta_slope,
    mass_residual,
    psi_s_norm,
    pushforward_check,
)

__all__ = [
    "child_seeds",
    "scale_presets",
    "ginibre_samples",
    "poisson_samples",
    "ginibre_variance",
    "poisson_variance",
    "ChainVariance",
    "chain_variance",
    "ErrorCIInstance",
    "errorci_instance",
    "ErrorCISweep",
    "errorci_sweep",
    "default_apriori_functions",
    "apriori_suite",
    "spinwave_report",
    "transport_report",
    "log_log_slope",
]


def child_seeds(seed: int, n: int) -> list[int]:
    """``n`` independent 63-bit seeds derived from ``seed``."""
    ss = np.random.SeedSequence(int(seed))
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for s in ss.spawn(n)]


def _map(fn, items, threads: int = 1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# scale presets
# ---------------------------------------------------------------------------


def scale_presets(R: float, C: float = 1.0, **overrides) -> dict:
    """Mesoscopic parameters attached to a radius ``R``.

    The asymptotic choices are ``eps_R = log(R)^-0.3``,
    ``L = log(R)^0.99``, ``T = 100 L exp(10 L)``, ``M = T^6``,
    ``omega = L^-1.33`` and ``s = L^3 / (C R)``. At laboratory radii ``T``
    and ``M`` are astronomically large, so any key may be replaced through
    ``overrides``; the returned dictionary records which values were set by
    hand under ``"overridden"``.

    Parameters
    ----------
    R : float
        Radius of the disk whose discrepancy is studied, ``R > e``.
    C : float
        Constant in the choice of ``s``.
    """
    if not R > math.e:
        raise ParameterError("scale presets need R > e")
    lr = math.log(R)
    L = lr**0.99
    with np.errstate(over="ignore"):
        T = 100.0 * L * math.exp(min(10.0 * L, 700.0))
    out = {
        "R": float(R),
        "eps_R": lr**-0.3,
        "L": L,
        "T": T,
        "M": T**6 if T < 1e50 else math.inf,
        "omega": L**-1.33,
        "s": L**3 / (C * R),
    }
    bad = set(overrides) - set(out) - {"R"}
    if bad:
        raise ParameterError(f"unknown preset keys: {sorted(bad)}")
    for k, v in overrides.items():
        out[k] = float(v)
    if "T" in overrides and "M" not in overrides:
        out["M"] = out["T"] ** 6
    out["overridden"] = sorted(overrides)
    out["degenerate"] = bool(out["T"] > out["R"])
    return out


# ---------------------------------------------------------------------------
# exact ensembles
# ---------------------------------------------------------------------------


def ginibre_samples(N: int, n_samples: int, seed: int, threads: int = 1) -> list[PointConfiguration]:
    """Independent Ginibre configurations, ordered by child seed."""
    return _map(lambda s: ginibre_sample(N, s), child_seeds(seed, n_samples), threads)


def poisson_samples(intensity: float, radius: float, n_samples: int, seed: int) -> list[PointConfiguration]:
    """Poisson samples on ``D(0, radius)`` drawn from one seeded stream."""
    rng = make_rng(seed)
    region = Disk((0.0, 0.0), radius)
    return [poisson_sample(intensity, region, rng) for _ in range(n_samples)]


def ginibre_variance(
    N: int,
    n_samples: int,
    seed: int,
    radii=(4.0, 8.0, 16.0, 24.0),
    center=(0.0, 0.0),
    delta: float = 0.15,
    threads: int = 1,
    samples=None,
) -> VarianceCurve:
    """Number variance of Ginibre eigenvalues around ``center``."""
    if samples is None:
        samples = ginibre_samples(N, n_samples, seed, threads)
    domain = Disk((0.0, 0.0), math.sqrt(N / math.pi))
    return number_variance(samples, center, radii, domain=domain, N=N, delta=delta)


def poisson_variance(
    intensity: float,
    n_samples: int,
    seed: int,
    radii=(4.0, 8.0, 16.0, 24.0),
    radius: float | None = None,
) -> VarianceCurve:
    """Number variance of a homogeneous Poisson process around the origin."""
    radii = np.asarray(radii, dtype=float)
    radius = float(radii.max()) + 1.0 if radius is None else radius
    samples = poisson_samples(intensity, radius, n_samples, seed)
    # a homogeneous process has no edge layer: only require the disks to fit
    return number_variance(samples, (0.0, 0.0), radii, domain=Disk((0.0, 0.0), radius), N=intensity * math.pi * radius**2, delta=0.0)


# ---------------------------------------------------------------------------
# Metropolis chains
# ---------------------------------------------------------------------------


@dataclass
class ChainVariance:
    """Number variance measured along a Metropolis chain."""

    curve: VarianceCurve
    oracle: np.ndarray | None
    acceptance: float
    proposal_scale: float
    max_cache_error: float

    @property
    def relative_error(self) -> np.ndarray | None:
        if self.oracle is None:
            return None
        return np.abs(self.curve.variance / self.oracle - 1.0)


def chain_variance(
    beta: float,
    N: int,
    radii,
    sweeps: int,
    seed: int,
    center=(0.0, 0.0),
    delta: float = 0.15,
    burn_in: int | None = None,
    checkpoint=None,
    checkpoint_every: int = 0,
) -> ChainVariance:
    """Run one chain and estimate the number variance in disks around ``center``.

    At ``beta = 2`` the exact count variance of the Ginibre ensemble of the
    same size is returned as ``oracle``.
    """
    radii = np.asarray(radii, dtype=float)
    cen = np.asarray(center, dtype=float)
    r2 = radii**2

    def observe(p):
        d2 = np.sum((p - cen) ** 2, axis=1)
        return np.sum(d2[:, None] <= r2[None, :], axis=0)

    cfg = SamplerConfig(beta=beta, N=N, sweeps=sweeps, seed=seed, burn_in=burn_in)
    res = run_chain(cfg, observe=observe, checkpoint=checkpoint, checkpoint_every=checkpoint_every)
    counts = np.asarray(res.observations, dtype=float)
    curve = number_variance(None, center, radii, from_chain=True, domain=cfg.domain, N=N, delta=delta, counts=counts)
    oracle = kostlan_count_variance(N, radii) if beta == 2 and np.allclose(cen, 0.0) else None
    return ChainVariance(curve, oracle, res.acceptance, res.proposal_scale, res.max_cache_error)


# ---------------------------------------------------------------------------
# conditional independence error
# ---------------------------------------------------------------------------


@dataclass
class ErrorCIInstance:
    """A family of subsystem disks of radius ``T`` with their points."""

    T: float
    config: PointConfiguration
    family: WellSeparatedFamily
    bg: BackgroundMeasure
    counts: np.ndarray

    @property
    def inverse_distance_sum(self) -> float:
        """``sum_{i != j} 1 / d_ij`` over ordered pairs."""
        d = self.family.pair_distances
        off = ~np.eye(len(d), dtype=bool)
        return float(np.sum(1.0 / d[off]))

    @property
    def scale(self) -> float:
        return self.T**5 * self.inverse_distance_sum

    def error(self) -> float:
        return subsystem_interaction(self.config, self.bg, self.family).error


def _sector_points(rng, n: int, center, T: float) -> np.ndarray:
    """``n`` points clustered in a random sector and shell of ``D(center, T)``."""
    half = rng.uniform(np.pi / 16, np.pi)
    axis = rng.uniform(0, 2 * np.pi)
    a = rng.uniform(0.0, 0.9)
    th = axis + half * rng.uniform(-1, 1, n)
    r = T * np.sqrt(rng.uniform(a, 1.0, n)) * (1 - 1e-9)
    return np.asarray(center) + np.stack([r * np.cos(th), r * np.sin(th)], 1)


def errorci_instance(
    T: float,
    rng,
    n_sub: int | None = None,
    gap_range=(10.0, 30.0),
    fill: float = 10.0,
) -> ErrorCIInstance:
    """Random subsystem family with ``n_i <= fill T^2`` and gaps ``>= gap_range[0] T``.

    Points are packed into a random sector and shell of each disk, which
    makes the dipole moments large and the monopole approximation poor.
    Centres are added one at a time at a random gap from an existing disk
    and rejected when they come closer than ``gap_range[0] T`` to any disk.
    """
    rng = make_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    n_sub = int(rng.integers(2, 6)) if n_sub is None else int(n_sub)
    lo, hi = gap_range
    centers = [np.zeros(2)]
    while len(centers) < n_sub:
        anchor = centers[int(rng.integers(len(centers)))]
        ang = rng.uniform(0, 2 * np.pi)
        c = anchor + (2 * T + T * rng.uniform(lo, hi)) * np.array([np.cos(ang), np.sin(ang)])
        if all(np.hypot(*(c - d)) - 2 * T >= lo * T for d in centers):
            centers.append(c)
    disks = tuple(Disk(tuple(c), T) for c in centers)
    nmax = int(math.floor(fill * T * T))
    counts = rng.integers(0, nmax + 1, n_sub)
    pts = [_sector_points(rng, int(k), c, T) for k, c in zip(counts, centers)]
    X = PointConfiguration(np.vstack(pts) if len(pts) else np.zeros((0, 2)), None, check=False)
    cen = np.mean(centers, axis=0)
    reach = max(np.hypot(*(c - cen)) for c in centers) + T + 1.0
    bg = BackgroundMeasure(1.0, Disk(tuple(cen), reach))
    return ErrorCIInstance(float(T), X, WellSeparatedFamily(disks), bg, np.asarray(counts))


@dataclass
class ErrorCISweep:
    """Ratios ``ErrorCI / (T^5 sum 1/d_ij)`` grouped by ``T``."""

    Ts: tuple
    ratios: dict = field(default_factory=dict)

    def constant(self, T) -> float:
        return float(np.max(self.ratios[T]))

    @property
    def constants(self) -> np.ndarray:
        return np.array([self.constant(T) for T in self.Ts])

    @property
    def spread(self) -> float:
        c = self.constants
        return float(c.max() / c.min())

    def rows(self) -> list[tuple]:
        out = []
        for T in self.Ts:
            for k, r in enumerate(self.ratios[T]):
                out.append((T, k, float(r)))
        return out


def errorci_sweep(Ts=(2.0, 4.0, 8.0), n_instances: int = 100, seed: int = 0) -> ErrorCISweep:
    """Fitted ``ErrorCI`` constant for every ``T``: the maximal ratio over instances."""
    sweep = ErrorCISweep(tuple(float(t) for t in Ts))
    for T, s in zip(sweep.Ts, child_seeds(seed, len(sweep.Ts))):
        rng = make_rng(s)
        vals = []
        for _ in range(n_instances):
            inst = errorci_instance(T, rng)
            vals.append(inst.error() / inst.scale)
        sweep.ratios[T] = np.array(vals)
    return sweep


# ---------------------------------------------------------------------------
# a priori audit
# ---------------------------------------------------------------------------


def default_apriori_functions(radius: float) -> list[LipschitzRamp]:
    """Five radial ramps of different widths and centres inside ``D(0, radius)``."""
    r = float(radius)
    return [
        LipschitzRamp(0.0, 0.3 * r),
        LipschitzRamp(0.2 * r, 0.5 * r),
        LipschitzRamp(0.4 * r, 0.6 * r, height=2.0),
        LipschitzRamp(0.05 * r, 0.25 * r, center=(0.3 * r, 0.1 * r)),
        LipschitzRamp(0.5 * r, 0.8 * r, height=0.5),
    ]


def apriori_suite(samples, bg: BackgroundMeasure, functions=None, grid_h: float = 0.1, margin: float = 0.02) -> list[AuditRow]:
    """A priori fluctuation bound for every sample and test function."""
    if functions is None:
        functions = default_apriori_functions(bg.region.radius)
    return apriori_audit(samples, bg, functions, grid_h=grid_h, margin=margin)


# ---------------------------------------------------------------------------
# spin wave and transport reports
# ---------------------------------------------------------------------------


def log_log_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float))), 1)[0])


def spinwave_report(
    seed: int = 0,
    epsilons=(1 / 8, 1 / 12, 1 / 16),
    flow_epsilon: float = 0.7,
    ell: float = 1.0,
    n_points: int = 400,
    t_fractions=(0.05, 0.1, 0.2),
    n_configs: int = 8,
    ginibre_N: int = 1000,
) -> dict:
    """Numerical audit of the localized translation.

    Returns a dictionary with the keys ``divergence_max``,
    ``area_error_max``, ``psi_bound_violations``, ``h1_budget`` and
    ``erravet_slope`` plus the supporting measurements.
    """
    rng = make_rng(seed)
    out: dict = {}

    div = 0.0
    inner = 0.0
    for e in tuple(epsilons) + (flow_epsilon,):
        p = SpinWaveParams(e, ell)
        x = rng.uniform(-1.1, 1.1, (n_points, 2)) * p.support_radius
        div = max(div, float(np.max(np.abs(divergence(p, x)))))
        r = 0.5 * ell * np.sqrt(rng.random(n_points))
        th = rng.uniform(0, 2 * np.pi, n_points)
        w = spin_wave(p, np.stack([r * np.cos(th), r * np.sin(th)], 1))
        inner = max(inner, float(np.max(np.abs(w - [0.0, 1.0]))))
    out["divergence_max"] = div
    out["inner_translation_error"] = inner

    p = SpinWaveParams(flow_epsilon, ell)
    t = ell / 10
    x = rng.uniform(-1.1, 1.1, (n_points, 2)) * p.support_radius
    J = flow_jacobian(p, t, x)
    out["area_error_max"] = float(np.max(np.abs(np.linalg.det(J) - 1.0)))
    back = flow(p, -t, flow(p, t, x))
    out["reversibility_error"] = float(np.max(np.hypot(*(back - x).T)) / ell)
    aud = psi_gamma_audit(p, t, x)
    out["psi_bound_violations"] = int(aud.psi_violations)
    out["gamma_inner_max"] = float(aud.gamma_inner_max)

    ratios = {f"{e:.6g}": h1_budget(SpinWaveParams(e, ell)).ratio for e in epsilons}
    vals = np.array(list(ratios.values()))
    out["h1_budget"] = {"ratio_by_epsilon": ratios, "spread": float(vals.max() / vals.min())}

    ts = np.asarray(t_fractions, float) * ell / 10
    reach = 1.1 * p.support_radius
    vals = np.zeros((n_configs, len(ts)))
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), reach))
    for k, s in enumerate(child_seeds(seed, n_configs)):
        g = ginibre_sample(max(ginibre_N, int(math.pi * reach**2 * 1.5)), s).points
        X = PointConfiguration(g[np.hypot(*g.T) < reach], None, check=False)
        vals[k] = [err_ave(p, tt, X, bg) for tt in ts]
    med = np.median(np.abs(vals), axis=0)
    out["erravet_values"] = [float(v) for v in med]
    out["erravet_slope"] = log_log_slope(ts, med)
    return out


def transport_report(
    seed: int = 0,
    beta: float = 2.0,
    plateau=(2.0, 5.0),
    n_samples: int = 100_000,
    s_fractions=(1 / 8, 1 / 4, 1 / 2, 1.0),
    N: int = 100,
    sweeps: int = 300,
) -> dict:
    """Numerical audit of the radial rearrangement.

    Returns a dictionary with the keys ``ks_stat``, ``psi1_fit``,
    ``mass_residual`` and ``energy_delta_slope``.
    """
    phi = RadialTestFunction.plateau(*plateau)
    cap = PerturbedMeasureParams(0.0, beta, phi).s_cap
    P = PerturbedMeasureParams(cap, beta, phi)
    ks = pushforward_check(P, n_samples, seed)
    norms = {}
    for f in s_fractions:
        Q = PerturbedMeasureParams(f * cap, beta, phi)
        norms[f"{f:.6g}"] = psi_s_norm(Q) / (Q.s * phi.second_derivative_bound)
    v = np.array(list(norms.values()))
    cfg = SamplerConfig(beta=beta, N=N, sweeps=sweeps, seed=seed)
    x = run_chain(cfg, keep_configurations=True).configurations[-1]
    X = PointConfiguration(x, None, check=False)
    slope = energy_delta_slope(X, phi, beta, BackgroundMeasure.uniform_disk(N))
    return {
        "ks_stat": ks.statistic,
        "ks_pvalue": ks.pvalue,
        "ks_threshold": ks.threshold,
        "ks_passed": bool(ks.passed),
        "psi1_fit": {"ratio_by_s_fraction": norms, "spread": float(v.max() / v.min())},
        "mass_residual": mass_residual(P),
        "energy_delta_slope": slope,
        "s_cap": cap,
    }
