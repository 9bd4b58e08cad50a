"""
Samplers for the one-component plasma and its reference ensembles.

* :func:`metropolis_sweep` and :func:`run_chain` simulate the Gibbs measure
  ``exp(-beta F_N)`` of ``N`` charges confined to the disk of area ``N``
  with a uniform neutralising background. Moves are single-particle
  Gaussian proposals; per-point pair sums are cached so that a proposal
  costs ``O(N)``.
* :func:`sample_subsystem` runs the same kind of chain on ``n`` points in a
  disk with an external potential and an optional confinement term.
* :func:`ginibre_sample` returns eigenvalues of a complex Gaussian matrix
  rescaled to unit density, the exactly solvable ``beta = 2`` case, and
  :func:`kostlan_count_variance` gives the exact number variance of centred
  disks for that ensemble.
* :func:`poisson_sample` is the uncorrelated baseline.

Randomness comes from ``numpy.random.Generator(Philox(seed))``. Its state
is a plain dictionary, so chain checkpoints are JSON files and resuming a
chain reproduces the uninterrupted run bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg
from numba import njit
from scipy.special import gammainc

from . import _kernels as K
from .background import BackgroundMeasure
from .energy import PointConfiguration, interaction_energy
from .geometry import Disk, DomainRegion, ParameterError

__all__ = [
    "RNG_ALGORITHM",
    "make_rng",
    "CacheDriftError",
    "DegenerateMeasureError",
    "SamplerConfig",
    "ChainState",
    "metropolis_sweep",
    "ChainResult",
    "run_chain",
    "spiral_configuration",
    "sample_subsystem",
    "ginibre_sample",
    "kostlan_count_variance",
    "poisson_sample",
]

RNG_ALGORITHM = "numpy.random.Philox"


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


class CacheDriftError(RuntimeError):
    """The incremental pair-sum cache disagrees with a full recomputation."""


class DegenerateMeasureError(ValueError):
    """The target density vanishes everywhere."""


@dataclass
class SamplerConfig:
    """Parameters of a Metropolis run.

    ``burn_in`` defaults to ``ceil(50 * beta)`` sweeps, i.e. fifty proposals
    per particle per unit of ``beta``. During burn-in the proposal scale is
    adapted towards an acceptance rate in ``[0.3, 0.5]``; afterwards it is
    frozen.
    """

    beta: float
    N: int
    proposal_scale: float = 0.5
    sweeps: int = 1000
    burn_in: int | None = None
    thin: int = 1
    seed: int = 0
    tune: bool = True
    audit_every: int = 500
    radius: float | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if self.N < 1:
            raise ParameterError("N must be at least 1")
        if self.burn_in is None:
            self.burn_in = int(math.ceil(50 * self.beta))
        if not self.proposal_scale > 0:
            raise ParameterError("proposal_scale must be positive")
        if not (self.sweeps >= self.burn_in >= 0):
            raise ParameterError("need sweeps >= burn_in >= 0")
        if self.thin < 1:
            raise ParameterError("thin must be at least 1")
        if self.radius is None:
            self.radius = math.sqrt(self.N / math.pi)

    @property
    def domain(self) -> Disk:
        return Disk((0.0, 0.0), self.radius)


# ---------------------------------------------------------------------------
# compiled sweep
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sweep_kernel(pos, cache, beta, sigma, R, bg_coef, gauss, unif, scratch):
    """One sequential sweep; returns the number of accepted moves.

    The background term of a point at ``x`` inside the disk is
    ``bg_coef * |x|^2`` up to a constant.
    """
    n = pos.shape[0]
    acc = 0
    R2 = R * R
    for i in range(n):
        ox = pos[i, 0]
        oy = pos[i, 1]
        nx = ox + sigma * gauss[i, 0]
        ny = oy + sigma * gauss[i, 1]
        nr2 = nx * nx + ny * ny
        if nr2 > R2:
            continue
        s = 0.0
        for j in range(n):
            if j == i:
                scratch[j] = 0.0
                continue
            dx = nx - pos[j, 0]
            dy = ny - pos[j, 1]
            v = -0.5 * math.log(dx * dx + dy * dy)
            scratch[j] = v
            s += v
        dF = s - cache[i] + bg_coef * (nr2 - (ox * ox + oy * oy))
        if dF <= 0.0 or unif[i] < math.exp(-beta * dF):
            for j in range(n):
                if j == i:
                    continue
                dx = ox - pos[j, 0]
                dy = oy - pos[j, 1]
                cache[j] += scratch[j] + 0.5 * math.log(dx * dx + dy * dy)
            cache[i] = s
            pos[i, 0] = nx
            pos[i, 1] = ny
            acc += 1
    return acc


@njit(cache=True)
def _single_pair_delta(pos, i, nx, ny):
    """``sum_{j != i} -log|new - x_j| + log|x_i - x_j|``."""
    s = 0.0
    ox = pos[i, 0]
    oy = pos[i, 1]
    for j in range(pos.shape[0]):
        if j == i:
            continue
        dx = nx - pos[j, 0]
        dy = ny - pos[j, 1]
        ex = ox - pos[j, 0]
        ey = oy - pos[j, 1]
        s += 0.5 * math.log((ex * ex + ey * ey) / (dx * dx + dy * dy))
    return s


# ---------------------------------------------------------------------------
# chain state
# ---------------------------------------------------------------------------


@dataclass
class ChainState:
    positions: np.ndarray
    cache: np.ndarray
    rng: np.random.Generator
    proposal_scale: float
    sweep_index: int = 0
    accepted: int = 0
    proposed: int = 0
    max_cache_error: float = 0.0

    @classmethod
    def start(cls, cfg: SamplerConfig, init=None) -> "ChainState":
        rng = make_rng(cfg.seed)
        pos = spiral_configuration(cfg.N, cfg.radius) if init is None else np.array(init, dtype=float).reshape(-1, 2)
        if len(pos) != cfg.N:
            raise ParameterError("initial configuration has the wrong size")
        if np.any(np.hypot(pos[:, 0], pos[:, 1]) > cfg.radius):
            raise ParameterError("initial configuration leaves the domain")
        pos = np.ascontiguousarray(pos)
        return cls(pos, K.per_point_log_sums(pos), rng, float(cfg.proposal_scale))

    @property
    def acceptance(self) -> float:
        return self.accepted / max(self.proposed, 1)

    def configuration(self, cfg: SamplerConfig) -> PointConfiguration:
        return PointConfiguration(self.positions.copy(), cfg.domain, check=False)

    def energy(self, cfg: SamplerConfig) -> float:
        """``F_N`` of the current state, from the cache."""
        bg = BackgroundMeasure.uniform_disk(cfg.N)
        return 0.5 * float(self.cache.sum()) - float(np.sum(bg.potential(self.positions))) + bg.self_energy()

    def audit(self) -> float:
        """Compare the cache with a full recomputation and resynchronise."""
        exact = K.per_point_log_sums(self.positions)
        scale = np.maximum(np.abs(exact), 1.0)
        err = float(np.max(np.abs(self.cache - exact) / scale)) if len(exact) else 0.0
        self.max_cache_error = max(self.max_cache_error, err)
        if err > 1e-9:
            raise CacheDriftError(f"cache relative error {err:.3e} exceeds 1e-9")
        self.cache[:] = exact
        return err

    def cache_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.cache).tobytes()).hexdigest()

    def to_checkpoint(self) -> dict:
        return {
            "sweep_index": self.sweep_index,
            "positions": self.positions.tolist(),
            "rng_algorithm": RNG_ALGORITHM,
            "rng_state": _jsonable(self.rng.bit_generator.state),
            "proposal_scale": self.proposal_scale,
            "accepted": self.accepted,
            "proposed": self.proposed,
            "cache_digest": self.cache_digest(),
        }

    @classmethod
    def from_checkpoint(cls, rec: dict) -> "ChainState":
        pos = np.ascontiguousarray(np.array(rec["positions"], dtype=float).reshape(-1, 2))
        bitgen = np.random.Philox()
        bitgen.state = _from_jsonable(rec["rng_state"])
        st = cls(pos, K.per_point_log_sums(pos), np.random.Generator(bitgen), float(rec["proposal_scale"]))
        st.sweep_index = int(rec["sweep_index"])
        st.accepted = int(rec["accepted"])
        st.proposed = int(rec["proposed"])
        return st


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def spiral_configuration(N: int, radius: float) -> np.ndarray:
    """Evenly spread starting configuration (sunflower spiral)."""
    k = np.arange(N)
    r = radius * np.sqrt((k + 0.5) / N)
    th = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.ascontiguousarray(np.stack([r * np.cos(th), r * np.sin(th)], 1))


def metropolis_sweep(state: ChainState, cfg: SamplerConfig) -> ChainState:
    """Propose one Gaussian move per particle, in index order.

    Proposals leaving the disk are rejected. Otherwise the move is accepted
    with probability ``min(1, exp(-beta dF))``, where ``dF`` is obtained in
    ``O(N)`` from the cached pair sums. The state is updated in place and
    returned.
    """
    n = len(state.positions)
    gauss = state.rng.standard_normal((n, 2))
    unif = state.rng.random(n)
    scratch = np.empty(n)
    acc = _sweep_kernel(
        state.positions, state.cache, cfg.beta, state.proposal_scale, cfg.radius, 0.5 * math.pi, gauss, unif, scratch
    )
    state.accepted += int(acc)
    state.proposed += n
    state.sweep_index += 1
    if cfg.audit_every and state.sweep_index % cfg.audit_every == 0:
        state.audit()
    return state


@dataclass
class ChainResult:
    observations: list = field(default_factory=list)
    configurations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    acceptance: float = 0.0
    proposal_scale: float = 0.0
    max_cache_error: float = 0.0
    sweeps_done: int = 0
    state: "ChainState | None" = None


def run_chain(
    cfg: SamplerConfig,
    observe: Callable[[np.ndarray], object] | None = None,
    keep_configurations: bool = False,
    record_energy: bool = False,
    init=None,
    state: ChainState | None = None,
    checkpoint: str | Path | None = None,
    checkpoint_every: int = 0,
    stop_after: int | None = None,
) -> ChainResult:
    """Run burn-in followed by production sweeps.

    After burn-in, every ``thin``-th sweep calls ``observe(positions)`` and
    stores the result; configurations and energies can be kept as well.
    ``checkpoint`` is written every ``checkpoint_every`` sweeps and when the
    run is interrupted. ``stop_after`` ends the run early at a given sweep
    index (used to test resumption).
    """
    st = state if state is not None else ChainState.start(cfg, init)
    res = ChainResult()
    window_acc = 0
    window_prop = 0
    try:
        while st.sweep_index < cfg.sweeps:
            if stop_after is not None and st.sweep_index >= stop_after:
                break
            a0, p0 = st.accepted, st.proposed
            metropolis_sweep(st, cfg)
            i = st.sweep_index
            if i <= cfg.burn_in and cfg.tune:
                window_acc += st.accepted - a0
                window_prop += st.proposed - p0
                if i % 10 == 0 and window_prop:
                    rate = window_acc / window_prop
                    if rate < 0.3 or rate > 0.5:
                        st.proposal_scale *= math.exp(rate - 0.4)
                    window_acc = window_prop = 0
                if i == cfg.burn_in:
                    st.accepted = st.proposed = 0
            elif i > cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
                if observe is not None:
                    res.observations.append(observe(st.positions))
                if keep_configurations:
                    res.configurations.append(st.positions.copy())
                if record_energy:
                    res.energies.append(st.energy(cfg))
            if checkpoint is not None and checkpoint_every and i % checkpoint_every == 0:
                write_checkpoint(st, checkpoint)
    except KeyboardInterrupt:
        if checkpoint is not None:
            write_checkpoint(st, checkpoint)
        raise
    res.acceptance = st.acceptance
    res.proposal_scale = st.proposal_scale
    res.max_cache_error = st.max_cache_error
    res.sweeps_done = st.sweep_index
    res.state = st
    return res


def write_checkpoint(state: ChainState, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(state.to_checkpoint()))
    tmp.replace(path)


def read_checkpoint(path) -> ChainState:
    return ChainState.from_checkpoint(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# subsystem sampler
# ---------------------------------------------------------------------------


def sample_subsystem(
    n: int,
    region: Disk,
    vext: Callable[[np.ndarray], np.ndarray] | None,
    bg: BackgroundMeasure,
    confinement: Callable[[np.ndarray], np.ndarray] | None,
    cfg: SamplerConfig,
    init=None,
    observe: Callable | None = None,
) -> ChainResult:
    """Metropolis chain for ``n`` points in ``region`` with an external field.

    The target density is proportional to
    ``exp(-beta (F(X, bg) + sum_i V(x_i) + sum_i zeta(x_i)))`` with hard walls
    at the boundary of ``region``. ``vext`` and ``confinement`` map an
    (m, 2) array to m values and may return ``inf`` to forbid positions.
    ``cfg.N`` and ``cfg.radius`` are ignored; the other fields apply.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")

    def one_body(x):
        x = np.atleast_2d(x)
        v = -bg.potential(x)
        if vext is not None:
            v = v + np.asarray(vext(x), dtype=float)
        if confinement is not None:
            v = v + np.asarray(confinement(x), dtype=float)
        return v

    rng = make_rng(cfg.seed)
    c = np.asarray(region.center, dtype=float)
    rr = region.radius * 0.9 * np.sqrt(rng.random(256))
    th = 2 * np.pi * rng.random(256)
    probe = np.vstack([c[None, :], c + np.stack([rr * np.cos(th), rr * np.sin(th)], 1)])
    if not np.any(np.isfinite(one_body(probe))):
        raise DegenerateMeasureError("the external potential is infinite on the whole region")

    if init is None:
        pos = c + spiral_configuration(n, 0.9 * region.radius)
    else:
        pos = np.array(init, dtype=float).reshape(-1, 2)
    pos = np.ascontiguousarray(pos)
    ob = one_body(pos)
    if not np.all(np.isfinite(ob)):
        raise DegenerateMeasureError("initial positions have infinite energy")
    sigma = float(cfg.proposal_scale)
    res = ChainResult()
    acc = prop = 0
    wa = wp = 0
    R2 = region.radius**2
    for sweep in range(1, cfg.sweeps + 1):
        gauss = rng.standard_normal((n, 2))
        unif = rng.random(n)
        for i in range(n):
            new = pos[i] + sigma * gauss[i]
            prop += 1
            wp += 1
            if (new[0] - c[0]) ** 2 + (new[1] - c[1]) ** 2 > R2:
                continue
            ob_new = one_body(new[None, :])[0]
            if not np.isfinite(ob_new):
                continue
            dF = -_single_pair_delta(pos, i, new[0], new[1]) + ob_new - ob[i]
            if dF <= 0 or unif[i] < math.exp(-cfg.beta * dF):
                pos[i] = new
                ob[i] = ob_new
                acc += 1
                wa += 1
        if sweep <= cfg.burn_in and cfg.tune and sweep % 10 == 0 and wp:
            rate = wa / wp
            if rate < 0.3 or rate > 0.5:
                sigma *= math.exp(rate - 0.4)
            wa = wp = 0
        if sweep == cfg.burn_in:
            acc = prop = 0
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            if observe is not None:
                res.observations.append(observe(pos))
            else:
                res.configurations.append(pos.copy())
    res.acceptance = acc / max(prop, 1)
    res.proposal_scale = sigma
    res.sweeps_done = cfg.sweeps
    return res


# ---------------------------------------------------------------------------
# exact ensembles
# ---------------------------------------------------------------------------


def ginibre_sample(N: int, seed: int, max_retries: int = 3) -> PointConfiguration:
    """Eigenvalues of an ``N x N`` complex Gaussian matrix at unit density.

    Entries have ``E|a|^2 = 1``; eigenvalues then fill the disk of radius
    ``sqrt(N)`` with density ``1/pi``, and the factor ``1/sqrt(pi)`` maps
    them to density 1 on the disk of radius ``sqrt(N/pi)``. The domain of
    the returned configuration is the whole plane (no wall), recorded as
    ``None``.
    """
    if N < 1:
        raise ParameterError("N must be at least 1")
    rng = make_rng(seed)
    last = None
    for _ in range(max_retries):
        A = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2.0)
        try:
            ev = scipy.linalg.eigvals(A, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            last = exc
            continue
        pts = np.stack([ev.real, ev.imag], 1) / math.sqrt(math.pi)
        return PointConfiguration(pts, None, check=False)
    raise RuntimeError(f"eigendecomposition failed: {last}")


def kostlan_count_variance(N: int, R) -> np.ndarray:
    """Exact variance of the number of Ginibre points in ``D(0, R)``.

    The squared moduli of the (unit density) eigenvalues are independent,
    ``pi |z_k|^2 ~ Gamma(k)`` for ``k = 1..N``, so the count is a sum of
    independent Bernoulli variables with ``p_k = P(Gamma(k) <= pi R^2)``.
    """
    R = np.atleast_1d(np.asarray(R, dtype=float))
    k = np.arange(1, N + 1)
    p = gammainc(k[None, :], math.pi * R[:, None] ** 2)
    return np.sum(p * (1 - p), axis=1)


def poisson_sample(intensity: float, region: DomainRegion, seed) -> PointConfiguration:
    """Homogeneous Poisson process on a region (rejection from its bounding box)."""
    if intensity < 0:
        raise ParameterError("intensity must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    x0, x1, y0, y1 = region.bounding_box()
    box_area = (x1 - x0) * (y1 - y0)
    n = rng.poisson(intensity * box_area)
    pts = np.stack([x0 + (x1 - x0) * rng.random(n), y0 + (y1 - y0) * rng.random(n)], 1)
    if n:
        pts = pts[region.contains(pts)]
    return PointConfiguration(pts, region, check=False)


def energy_of(positions: np.ndarray, N: int) -> float:
    """Full recomputation of ``F_N`` for a disk configuration (for audits)."""
    bg = BackgroundMeasure.uniform_disk(N)
    return interaction_energy(PointConfiguration(positions, None, check=False), bg).total
