import math

import numpy as np
import pytest

from ocp2d.background import BackgroundMeasure
from ocp2d.energy import energy_difference
from ocp2d.geometry import Disk, ParameterError
from ocp2d.sampler import (
    CacheDriftError,
    ChainState,
    DegenerateMeasureError,
    SamplerConfig,
    energy_of,
    ginibre_sample,
    kostlan_count_variance,
    metropolis_sweep,
    poisson_sample,
    read_checkpoint,
    run_chain,
    sample_subsystem,
)


def test_config_invariants():
    with pytest.raises(ParameterError):
        SamplerConfig(beta=2.0, N=10, proposal_scale=0.0)
    with pytest.raises(ParameterError):
        SamplerConfig(beta=2.0, N=10, sweeps=10, burn_in=20)
    with pytest.raises(ParameterError):
        SamplerConfig(beta=2.0, N=10, thin=0)
    cfg = SamplerConfig(beta=2.0, N=10)
    assert cfg.burn_in == 100 and cfg.radius == pytest.approx(math.sqrt(10 / math.pi))


def test_identical_proposal_is_always_accepted():
    # a proposal step far below the float spacing reproduces the current state
    cfg = SamplerConfig(beta=2.0, N=20, proposal_scale=1e-300, sweeps=5, burn_in=0, tune=False)
    st = ChainState.start(cfg)
    before = st.positions.copy()
    for _ in range(5):
        metropolis_sweep(st, cfg)
    assert st.acceptance == 1.0
    assert np.allclose(st.positions, before, rtol=1e-15, atol=1e-250)
    bg = BackgroundMeasure.uniform_disk(20)
    assert energy_difference(before, before, bg) == 0.0


def _log_target(pos, N, beta):
    return -beta * energy_of(pos, N)


def test_detailed_balance_on_sampled_pairs():
    N, beta, sigma = 6, 2.0, 0.3
    rng = np.random.default_rng(5)
    R = math.sqrt(N / math.pi)
    bg = BackgroundMeasure.uniform_disk(N)
    worst = 0.0
    for _ in range(200):
        r = R * np.sqrt(rng.random(N))
        th = 2 * math.pi * rng.random(N)
        a = np.stack([r * np.cos(th), r * np.sin(th)], 1)
        b = a.copy()
        i = rng.integers(N)
        b[i] = a[i] + sigma * rng.standard_normal(2)
        if np.hypot(*b[i]) > R:
            continue
        # Gaussian proposal density is symmetric, so it cancels from both sides
        dF = energy_difference(a, b, bg)
        lhs = _log_target(a, N, beta) + min(0.0, -beta * dF)
        rhs = _log_target(b, N, beta) + min(0.0, beta * dF)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
        # the O(N) difference agrees with a full recomputation
        assert dF == pytest.approx(energy_of(b, N) - energy_of(a, N), abs=1e-10)
    assert worst <= 1e-12


def _grid_oracle(R, beta, n_cells=20, sub=4):
    """Marginal cell law of one particle of the N=2 chain by direct quadrature."""
    m = n_cells * sub
    edges = np.linspace(-R, R, m + 1)
    c = 0.5 * (edges[1:] + edges[:-1])
    X, Y = np.meshgrid(c, c, indexing="ij")
    keep = X**2 + Y**2 <= R * R
    pts = np.stack([X[keep], Y[keep]], 1)
    cell = (np.floor((pts + R) / (2 * R) * n_cells)).astype(int).clip(0, n_cells - 1)
    one = np.exp(-beta * (math.pi / 2) * np.sum(pts**2, axis=1))
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    w = one[:, None] * one[None, :] * d**beta
    marg = w.sum(axis=1)
    out = np.zeros((n_cells, n_cells))
    np.add.at(out, (cell[:, 0], cell[:, 1]), marg)
    return out / out.sum()


def test_two_particle_chain_matches_grid_quadrature():
    beta, N = 2.0, 2
    cfg = SamplerConfig(beta=beta, N=N, sweeps=1_000_000, seed=11)
    R = cfg.radius
    res = run_chain(cfg, observe=lambda p: (p[0, 0], p[0, 1], p[1, 0], p[1, 1]))
    obs = np.asarray(res.observations)
    both = np.concatenate([obs[:, :2], obs[:, 2:]])
    cell = np.floor((both + R) / (2 * R) * 20).astype(int).clip(0, 19)
    emp = np.zeros((20, 20))
    np.add.at(emp, (cell[:, 0], cell[:, 1]), 1.0)
    emp /= emp.sum()
    tv = 0.5 * np.abs(emp - _grid_oracle(R, beta)).sum()
    assert tv <= 0.05
    assert res.max_cache_error <= 1e-9


def test_checkpoint_resume_is_bit_identical(tmp_path):
    cfg = SamplerConfig(beta=2.0, N=30, sweeps=300, seed=3, audit_every=50)
    full = run_chain(cfg, keep_configurations=True)
    ck = tmp_path / "chain.json"
    part = run_chain(cfg, keep_configurations=True, checkpoint=ck, checkpoint_every=40, stop_after=120)
    assert part.sweeps_done == 120
    rest = run_chain(cfg, keep_configurations=True, state=read_checkpoint(ck))
    assert np.array_equal(rest.state.positions, full.state.positions)
    joined = part.configurations + rest.configurations
    assert len(joined) == len(full.configurations)
    assert all(np.array_equal(a, b) for a, b in zip(joined, full.configurations))


def test_cache_audit_detects_drift():
    cfg = SamplerConfig(beta=2.0, N=15, sweeps=100, seed=1)
    st = run_chain(cfg).state
    assert st.audit() <= 1e-9
    assert st.energy(cfg) == pytest.approx(energy_of(st.positions, cfg.N), rel=1e-10)
    st.cache[0] += 1.0
    with pytest.raises(CacheDriftError):
        st.audit()


def test_subsystem_single_point_matches_quadrature():
    beta = 2.0
    region = Disk((0.0, 0.0), 1.0)
    bg = BackgroundMeasure(1.0, region)
    vext = lambda x: np.sum(x**2, axis=1)
    cfg = SamplerConfig(beta=beta, N=1, sweeps=40_000, burn_in=200, seed=8, proposal_scale=0.5)
    res = sample_subsystem(1, region, vext, bg, None, cfg)
    r = np.hypot(*np.concatenate(res.configurations).T)
    edges = np.linspace(0, 1, 11)
    emp = np.histogram(r, edges)[0] / len(r)
    # oracle: 2D quadrature of exp(-beta(-h^m + V)) on a polar grid
    rr = np.linspace(0, 1, 4001)[1:] - 0.5 / 4000
    x = np.stack([rr, np.zeros_like(rr)], 1)
    dens = rr * np.exp(-beta * (-bg.potential(x) + vext(x)))
    ref = np.array([dens[(rr >= a) & (rr < b)].sum() for a, b in zip(edges[:-1], edges[1:])])
    ref /= ref.sum()
    assert 0.5 * np.abs(emp - ref).sum() <= 0.05


def test_subsystem_linear_tilt_sign():
    region = Disk((0.0, 0.0), 1.0)
    bg = BackgroundMeasure(1.0, region)
    cfg = SamplerConfig(beta=2.0, N=1, sweeps=5000, burn_in=100, seed=2)
    for c in (2.0, -2.0):
        res = sample_subsystem(1, region, lambda x, c=c: c * x[:, 0], bg, None, cfg)
        mean = np.concatenate(res.configurations)[:, 0].mean()
        assert np.sign(mean) == -np.sign(c)


def test_subsystem_degenerate_potential():
    region = Disk((0.0, 0.0), 1.0)
    cfg = SamplerConfig(beta=2.0, N=1, sweeps=10, burn_in=0)
    with pytest.raises(DegenerateMeasureError):
        sample_subsystem(1, region, lambda x: np.full(len(x), np.inf), BackgroundMeasure(1.0, region), None, cfg)


def test_ginibre_circular_law_fraction():
    N = 1000
    pts = ginibre_sample(N, seed=4).points
    frac = np.mean(np.hypot(*pts.T) <= math.sqrt(N / math.pi))
    assert frac >= 0.98
    one = ginibre_sample(1, seed=0)
    assert len(one) == 1


def test_kostlan_variance_limits():
    v = kostlan_count_variance(500, [1e-6, 6.0, 100.0])
    assert v[0] == pytest.approx(0.0, abs=1e-9)
    assert v[1] / 6.0 == pytest.approx(1.0, abs=0.01)
    assert v[2] == pytest.approx(0.0, abs=1e-9)


def test_poisson_counts():
    region = Disk((0.0, 0.0), 3.0)
    assert len(poisson_sample(0.0, region, seed=0)) == 0
    rng = np.random.default_rng(9)
    counts = np.array([len(poisson_sample(1.0, region, rng)) for _ in range(4000)])
    mu = 9 * math.pi
    assert counts.mean() == pytest.approx(mu, abs=4 * math.sqrt(mu / 4000))
    assert counts.var(ddof=1) == pytest.approx(mu, rel=0.1)
    with pytest.raises(ParameterError):
        poisson_sample(-1.0, region, seed=0)
