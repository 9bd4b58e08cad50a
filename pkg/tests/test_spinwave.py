import math

import numpy as np
import pytest

from ocp2d.background import BackgroundMeasure
from ocp2d.energy import PointConfiguration
from ocp2d.geometry import Disk, ParameterError
from ocp2d.spinwave import (
    SpinWaveParams,
    anisotropy,
    divergence,
    err_ave,
    f_eps,
    flow,
    flow_jacobian,
    flow_trajectory,
    h1_budget,
    psi_gamma_audit,
    psi_gamma_decompose,
    radial_h1_integral,
    spin_wave,
)

P = SpinWaveParams(0.5)


def test_f_eps_values():
    assert f_eps(P, [0.3, 0.7]) == pytest.approx(0.3)
    assert f_eps(P, [2.0, 0.0]) == pytest.approx(2 * (1 - 0.5 * math.log(2)), abs=1e-12)
    assert f_eps(P, [2.0, 0.0]) == pytest.approx(1.30685, abs=1e-5)
    assert f_eps(P, [10.0, 0.0]) == 0.0


def test_params_validation_and_window():
    with pytest.raises(ParameterError):
        SpinWaveParams(1.5)
    with pytest.raises(ParameterError):
        SpinWaveParams(0.5, ell=0.0)
    assert SpinWaveParams(0.25, ell=3.0).window_ok()
    assert not SpinWaveParams(0.25, ell=100.0).window_ok()


def test_spin_wave_inner_and_outer():
    rng = np.random.default_rng(0)
    th = 2 * math.pi * rng.random(200)
    r = 0.5 * np.sqrt(rng.random(200))
    inner = np.stack([r * np.cos(th), r * np.sin(th)], 1)
    assert np.array_equal(spin_wave(P, inner), np.tile([0.0, 1.0], (200, 1)))
    far = 2 * P.outer_radius * np.stack([np.cos(th), np.sin(th)], 1) * (1 + rng.random(200)[:, None])
    assert np.all(spin_wave(P, far) == 0.0)


def test_spin_wave_is_divergence_free():
    p = SpinWaveParams(1 / 8)
    rng = np.random.default_rng(1)
    r = np.exp(rng.uniform(math.log(0.05), math.log(2 * p.outer_radius), 1000))
    th = 2 * math.pi * rng.random(1000)
    x = np.stack([r * np.cos(th), r * np.sin(th)], 1)
    w1 = np.max(np.abs(spin_wave(p, x)))
    assert np.max(np.abs(divergence(p, x))) <= 1e-6 * max(w1, 1.0)


def test_h1_radial_integral_synthetic():
    eps = 0.2
    top = 2 * math.exp(1 / eps)
    val = radial_h1_integral(lambda r: (eps / r) ** 2, [2.0, top])
    assert val == pytest.approx(2 * math.pi * eps, rel=1e-10)
    assert radial_h1_integral(lambda r: np.zeros_like(r), [0.0, 0.5]) == 0.0


def test_h1_budget_ratio_bounded():
    ratios = [h1_budget(SpinWaveParams(e)).ratio for e in (1 / 8, 1 / 12, 1 / 16)]
    assert max(ratios) / min(ratios) <= 4


def test_flow_translates_inner_disk():
    p = SpinWaveParams(0.5, ell=8.0)
    assert flow(p, 0.5, np.array([[1.0, 0.0]]))[0] == pytest.approx([1.0, 0.5], abs=1e-10)
    far = np.array([[2 * p.ell * p.outer_radius + 1.0, 0.0]])
    assert np.array_equal(flow(p, 0.5, far), far)
    with pytest.raises(ParameterError):
        flow(p, 0.9, far)


def test_flow_area_preserving_and_reversible():
    p = SpinWaveParams(0.5, ell=2.0)
    t = 0.15
    rng = np.random.default_rng(2)
    x = rng.uniform(-p.support_radius, p.support_radius, (300, 2))
    J = flow_jacobian(p, t, x)
    assert np.max(np.abs(np.linalg.det(J) - 1)) <= 1e-4
    back = flow(p, -t, flow(p, t, x))
    assert np.max(np.abs(back - x)) <= 1e-8 * p.ell
    traj = flow_trajectory(p, t, [1.3, -0.4])
    assert traj.det_error <= 1e-4 and len(traj.times) == 17


def test_flow_preserves_uniform_measure():
    p = SpinWaveParams(0.5)
    R = p.support_radius + 1.0
    rng = np.random.default_rng(3)
    n = 10_000
    r = R * np.sqrt(rng.random(n))
    th = 2 * math.pi * rng.random(n)
    y = flow(p, 0.1, np.stack([r * np.cos(th), r * np.sin(th)], 1))
    assert np.mean(np.hypot(*(y - np.stack([r * np.cos(th), r * np.sin(th)], 1)).T) > 1e-3) > 0.05
    # 4 rings of equal area times 8 sectors: each cell has probability 1/32
    ring = np.minimum((np.hypot(*y.T) ** 2 / R**2 * 4).astype(int), 3)
    sector = (np.mod(np.arctan2(y[:, 1], y[:, 0]), 2 * math.pi) / (2 * math.pi) * 8).astype(int) % 8
    counts = np.bincount(ring * 8 + sector, minlength=32)
    p_cell = 1 / 32
    sigma = math.sqrt(n * p_cell * (1 - p_cell))
    assert np.all(np.abs(counts - n * p_cell) <= 3 * sigma)


def test_psi_gamma_bounds():
    p = SpinWaveParams(0.25, ell=4.0)
    t = 0.2
    rng = np.random.default_rng(4)
    inner = rng.uniform(-0.7, 0.7, (50, 2))
    psi, gamma = psi_gamma_decompose(p, t, inner)
    assert psi == pytest.approx(np.tile([0.0, t], (50, 1)), abs=1e-10)
    assert np.max(np.abs(gamma)) <= 1e-10
    x = rng.uniform(-p.support_radius, p.support_radius, (300, 2))
    audit = psi_gamma_audit(p, t, x)
    assert audit.psi_violations == 0 and audit.psi_max_over_t <= 2
    assert np.isfinite(audit.gamma_constant)


def test_err_ave_zero_time_symmetry_and_translation_case():
    p = SpinWaveParams(0.5, ell=8.0)
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 10.0))
    cfg = PointConfiguration([[0.3, 0.1], [-0.5, 0.4], [0.2, -0.6]])
    assert err_ave(p, 0.0, cfg, bg) == 0.0
    t = 0.4
    assert err_ave(p, t, cfg, bg) == pytest.approx(err_ave(p, -t, cfg, bg), rel=1e-9)
    # inside ell/4 the flow is a translation, so only the quadratic background potential acts
    assert err_ave(p, t, cfg, bg) == pytest.approx(-0.5 * 3 * math.pi * t * t, rel=1e-8)


def test_anisotropy_zero_and_constant_fields():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 1.5))
    rng = np.random.default_rng(5)
    cfg = PointConfiguration(rng.uniform(-0.8, 0.8, (7, 2)))
    support = Disk((0.0, 0.0), 3.0)
    zero = anisotropy(cfg, bg, lambda x: np.zeros_like(x), support)
    assert zero == (0.0, 0.0)
    a1, ani = anisotropy(cfg, bg, lambda x: np.tile([1.0, 0.5], (len(x), 1)), support)
    assert a1 == pytest.approx(0.0, abs=1e-6)
    assert ani == pytest.approx(a1, abs=1e-9)
