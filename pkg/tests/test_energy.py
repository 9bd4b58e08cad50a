import math

import numpy as np
import pytest

from ocp2d.background import BackgroundMeasure
from ocp2d.energy import (
    DivergentIntegralError,
    NeutralityError,
    PointConfiguration,
    SingularEnergyError,
    disk_background_potential,
    electric_energy,
    ener_s_correction,
    energy_difference,
    energy_identity_check,
    fluctuation,
    interaction_energy,
    nn_truncation,
    subsystem_interaction,
    truncated_field,
    v_ext,
    v_ext_gradient,
)
from ocp2d.geometry import Annulus, Disk, ParameterError, Square, WellSeparatedFamily

EMPTY_BG = BackgroundMeasure(0.0, Disk((0.0, 0.0), 1.0))


def test_nn_truncation_examples():
    assert nn_truncation(PointConfiguration([[0.0, 0.0]])).tolist() == [0.25]
    eta = nn_truncation(PointConfiguration([[0.0, 0.0], [0.1, 0.0]]))
    assert eta == pytest.approx([0.025, 0.025])
    eta = nn_truncation(PointConfiguration([[0.0, 0.0], [3.0, 0.0]]), s=0.5)
    assert eta == pytest.approx([0.125, 0.125])
    with pytest.raises(ParameterError):
        nn_truncation(PointConfiguration([[0.0, 0.0]]), s=0.0)


def test_coincident_points_rejected():
    with pytest.raises(SingularEnergyError):
        PointConfiguration([[0.0, 0.0], [0.0, 0.0]])


def test_interaction_energy_against_closed_form():
    R = math.sqrt(5 / math.pi)
    bg = BackgroundMeasure.uniform_disk(5)
    assert interaction_energy(PointConfiguration(np.empty((0, 2))), bg).total == pytest.approx(bg.self_energy())
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.8, 0.8, (5, 2))
    pair = sum(-math.log(np.hypot(*(pts[i] - pts[j]))) for i in range(5) for j in range(i + 1, 5))
    pb = -np.sum(disk_background_potential(R, pts))
    self_energy = math.pi**2 * R**4 * (1 / 8 - 0.5 * math.log(R))
    e = interaction_energy(PointConfiguration(pts), bg)
    assert e.pair_sum == pytest.approx(pair, rel=1e-12)
    assert e.point_background == pytest.approx(pb, rel=1e-10)
    assert e.total == pytest.approx(pair + pb + self_energy, rel=1e-9)


def test_energy_difference_matches_full_recomputation():
    bg = BackgroundMeasure.uniform_disk(10)
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, (10, 2))
    b = a.copy()
    b[3] += [0.1, -0.05]
    full = interaction_energy(PointConfiguration(b), bg).total - interaction_energy(PointConfiguration(a), bg).total
    assert energy_difference(a, b, bg) == pytest.approx(full, abs=1e-10)
    assert energy_difference(a, a, bg) == 0.0


def test_truncated_field_single_point():
    cfg = PointConfiguration([[0.0, 0.0]])
    assert np.allclose(truncated_field(cfg, EMPTY_BG, [0.25], [[0.1, 0.05]]), 0.0)
    # grad(-log|x|) = -x/|x|^2 outside the smearing circle
    assert truncated_field(cfg, EMPTY_BG, [0.25], [[2.0, 0.0]])[0] == pytest.approx([-0.5, 0.0])


def test_truncated_field_flux_is_charge_balance():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 1.0))
    cfg = PointConfiguration([[0.2, 0.1], [-0.3, 0.0], [0.0, 0.4]])
    th = np.linspace(0, 2 * math.pi, 2000, endpoint=False)
    rad = 3.0
    x = rad * np.stack([np.cos(th), np.sin(th)], 1)
    E = truncated_field(cfg, bg, nn_truncation(cfg), x)
    flux = np.mean(np.sum(E * x / rad, axis=1)) * 2 * math.pi * rad
    # Gauss: the outward flux of grad h is -2 pi (charge - background mass)
    assert flux == pytest.approx(-2 * math.pi * (3 - math.pi), rel=1e-6)


def test_electric_energy_empty_and_annulus():
    assert electric_energy(PointConfiguration(np.empty((0, 2))), EMPTY_BG, [], Square((0.0, 0.0), 2.0)) == 0.0
    cfg = PointConfiguration([[0.0, 0.0]])
    val = electric_energy(cfg, EMPTY_BG, [0.25], Annulus((0.0, 0.0), 0.5, 2.0), grid_h=0.02)
    assert val == pytest.approx(2 * math.pi * math.log(4.0), rel=1e-3)


def test_electric_energy_needs_truncation():
    cfg = PointConfiguration([[0.0, 0.0]])
    with pytest.raises(DivergentIntegralError):
        electric_energy(cfg, EMPTY_BG, [0.0], Disk((0.0, 0.0), 1.0))


def _neutral_config(n, seed):
    from ocp2d.sampler import SamplerConfig, run_chain

    res = run_chain(SamplerConfig(beta=2.0, N=n, sweeps=200, seed=seed), keep_configurations=True)
    return PointConfiguration(res.configurations[-1]), BackgroundMeasure.uniform_disk(n)


def test_identity_residual_shrinks_with_grid():
    cfg, bg = _neutral_config(12, 3)
    eta = nn_truncation(cfg)
    inside = bg.region.boundary_distance(cfg.points) >= eta
    if not inside.all():
        pytest.skip("sample has a point within its smearing radius of the wall")
    coarse = energy_identity_check(cfg, bg, eta, grid_h=0.1)
    fine = energy_identity_check(cfg, bg, eta, grid_h=0.05)
    assert abs(fine.residual) < abs(coarse.residual)
    assert fine.relative < 1e-3


def test_identity_requires_neutrality():
    bg = BackgroundMeasure.uniform_disk(3)
    cfg = PointConfiguration([[0.0, 0.0], [0.3, 0.0]])
    with pytest.raises(NeutralityError):
        energy_identity_check(cfg, bg, nn_truncation(cfg))


def test_ener_s_log_term_and_uniform_smearing():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 5.0))
    cfg = PointConfiguration([[0.0, 0.0], [1.0, 0.0], [3.5, 0.0]])
    eta = np.full(3, 0.2)
    corr = ener_s_correction(cfg, bg, eta, Disk((0.0, 0.0), 2.0), 0.5)
    assert corr.n_points == 2
    assert corr.log_term == -2 * math.log(0.5)
    assert corr.smearing_term == pytest.approx(-2 * math.pi * 0.04 * 0.75, rel=1e-8)
    with pytest.raises(ParameterError):
        ener_s_correction(cfg, bg, eta, Disk((0.0, 0.0), 1.1), 0.5)


def test_ener_s_quadrature_matches_full_correction():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 4.0))
    cfg = PointConfiguration([[0.0, 0.0], [0.9, 0.3], [-0.5, 0.7], [2.5, 1.0]])
    eta = nn_truncation(cfg)
    omega = Disk((0.0, 0.0), 1.5)
    corr = ener_s_correction(cfg, bg, eta, omega, 0.5)
    q = (electric_energy(cfg, bg, 0.5 * eta, omega, 0.02) - electric_energy(cfg, bg, eta, omega, 0.02)) / (2 * math.pi)
    assert q == pytest.approx(corr.total, rel=1e-3)


def test_v_ext_of_a_single_exterior_charge():
    hole = Disk((0.0, 0.0), 1.0)
    ext = PointConfiguration([[3.0, 0.0]])
    x = np.array([[0.2, 0.1], [-0.5, 0.3]])
    v = v_ext(ext, EMPTY_BG, [hole], x)
    assert v == pytest.approx(-np.log(np.hypot(*(x - [3.0, 0.0]).T)), rel=1e-12)
    g = v_ext_gradient(ext, EMPTY_BG, [hole], x)
    h = 1e-6
    fd = (v_ext(ext, EMPTY_BG, [hole], x + [h, 0]) - v_ext(ext, EMPTY_BG, [hole], x - [h, 0])) / (2 * h)
    assert g[:, 0] == pytest.approx(fd, rel=1e-6)
    with pytest.raises(ParameterError):
        v_ext(ext, EMPTY_BG, [hole], [[2.0, 0.0]])


def test_v_ext_is_harmonic_in_a_uniform_hole():
    # the hole carries the same uniform background as the outside, so only
    # the exterior charges and the exterior background act, both harmonic inside
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 4.0))
    hole = Disk((0.5, 0.0), 1.0)
    ext = PointConfiguration([[3.0, 0.5], [-2.0, -1.0], [0.0, 2.5]])
    c = np.array([0.5, 0.0])
    th = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    ring = c + 0.6 * np.stack([np.cos(th), np.sin(th)], 1)
    assert np.mean(v_ext(ext, bg, [hole], ring)) == pytest.approx(v_ext(ext, bg, [hole], [c])[0], abs=1e-9)


def test_subsystem_interaction_trivial_cases():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 50.0))
    fam = WellSeparatedFamily((Disk((-10.0, 0.0), 1.0), Disk((10.0, 0.0), 1.0)))
    empty = subsystem_interaction(PointConfiguration(np.empty((0, 2))), bg, fam)
    # two neutralizing disks with no points: exact monopole interaction
    assert empty.error == pytest.approx(0.0, abs=1e-9)
    assert empty.discrepancies == pytest.approx([-math.pi, -math.pi])
    one = subsystem_interaction(PointConfiguration([[-10.0, 0.0], [10.0, 0.0]]), bg, fam)
    assert one.error == pytest.approx(0.0, abs=1e-9)


def test_fluctuation_region_and_function():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 2.0))
    cfg = PointConfiguration([[0.0, 0.0], [0.5, 0.5], [1.5, 0.0]])
    assert fluctuation(cfg, bg, Disk((0.0, 0.0), 1.0)) == pytest.approx(2 - math.pi, rel=1e-10)
    val = fluctuation(cfg, bg, lambda r: r**2, radial=True)
    assert val == pytest.approx(0.5 + 2.25 - 2 * math.pi * 2**4 / 4, rel=1e-8)


def test_energy_invariant_under_translation_and_reflection():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 2.0))
    pts = np.array([[0.1, 0.2], [-0.5, 0.4], [0.7, -0.3]])
    e0 = interaction_energy(PointConfiguration(pts), bg).total
    v = np.array([3.0, -1.0])
    bg_t = BackgroundMeasure(1.0, Disk(tuple(v), 2.0))
    assert interaction_energy(PointConfiguration(pts + v), bg_t).total == pytest.approx(e0, rel=1e-10)
    assert interaction_energy(PointConfiguration(pts * [1, -1]), bg).total == pytest.approx(e0, rel=1e-12)
