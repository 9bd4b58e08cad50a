import math

import numpy as np
import pytest
from scipy import integrate

from ocp2d.background import ArcComponent, BackgroundMeasure
from ocp2d.energy import disk_background_potential
from ocp2d.geometry import Annulus, Disk, ParameterError, Square


def test_disk_potential_newton_values():
    assert disk_background_potential(1.0, [[2.0, 0.0]])[0] == pytest.approx(-math.pi * math.log(2), rel=1e-13)
    assert disk_background_potential(1.0, [[0.0, 0.0]])[0] == pytest.approx(math.pi / 2, rel=1e-13)
    inner = disk_background_potential(1.0, [[1 - 1e-12, 0.0]])[0]
    outer = disk_background_potential(1.0, [[1 + 1e-12, 0.0]])[0]
    assert inner == pytest.approx(outer, abs=1e-10)


def test_disk_potential_against_2d_quadrature():
    x = np.array([0.3, 0.2])

    def f(r, th):
        y = np.array([r * math.cos(th), r * math.sin(th)])
        return -math.log(np.hypot(*(x - y))) * r

    # split the radial range at |x| where the integrand is singular
    rx = float(np.hypot(*x))
    val = sum(
        integrate.dblquad(f, 0, 2 * math.pi, lo, hi, epsabs=1e-10, epsrel=1e-10)[0]
        for lo, hi in ((0.0, rx), (rx, 1.0))
    )
    assert disk_background_potential(1.0, [x])[0] == pytest.approx(val, abs=1e-6)


def test_uniform_disk_mass_and_self_energy():
    R = 2.0
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), R))
    assert bg.mass() == pytest.approx(math.pi * R * R, rel=1e-12)
    # (1/2) int h dm with h = pi (R^2 - r^2)/2 - pi R^2 log R inside
    closed = math.pi**2 * R**4 * (1 / 8 - 0.5 * math.log(R))
    assert bg.self_energy() == pytest.approx(closed, rel=1e-10)
    assert bg.is_uniform


def test_uniform_disk_factory_has_unit_density():
    bg = BackgroundMeasure.uniform_disk(50)
    assert bg.region.radius == pytest.approx(math.sqrt(50 / math.pi))
    assert bg.mass() == pytest.approx(50.0, rel=1e-12)


def test_radial_profile_mass_and_potential():
    prof = lambda r: 1.0 + 0.5 * np.cos(r)
    bg = BackgroundMeasure(region=Disk((0.0, 0.0), 3.0), radial_profile=prof)
    mass = integrate.quad(lambda r: 2 * math.pi * r * prof(r), 0, 3.0, epsabs=0, epsrel=1e-13)[0]
    assert bg.mass() == pytest.approx(mass, rel=1e-10)
    # outside the support the potential is that of a point charge
    x = np.array([[5.0, 1.0]])
    assert bg.potential(x)[0] == pytest.approx(-mass * math.log(np.hypot(5.0, 1.0)), rel=1e-10)


def test_gradient_matches_finite_differences():
    bg = BackgroundMeasure(1.0, Square((0.5, -0.2), 2.0), hole=Disk((0.5, 0.0), 0.3))
    x = np.array([[0.1, 0.4], [2.0, 1.5], [0.9, -0.8]])
    h = 1e-5
    fd = np.stack(
        [
            (bg.potential(x + [h, 0]) - bg.potential(x - [h, 0])) / (2 * h),
            (bg.potential(x + [0, h]) - bg.potential(x - [0, h])) / (2 * h),
        ],
        1,
    )
    assert np.allclose(bg.gradient(x), fd, atol=1e-6)


def test_potential_laplacian_is_minus_two_pi_density():
    bg = BackgroundMeasure(1.0, Square((0.0, 0.0), 2.0))
    x = np.array([[0.2, 0.1], [3.0, 0.0]])
    h = 1e-3
    lap = (
        bg.potential(x + [h, 0]) + bg.potential(x - [h, 0]) + bg.potential(x + [0, h]) + bg.potential(x - [0, h]) - 4 * bg.potential(x)
    ) / h**2
    assert lap == pytest.approx([-2 * math.pi, 0.0], abs=1e-4)


def test_hole_removes_mass():
    bg = BackgroundMeasure(1.0, Disk((0.0, 0.0), 2.0), hole=Disk((0.5, 0.0), 0.5))
    assert bg.mass() == pytest.approx(math.pi * (4 - 0.25), rel=1e-12)
    assert bg.density([[0.5, 0.0]])[0] == 0.0
    assert bg.density([[-1.0, 0.0]])[0] == 1.0


def test_arc_component_potential():
    lam = 0.3
    arc = ArcComponent(Disk((0.0, 0.0), 2.0), lambda th: lam + 0 * th)
    bg = BackgroundMeasure(0.0, Disk((0.0, 0.0), 1.0), arc_component=arc)
    q = 2 * math.pi * 2.0 * lam
    assert bg.mass() == pytest.approx(q, rel=1e-10)
    assert bg.potential([[0.5, 0.1]])[0] == pytest.approx(-q * math.log(2.0), rel=1e-9)
    assert bg.potential([[3.0, 4.0]])[0] == pytest.approx(-q * math.log(5.0), rel=1e-9)


def test_annulus_mass_in_and_integrate():
    bg = BackgroundMeasure(1.0, Annulus((0.0, 0.0), 1.0, 2.0))
    assert bg.mass() == pytest.approx(3 * math.pi, rel=1e-12)
    assert bg.mass_in(Disk((0.0, 0.0), 1.5)) == pytest.approx(math.pi * (2.25 - 1), rel=1e-8)
    val = bg.integrate(lambda x: np.sum(np.asarray(x) ** 2, axis=1))
    assert val == pytest.approx(2 * math.pi * (2**4 - 1) / 4, rel=1e-8)


def test_negative_density_rejected():
    with pytest.raises(ParameterError):
        BackgroundMeasure(-1.0, Disk((0.0, 0.0), 1.0))
