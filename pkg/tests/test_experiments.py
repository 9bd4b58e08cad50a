import math

import numpy as np
import pytest

from ocp2d.experiments import (
    child_seeds,
    errorci_instance,
    errorci_sweep,
    log_log_slope,
    scale_presets,
)
from ocp2d.geometry import ParameterError


def test_child_seeds_are_deterministic_and_distinct():
    a = child_seeds(7, 5)
    assert a == child_seeds(7, 5)
    assert len(set(a)) == 5 and all(0 <= s < 2**63 for s in a)
    assert a != child_seeds(8, 5)


def test_scale_presets_formulas_and_overrides():
    R = 1e6
    p = scale_presets(R)
    L = math.log(R) ** 0.99
    assert p["eps_R"] == pytest.approx(math.log(R) ** -0.3)
    assert p["L"] == pytest.approx(L)
    assert p["omega"] == pytest.approx(L**-1.33)
    assert p["s"] == pytest.approx(L**3 / R)
    assert p["degenerate"]  # T = 100 L e^{10 L} is astronomically larger than R
    q = scale_presets(R, T=5.0, M=3.0)
    assert q["T"] == 5.0 and q["M"] == 3.0 and q["overridden"] == ["M", "T"]
    with pytest.raises(ParameterError):
        scale_presets(R, bogus=1.0)


def test_errorci_instance_respects_separation_and_counts():
    rng = np.random.default_rng(0)
    for T in (2.0, 4.0):
        for _ in range(10):
            inst = errorci_instance(T, rng)
            fam = inst.family
            n = len(fam.disks)
            assert 2 <= n <= 5
            gaps = fam.pair_distances[~np.eye(n, dtype=bool)]
            assert np.all(gaps >= 10 * T)
            assert all(0 <= c <= math.floor(10 * T * T) for c in inst.counts)
            assert inst.error() >= 0


def test_errorci_sweep_small():
    sweep = errorci_sweep((2.0, 4.0), n_instances=10, seed=3)
    assert len(sweep.constants) == 2 and sweep.spread >= 1
    assert len(sweep.rows()) == 20


def test_log_log_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert log_log_slope(x, 3 * x**2) == pytest.approx(2.0)
