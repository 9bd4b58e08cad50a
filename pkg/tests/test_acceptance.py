"""Acceptance suite.

Each criterion is a function returning ``(passed, detail)``. Under pytest
every criterion is one test that prints a line ``CRITERION k: PASS|FAIL
...`` and then asserts. Run the file directly to print the eleven lines
without pytest::

    python tests/test_acceptance.py

The full suite takes about 35 minutes on one core, most of it spent on the
200 Ginibre samples with N = 2000 of criterion 3. Set ``OCP2D_QUICK=1`` to
skip criterion 3.
"""

import json
import math
import os
import subprocess
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from ocp2d import experiments as ex
from ocp2d.background import BackgroundMeasure
from ocp2d.energy import PointConfiguration, electric_energy, ener_s_correction, energy_identity_check, nn_truncation
from ocp2d.geometry import Disk
from ocp2d.sampler import SamplerConfig, run_chain
from ocp2d.statistics import BulkViolationWarning, scaling_fit

QUICK = os.environ.get("OCP2D_QUICK") == "1"


def _fmt(x):
    return f"{x:.4g}"


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def criterion_1():
    """Energy identity: residual order >= 1 and <= 1e-3 relative at grid_h 0.02."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2026)
    hs = np.array([0.08, 0.04, 0.02])
    orders, finals = [], []
    for _ in range(20):
        N = int(rng.integers(5, 21))
        R = math.sqrt(N / math.pi)
        while True:
            # smeared disks stay inside the background disk; very close pairs
            # are redrawn to keep the quadrature cost bounded
            r = (R - 0.3) * np.sqrt(rng.random(N))
            th = 2 * math.pi * rng.random(N)
            X = PointConfiguration(np.stack([r * np.cos(th), r * np.sin(th)], 1))
            if np.min(nn_truncation(X)) > 0.02:
                break
        bg = BackgroundMeasure.uniform_disk(N)
        eta = nn_truncation(X)
        checks = [energy_identity_check(X, bg, eta, grid_h=h) for h in hs]
        res = np.array([abs(c.residual) for c in checks])
        orders.append(float(np.polyfit(np.log(hs), np.log(res), 1)[0]))
        finals.append(checks[-1].relative)
    wall = time.perf_counter() - t0
    ok = min(orders) >= 1 and max(finals) <= 1e-3 and wall <= 300
    return ok, f"min order {_fmt(min(orders))}, max relative residual {_fmt(max(finals))}, {wall:.0f} s"


def _gap_disk(points, eta, lo=1.0, hi=3.0):
    """Largest-margin disk D(0, r) whose boundary meets no smearing disk."""
    r = np.hypot(*points.T)
    best, best_gap = None, 0.0
    for rr in np.linspace(lo, hi, 801):
        gap = float(np.min(np.abs(r - rr) - eta))
        if gap > best_gap:
            best, best_gap = rr, gap
    return best


def criterion_2():
    """Ener_s: exact log term, quadrature within 1 percent at grid_h 0.02, s = 0.5."""
    s, h = 0.5, 0.02
    bare_exact = 0.0
    rel_full, rel_bare_no_bg, rel_bare_bg = [], [], []
    for seed in (4, 5, 6):
        N = 60
        cfg = SamplerConfig(beta=2.0, N=N, sweeps=300, seed=seed)
        X = PointConfiguration(run_chain(cfg, keep_configurations=True).configurations[-1], None, check=False)
        eta = nn_truncation(X)
        omega = Disk((0.0, 0.0), _gap_disk(X.points, eta))
        n_in = int(omega.count(X.points))
        for bg in (BackgroundMeasure(0.0, Disk((0.0, 0.0), 1.0)), BackgroundMeasure.uniform_disk(N)):
            corr = ener_s_correction(X, bg, eta, omega, s)
            bare_exact = max(bare_exact, abs(corr.log_term + n_in * math.log(s)))
            q = (electric_energy(X, bg, s * eta, omega, h) - electric_energy(X, bg, eta, omega, h)) / (2 * math.pi)
            rel_full.append(abs(q / corr.total - 1))
            if bg.base_density == 0:
                # without background inside the smearing disks the bare relation is exact
                bare_exact = max(bare_exact, abs(corr.total + n_in * math.log(s)))
                rel_bare_no_bg.append(abs(q / corr.log_term - 1))
            else:
                rel_bare_bg.append(abs(q / corr.log_term - 1))
    ok = bare_exact <= 1e-12 and max(rel_full) <= 0.01 and max(rel_bare_no_bg) <= 0.01
    return ok, (
        f"log term error {_fmt(bare_exact)}, quadrature vs analytic {_fmt(max(rel_full))} "
        f"(bare -Pts log s: {_fmt(max(rel_bare_no_bg))} without background, "
        f"{_fmt(max(rel_bare_bg))} with uniform background, smearing term not in the bare formula)"
    )


def criterion_3():
    """Ginibre N = 2000, 200 samples: gamma in [0.8, 1.3], variance ratio <= 1/3."""
    t0 = time.perf_counter()
    radii = (4.0, 8.0, 16.0, 24.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BulkViolationWarning)
        curve = ex.ginibre_variance(2000, 200, seed=3, radii=radii)
    wall = time.perf_counter() - t0
    fit = scaling_fit(curve)
    v = curve.variance
    ratio = (v[3] / 24**2) / (v[0] / 4**2)
    ok = 0.8 <= fit.gamma <= 1.3 and ratio <= 1 / 3 and wall <= 1800
    flagged = [float(r) for r, b in zip(curve.radii, curve.bulk_ok) if not b]
    note = f", bulk margin flagged at R={flagged}" if caught and flagged else ""
    return ok, (
        f"gamma {_fmt(fit.gamma)}, Var/R {[round(float(x), 3) for x in v / curve.radii]}, "
        f"ratio {_fmt(ratio)}, {wall:.0f} s{note}"
    )


def criterion_4():
    """Poisson control: gamma in [1.85, 2.15], Var/(pi R^2) in [0.9, 1.1]."""
    t0 = time.perf_counter()
    curve = ex.poisson_variance(1.0, 2000, seed=4, radii=(4.0, 8.0, 16.0, 24.0))
    wall = time.perf_counter() - t0
    fit = scaling_fit(curve)
    norm = curve.variance / (math.pi * curve.radii**2)
    ok = 1.85 <= fit.gamma <= 2.15 and np.all((norm >= 0.9) & (norm <= 1.1)) and wall <= 300
    return ok, f"gamma {_fmt(fit.gamma)}, Var/(pi R^2) {[round(float(x), 3) for x in norm]}, {wall:.0f} s"


def criterion_5():
    """Chain at beta 2 vs exact Ginibre variance; sub-Poisson variance at beta 1 and 4."""
    t0 = time.perf_counter()
    cv = ex.chain_variance(2.0, 500, [6.0], sweeps=10_000, seed=5)
    ess = float(cv.curve.ess[0])
    rel = float(np.max(np.abs(cv.curve.variance / cv.oracle - 1)))
    sub = {}
    for beta in (1.0, 4.0):
        c = ex.chain_variance(beta, 1500, [16.0], sweeps=3000, seed=50 + int(beta))
        sub[beta] = float(c.curve.variance[0] / 16**2)
    wall = time.perf_counter() - t0
    poisson = math.pi
    ok = ess >= 200 and rel <= 0.15 and all(v <= 0.5 * poisson for v in sub.values()) and wall <= 3600
    return ok, (
        f"beta 2: Var {_fmt(cv.curve.variance[0])} vs exact {_fmt(cv.oracle[0])} ({_fmt(100 * rel)} %), ESS {ess:.0f}; "
        f"Var(16)/16^2 beta 1: {_fmt(sub[1.0])}, beta 4: {_fmt(sub[4.0])} (Poisson {_fmt(poisson)}); {wall:.0f} s"
    )


def criterion_6():
    """A priori inequality on 50 sampled configurations x 5 test functions."""
    N = 200
    cfg = SamplerConfig(beta=2.0, N=N, sweeps=100 + 50 * 100, seed=21, thin=100)
    samples = run_chain(cfg, keep_configurations=True).configurations
    rows = ex.apriori_suite(samples, BackgroundMeasure.uniform_disk(N), margin=0.02)
    n_pass = sum(r.passed for r in rows)
    worst = max(r.value / r.bound for r in rows)
    ok = len(samples) == 50 and len(rows) == 250 and n_pass == len(rows)
    return ok, f"{n_pass}/{len(rows)} hold, largest lhs/rhs {_fmt(worst)}"


def criterion_7():
    """ErrorCI / (T^5 sum 1/d_ij) bounded across T in {2, 4, 8}: spread <= 5."""
    sweep = ex.errorci_sweep((2.0, 4.0, 8.0), n_instances=100, seed=1)
    ok = sweep.spread <= 5
    consts = ", ".join(f"T={T:g}: {_fmt(c)}" for T, c in zip(sweep.Ts, sweep.constants))
    return ok, f"constants {consts}; spread {_fmt(sweep.spread)}"


_SPINWAVE = {}


def _spinwave():
    if not _SPINWAVE:
        _SPINWAVE.update(ex.spinwave_report(seed=0))
    return _SPINWAVE


def criterion_8():
    """Spin wave: divergence, inner translation, area, reversibility, H1 budget."""
    r = _spinwave()
    ok = (
        r["divergence_max"] <= 1e-6
        and r["inner_translation_error"] == 0.0
        and r["area_error_max"] <= 1e-4
        and r["reversibility_error"] <= 1e-8
        and r["h1_budget"]["spread"] <= 4
    )
    return ok, (
        f"divergence {_fmt(r['divergence_max'])}, inner error {_fmt(r['inner_translation_error'])}, "
        f"|det-1| {_fmt(r['area_error_max'])}, reversibility {_fmt(r['reversibility_error'])} ell, "
        f"H1/eps spread {_fmt(r['h1_budget']['spread'])}"
    )


def criterion_9():
    """ErrAve against t^2: log-log slope 2 +- 0.3."""
    r = _spinwave()
    ok = abs(r["erravet_slope"] - 2) <= 0.3
    return ok, f"slope {_fmt(r['erravet_slope'])}, medians {[float(f'{v:.3g}') for v in r['erravet_values']]}"


def criterion_10():
    """Radial transport: KS at level 0.01 with 1e5 samples, psi spread <= 3, mass residual <= 1e-9."""
    r = ex.transport_report(seed=0, n_samples=100_000)
    ok = r["ks_passed"] and r["psi1_fit"]["spread"] <= 3 and r["mass_residual"] <= 1e-9
    return ok, (
        f"KS {_fmt(r['ks_stat'])} (threshold {_fmt(r['ks_threshold'])}), psi spread {_fmt(r['psi1_fit']['spread'])}, "
        f"mass residual {_fmt(r['mass_residual'])}"
    )


def criterion_11():
    """Determinism: repeated CLI runs give byte-identical CSV files."""
    configs = {
        "poisson": {"model": {"radius": 10.0}, "statistics": {"n_samples": 200, "radii": [1.0, 2.0, 4.0, 6.0]}},
        "sample": {"model": {"N": 60}, "sampler": {"sweeps": 300}, "statistics": {"radii": [1.0, 1.5, 2.0]}},
        "errorci": {"errorci": {"T": [2.0, 4.0], "n_instances": 10}},
    }
    same = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for cmd, cfg in configs.items():
            path = tmp / f"{cmd}.json"
            path.write_text(json.dumps(cfg))
            outs = []
            for _ in range(2):
                proc = subprocess.run(
                    [sys.executable, "-m", "ocp2d", cmd, "--config", str(path), "--seed", "17", "--out", str(tmp / "runs")],
                    capture_output=True,
                    text=True,
                    check=True,
                )
                outs.append(Path(proc.stdout.strip()))
            files = sorted(p.name for p in outs[0].glob("*.csv"))
            same.append(bool(files) and all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files))
    ok = all(same)
    return ok, "identical CSV bytes for " + ", ".join(f"{c}: {s}" for c, s in zip(configs, same))


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 12)}


# ---------------------------------------------------------------------------
# pytest entry points
# ---------------------------------------------------------------------------


def _line(k, ok, detail):
    return f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"


@pytest.mark.parametrize("k", list(CRITERIA))
def test_criterion(k, capsys):
    if k == 3 and QUICK:
        pytest.skip("OCP2D_QUICK=1 skips the N = 2000 Ginibre run")
    ok, detail = CRITERIA[k]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, fn in CRITERIA.items():
        if k == 3 and QUICK:
            print(f"CRITERION {k}: SKIP (OCP2D_QUICK=1)")
            continue
        ok, detail = fn()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
