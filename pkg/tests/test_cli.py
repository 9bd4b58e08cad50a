import csv
import json
import math

import pytest

from ocp2d import cli


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return p


def _main(tmp_path, command, cfg=None, *extra):
    argv = [command, "--out", str(tmp_path / "runs")]
    if cfg is not None:
        argv += ["--config", str(_write(tmp_path, cfg))]
    return cli.main(argv + list(extra))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _only_run(tmp_path):
    (d,) = sorted((tmp_path / "runs").iterdir())
    return d


SMALL_POISSON = {
    "model": {"radius": 10.0},
    "statistics": {"n_samples": 400, "radii": [1.0, 2.0, 4.0, 6.0]},
}


def test_unknown_key_reports_line(tmp_path, capsys):
    text = '{\n  "statistics": {\n    "radiuses": [1, 2]\n  }\n}\n'
    assert _main(tmp_path, "poisson", text) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "cfg.json:3" in err and "statistics.radiuses" in err


def test_duplicate_key_and_syntax_errors(tmp_path, capsys):
    assert _main(tmp_path, "poisson", '{\n"seed": 1,\n"seed": 2\n}') == cli.EXIT_CONFIG
    assert "cfg.json:3" in capsys.readouterr().err
    assert _main(tmp_path, "poisson", '{\n"seed": 1,,\n}') == cli.EXIT_CONFIG
    assert "cfg.json:2" in capsys.readouterr().err


def test_type_and_schema_errors(tmp_path, capsys):
    assert _main(tmp_path, "poisson", '{\n  "model": {"N": "many"}\n}') == cli.EXIT_CONFIG
    assert "cfg.json:2" in capsys.readouterr().err
    assert _main(tmp_path, "poisson", '{"schema_version": 7}') == cli.EXIT_CONFIG
    assert "schema_version" in capsys.readouterr().err
    assert _main(tmp_path, "poisson", '{"command": "ginibre"}') == cli.EXIT_CONFIG


def test_nan_is_rejected():
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text('{"seed": NaN}')


def test_poisson_run_writes_variance_close_to_area(tmp_path):
    assert _main(tmp_path, "poisson", SMALL_POISSON, "--seed", "5") == cli.EXIT_OK
    d = _only_run(tmp_path)
    rows = _rows(d / "variance.csv")
    assert [float(r["R"]) for r in rows] == [1.0, 2.0, 4.0, 6.0]
    for r in rows:
        ratio = float(r["var"]) / (math.pi * float(r["R"]) ** 2)
        assert 0.7 < ratio < 1.3
    summary = json.loads((d / "summary.json").read_text())
    assert 1.7 < summary["gamma"] < 2.3
    recs = cli.read_record(d)
    assert {r.metric for r in recs} >= {"gamma"}


def test_repeat_runs_give_identical_csv(tmp_path):
    for _ in range(2):
        assert _main(tmp_path, "poisson", SMALL_POISSON, "--seed", "9") == cli.EXIT_OK
    a, b = sorted((tmp_path / "runs").iterdir())
    assert a.name != b.name
    assert (a / "variance.csv").read_bytes() == (b / "variance.csv").read_bytes()


def test_ginibre_threads_do_not_change_results(tmp_path):
    cfg = {"model": {"N": 200}, "statistics": {"n_samples": 20, "radii": [1.0, 2.0, 3.0, 4.0]}}
    for threads in ("1", "2"):
        assert _main(tmp_path, "ginibre", cfg, "--seed", "2", "--threads", threads) == cli.EXIT_OK
    a, b = sorted((tmp_path / "runs").iterdir())
    assert (a / "variance.csv").read_bytes() == (b / "variance.csv").read_bytes()
    assert len(_rows(a / "variance.csv")) == 4


def test_output_root_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cfg = dict(SMALL_POISSON, output_dir=str(tmp_path / "cfg"))
    cfg["statistics"] = dict(SMALL_POISSON["statistics"], n_samples=20)
    assert cli.main(["poisson", "--config", str(_write(tmp_path, cfg))]) == cli.EXIT_OK
    assert (tmp_path / "env").is_dir() and not (tmp_path / "cfg").exists()


def test_tampered_record_is_detected(tmp_path):
    cfg = dict(SMALL_POISSON)
    cfg["statistics"] = dict(SMALL_POISSON["statistics"], n_samples=20)
    assert _main(tmp_path, "poisson", cfg) == cli.EXIT_OK
    d = _only_run(tmp_path)
    stored = json.loads((d / "config.json").read_text())
    stored["seed"] = 12345
    (d / "config.json").write_text(json.dumps(stored))
    with pytest.raises(ValueError):
        cli.read_record(d)


def test_seed_list_runs_in_order(tmp_path):
    cfg = dict(SMALL_POISSON, seeds=[3, 1])
    cfg["statistics"] = dict(SMALL_POISSON["statistics"], n_samples=20)
    assert _main(tmp_path, "poisson", cfg) == cli.EXIT_OK
    seeds = [json.loads((d / "config.json").read_text())["seed"] for d in sorted((tmp_path / "runs").iterdir())]
    assert sorted(seeds) == [1, 3]


def test_sample_and_tails_commands(tmp_path):
    cfg = {"model": {"N": 60}, "sampler": {"sweeps": 400}, "statistics": {"radii": [1.0, 1.5, 2.0]}}
    assert _main(tmp_path, "sample", cfg) == cli.EXIT_OK
    tails = {"model": {"N": 150}, "statistics": {"n_samples": 100, "region_radius": 3.0, "thresholds": [0.0, 3.0]}}
    assert _main(tmp_path, "tails", tails) == cli.EXIT_OK
    d = [p for p in (tmp_path / "runs").iterdir() if p.name.startswith("tails")][0]
    rows = _rows(d / "tails.csv")
    assert float(rows[0]["p"]) == 1.0


def test_errorci_and_transport_check(tmp_path):
    assert _main(tmp_path, "errorci", {"errorci": {"T": [2.0, 4.0, 8.0], "n_instances": 20}}) == cli.EXIT_OK
    assert _main(tmp_path, "transport-check", {"transport": {"n_samples": 20000}}) == cli.EXIT_OK
    d = [p for p in (tmp_path / "runs").iterdir() if p.name.startswith("transport")][0]
    rep = json.loads((d / "transport.json").read_text())
    assert rep["mass_residual"] <= 1e-9


def test_errorci_spread_failure_exits_4(tmp_path):
    cfg = {"errorci": {"T": [2.0, 8.0], "n_instances": 20, "max_spread": 1.0}}
    assert _main(tmp_path, "errorci", cfg) == cli.EXIT_AUDIT


def test_audit_and_report_commands(tmp_path):
    audit = {"model": {"N": 80}, "sampler": {"sweeps": 300}, "audit": {"n_configs": 2}}
    assert _main(tmp_path, "audit", audit) == cli.EXIT_OK
    report = {"model": {"N": 80}, "sampler": {"sweeps": 400}, "report": {"betas": [2.0]}, "statistics": {"radii": [1.0, 1.5, 2.0, 2.5]}}
    assert _main(tmp_path, "report", report) == cli.EXIT_OK
    d = [p for p in (tmp_path / "runs").iterdir() if p.name.startswith("report")][0]
    assert len(_rows(d / "report.csv")) == 1


def test_invalid_parameters_exit_2(tmp_path):
    cfg = {"model": {"N": 100}, "statistics": {"n_samples": 1, "radii": [1.0, 2.0, 3.0]}}
    assert _main(tmp_path, "ginibre", cfg) == cli.EXIT_CONFIG


def test_spinwave_check_small(tmp_path):
    cfg = {"spinwave": {"n_points": 60, "n_configs": 2}}
    assert _main(tmp_path, "spinwave-check", cfg) == cli.EXIT_OK
    d = _only_run(tmp_path)
    rep = json.loads((d / "spinwave.json").read_text())
    assert set(rep) >= {"divergence_max", "area_error_max", "psi_bound_violations", "h1_budget", "erravet_slope"}
