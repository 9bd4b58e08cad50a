"""Command line entry point.

Usage::

    ocp2d COMMAND [--config PATH] [--seed U64] [--out DIR] [--threads N]

Every run writes a fresh directory ``<out>/<command>-<digest>-<k>`` with the
resolved configuration, the CSV or JSON artifacts of the command and a list
of result records. The output root is taken from ``--out``, then from the
``OCP2D_OUT`` environment variable, then from ``output_dir`` in the
configuration file.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-audit failure, 130 interrupted (chain checkpoint flushed).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from json import decoder as _jd
from json import scanner as _js
from pathlib import Path

import numpy as np

from . import experiments as ex
from .background import BackgroundMeasure
from .energy import DivergentIntegralError, NeutralityError, SingularEnergyError
from .geometry import Disk, GeometryError, ParameterError
from .sampler import CacheDriftError, DegenerateMeasureError, SamplerConfig, kostlan_count_variance, run_chain
from .statistics import FitError, number_variance, scaling_fit, tail_estimate, wegner_audit, wellspread_check
from .transport import MonotonicityError

__all__ = [
    "SCHEMA_VERSION",
    "COMMANDS",
    "ConfigError",
    "ResultRecord",
    "load_config",
    "parse_config_text",
    "resolve_config",
    "config_digest",
    "read_record",
    "run",
    "main",
]

SCHEMA_VERSION = 1
COMMANDS = (
    "sample",
    "ginibre",
    "poisson",
    "variance",
    "tails",
    "errorci",
    "spinwave-check",
    "transport-check",
    "audit",
    "report",
)
OUT_ENV = "OCP2D_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_AUDIT = 4
EXIT_INTERRUPTED = 130

NUMERIC_ERRORS = (
    FloatingPointError,
    ZeroDivisionError,
    np.linalg.LinAlgError,
    CacheDriftError,
    DegenerateMeasureError,
    DivergentIntegralError,
    SingularEnergyError,
    FitError,
    MonotonicityError,
)


class ConfigError(ValueError):
    """Invalid configuration, reported as ``source:line: message``."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.message = message
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# JSON with key positions
# ---------------------------------------------------------------------------


class _Located(dict):
    """Dictionary that remembers the line of every key."""

    lines: dict


def _line_of(s: str, pos: int) -> int:
    return s.count("\n", 0, pos) + 1


def _make_object_parser(source: str):
    ws = _jd.WHITESPACE.match

    def skip(s, end):
        return ws(s, end).end()

    def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
        s, end = s_and_end
        obj = _Located()
        obj.lines = {}
        end = skip(s, end)
        if s[end : end + 1] == "}":
            return obj, end + 1
        while True:
            if s[end : end + 1] != '"':
                raise _jd.JSONDecodeError("Expecting property name enclosed in double quotes", s, end)
            pos = end
            key, end = _jd.scanstring(s, end + 1, strict)
            end = skip(s, end)
            if s[end : end + 1] != ":":
                raise _jd.JSONDecodeError("Expecting ':' delimiter", s, end)
            end = skip(s, end + 1)
            try:
                value, end = scan_once(s, end)
            except StopIteration as err:
                raise _jd.JSONDecodeError("Expecting value", s, err.value) from None
            if key in obj:
                raise ConfigError(f"duplicate key {key!r}", _line_of(s, pos), source)
            obj[key] = value
            obj.lines[key] = _line_of(s, pos)
            end = skip(s, end)
            c = s[end : end + 1]
            if c == "}":
                return obj, end + 1
            if c != ",":
                raise _jd.JSONDecodeError("Expecting ',' delimiter", s, end)
            end = skip(s, end + 1)

    return parse_object


def parse_config_text(text: str, source: str = "<config>") -> _Located:
    """Parse JSON text into nested dictionaries that carry key line numbers."""

    def bad_constant(name):
        raise ConfigError(f"non-finite number {name} is not allowed", None, source)

    dec = json.JSONDecoder(parse_constant=bad_constant)
    dec.parse_object = _make_object_parser(source)
    dec.scan_once = _js.py_make_scanner(dec)
    try:
        obj, end = dec.raw_decode(text, _jd.WHITESPACE.match(text, 0).end())
    except _jd.JSONDecodeError as err:
        raise ConfigError(err.msg, err.lineno, source) from None
    if text[end:].strip():
        raise ConfigError("extra data after the configuration object", _line_of(text, end), source)
    if not isinstance(obj, dict):
        raise ConfigError("the configuration must be a JSON object", 1, source)
    return obj


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(lo=None, hi=None):
    def check(v):
        if not isinstance(v, int) or isinstance(v, bool):
            return "expected an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None

    return check


def _float(lo=None, hi=None, open_lo=False):
    def check(v):
        if not _is_num(v):
            return "expected a number"
        if lo is not None and (v < lo or (open_lo and v == lo)):
            return f"must be {'>' if open_lo else '>='} {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None

    return check


def _floats(length=None, increasing=False, positive=False, min_len=1):
    def check(v):
        if not isinstance(v, list) or not all(_is_num(x) for x in v):
            return "expected a list of numbers"
        if length is not None and len(v) != length:
            return f"expected exactly {length} numbers"
        if len(v) < min_len:
            return f"expected at least {min_len} numbers"
        if increasing and any(b <= a for a, b in zip(v, v[1:])):
            return "must be strictly increasing"
        if positive and any(x <= 0 for x in v):
            return "entries must be positive"
        return None

    return check


def _ints(lo=0, hi=2**64 - 1):
    def check(v):
        if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            return "expected a non-empty list of integers"
        if any(x < lo or x > hi for x in v):
            return f"entries must lie in [{lo}, {hi}]"
        return None

    return check


def _choice(*opts):
    def check(v):
        return None if v in opts else f"expected one of {list(opts)}"

    return check


def _str(v):
    return None if isinstance(v, str) else "expected a string"


SCHEMA = {
    "schema_version": _int(),
    "command": _choice(*COMMANDS),
    "seed": _int(0, 2**64 - 1),
    "seeds": _ints(),
    "output_dir": _str,
    "model": {
        "ensemble": _choice("ginibre", "poisson", "chain"),
        "beta": _float(0, open_lo=True),
        "N": _int(1),
        "delta": _float(0),
        "intensity": _float(0),
        "radius": _float(0, open_lo=True),
    },
    "sampler": {
        "sweeps": _int(1),
        "burn_in": _int(0),
        "proposal_scale": _float(0, open_lo=True),
        "thin": _int(1),
        "audit_every": _int(1),
        "checkpoint_every": _int(0),
    },
    "statistics": {
        "n_samples": _int(2),
        "radii": _floats(increasing=True, positive=True),
        "center": _floats(length=2),
        "thresholds": _floats(increasing=True),
        "region_radius": _float(0, open_lo=True),
        "confidence": _float(0, 1, open_lo=True),
    },
    "presets": {
        "R": _float(math.e, open_lo=True),
        "C": _float(0, open_lo=True),
        "eps_R": _float(0, open_lo=True),
        "L": _float(0, open_lo=True),
        "T": _float(0, open_lo=True),
        "M": _float(0, open_lo=True),
        "omega": _float(0, open_lo=True),
        "s": _float(0, open_lo=True),
    },
    "errorci": {
        "T": _floats(increasing=True, positive=True, min_len=2),
        "n_instances": _int(1),
        "max_spread": _float(1),
    },
    "spinwave": {
        "epsilons": _floats(positive=True),
        "flow_epsilon": _float(0, 1, open_lo=True),
        "ell": _float(0, open_lo=True),
        "n_points": _int(1),
        "n_configs": _int(1),
    },
    "transport": {
        "plateau": _floats(length=2, increasing=True, positive=True),
        "beta": _float(0, open_lo=True),
        "n_samples": _int(100),
    },
    "audit": {
        "n_configs": _int(1),
        "grid_h": _float(0, open_lo=True),
        "margin": _float(0),
        "ell": _float(1),
        "K": _float(10),
    },
    "report": {
        "betas": _floats(positive=True),
    },
}

_BASE = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "output_dir": "runs",
    "model": {"ensemble": "ginibre", "beta": 2.0, "N": 2000, "delta": 0.15, "intensity": 1.0, "radius": 25.0},
    "sampler": {"sweeps": 2000, "burn_in": None, "proposal_scale": 0.5, "thin": 1, "audit_every": 500, "checkpoint_every": 0},
    "statistics": {
        "n_samples": 200,
        "radii": [4.0, 8.0, 16.0, 24.0],
        "center": [0.0, 0.0],
        "thresholds": [0.0, 2.0, 4.0, 6.0, 8.0],
        "region_radius": 6.0,
        "confidence": 0.9,
    },
    "presets": {"R": 100.0, "C": 1.0},
    "errorci": {"T": [2.0, 4.0, 8.0], "n_instances": 100, "max_spread": 5.0},
    "spinwave": {"epsilons": [1 / 8, 1 / 12, 1 / 16], "flow_epsilon": 0.7, "ell": 1.0, "n_points": 400, "n_configs": 8},
    "transport": {"plateau": [2.0, 5.0], "beta": 2.0, "n_samples": 100000},
    "audit": {"n_configs": 10, "grid_h": 0.1, "margin": 0.02, "ell": 2.0, "K": 40.0},
    "report": {"betas": [1.0, 2.0, 4.0]},
}

# command specific defaults layered over ``_BASE``
_COMMAND_DEFAULTS = {
    "sample": {"model": {"ensemble": "chain", "N": 500}, "statistics": {"radii": [2.0, 4.0, 6.0]}},
    "ginibre": {"model": {"ensemble": "ginibre", "N": 2000}},
    "poisson": {"model": {"ensemble": "poisson", "radius": 25.0}, "statistics": {"n_samples": 2000}},
    "variance": {"model": {"ensemble": "poisson"}, "statistics": {"n_samples": 2000}},
    "tails": {"model": {"ensemble": "ginibre", "N": 500}},
    "audit": {"model": {"ensemble": "chain", "N": 200}, "sampler": {"sweeps": 600}},
    "report": {"model": {"ensemble": "chain", "N": 500}, "sampler": {"sweeps": 3000}, "statistics": {"radii": [2.0, 3.0, 4.0, 6.0, 8.0]}},
}

# thresholds used by the check commands for exit code 4
ACCEPTANCE = {
    "divergence_max": 1e-6,
    "area_error_max": 1e-4,
    "reversibility_error": 1e-8,
    "inner_translation_error": 1e-12,
    "h1_spread": 4.0,
    "psi1_spread": 3.0,
    "mass_residual": 1e-9,
}


def _validate(obj, schema, source, path=""):
    lines = getattr(obj, "lines", {})
    for key, val in obj.items():
        line = lines.get(key)
        name = f"{path}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key {name!r}", line, source)
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{name!r} must be an object", line, source)
            _validate(val, spec, source, name + ".")
        else:
            msg = spec(val)
            if msg:
                raise ConfigError(f"{name!r}: {msg}", line, source)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


def load_config(path) -> dict:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read configuration: {err.strerror}", None, str(path)) from None
    obj = parse_config_text(text, str(path))
    _validate(obj, SCHEMA, str(path))
    if "schema_version" in obj and obj["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {obj['schema_version']} (expected {SCHEMA_VERSION})",
            obj.lines.get("schema_version"),
            str(path),
        )
    return obj


def resolve_config(command: str, user: dict | None = None, seed: int | None = None) -> dict:
    """Defaults for ``command`` overlaid with the user configuration and seed."""
    user = {} if user is None else user
    if "command" in user and user["command"] != command:
        line = getattr(user, "lines", {}).get("command")
        raise ConfigError(f"configuration is for {user['command']!r}, not {command!r}", line)
    cfg = _merge(_BASE, _COMMAND_DEFAULTS.get(command, {}))
    cfg = _merge(cfg, _plain(user))
    cfg["command"] = command
    cfg["schema_version"] = SCHEMA_VERSION
    if seed is not None:
        cfg["seed"] = int(seed)
        cfg.pop("seeds", None)
    return cfg


def _canonical(cfg: dict) -> bytes:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()


def config_digest(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved configuration."""
    return hashlib.sha256(_canonical(cfg)).hexdigest()


def _content_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# ---------------------------------------------------------------------------
# records and emission
# ---------------------------------------------------------------------------


@dataclass
class ResultRecord:
    """One emitted metric of a run."""

    run_id: str
    config_digest: str
    input_hash: str
    metric: str
    value: float
    stderr: float | None
    units: str
    wall_time: float


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _fresh_dir(root: Path, stem: str) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    k = 0
    while True:
        d = root / f"{stem}-{k}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def read_record(run_dir) -> list[ResultRecord]:
    """Load the records of a run and check them against its configuration."""
    run_dir = Path(run_dir)
    cfg = json.loads((run_dir / "config.json").read_text())
    digest = config_digest(cfg)
    recs = [ResultRecord(**r) for r in json.loads((run_dir / "records.json").read_text())]
    for r in recs:
        if r.config_digest != digest:
            raise ValueError(f"record {r.metric!r} does not match the stored configuration")
    return recs


class _Run:
    """Context of one command execution."""

    def __init__(self, cfg: dict, out_root: Path, threads: int, seed: int):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.seed = int(seed)
        self.digest = config_digest(cfg)
        self.input_hash = _content_hash(_canonical(cfg))
        self.dir = _fresh_dir(out_root, f"{cfg['command']}-{self.digest[:12]}")
        self.run_id = self.dir.name
        self.records: list[ResultRecord] = []
        self.t0 = time.perf_counter()
        write_json(self.dir / "config.json", cfg)

    def record(self, metric: str, value, stderr=None, units: str = "") -> None:
        self.records.append(
            ResultRecord(
                self.run_id,
                self.digest,
                self.input_hash,
                metric,
                float(value),
                None if stderr is None else float(stderr),
                units,
                round(time.perf_counter() - self.t0, 6),
            )
        )

    def finish(self) -> None:
        write_json(self.dir / "records.json", [asdict(r) for r in self.records])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _draw(run: _Run):
    """Samples of the configured ensemble, plus ``(domain, N, from_chain)``."""
    m, st = run.cfg["model"], run.cfg["statistics"]
    ens = m["ensemble"]
    if ens == "ginibre":
        N = m["N"]
        samples = ex.ginibre_samples(N, st["n_samples"], run.seed, run.threads)
        return samples, Disk((0.0, 0.0), math.sqrt(N / math.pi)), N, m["delta"], False
    if ens == "poisson":
        R = m["radius"]
        samples = ex.poisson_samples(m["intensity"], R, st["n_samples"], run.seed)
        return samples, Disk((0.0, 0.0), R), m["intensity"] * math.pi * R * R, 0.0, False
    res = _chain(run, keep=True)
    return res.configurations, _sampler_config(run).domain, m["N"], m["delta"], True


def _sampler_config(run: _Run, beta=None, seed=None) -> SamplerConfig:
    m, sp = run.cfg["model"], run.cfg["sampler"]
    return SamplerConfig(
        beta=m["beta"] if beta is None else beta,
        N=m["N"],
        proposal_scale=sp["proposal_scale"],
        sweeps=sp["sweeps"],
        burn_in=sp["burn_in"],
        thin=sp["thin"],
        seed=run.seed if seed is None else seed,
        audit_every=sp["audit_every"],
    )


def _chain(run: _Run, keep=False, observe=None, beta=None, seed=None, tag=""):
    cfg = _sampler_config(run, beta, seed)
    every = run.cfg["sampler"]["checkpoint_every"]
    res = run_chain(
        cfg,
        observe=observe,
        keep_configurations=keep,
        checkpoint=run.dir / f"checkpoint{tag}.json",
        checkpoint_every=every,
    )
    run.record(f"acceptance{tag}", res.acceptance)
    run.record(f"proposal_scale{tag}", res.proposal_scale, units="length")
    run.record(f"max_cache_error{tag}", res.max_cache_error)
    return res


def _emit_variance(run: _Run, curve, name="variance.csv", tag="") -> dict:
    write_csv(run.dir / name, ("R", "var", "stderr", "ess"), curve.rows())
    summary = {"radii": curve.radii, "variance": curve.variance, "stderr": curve.stderr, "bulk_ok": curve.bulk_ok}
    try:
        fit = scaling_fit(curve)
        summary.update(gamma=fit.gamma, gamma_ci=fit.gamma_ci, prefactor=fit.c)
        run.record(f"gamma{tag}", fit.gamma, (fit.gamma_ci[1] - fit.gamma_ci[0]) / 2, "1")
    except FitError as err:
        summary["gamma_error"] = str(err)
    return summary


def _variance_of(run: _Run, samples, domain, N, delta, from_chain):
    st = run.cfg["statistics"]
    return number_variance(samples, st["center"], st["radii"], from_chain=from_chain, domain=domain, N=N, delta=delta)


def cmd_variance(run: _Run) -> int:
    samples, domain, N, delta, chain = _draw(run)
    curve = _variance_of(run, samples, domain, N, delta, chain)
    summary = _emit_variance(run, curve)
    summary["ensemble"] = run.cfg["model"]["ensemble"]
    if run.cfg["model"]["ensemble"] == "poisson":
        summary["var_over_area"] = curve.variance / (math.pi * curve.radii**2)
    if run.cfg["model"]["ensemble"] == "ginibre" and np.allclose(run.cfg["statistics"]["center"], 0.0):
        summary["oracle_variance"] = kostlan_count_variance(N, curve.radii)
    write_json(run.dir / "summary.json", summary)
    return EXIT_OK


def cmd_ginibre(run: _Run) -> int:
    run.cfg["model"]["ensemble"] = "ginibre"
    return cmd_variance(run)


def cmd_poisson(run: _Run) -> int:
    run.cfg["model"]["ensemble"] = "poisson"
    return cmd_variance(run)


def cmd_sample(run: _Run) -> int:
    st = run.cfg["statistics"]
    radii = np.asarray(st["radii"], float)
    cen = np.asarray(st["center"], float)

    def observe(p):
        d2 = np.sum((p - cen) ** 2, axis=1)
        return np.sum(d2[:, None] <= radii[None, :] ** 2, axis=0)

    res = _chain(run, observe=observe)
    cfg = _sampler_config(run)
    counts = np.asarray(res.observations, float)
    curve = number_variance(None, cen, radii, from_chain=True, domain=cfg.domain, N=cfg.N, delta=run.cfg["model"]["delta"], counts=counts)
    summary = _emit_variance(run, curve)
    if cfg.beta == 2 and np.allclose(cen, 0.0):
        summary["oracle_variance"] = kostlan_count_variance(cfg.N, radii)
    summary["acceptance"] = res.acceptance
    write_json(run.dir / "summary.json", summary)
    return EXIT_OK


def cmd_tails(run: _Run) -> int:
    st = run.cfg["statistics"]
    samples, *_ = _draw(run)
    omega = Disk(tuple(st["center"]), st["region_radius"])
    te = tail_estimate(samples, omega, st["thresholds"], confidence=st["confidence"])
    write_csv(run.dir / "tails.csv", ("threshold", "p", "lo", "hi"), te.rows())
    for t, p in zip(te.thresholds, te.exceed_prob):
        run.record(f"tail_p[{t:g}]", p)
    return EXIT_OK


def cmd_errorci(run: _Run) -> int:
    e = run.cfg["errorci"]
    sweep = ex.errorci_sweep(tuple(e["T"]), e["n_instances"], run.seed)
    write_csv(run.dir / "errorci.csv", ("T", "instance", "ratio"), sweep.rows())
    summary = {"T": sweep.Ts, "constant": sweep.constants, "spread": sweep.spread, "max_spread": e["max_spread"]}
    write_json(run.dir / "summary.json", summary)
    for T, c in zip(sweep.Ts, sweep.constants):
        run.record(f"errorci_constant[T={T:g}]", c)
    run.record("errorci_spread", sweep.spread)
    return EXIT_OK if sweep.spread <= e["max_spread"] else EXIT_AUDIT


def cmd_spinwave(run: _Run) -> int:
    s = run.cfg["spinwave"]
    rep = ex.spinwave_report(
        seed=run.seed,
        epsilons=tuple(s["epsilons"]),
        flow_epsilon=s["flow_epsilon"],
        ell=s["ell"],
        n_points=s["n_points"],
        n_configs=s["n_configs"],
    )
    write_json(run.dir / "spinwave.json", rep)
    for k in ("divergence_max", "area_error_max", "psi_bound_violations", "erravet_slope"):
        run.record(k, rep[k])
    run.record("h1_spread", rep["h1_budget"]["spread"])
    ok = (
        rep["divergence_max"] <= ACCEPTANCE["divergence_max"]
        and rep["area_error_max"] <= ACCEPTANCE["area_error_max"]
        and rep["reversibility_error"] <= ACCEPTANCE["reversibility_error"]
        and rep["inner_translation_error"] <= ACCEPTANCE["inner_translation_error"]
        and rep["psi_bound_violations"] == 0
        and rep["h1_budget"]["spread"] <= ACCEPTANCE["h1_spread"]
        and abs(rep["erravet_slope"] - 2.0) <= 0.3
    )
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_transport(run: _Run) -> int:
    t = run.cfg["transport"]
    rep = ex.transport_report(seed=run.seed, beta=t["beta"], plateau=tuple(t["plateau"]), n_samples=t["n_samples"])
    write_json(run.dir / "transport.json", rep)
    for k in ("ks_stat", "mass_residual", "energy_delta_slope"):
        run.record(k, rep[k])
    run.record("psi1_spread", rep["psi1_fit"]["spread"])
    ok = rep["ks_passed"] and rep["psi1_fit"]["spread"] <= ACCEPTANCE["psi1_spread"] and rep["mass_residual"] <= ACCEPTANCE["mass_residual"]
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_audit(run: _Run) -> int:
    a = run.cfg["audit"]
    samples, domain, N, delta, chain = _draw(run)
    if len(samples) > a["n_configs"]:
        idx = np.linspace(0, len(samples) - 1, a["n_configs"]).round().astype(int)
        samples = [samples[i] for i in idx]
    bg = BackgroundMeasure(1.0, domain)
    rows = list(ex.apriori_suite(samples, bg, grid_h=a["grid_h"], margin=a["margin"]))
    inner = Disk(tuple(domain.center), max(domain.radius - delta * math.sqrt(N), a["ell"]))
    for i, s in enumerate(samples):
        ws = wellspread_check(s, inner, a["ell"], a["K"], bg, grid_h=a["grid_h"])
        for r in ws.table:
            rows.append(("wellspread_pts", f"sample{i}/square{r['square']}", r["pts"], r["bound"], r["pts"] <= r["bound"]))
            rows.append(("wellspread_ener", f"sample{i}/square{r['square']}", r["ener"], r["bound"], r["pass"]))
    rows = [(r.check, r.region_id, r.value, r.bound, r.passed) if hasattr(r, "check") else r for r in rows]
    rng = np.random.default_rng(ex.child_seeds(run.seed, 1)[0])
    probes = []
    for rad in (0.05, 0.1, 0.2, 0.4):
        for _ in range(32):
            rr = inner.radius * math.sqrt(rng.random())
            th = 2 * math.pi * rng.random()
            probes.append(Disk((inner.center[0] + rr * math.cos(th), inner.center[1] + rr * math.sin(th)), rad))
    weg = wegner_audit(samples, probes)
    for w in weg.rows:
        rows.append(("wegner_ratio", f"r={w.radius:g}", w.ratio, w.ratio_ci[1], True))
    rows.append(("wegner_not_growing", "all", weg.max_ratio, math.nan, not weg.growing))
    write_csv(run.dir / "audits.csv", ("check", "region_id", "value", "bound", "pass"), rows)
    failed = sum(1 for r in rows if not r[4])
    run.record("audit_rows", len(rows))
    run.record("audit_failures", failed)
    return EXIT_OK if failed == 0 else EXIT_AUDIT


def cmd_report(run: _Run) -> int:
    st = run.cfg["statistics"]
    betas = sorted(run.cfg["report"]["betas"])
    seeds = ex.child_seeds(run.seed, len(betas))
    radii = np.asarray(st["radii"], float)
    cen = np.asarray(st["center"], float)
    table = []
    for beta, s in zip(betas, seeds):
        tag = f"_beta{beta:g}"

        def observe(p):
            d2 = np.sum((p - cen) ** 2, axis=1)
            return np.sum(d2[:, None] <= radii[None, :] ** 2, axis=0)

        res = _chain(run, observe=observe, beta=beta, seed=s, tag=tag)
        cfg = _sampler_config(run, beta, s)
        curve = number_variance(
            None, cen, radii, from_chain=True, domain=cfg.domain, N=cfg.N, delta=run.cfg["model"]["delta"], counts=np.asarray(res.observations, float)
        )
        write_csv(run.dir / f"variance{tag}.csv", ("R", "var", "stderr", "ess"), curve.rows())
        fit = scaling_fit(curve)
        run.record(f"gamma{tag}", fit.gamma, (fit.gamma_ci[1] - fit.gamma_ci[0]) / 2)
        table.append((beta, fit.gamma, fit.gamma_ci[0], fit.gamma_ci[1], float(np.min(curve.ess)), float(np.max(curve.variance / (math.pi * radii**2)))))
    write_csv(run.dir / "report.csv", ("beta", "gamma", "gamma_lo", "gamma_hi", "ess_min", "var_over_area_max"), table)
    return EXIT_OK


_HANDLERS = {
    "sample": cmd_sample,
    "ginibre": cmd_ginibre,
    "poisson": cmd_poisson,
    "variance": cmd_variance,
    "tails": cmd_tails,
    "errorci": cmd_errorci,
    "spinwave-check": cmd_spinwave,
    "transport-check": cmd_transport,
    "audit": cmd_audit,
    "report": cmd_report,
}


def run(cfg: dict, out_root=None, threads: int = 1, stream=None) -> tuple[int, Path | None]:
    """Execute a resolved configuration; returns ``(exit_code, run_dir)``.

    With a ``seeds`` list the command runs once per seed, in increasing seed
    order, and the worst exit code is returned.
    """
    stream = sys.stderr if stream is None else stream
    root = Path(out_root if out_root is not None else os.environ.get(OUT_ENV) or cfg["output_dir"])
    seeds = sorted(cfg.get("seeds") or [cfg["seed"]])
    code, last = EXIT_OK, None
    for seed in seeds:
        c = copy.deepcopy(cfg)
        c.pop("seeds", None)
        c["seed"] = seed
        r = _Run(c, root, threads, seed)
        last = r.dir
        try:
            rc = _HANDLERS[c["command"]](r)
        except KeyboardInterrupt:
            r.finish()
            print(f"interrupted; partial results and checkpoint in {r.dir}", file=stream)
            return EXIT_INTERRUPTED, r.dir
        except NUMERIC_ERRORS as err:
            r.finish()
            print(f"numerical failure: {type(err).__name__}: {err}", file=stream)
            return EXIT_NUMERIC, r.dir
        except (ParameterError, GeometryError, NeutralityError) as err:
            r.finish()
            print(f"invalid parameters: {err}", file=stream)
            return EXIT_CONFIG, r.dir
        r.finish()
        code = max(code, rc)
    return code, last


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ocp2d", description="Two-dimensional one-component plasma laboratory.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "sample": "Metropolis chain with number variance along the chain",
        "ginibre": "number variance of Ginibre eigenvalues",
        "poisson": "number variance of a Poisson process",
        "variance": "number variance of the configured ensemble",
        "tails": "discrepancy tail probabilities with Wilson intervals",
        "errorci": "fitted constant of the subsystem interaction error",
        "spinwave-check": "audit of the localized translation",
        "transport-check": "audit of the radial rearrangement",
        "audit": "a priori, well-spread and Wegner audits on sampled configurations",
        "report": "hyperuniformity exponent for several inverse temperatures",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", metavar="PATH", help="JSON configuration file")
        s.add_argument("--seed", metavar="U64", type=_u64, help="override the configuration seed")
        s.add_argument("--out", metavar="DIR", help=f"output root (default ${OUT_ENV} or output_dir)")
        s.add_argument("--threads", metavar="N", type=int, default=1, help="worker threads (default 1)")
    return p


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = load_config(args.config) if args.config else None
        cfg = resolve_config(args.command, user, args.seed)
    except ConfigError as err:
        if args.config and err.source == "<config>":
            err = ConfigError(err.message, err.line, args.config)
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    code, run_dir = run(cfg, args.out, args.threads)
    if run_dir is not None:
        print(run_dir)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
