"""Seeded, config-driven runs of the synthetic studies.

A run builds the target and generator, optionally trains an MLP
discriminator, fits a calibrator on a held-out balanced set, reports the Z
diagnostic, draws samples with each requested selector and writes
plot-ready tables:

``samples.csv``   selector, index, x0[, x1]
``metrics.csv``   one row per selector (see :data:`METRIC_COLUMNS`)
``modes.csv``     selector, mode, count, fraction (mode -1 is unassigned)
``calibration.csv`` (calibration study) calibrator, z_before, z_after, auc
``traces.csv``    (optional) chain_id, step, d_current, d_proposal, alpha, accepted
``manifest.json`` config echo, library version, timings, file digests

Every random draw comes from ``substream(seed, ...)`` so a config and seed
fix every CSV byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import (
    KINDS,
    CalibratedDiscriminator,
    fit_calibrator,
    make_calibration_set,
    z_statistic,
)
from .metrics import assign_modes, high_quality_rate, mode_jsd, roc_auc, within_mode_std
from .mixtures import make_grid25, make_univariate4
from .mlp import MLPDiscriminator, TrainConfig, init_mlp, mlp_train
from .models import (
    MixtureGenerator,
    imperfect_grid_generator,
    oracle_discriminator,
    warp_discriminator,
)
from .samplers import (
    DRSConfig,
    MHConfig,
    drs_estimate_max,
    drs_sample_many,
    mh_sample_iid,
    substream,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "METRIC_COLUMNS",
    "default_config",
    "load_config",
    "build_setup",
    "run_experiment",
    "sweep_k",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("univariate4", "grid25", "calibration_study")
SELECTORS = ("none", "mh", "drs")
DISCRIMINATORS = ("oracle", "warped", "mlp")
METRIC_COLUMNS = (
    "experiment", "selector", "k", "seed", "n", "high_quality_rate", "mode_jsd",
    "within_mode_std", "acceptance_rate", "restart_rate", "z_value",
    "draws_per_sample",
)
TRACE_COLUMNS = ("chain_id", "step", "d_current", "d_proposal", "alpha", "accepted")

# substream keys for everything that is not an MH chain; chain i owns
# substream(seed, i), so these use a second key component
_NS = 2**32
STREAM = {
    "real_pool": 0, "train_real": 1, "train_fake": 2, "mlp_init": 3,
    "cal_real": 4, "cal_fake": 5, "cal_shuffle": 6, "eval_real": 7,
    "eval_fake": 8, "raw": 9, "drs_pilot": 10, "drs": 11,
}


def _stream(seed: int, name: str) -> np.random.Generator:
    return substream(seed, _NS, STREAM[name])


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


_DEFAULTS = {
    "experiment": "grid25",
    "selectors": ["none", "mh", "drs"],
    "generator": {},
    "discriminator": {"kind": "oracle"},
    "calibrator": "isotonic",
    "n_calibration": 2000,
    "n_real": 10000,
    "k": 640,
    "n_samples": 10000,
    "seed": 0,
    "mh": {"restart": True, "max_restarts": 100, "trace": False},
    "drs": {"gamma": 0.0, "n_pilot": 10000, "max_draws": 1000000, "sigmoid": False},
    "output_dir": "out",
}
_GENERATOR_DEFAULTS = {
    "univariate4": {"missing": 3},
    "grid25": {"drop": [20, 21, 22, 23, 24], "bridge_weight": 0.1},
    "calibration_study": {"missing": 3},
}
_MLP_DEFAULTS = {
    "n_train": 200000, "hidden": [100, 100, 100, 100], "epochs": 16, "lr": 0.0005,
    "batch_size": 32, "optimizer": "adam", "dtype": "float32",
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_keys(d: dict, allowed, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path or "<root>", "expected an object")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")


def _int(d, key, path, lo=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    return int(v)


def _num(d, key, path):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _bool(d, key, path):
    if not isinstance(d[key], bool):
        raise ConfigError(path, f"expected true or false, got {d[key]!r}")
    return d[key]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration.

    Build one with :func:`load_config` (or :meth:`from_dict`), which fills
    defaults and reports problems as :class:`ConfigError` with a dotted
    field path such as ``discriminator.lr``.
    """

    raw: dict

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentConfig":
        _check_keys(spec, _DEFAULTS, "")
        if "seed" not in spec:
            raise ConfigError("seed", "an explicit seed is required")
        exp = spec.get("experiment", _DEFAULTS["experiment"])
        if exp not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")
        base = _merge(_DEFAULTS, {"generator": _GENERATOR_DEFAULTS[exp]})
        if exp == "calibration_study":
            base["discriminator"] = {"kind": "warped", "a": 3.0, "b": 1.0}
            base["selectors"] = []
        cfg = _merge(base, spec)
        disc = cfg["discriminator"]
        if "calibrator" not in spec and isinstance(disc, dict) and disc.get("kind") == "oracle":
            # the exact density ratio needs no correction
            cfg["calibrator"] = "identity"
        if isinstance(disc, dict) and disc.get("kind") == "mlp":
            cfg["discriminator"] = disc = _merge(_MLP_DEFAULTS, disc)
            if "n_calibration" not in spec and isinstance(disc["n_train"], int):
                # held-out calibration data is a tenth of the training data
                cfg["n_calibration"] = max(4, disc["n_train"] // 20 * 2)
        _validate(cfg)
        return cls(cfg)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """New config with top-level or nested (``mh.restart``) fields replaced."""
        spec = copy.deepcopy(self.raw)
        for key, value in kw.items():
            if value is None:
                continue
            target = spec
            parts = key.split(".")
            for p in parts[:-1]:
                target = target.setdefault(p, {})
            target[parts[-1]] = value
        return ExperimentConfig.from_dict(spec)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def _validate(cfg: dict):
    exp = cfg["experiment"]
    for key in ("n_calibration", "n_real", "k", "n_samples", "seed"):
        lo = {"n_calibration": 4, "n_real": 1, "k": 1, "n_samples": 0, "seed": 0}[key]
        _int(cfg, key, key, lo)
    if cfg["n_calibration"] % 2:
        raise ConfigError("n_calibration", "must be even (half real, half generated)")
    sel = cfg["selectors"]
    if not isinstance(sel, list):
        raise ConfigError("selectors", "expected a list")
    for i, s in enumerate(sel):
        if s not in SELECTORS:
            raise ConfigError(f"selectors[{i}]", f"must be one of {SELECTORS}, got {s!r}")
    if len(set(sel)) != len(sel):
        raise ConfigError("selectors", "duplicate selector")
    if cfg["calibrator"] not in KINDS:
        raise ConfigError("calibrator", f"must be one of {KINDS}, got {cfg['calibrator']!r}")
    if not isinstance(cfg["output_dir"], str):
        raise ConfigError("output_dir", "expected a path string")

    gen = cfg["generator"]
    if exp == "grid25":
        _check_keys(gen, ("drop", "bridge_weight"), "generator")
        drop = gen["drop"]
        if not isinstance(drop, list):
            raise ConfigError("generator.drop", "expected a list of mode indices")
        for i, v in enumerate(drop):
            if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 25:
                raise ConfigError(f"generator.drop[{i}]", f"mode index must be in 0..24, got {v!r}")
        if len(set(drop)) >= 25:
            raise ConfigError("generator.drop", "cannot drop every mode")
        bw = _num(gen, "bridge_weight", "generator.bridge_weight")
        if not 0 <= bw < 1:
            raise ConfigError("generator.bridge_weight", "must be in [0, 1)")
    else:
        _check_keys(gen, ("missing",), "generator")
        m = gen["missing"]
        if m is not None and (isinstance(m, bool) or not isinstance(m, int) or not 0 <= m < 4):
            raise ConfigError("generator.missing", f"must be null or 0..3, got {m!r}")

    disc = cfg["discriminator"]
    if not isinstance(disc, dict) or disc.get("kind") not in DISCRIMINATORS:
        raise ConfigError("discriminator.kind", f"must be one of {DISCRIMINATORS}")
    kind = disc["kind"]
    if kind == "oracle":
        _check_keys(disc, ("kind",), "discriminator")
    elif kind == "warped":
        _check_keys(disc, ("kind", "a", "b"), "discriminator")
        for key in ("a", "b"):
            if key not in disc:
                raise ConfigError(f"discriminator.{key}", "required for a warped discriminator")
            _num(disc, key, f"discriminator.{key}")
        if disc["a"] == 0:
            raise ConfigError("discriminator.a", "slope must be non-zero")
    else:
        _check_keys(disc, ("kind", *_MLP_DEFAULTS), "discriminator")
        _int(disc, "n_train", "discriminator.n_train", 1)
        _int(disc, "epochs", "discriminator.epochs", 1)
        _int(disc, "batch_size", "discriminator.batch_size", 1)
        if _num(disc, "lr", "discriminator.lr") <= 0:
            raise ConfigError("discriminator.lr", "must be positive")
        if disc["optimizer"] not in ("adam", "sgd"):
            raise ConfigError("discriminator.optimizer", "must be 'adam' or 'sgd'")
        if disc["dtype"] not in ("float32", "float64"):
            raise ConfigError("discriminator.dtype", "must be 'float32' or 'float64'")
        hidden = disc["hidden"]
        if not isinstance(hidden, list) or not hidden or not all(
                isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden):
            raise ConfigError("discriminator.hidden", "expected a non-empty list of widths")

    mh = cfg["mh"]
    _check_keys(mh, _DEFAULTS["mh"], "mh")
    _bool(mh, "restart", "mh.restart")
    _bool(mh, "trace", "mh.trace")
    _int(mh, "max_restarts", "mh.max_restarts", 0)
    drs = cfg["drs"]
    _check_keys(drs, _DEFAULTS["drs"], "drs")
    _num(drs, "gamma", "drs.gamma")
    _int(drs, "n_pilot", "drs.n_pilot", 1)
    _int(drs, "max_draws", "drs.max_draws", 1)
    _bool(drs, "sigmoid", "drs.sigmoid")


def default_config(experiment: str = "grid25", seed: int = 0, **overrides) -> ExperimentConfig:
    return ExperimentConfig.from_dict({"experiment": experiment, "seed": seed, **overrides})


def load_config(source) -> ExperimentConfig:
    """Config from a dict, a JSON string or a path to a JSON file."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        try:
            text = Path(text).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read config: {exc}") from exc
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(spec)


# --------------------------------------------------------------------------
# pipeline


@dataclass
class Setup:
    """Everything a selector needs: target, generator, raw and calibrated D."""

    p_data: object
    generator: object
    raw_d: object
    d: object
    real_pool: np.ndarray
    info: dict = field(default_factory=dict)


@dataclass
class RunResult:
    config: ExperimentConfig
    manifest: dict
    metrics: list
    samples: dict
    details: dict
    setup: Setup
    calibration: list = field(default_factory=list)


def _models(cfg: ExperimentConfig):
    gen = cfg["generator"]
    if cfg.experiment == "grid25":
        return make_grid25(), imperfect_grid_generator(gen["drop"], gen["bridge_weight"])
    return make_univariate4(), MixtureGenerator(make_univariate4(gen["missing"]))


def _held_out_z(d, p_data, g, n: int, seed: int) -> float:
    half = n // 2
    real = p_data.sample(half, _stream(seed, "eval_real"))
    fake = g.sample(half, _stream(seed, "eval_fake"))
    cs = make_calibration_set(real, fake, d)
    return z_statistic(cs.scores, cs.labels)


def build_setup(cfg: ExperimentConfig, timings: dict | None = None) -> Setup:
    """Models, discriminator (trained if requested) and the fitted calibrator."""
    timings = {} if timings is None else timings
    seed = cfg.seed
    p_data, g = _models(cfg)
    disc = cfg["discriminator"]
    info = {}
    t0 = time.perf_counter()
    oracle = oracle_discriminator(p_data, g)
    if disc["kind"] == "oracle":
        raw_d = oracle
    elif disc["kind"] == "warped":
        raw_d = warp_discriminator(oracle, disc["a"], disc["b"])
    else:
        n = disc["n_train"]
        real = p_data.sample(n, _stream(seed, "train_real"))
        fake = g.sample(n, _stream(seed, "train_fake"))
        net0 = init_mlp(p_data.dim, tuple(disc["hidden"]), _stream(seed, "mlp_init"))
        tc = TrainConfig(lr=disc["lr"], epochs=disc["epochs"], batch_size=disc["batch_size"],
                         seed=seed, optimizer=disc["optimizer"], dtype=disc["dtype"])
        net = mlp_train(net0, real, fake, tc)
        raw_d = MLPDiscriminator(net)
        info["train_loss"] = net.train_loss[-1]
    timings["discriminator"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    half = cfg["n_calibration"] // 2
    cs = make_calibration_set(p_data.sample(half, _stream(seed, "cal_real")),
                              g.sample(half, _stream(seed, "cal_fake")),
                              raw_d, _stream(seed, "cal_shuffle"))
    calibrator = fit_calibrator(cfg["calibrator"], cs)
    d = CalibratedDiscriminator(raw_d, calibrator)
    info["auc"] = roc_auc(cs.scores, cs.labels)
    info["z_raw"] = _held_out_z(raw_d, p_data, g, cfg["n_calibration"], seed)
    info["z_calibrated"] = _held_out_z(d, p_data, g, cfg["n_calibration"], seed)
    info["calibrator"] = calibrator.to_dict()
    timings["calibration"] = time.perf_counter() - t0
    real_pool = p_data.sample(cfg["n_real"], _stream(seed, "real_pool"))
    return Setup(p_data, g, raw_d, d, real_pool, info)


def _metric_row(cfg, selector, k, samples, p_data, extra) -> dict:
    a = assign_modes(samples, p_data)
    n = len(samples)
    row = {
        "experiment": cfg.experiment, "selector": selector, "k": k, "seed": cfg.seed,
        "n": n,
        "high_quality_rate": high_quality_rate(a) if n else float("nan"),
        "mode_jsd": mode_jsd(a) if n else float("nan"),
        "acceptance_rate": float("nan"), "restart_rate": float("nan"),
        "z_value": float("nan"), "draws_per_sample": float("nan"),
    }
    try:
        row["within_mode_std"] = within_mode_std(samples, a, p_data)
    except ValueError:
        row["within_mode_std"] = float("nan")
    row.update(extra)
    return row, a


def _select(cfg, setup: Setup, selector: str, k: int):
    """Samples and bookkeeping for one selector."""
    seed, n = cfg.seed, cfg["n_samples"]
    g, d = setup.generator, setup.d
    if selector == "none":
        x = g.sample(n, _stream(seed, "raw"))
        return x, {"draws_per_sample": 1.0}, None
    if selector == "mh":
        mh = cfg["mh"]
        mc = MHConfig(k=k, restart_on_no_accept=mh["restart"],
                      max_restarts=mh["max_restarts"], seed=seed, record_trace=mh["trace"])
        out = mh_sample_iid(g, d, setup.real_pool, n, mc)
        extra = {"acceptance_rate": out.acceptance_rate, "restart_rate": out.restart_rate,
                 "draws_per_sample": float(out.draws.mean()) if n else float("nan")}
        return out.samples, extra, out
    dc = cfg["drs"]
    conf = DRSConfig(n_pilot=dc["n_pilot"], gamma=dc["gamma"], max_draws=dc["max_draws"],
                     seed=seed, sigmoid=dc["sigmoid"])
    m_hat = drs_estimate_max(g, d, conf.n_pilot, _stream(seed, "drs_pilot"))
    out = drs_sample_many(g, d, m_hat, n, conf, _stream(seed, "drs"))
    extra = {"acceptance_rate": out.acceptance_rate,
             "draws_per_sample": float(out.draws_used.mean()) if n else float("nan")}
    return out.samples, extra, out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    """Deterministic CSV: fixed column order, ``.17g`` floats, LF endings."""
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(r[c]) for c in columns) for r in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_arrays(path: Path, columns, arrays) -> None:
    n = len(arrays[0]) if arrays else 0
    with path.open("w") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(a[i]) for a in arrays) + "\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(cfg, out_dir: Path, files, timings, info) -> dict:
    from . import __version__

    manifest = {
        "config": cfg.raw,
        "version": __version__,
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
        "files": {name: _digest(out_dir / name) for name in files},
        "diagnostics": info,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                      default=float) + "\n")
    return manifest


def run_experiment(cfg, write: bool = True, calibration_table: bool = False) -> RunResult:
    """Run the full pipeline for ``cfg`` and (optionally) write its tables.

    The calibrator comparison table is always produced for the calibration
    study and on request (``calibration_table``) for the other experiments.

    Raises :class:`ConfigError` for invalid configs; sampler and training
    errors propagate.
    """
    cfg = load_config(cfg)
    timings: dict = {}
    setup = build_setup(cfg, timings)
    info = dict(setup.info)
    k = cfg["k"]
    metrics, samples, details, mode_rows = [], {}, {}, []
    calibration = []
    if calibration_table or cfg.experiment == "calibration_study":
        t0 = time.perf_counter()
        calibration = _calibration_table(cfg, setup)
        timings["calibration_study"] = time.perf_counter() - t0
    for selector in cfg["selectors"]:
        t0 = time.perf_counter()
        x, extra, detail = _select(cfg, setup, selector, k)
        timings[f"select_{selector}"] = time.perf_counter() - t0
        extra["z_value"] = info["z_calibrated"]
        if selector == "drs":
            info["drs_m_hat"] = detail.m_hat
        row, a = _metric_row(cfg, selector, k, x, setup.p_data, extra)
        metrics.append(row)
        samples[selector] = x
        details[selector] = detail
        for mode, count in enumerate(a.counts):
            label = mode if mode < a.n_modes else -1
            mode_rows.append({"selector": selector, "mode": label, "count": int(count),
                              "fraction": count / max(a.total, 1)})
    manifest = {}
    if write:
        out_dir = Path(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        files = ["samples.csv", "metrics.csv", "modes.csv"]
        dim = setup.p_data.dim
        cols = ["selector", "index"] + [f"x{j}" for j in range(dim)]
        with (out_dir / "samples.csv").open("w") as fh:
            fh.write(",".join(cols) + "\n")
            for selector, x in samples.items():
                for i, p in enumerate(x):
                    fh.write(",".join([selector, str(i)] + [_fmt(v) for v in p]) + "\n")
        write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, metrics)
        write_csv(out_dir / "modes.csv", ("selector", "mode", "count", "fraction"), mode_rows)
        if calibration:
            write_csv(out_dir / "calibration.csv", CALIBRATION_COLUMNS, calibration)
            files.append("calibration.csv")
        mh = details.get("mh")
        if mh is not None and mh.trace is not None:
            _write_arrays(out_dir / "traces.csv", TRACE_COLUMNS,
                          [mh.trace[c] for c in TRACE_COLUMNS])
            files.append("traces.csv")
        manifest = _manifest(cfg, out_dir, files, timings, info)
    return RunResult(cfg, manifest, metrics, samples, details, setup, calibration)


CALIBRATION_COLUMNS = ("calibrator", "n_calibration", "z_before", "z_after", "auc")


def _calibration_table(cfg, setup: Setup) -> list:
    """Z before and after each calibrator, on a held-out balanced set."""
    seed, n = cfg.seed, cfg["n_calibration"]
    half = n // 2
    p_data, g, raw = setup.p_data, setup.generator, setup.raw_d
    cs = make_calibration_set(p_data.sample(half, _stream(seed, "cal_real")),
                              g.sample(half, _stream(seed, "cal_fake")),
                              raw, _stream(seed, "cal_shuffle"))
    rows = []
    for kind in KINDS:
        if kind == "beta" and not raw.is_probability:
            continue
        d = CalibratedDiscriminator(raw, fit_calibrator(kind, cs))
        rows.append({"calibrator": kind, "n_calibration": n,
                     "z_before": setup.info["z_raw"],
                     "z_after": _held_out_z(d, p_data, g, n, seed),
                     "auc": setup.info["auc"]})
    return rows


def sweep_k(cfg, k_values, write: bool = True) -> list:
    """One metrics row per chain length, all sharing the config's seed.

    The discriminator and calibrator are built once; selectors other than
    ``mh`` do not depend on ``k`` and give identical rows.
    """
    cfg = load_config(cfg)
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise ConfigError("k_values", "need at least one chain length")
    if any(k < 1 for k in k_values) or k_values != sorted(k_values):
        raise ConfigError("k_values", "chain lengths must be positive and ascending")
    setup = build_setup(cfg)
    rows = []
    for k in k_values:
        for selector in cfg["selectors"]:
            x, extra, _ = _select(cfg, setup, selector, k)
            extra["z_value"] = setup.info["z_calibrated"]
            rows.append(_metric_row(cfg, selector, k, x, setup.p_data, extra)[0])
    if write:
        out_dir = Path(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "sweep_k.csv", METRIC_COLUMNS, rows)
    return rows
