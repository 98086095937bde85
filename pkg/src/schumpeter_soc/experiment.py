"""Experiment configuration, presets, single runs and sweeps.

Every run writes plain CSV artifacts plus ``summary.txt`` (flat key=value)
and ``report.txt`` (human readable) into its own output directory.
Time series are streamed to disk chunk by chunk.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_TAU_MIN,
    DEFAULT_THRESHOLD,
    MIN_SAMPLES,
    DurationAnalysis,
    Linear,
    Logarithmic,
    PlateauCounter,
    analyze_durations,
    burn_in_length,
    histogram,
)
from .bak_sneppen import run_bak_sneppen
from .core import ModelConfig, Rule2, run
from .exceptions import ConfigError, InsufficientDataError

log = logging.getLogger(__name__)

ARTIFACTS = ("timeseries", "plateaus", "histogram", "summary")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DATA = 4


def density_for_pairs(n: int, pairs: float) -> float:
    """Tensor density giving ``pairs`` expected ordered pairs per product."""
    return pairs / ((n - 1) * (n - 2))


@dataclass
class AnalysisConfig:
    binning: str = "log"
    log_ratio: float = 2.0
    linear_width: Optional[int] = None
    tau_min: Union[int, str] = DEFAULT_TAU_MIN
    threshold: float = DEFAULT_THRESHOLD
    min_samples: int = MIN_SAMPLES

    def validate(self) -> None:
        if self.binning not in ("log", "linear"):
            raise ConfigError(f"analysis.binning must be 'log' or 'linear', got {self.binning!r}")
        if not self.log_ratio > 1:
            raise ConfigError(f"analysis.log_ratio must exceed 1, got {self.log_ratio}")
        if self.linear_width is not None and (int(self.linear_width) != self.linear_width
                                              or self.linear_width < 1):
            raise ConfigError(f"analysis.linear_width must be a positive integer, got {self.linear_width}")
        if self.tau_min != "auto" and (isinstance(self.tau_min, str) or int(self.tau_min) != self.tau_min
                                       or self.tau_min < 1):
            raise ConfigError(f"analysis.tau_min must be a positive integer or 'auto', got {self.tau_min!r}")
        if self.threshold < 0:
            raise ConfigError(f"analysis.threshold must be non-negative, got {self.threshold}")
        if self.min_samples < 1:
            raise ConfigError(f"analysis.min_samples must be positive, got {self.min_samples}")

    def make_binning(self, durations: np.ndarray) -> Union[Linear, Logarithmic]:
        if self.binning == "log":
            return Logarithmic(self.log_ratio)
        width = self.linear_width
        if width is None:
            width = max(1, math.ceil((durations.mean() + 1) / 2))
        return Linear(int(width))


@dataclass
class OutputConfig:
    directory: str = "runs/default"
    artifacts: list = field(default_factory=lambda: list(ARTIFACTS))

    def validate(self) -> None:
        bad = [a for a in self.artifacts if a not in ARTIFACTS]
        if bad:
            raise ConfigError(f"outputs.artifacts: unknown artifact {bad[0]!r}")


@dataclass
class BSConfig:
    l: int = 200
    steps: int = 1_000_000
    threshold: float = 0.6
    seed: int = 1

    def validate(self) -> None:
        if self.l < 3:
            raise ConfigError(f"bs.l must be at least 3, got {self.l}")
        if self.steps < 1:
            raise ConfigError(f"bs.steps must be positive, got {self.steps}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"bs.threshold must lie in (0, 1), got {self.threshold}")


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    steps: int = 20_000
    burn_in_fraction: float = 0.1
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    replicate_seeds: Optional[list] = None
    p_values: Optional[list] = None
    jobs: int = 1
    bs: Optional[BSConfig] = None

    def validate(self) -> None:
        self.model.validate()
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError(f"burn_in_fraction must lie in [0, 1), got {self.burn_in_fraction}")
        if burn_in_length(self.steps, self.burn_in_fraction) >= self.steps:
            raise ConfigError("burn_in_fraction leaves no analyzed steps")
        self.analysis.validate()
        self.outputs.validate()
        if self.jobs < 1:
            raise ConfigError(f"jobs must be positive, got {self.jobs}")
        for p in self.p_values or ():
            if not 0 <= p <= 1:
                raise ConfigError(f"p_values: p must lie in [0, 1], got {p}")
        for s in self.replicate_seeds or ():
            if not 0 <= int(s) < 2**64:
                raise ConfigError(f"replicate_seeds: invalid seed {s}")
        if self.bs is not None:
            self.bs.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["rule2_variant"] = self.model.rule2_variant.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_SECTIONS = {
    "model": ModelConfig,
    "analysis": AnalysisConfig,
    "outputs": OutputConfig,
    "bs": BSConfig,
}


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown config key {prefix + key!r}")
    kwargs = {}
    for key, value in data.items():
        if cls is ExperimentConfig and key in _SECTIONS:
            value = None if value is None else _build(_SECTIONS[key], value, f"{key}.")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from exc


def _merge(base: dict, overrides: dict) -> dict:
    out = json.loads(json.dumps(base))
    for dotted, value in overrides.items():
        node = out
        *parents, leaf = dotted.split(".")
        for part in parents:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        node[leaf] = value
    return out


def parse_config(path: Optional[Union[str, os.PathLike]] = None,
                 overrides: Optional[dict] = None,
                 base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Load a JSON config (or ``base``/defaults) and apply dotted-key overrides.

    Overrides win over the file.  Unknown keys and out-of-range values raise
    :class:`ConfigError` naming the field.
    """
    data: dict = (base or ExperimentConfig()).to_dict()
    # derived default; recomputed from n unless set explicitly
    data["model"]["initial_diversity"] = None
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        data = _merge(data, _flatten(loaded))
    if overrides:
        data = _merge(data, overrides)
    cfg = _build(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict) and (prefix + k) in _SECTIONS:
            out.update(_flatten(v, prefix + k + "."))
        else:
            out[prefix + k] = v
    return out


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

# Mean ordered (i, j) pairs per product in the creation/destruction tensors.
SPARSE_ECONOMY = (4.0, 2.0)
FIG3_ECONOMY = (12.0, 7.0)


def _preset_model(n, p, rule2, economy, seed=1) -> ModelConfig:
    return ModelConfig(
        n=n, p=p, rule2_variant=rule2, seed=seed,
        density_plus=density_for_pairs(n, economy[0]),
        density_minus=density_for_pairs(n, economy[1]),
    )


def preset(name: str, directory: Optional[str] = None) -> ExperimentConfig:
    """Named configuration for one of the reproduced experiments."""
    out = OutputConfig(directory or f"runs/{name}")
    if name == "fig1":
        return ExperimentConfig(
            _preset_model(100, 0.0002, Rule2.RANDOM_FLIP, SPARSE_ECONOMY),
            steps=3_000_000, outputs=out,
        )
    if name == "fig2":
        # 1/11 burn-in leaves exactly 10**6 analyzed steps
        return ExperimentConfig(
            _preset_model(100, 0.0002, Rule2.FITNESS, SPARSE_ECONOMY),
            steps=1_100_000, burn_in_fraction=1 / 11, outputs=out,
        )
    if name == "fig3":
        return ExperimentConfig(
            _preset_model(50, 0.0002, Rule2.FITNESS, FIG3_ECONOMY),
            steps=7_000_000, outputs=out, p_values=[0.0002, 0.0003, 0.0005],
        )
    if name == "bs-control":
        return ExperimentConfig(outputs=out, bs=BSConfig())
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("fig1", "fig2", "fig3", "bs-control")


# --------------------------------------------------------------------------
# Writers
# --------------------------------------------------------------------------

def _csv_rows(*columns) -> str:
    return "".join(",".join(row) + "\n" for row in zip(*(c.astype(str) for c in columns)))


class TimeseriesWriter:
    """Sink for :func:`core.run` that streams ``timeseries.csv``."""

    def __init__(self, path: Optional[Path], burn_in: int):
        self.fh = open(path, "w", newline="") if path is not None else None
        if self.fh:
            self.fh.write("t,diversity,tracked_state\n")
        self.burn_in = burn_in
        self.diversity = PlateauCounter(burn_in)
        self.tracked = PlateauCounter(burn_in)
        self.tracked_active = 0

    def __call__(self, t0: int, div: np.ndarray, tracked: np.ndarray) -> None:
        if self.fh:
            t = np.arange(t0, t0 + div.size)
            self.fh.write(_csv_rows(t, div, tracked))
        start = max(0, self.burn_in - (t0 - 1))
        self.tracked_active += int(tracked[start:].sum())
        self.diversity.update(div)
        self.tracked.update(tracked)

    def close(self) -> None:
        if self.fh:
            self.fh.close()


def write_plateaus(path: Path, durations: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("tau\n")
        fh.write(_csv_rows(durations))


def write_histogram(path: Path, durations: np.ndarray, binning) -> None:
    h = histogram(durations, binning)
    with open(path, "w") as fh:
        fh.write("bin_lo,bin_hi,count,density\n")
        for lo, hi, c, d in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts, h.density):
            fh.write(f"{lo},{hi},{c},{d:.12g}\n")


def format_value(v: Any) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


def write_summary(directory: Path, summary: dict, title: str) -> None:
    with open(directory / "summary.txt", "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k}={format_value(v)}\n")
    width = max(len(k) for k in summary)
    with open(directory / "report.txt", "w") as fh:
        fh.write(f"{title}\n{'=' * len(title)}\n")
        for k, v in summary.items():
            if k != "config":
                fh.write(f"{k.ljust(width)}  {format_value(v)}\n")
        fh.write(f"\nconfig: {summary.get('config', '')}\n")


def read_summary(path: Union[str, os.PathLike]) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            k, _, v = line.rstrip("\n").partition("=")
            out[k] = v
    return out


def duration_summary(durations: np.ndarray, analysis: AnalysisConfig,
                     prefix: str = "") -> tuple[dict, Optional[DurationAnalysis]]:
    """Fit both families; keys are ``prefix``-ed.  Never raises on small data."""
    med = float(np.median(durations))
    s = {
        "n_plateaus": int(durations.size),
        "plateau_sum": int(durations.sum()),
        "max_plateau": int(durations.max()),
        "median_plateau": med,
        "max_over_median": durations.max() / med,
    }
    res = analyze_durations(durations, analysis.tau_min, analysis.threshold, analysis.min_samples)
    ex, pl = res.exponential, res.powerlaw
    s.update({
        "verdict": res.verdict,
        "tau_min": pl.tau_min if pl else analysis.tau_min,
        "n_tail": pl.n_tail if pl else 0,
        "lambda": ex.parameter if ex else None,
        "r2_semilog": ex.goodness if ex else None,
        "alpha_mle": pl.parameter if pl else None,
        "alpha_hill": pl.alpha_hill if pl else None,
        "slope_loglog": pl.slope_loglog if pl else None,
        "r2_loglog": pl.goodness if pl else None,
        "ks_distance": pl.ks_distance if pl else None,
        "loglik_exponential": ex.log_likelihood if ex else None,
        "loglik_powerlaw": pl.log_likelihood if pl else None,
        "llr_per_sample": res.normalized_ratio if pl else None,
    })
    return {prefix + k: v for k, v in s.items()}, (res if pl else None)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    directory: Path
    summary: dict
    exit_code: int = EXIT_OK


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Simulate, analyse and write artifacts for a single model run."""
    config.validate()
    out = Path(config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    emit = set(config.outputs.artifacts)
    burn_in = burn_in_length(config.steps, config.burn_in_fraction)
    writer = TimeseriesWriter(out / "timeseries.csv" if "timeseries" in emit else None, burn_in)
    log.info("simulating %d steps (n=%d, p=%g, rule2=%s, seed=%d)", config.steps,
             config.model.n, config.model.p, config.model.rule2_variant.value, config.model.seed)
    try:
        run(config.model, config.steps, sink=writer)
    finally:
        writer.close()
    durations = writer.diversity.durations()
    tracked = writer.tracked.durations()
    analyzed = writer.diversity.analyzed_length

    summary: dict = {
        "experiment": "thurner",
        "version": __version__,
        "seed": config.model.seed,
        "n": config.model.n,
        "p": config.model.p,
        "rule2": config.model.rule2_variant,
        "density_plus": config.model.density_plus,
        "density_minus": config.model.density_minus,
        "steps": config.steps,
        "burn_in": burn_in,
        "analyzed_length": analyzed,
    }
    fits, _ = duration_summary(durations, config.analysis)
    summary.update(fits)
    tfits, _ = duration_summary(tracked, config.analysis, prefix="tracked_")
    summary["tracked_product"] = config.model.track_product
    summary["tracked_active_steps"] = writer.tracked_active
    summary.update({k: tfits[k] for k in ("tracked_n_plateaus", "tracked_max_plateau",
                                          "tracked_verdict", "tracked_alpha_mle")})
    summary["config"] = config.to_json()

    if "plateaus" in emit:
        write_plateaus(out / "plateaus.csv", durations)
    if "histogram" in emit:
        write_histogram(out / "histogram.csv", durations, config.analysis.make_binning(durations))
    if "summary" in emit:
        write_summary(out, summary, "Thurner model run")
    code = EXIT_DATA if summary["alpha_mle"] is None else EXIT_OK
    return ExperimentResult(out, summary, code)


def analyze_timeseries(path: Union[str, os.PathLike], config: ExperimentConfig) -> ExperimentResult:
    """Re-run the analysis on an existing ``timeseries.csv``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.shape[0] == 0:
        raise InsufficientDataError(f"{path} holds no rows")
    div = data[:, 1]
    burn_in = burn_in_length(div.size, config.burn_in_fraction)
    counter = PlateauCounter(burn_in)
    counter.update(div)
    durations = counter.durations()
    out = Path(config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {
        "experiment": "analyze",
        "version": __version__,
        "source": str(path),
        "steps": int(div.size),
        "burn_in": burn_in,
        "analyzed_length": counter.analyzed_length,
    }
    fits, _ = duration_summary(durations, config.analysis)
    summary.update(fits)
    summary["config"] = config.to_json()
    emit = set(config.outputs.artifacts)
    if "plateaus" in emit:
        write_plateaus(out / "plateaus.csv", durations)
    if "histogram" in emit:
        write_histogram(out / "histogram.csv", durations, config.analysis.make_binning(durations))
    if "summary" in emit:
        write_summary(out, summary, "Time-series analysis")
    code = EXIT_DATA if summary["alpha_mle"] is None else EXIT_OK
    return ExperimentResult(out, summary, code)


def sweep_points(config: ExperimentConfig) -> list[tuple[float, int]]:
    ps = config.p_values if config.p_values is not None else [config.model.p]
    seeds = config.replicate_seeds if config.replicate_seeds is not None else [config.model.seed]
    points = [(float(p), int(s)) for p in ps for s in seeds]
    if not points:
        raise ConfigError("sweep needs at least one point (p_values and replicate_seeds non-empty)")
    return points


def _point_config(config: ExperimentConfig, p: float, seed: int) -> ExperimentConfig:
    model = dataclasses.replace(config.model, p=p, seed=seed)
    outputs = dataclasses.replace(
        config.outputs, directory=str(Path(config.outputs.directory) / f"p={p:g}_seed={seed}")
    )
    return dataclasses.replace(config, model=model, outputs=outputs,
                               p_values=None, replicate_seeds=None)


def _run_point(config: ExperimentConfig) -> dict:
    try:
        res = run_experiment(config)
        row = {"status": "ok" if res.exit_code == EXIT_OK else "insufficient-data"}
        row.update(res.summary)
    except Exception as exc:  # a failed point must not abort the sweep
        row = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    row["p"] = config.model.p
    row["seed"] = config.model.seed
    row["directory"] = config.outputs.directory
    return row


SWEEP_COLUMNS = ("p", "seed", "status", "verdict", "alpha_mle", "slope_loglog", "lambda",
                 "r2_semilog", "n_plateaus", "max_over_median", "directory", "error")


def run_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Independent runs over ``p_values`` x ``replicate_seeds``."""
    config.validate()
    points = sweep_points(config)
    configs = [_point_config(config, p, s) for p, s in points]
    if config.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_run_point, configs))
    else:
        rows = [_run_point(c) for c in configs]

    out = Path(config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(format_value(row.get(c, "")) for c in SWEEP_COLUMNS) + "\n")

    ok = [r for r in rows if r["status"] == "ok"]
    summary: dict = {
        "experiment": "sweep",
        "version": __version__,
        "n_points": len(rows),
        "n_ok": len(ok),
        "n_failed": sum(r["status"] == "failed" for r in rows),
    }
    for key in ("alpha_mle", "slope_loglog", "lambda"):
        vals = np.array([r[key] for r in ok if r.get(key) is not None], dtype=float)
        summary[f"{key}_mean"] = vals.mean() if vals.size else None
        summary[f"{key}_std"] = vals.std(ddof=1) if vals.size > 1 else None
    verdicts = sorted({format_value(r.get("verdict")) for r in ok})
    summary["verdicts"] = ";".join(verdicts)
    summary["config"] = config.to_json()
    write_summary(out, summary, "Parameter sweep")
    code = EXIT_OK if summary["n_failed"] == 0 else EXIT_RUNTIME
    res = ExperimentResult(out, summary, code)
    res.rows = rows
    return res


def run_bs_control(config: ExperimentConfig) -> ExperimentResult:
    """Extremal Bak-Sneppen vs random-extinction control at equal parameters."""
    bs = config.bs or BSConfig()
    bs.validate()
    config.analysis.validate()
    out = Path(config.outputs.directory)
    summary: dict = {"experiment": "bs-control", "version": __version__, "l": bs.l,
                     "steps": bs.steps, "threshold": bs.threshold, "seed": bs.seed}
    rows = {}
    for name, random_ext in (("extremal", False), ("random_extinction", True)):
        sub = out / name
        sub.mkdir(parents=True, exist_ok=True)
        res = run_bak_sneppen(bs.l, bs.steps, bs.seed, random_extinction=random_ext)
        sizes = res.avalanches(bs.threshold).sizes
        if sizes.size == 0:
            raise InsufficientDataError(f"{name}: no avalanches below f0={bs.threshold}")
        with open(sub / "avalanches.csv", "w") as fh:
            fh.write("size\n")
            fh.write(_csv_rows(sizes))
        write_histogram(sub / "histogram.csv", sizes, config.analysis.make_binning(sizes))
        fits, _ = duration_summary(sizes, config.analysis)
        fits = {k.replace("plateau", "avalanche"): v for k, v in fits.items()}
        part = {"variant": name, "seed": bs.seed, "l": bs.l, "steps": bs.steps,
                "threshold": bs.threshold, "mean_replaced_fitness": float(res.values.mean())}
        part.update(fits)
        part["config"] = config.to_json()
        write_summary(sub, part, f"Bak-Sneppen ({name})")
        rows[name] = part
        for k in ("verdict", "n_avalanches", "alpha_mle", "slope_loglog", "llr_per_sample"):
            summary[f"{name}_{k}"] = part[k]
    summary["config"] = config.to_json()
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out, summary, "Bak-Sneppen control")
    res = ExperimentResult(out, summary)
    res.rows = rows
    return res


def run_preset(name: str, directory: Optional[str] = None, steps: Optional[int] = None,
               jobs: int = 1, seed: Optional[int] = None) -> ExperimentResult:
    config = preset(name, directory)
    if name == "bs-control":
        if steps is not None:
            config.bs.steps = steps
        if seed is not None:
            config.bs.seed = seed
        return run_bs_control(config)
    if steps is not None:
        config.steps = steps
    if seed is not None:
        config.model.seed = seed
    config.jobs = jobs
    if config.p_values:
        return run_sweep(config)
    return run_experiment(config)
