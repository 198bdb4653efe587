"""Experiment orchestration: config files, seeded repeats, sweeps and CSV output.

A config is an INI file with the sections ``dataset``, ``federation``,
``model``, ``sweep`` and ``output``; every key is optional and falls back to
the desk-scale defaults below. The README lists the full key set.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import ForestParams, RbfKernel, fed_rf
from .datagen import (
    ConfigError,
    ParityConfig,
    SeriesConfig,
    WindowSet,
    gen_parity,
    gen_periodic,
    partition,
    temporal_holdout,
    windowize,
    read_series,
    write_series,
    Series,
)
from .fedproto import ProtocolParams, global_predict_many, run_federation
from .metrics import EvalReport, evaluate
from .qkernel import MAX_QUBITS, FeatureMapSpec, InvalidInputError, QuantumKernel, Rescale
from .svm import SvmConfig, SvmError

log = logging.getLogger(__name__)

METHODS = ("fed-qsvm", "fed-svm", "fed-rf")
SWEEP_VARS = ("none", "parity_order", "num_clients", "num_samples", "sv_budget")
CSV_HEADER = ("method,sweep_var,sweep_value,repeat,seed,accuracy,precision,recall,f1,"
              "pr_auc,uplink_bytes,downlink_bytes,wall_ms")

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 generator, used to derive repeat seeds."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def repeat_seed(base_seed: int, repeat: int) -> int:
    return splitmix64((base_seed + repeat) & _MASK64)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class DatasetSection:
    kind: str = "parity"
    path: Optional[str] = None
    num_sensors: int = 8
    num_steps: int = 20000
    noise_std: Optional[float] = None
    mixing_strength: float = 0.2
    freq_range: Optional[Tuple[float, float]] = None
    anomaly_rate: float = 0.05
    burst_min: int = 10
    burst_max: int = 40
    parity_order: int = 3
    parity_subset: Optional[Tuple[int, ...]] = None
    phase_jitter: float = 0.002
    window: int = 16
    lag: int = 3
    features: Optional[str] = None
    label_rule: str = "last"
    test_fraction: float = 0.3

    @property
    def feature_mode(self) -> str:
        if self.features is not None:
            return self.features
        return "indicators" if self.kind == "parity" else "raw"

    @property
    def dim(self) -> int:
        return self.num_sensors * (self.window if self.feature_mode == "raw" else 1)


@dataclass(frozen=True)
class FederationSection:
    num_clients: int = 4
    partition: str = "contiguous"
    sv_budget: Optional[int] = 160
    bits: int = 8
    shots: Optional[int] = None
    scale: str = "none"
    balanced: bool = False
    merge_duplicates: bool = True


@dataclass(frozen=True)
class ModelSection:
    methods: Tuple[str, ...] = METHODS
    C: float = 1.0
    class_weighting: bool = False
    kkt_tolerance: float = 1e-3
    max_passes: int = 200
    qubits: int = 8
    depth: int = 2
    entangler: str = "ring"
    angle_range: Optional[Tuple[float, float]] = None
    gamma: Optional[float] = None
    num_trees: int = 50
    max_depth: int = 8
    min_leaf: int = 1


@dataclass(frozen=True)
class SweepSection:
    variable: str = "none"
    values: Tuple[int, ...] = ()
    repeats: int = 1
    base_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    federation: FederationSection = field(default_factory=FederationSection)
    model: ModelSection = field(default_factory=ModelSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: Optional[str] = None
    record_timing: bool = False
    threads: int = 1

    def with_point(self, variable: str, value) -> "ExperimentConfig":
        """The config of one sweep grid point."""
        if variable == "none":
            return self
        if variable == "parity_order":
            return dataclasses.replace(self, dataset=dataclasses.replace(
                self.dataset, parity_order=int(value), parity_subset=None))
        if variable == "num_samples":
            return dataclasses.replace(self, dataset=dataclasses.replace(
                self.dataset, num_steps=int(value)))
        if variable == "num_clients":
            return dataclasses.replace(self, federation=dataclasses.replace(
                self.federation, num_clients=int(value)))
        if variable == "sv_budget":
            return dataclasses.replace(self, federation=dataclasses.replace(
                self.federation, sv_budget=None if value is None else int(value)))
        raise ConfigError(f"unknown sweep variable {variable!r}")

    def grid(self) -> List[Tuple[str, object, "ExperimentConfig"]]:
        if self.sweep.variable == "none":
            return [("none", "", self)]
        return [(self.sweep.variable, v, self.with_point(self.sweep.variable, v))
                for v in self.sweep.values]


_SECTIONS = {
    "dataset": DatasetSection,
    "federation": FederationSection,
    "model": ModelSection,
    "sweep": SweepSection,
}
_OUTPUT_KEYS = ("path", "record_timing", "threads")
_NONE_WORDS = ("", "none", "auto", "exact", "all", "inf")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _parse_list(raw: str) -> List[str]:
    return [p.strip() for p in raw.replace(";", ",").split(",") if p.strip()]


def _parse_value(name: str, raw: str, default):
    """Coerce ``raw`` to the type of the dataclass default it replaces."""
    low = raw.strip().lower()
    try:
        if name in ("noise_std", "gamma"):
            return None if low in _NONE_WORDS else float(raw)
        if name in ("sv_budget", "shots"):
            return None if low in _NONE_WORDS else int(raw)
        if name in ("freq_range", "angle_range"):
            if low in _NONE_WORDS:
                return None
            parts = [_parse_float(p) for p in _parse_list(raw)]
            if len(parts) != 2:
                raise ConfigError(f"{name} needs two numbers")
            return tuple(parts)
        if name == "parity_subset":
            return None if low in _NONE_WORDS else tuple(int(p) for p in _parse_list(raw))
        if name == "features":
            return None if low in _NONE_WORDS else low
        if name == "methods":
            return tuple(p.lower() for p in _parse_list(raw))
        if name == "values":
            return tuple(None if p.lower() in _NONE_WORDS else int(p) for p in _parse_list(raw))
        if isinstance(default, bool):
            return _parse_bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return _parse_float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _parse_float(raw: str) -> float:
    """Floats, with ``pi`` allowed as a factor or divisor (``pi/16``, ``2*pi``)."""
    s = raw.strip().lower().replace(" ", "")
    if "pi" not in s:
        return float(s)
    num, _, den = s.partition("/")
    coef = num.replace("*", "").replace("pi", "")
    value = (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return value / float(den) if den else value


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    unknown = set(parser.sections()) - set(_SECTIONS) - {"output"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        defaults = cls()
        kwargs = {}
        if parser.has_section(name):
            # keys are case-insensitive, so ``c`` and ``C`` both name the box size
            fields = {f.name.lower(): f.name for f in dataclasses.fields(cls)}
            for key, raw in parser.items(name):
                if key not in fields:
                    raise ConfigError(f"unknown key {name}.{key}")
                key = fields[key]
                kwargs[key] = _parse_value(key, raw, getattr(defaults, key))
        parts[name] = cls(**kwargs)
    out = {}
    if parser.has_section("output"):
        for key, raw in parser.items("output"):
            if key not in _OUTPUT_KEYS:
                raise ConfigError(f"unknown key output.{key}")
            out[key] = raw.strip()
    cfg = ExperimentConfig(
        output=out.get("path") or None,
        record_timing=_parse_bool(out["record_timing"]) if "record_timing" in out else False,
        threads=_parse_value("threads", out["threads"], 1) if "threads" in out else 1,
        **parts,
    )
    validate(cfg)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate(cfg: ExperimentConfig) -> None:
    """Reject configs that any grid point would fail on, before running anything."""
    d, f, m, s = cfg.dataset, cfg.federation, cfg.model, cfg.sweep
    if d.kind not in ("periodic", "parity", "file"):
        raise ConfigError(f"unknown dataset kind {d.kind!r}")
    if (d.kind == "file") != (d.path is not None):
        raise ConfigError("dataset path is required by, and only allowed with, kind = file")
    if d.kind == "file" and s.variable == "num_samples":
        raise ConfigError("num_samples sweeps need a generated dataset")
    if d.feature_mode not in ("raw", "indicators"):
        raise ConfigError(f"unknown feature mode {d.feature_mode!r}")
    if d.label_rule not in ("last", "any"):
        raise ConfigError(f"unknown label rule {d.label_rule!r}")
    if not 0.0 < d.test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if not m.methods or any(x not in METHODS for x in m.methods):
        raise ConfigError(f"methods must be drawn from {METHODS}")
    if len(set(m.methods)) != len(m.methods):
        raise ConfigError("methods listed twice")
    if s.variable not in SWEEP_VARS:
        raise ConfigError(f"sweep variable must be one of {SWEEP_VARS}")
    if s.variable != "none" and not s.values:
        raise ConfigError("sweep needs at least one value")
    if s.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if s.base_seed < 0:
        raise ConfigError("base_seed must be >= 0")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if s.variable == "parity_order" and d.kind != "parity":
        raise ConfigError("parity_order sweeps need the parity dataset")
    for _, _, point in cfg.grid():
        _validate_point(point)


def _validate_point(cfg: ExperimentConfig) -> None:
    d, f, m = cfg.dataset, cfg.federation, cfg.model
    try:
        series_config(d, 0)
        if d.kind == "parity":
            subset = parity_subset(d, 0)
            ParityConfig(subset, d.lag, d.burst_min, d.burst_max, d.phase_jitter)
            if d.parity_order < 1 or d.parity_order > d.num_sensors:
                raise ConfigError(f"parity order {d.parity_order} outside [1, {d.num_sensors}]")
            if max(subset) >= d.num_sensors:
                raise ConfigError("parity subset exceeds the available sensors")
        if d.num_steps <= 10 * d.burst_max:
            raise ConfigError("num_steps must exceed 10 * burst_max")
        if not 1 <= d.window <= d.num_steps:
            raise ConfigError("window must satisfy 1 <= window <= num_steps")
        if d.feature_mode == "indicators" and d.window < d.lag:
            raise ConfigError("indicator windows must be at least lag long")
        if not 0.0 <= d.anomaly_rate < 0.5:
            raise ConfigError("anomaly_rate must lie in [0, 0.5)")
        if f.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if f.partition not in ("contiguous", "shuffled"):
            raise ConfigError(f"unknown partition scheme {f.partition!r}")
        protocol_params(f, 0, 1)
        svm_config(m)
        if not 1 <= m.qubits <= MAX_QUBITS:
            raise ConfigError(f"qubits must lie in [1, {MAX_QUBITS}]")
        FeatureMapSpec(m.qubits, m.depth, m.entangler)
        if m.gamma is not None and not m.gamma > 0:
            raise ConfigError("gamma must be positive")
        if m.num_trees < 1 or m.max_depth < 1 or m.min_leaf < 1:
            raise ConfigError("forest sizes must be >= 1")
    except (InvalidInputError, SvmError) as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# -- building blocks ---------------------------------------------------------

def series_config(d: DatasetSection, seed: int) -> SeriesConfig:
    # the parity indicators need slow, clean phases to stay legible
    if d.kind == "parity":
        noise = 0.002 if d.noise_std is None else d.noise_std
        freqs = (1 / 400, 1 / 80) if d.freq_range is None else d.freq_range
    else:
        noise = 0.05 if d.noise_std is None else d.noise_std
        freqs = (1 / 200, 1 / 40) if d.freq_range is None else d.freq_range
    return SeriesConfig(num_sensors=d.num_sensors, num_steps=d.num_steps, noise_std=noise,
                        mixing_strength=d.mixing_strength, freq_range=tuple(freqs), seed=seed)


def parity_subset(d: DatasetSection, seed: int) -> Tuple[int, ...]:
    """The explicit subset if given, else ``parity_order`` sensors drawn from the seed."""
    if d.parity_subset is not None:
        return tuple(d.parity_subset)
    if not 1 <= d.parity_order <= d.num_sensors:
        raise ConfigError(f"parity order {d.parity_order} outside [1, {d.num_sensors}]")
    rng = np.random.default_rng([seed, 0x5053])
    return tuple(sorted(int(j) for j in rng.choice(d.num_sensors, d.parity_order, replace=False)))


def generate(d: DatasetSection, seed: int) -> Series:
    if d.kind == "file":
        return read_series(d.path)
    scfg = series_config(d, seed)
    if d.kind == "periodic":
        return gen_periodic(scfg, d.anomaly_rate, d.burst_min, d.burst_max)
    pcfg = ParityConfig(parity_subset(d, seed), d.lag, d.burst_min, d.burst_max, d.phase_jitter)
    return gen_parity(scfg, pcfg)


def svm_config(m: ModelSection) -> SvmConfig:
    return SvmConfig(C=m.C, class_weighting=m.class_weighting,
                     kkt_tolerance=m.kkt_tolerance, max_passes=m.max_passes)


def protocol_params(f: FederationSection, seed: int, threads: int) -> ProtocolParams:
    return ProtocolParams(budget=f.sv_budget, bits=f.bits, shots=f.shots, scale=f.scale,
                          balanced=f.balanced, merge_duplicates=f.merge_duplicates,
                          threads=threads, seed=seed)


def default_angle_range(num_qubits: int, dim: int) -> Tuple[float, float]:
    """``(0, pi * min(1, N / d))``.

    Each qubit re-uploads about ``d / N`` features per layer, so shrinking the
    per-feature span by that factor keeps the total rotation per qubit, and
    with it the kernel bandwidth, comparable across window sizes.
    """
    return (0.0, math.pi * min(1.0, num_qubits / dim))


def quantum_kernel(m: ModelSection, f: FederationSection, train: WindowSet) -> QuantumKernel:
    rng_ = m.angle_range or default_angle_range(m.qubits, train.dim)
    spec = FeatureMapSpec(m.qubits, m.depth, m.entangler, Rescale.fit(train.features, rng_))
    return QuantumKernel(spec, shots=f.shots)


@dataclass(frozen=True)
class ResultRow:
    method: str
    sweep_var: str
    sweep_value: object
    repeat: int
    seed: int
    report: EvalReport
    uplink_bytes: int
    downlink_bytes: int
    wall_ms: int

    def as_csv_fields(self) -> List[str]:
        r = self.report
        value = "all" if self.sweep_value is None else str(self.sweep_value)
        return [self.method, self.sweep_var, value, str(self.repeat), str(self.seed),
                _fmt(r.accuracy), _fmt(r.precision), _fmt(r.recall), _fmt(r.f1),
                _fmt(r.pr_auc), str(self.uplink_bytes), str(self.downlink_bytes),
                str(self.wall_ms)]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER.split(","))
    for row in rows:
        w.writerow(row.as_csv_fields())
    return buf.getvalue()


# -- one point ----------------------------------------------------------------

@dataclass(frozen=True)
class PreparedData:
    train: WindowSet
    test: WindowSet
    split: object


def prepare(cfg: ExperimentConfig, seed: int) -> PreparedData:
    """Dataset, windows, temporal holdout and client split for one repeat."""
    d, f = cfg.dataset, cfg.federation
    X, y = generate(d, seed)
    W = windowize(X, y, d.window, d.feature_mode, d.lag, d.label_rule)
    train, test = temporal_holdout(W, d.test_fraction)
    split = partition(train, f.num_clients, f.partition, seed)
    return PreparedData(train, test, split)


def run_method(method: str, cfg: ExperimentConfig, data: PreparedData, seed: int,
               threads: int = 1) -> Tuple[np.ndarray, int, int]:
    """Train ``method`` and score the holdout; returns ``(scores, uplink, downlink)``."""
    m, f = cfg.model, cfg.federation
    if method == "fed-rf":
        params = ForestParams(m.num_trees, m.max_depth, m.min_leaf, threads, seed)
        forest, ledger = fed_rf(data.split, params)
        return forest.scores(data.test.features), ledger.uplink, ledger.downlink
    if method == "fed-qsvm":
        kernel = quantum_kernel(m, f, data.train)
    elif method == "fed-svm":
        kernel = RbfKernel(m.gamma if m.gamma is not None else 1.0 / data.train.dim)
    else:
        raise ConfigError(f"unknown method {method!r}")
    params = protocol_params(f, seed, threads)
    model, ledger = run_federation(data.split, kernel, svm_config(m), params)
    rng = np.random.default_rng([seed, 0x7E57])
    scores = global_predict_many(model, kernel, data.test.features, rng)
    return scores, ledger.uplink, ledger.downlink


def run_point(cfg: ExperimentConfig, sweep_var: str = "none", sweep_value="",
              threads: int = 1, on_row: Optional[Callable[[ResultRow], None]] = None) -> List[ResultRow]:
    """Every repeat of every method at one grid point, in (repeat, method) order."""
    rows = []
    for r in range(cfg.sweep.repeats):
        seed = repeat_seed(cfg.sweep.base_seed, r)
        data = prepare(cfg, seed)
        for method in cfg.model.methods:
            t0 = time.perf_counter()
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    scores, up, down = run_method(method, cfg, data, seed, threads)
            except Exception as exc:
                raise RuntimeError(f"{method} failed at {sweep_var}={sweep_value} "
                                   f"repeat {r} seed {seed}: {exc}") from exc
            wall = int(round(1000 * (time.perf_counter() - t0))) if cfg.record_timing else 0
            row = ResultRow(method, sweep_var, sweep_value, r, seed,
                            evaluate(scores, data.test.labels), up, down, wall)
            log.info("%s %s=%s r%d acc %.4f up %d", method, sweep_var, sweep_value, r,
                     row.report.accuracy, up)
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return rows


# -- commands -----------------------------------------------------------------

def cmd_gen(cfg: ExperimentConfig, out: str, seed: Optional[int] = None) -> Series:
    seed = repeat_seed(cfg.sweep.base_seed, 0) if seed is None else seed
    series = generate(cfg.dataset, seed)
    write_series(out, series)
    return series


def cmd_run(cfg: ExperimentConfig, threads: int = 1, on_row=None) -> List[ResultRow]:
    return run_point(cfg, "none", "", threads, on_row)


def cmd_sweep(cfg: ExperimentConfig, threads: int = 1, on_row=None) -> List[ResultRow]:
    rows = []
    for var, value, point in cfg.grid():
        rows.extend(run_point(point, var, value, threads, on_row))
    return rows


def summarize(rows: Sequence[ResultRow]) -> Dict[Tuple[str, object], Dict[str, float]]:
    """Mean accuracy and uplink per ``(method, sweep_value)``, for quick reporting."""
    groups: Dict[Tuple[str, object], List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.sweep_value), []).append(row)
    return {k: {"accuracy": float(np.mean([r.report.accuracy for r in v])),
                "uplink_bytes": float(np.mean([r.uplink_bytes for r in v])),
                "repeats": len(v)}
            for k, v in groups.items()}
