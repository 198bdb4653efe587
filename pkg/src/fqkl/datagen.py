"""Synthetic multivariate sensor streams with labelled anomalies.

Two generators share one sinusoidal backbone: ``gen_periodic`` injects drift
and spike bursts, ``gen_parity`` labels bursts of the XOR of lagged
phase-change indicators over a sensor subset. Everything is a pure function of
its config and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


class ConfigError(ValueError):
    """Raised when a data configuration violates its invariants."""


@dataclass(frozen=True)
class SeriesConfig:
    """Backbone signal parameters.

    Per-sensor ``frequencies``, ``amplitudes`` and ``phases`` default to
    seeded draws when left as ``None``.
    """

    num_sensors: int = 8
    num_steps: int = 20000
    frequencies: Optional[Tuple[float, ...]] = None
    amplitudes: Optional[Tuple[float, ...]] = None
    phases: Optional[Tuple[float, ...]] = None
    noise_std: float = 0.05
    mixing_strength: float = 0.2
    freq_range: Tuple[float, float] = (1 / 200, 1 / 40)
    seed: int = 0

    def __post_init__(self):
        if self.num_sensors < 1:
            raise ConfigError("num_sensors must be >= 1")
        if self.num_steps < 1:
            raise ConfigError("num_steps must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0.0 <= self.mixing_strength <= 1.0:
            raise ConfigError("mixing_strength must lie in [0, 1]")
        for name in ("frequencies", "amplitudes", "phases"):
            vals = getattr(self, name)
            if vals is not None and len(vals) != self.num_sensors:
                raise ConfigError(f"{name} needs one entry per sensor")


@dataclass(frozen=True)
class ParityConfig:
    """Parity-of-phase labelling: lag, sensor subset and burst length bounds."""

    subset: Tuple[int, ...] = (0, 1, 2)
    lag: int = 3
    burst_min: int = 10
    burst_max: int = 40
    phase_jitter: float = 0.02

    def __post_init__(self):
        if self.lag < 1:
            raise ConfigError("lag must be >= 1")
        if len(self.subset) == 0:
            raise ConfigError("parity subset must be nonempty")
        if len(set(self.subset)) != len(self.subset) or min(self.subset) < 0:
            raise ConfigError("parity subset indices must be distinct and >= 0")
        if not 1 <= self.burst_min <= self.burst_max:
            raise ConfigError("need 1 <= burst_min <= burst_max")
        if self.phase_jitter < 0:
            raise ConfigError("phase_jitter must be >= 0")

    @property
    def order(self) -> int:
        return len(self.subset)


class Series(NamedTuple):
    values: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class WindowSample:
    features: np.ndarray
    label: int
    timestamp: int


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Columnar view of a list of :class:`WindowSample`.

    Indexing with an int yields a ``WindowSample``; slicing or an index array
    yields another ``WindowSet``.
    """

    features: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return WindowSample(self.features[idx], int(self.labels[idx]), int(self.timestamps[idx]))
        return WindowSet(self.features[idx], self.labels[idx], self.timestamps[idx])

    def __iter__(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_samples(cls, samples: Sequence[WindowSample]) -> "WindowSet":
        return cls(np.array([s.features for s in samples], dtype=np.float64),
                   np.array([s.label for s in samples], dtype=np.int64),
                   np.array([s.timestamp for s in samples], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ClientSplit:
    clients: List[WindowSet] = field(default_factory=list)

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def sizes(self) -> List[int]:
        return [len(c) for c in self.clients]


def _signal_params(cfg: SeriesConfig, rng: np.random.Generator):
    m = cfg.num_sensors
    lo, hi = cfg.freq_range
    # log-uniform keeps slow and fast sensors equally represented
    freqs = np.exp(rng.uniform(math.log(lo), math.log(hi), m))
    amps = rng.uniform(0.5, 1.5, m)
    phases = rng.uniform(0.0, 2 * math.pi, m)
    if cfg.frequencies is not None:
        freqs = np.asarray(cfg.frequencies, dtype=np.float64)
    if cfg.amplitudes is not None:
        amps = np.asarray(cfg.amplitudes, dtype=np.float64)
    if cfg.phases is not None:
        phases = np.asarray(cfg.phases, dtype=np.float64)
    return freqs, amps, phases


def mixing_matrix(m: int, rng: np.random.Generator) -> np.ndarray:
    """Random row-stochastic matrix whose diagonal dominates each row."""
    W = rng.uniform(0.0, 1.0, (m, m))
    W[np.diag_indices(m)] += m
    return W / W.sum(axis=1, keepdims=True)


def _backbone(cfg: SeriesConfig, rng: np.random.Generator, jitter: float = 0.0) -> np.ndarray:
    freqs, amps, phases = _signal_params(cfg, rng)
    W = mixing_matrix(cfg.num_sensors, rng)
    t = np.arange(cfg.num_steps, dtype=np.float64)[:, None]
    arg = 2 * math.pi * freqs[None, :] * t + phases[None, :]
    if jitter > 0:
        arg = arg + np.cumsum(rng.normal(0.0, jitter, (cfg.num_steps, cfg.num_sensors)), axis=0)
    X = amps[None, :] * np.sin(arg)
    s = cfg.mixing_strength
    if s > 0:
        X = (1 - s) * X + s * (X @ W)
    if cfg.noise_std > 0:
        X = X + rng.normal(0.0, cfg.noise_std, X.shape)
    return X


def gen_periodic(cfg: SeriesConfig, anomaly_rate: float = 0.05,
                 burst_min: int = 10, burst_max: int = 40) -> Series:
    """Sinusoids with drift-and-spike fault bursts.

    Bursts are placed at random, separated by at least one normal step, until
    the labelled fraction reaches ``anomaly_rate``. Inside a burst at least two
    sensors get a linear drift and one to three spikes.
    """
    if not 0.0 <= anomaly_rate < 0.5:
        raise ConfigError("anomaly_rate must lie in [0, 0.5)")
    if not 1 <= burst_min <= burst_max:
        raise ConfigError("need 1 <= burst_min <= burst_max")
    if anomaly_rate > 0 and cfg.num_steps <= 10 * burst_max:
        raise ConfigError("num_steps must exceed 10 * burst_max")
    rng = np.random.default_rng(cfg.seed)
    X = _backbone(cfg, rng)
    T, m = X.shape
    labels = np.zeros(T, dtype=np.int64)
    scale = float(np.std(X)) if np.std(X) > 0 else 1.0
    target = int(round(anomaly_rate * T))
    # occupied[t] also blocks the neighbours of every burst so runs stay separate
    occupied = np.zeros(T + 2, dtype=bool)
    attempts = 0
    while labels.sum() < target:
        attempts += 1
        if attempts > 100 * T:
            raise ConfigError("could not place bursts; lower anomaly_rate")
        length = int(rng.integers(burst_min, burst_max + 1))
        start = int(rng.integers(0, T - length + 1))
        if occupied[start:start + length + 2].any():
            continue
        occupied[start:start + length + 2] = True
        labels[start:start + length] = 1
        k = int(rng.integers(2, m + 1)) if m >= 2 else 1
        sensors = rng.choice(m, size=k, replace=False)
        ramp = np.linspace(0.0, 1.0, length)
        for j in sensors:
            # abrupt level shift followed by a linear drift
            sign = rng.choice([-1.0, 1.0])
            shift = rng.uniform(1.0, 2.0) * scale
            slope = rng.uniform(0.5, 1.5) * scale
            X[start:start + length, j] += sign * (shift + slope * ramp)
            for pos in rng.choice(length, size=int(rng.integers(1, 4)), replace=False):
                X[start + pos, j] += rng.uniform(2.0, 4.0) * rng.choice([-1.0, 1.0]) * scale
    return Series(X, labels)


def phase_indicator(X, lag: int) -> np.ndarray:
    """``Z[t, j] = 1`` iff ``X[t, j] > X[t - lag, j]``; rows before ``lag`` are 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if lag < 1 or lag >= X.shape[0]:
        raise ConfigError("lag must satisfy 1 <= lag < steps")
    Z = np.zeros(X.shape, dtype=np.int64)
    Z[lag:] = X[lag:] > X[:-lag]
    return Z


def parity_signal(Z, subset: Sequence[int]) -> np.ndarray:
    subset = list(subset)
    if not subset:
        raise ConfigError("parity subset must be nonempty")
    Z = np.asarray(Z)
    return np.bitwise_xor.reduce(Z[:, subset].astype(np.int64), axis=1)


def _runs(flags: np.ndarray) -> List[Tuple[int, int]]:
    padded = np.concatenate(([0], flags.astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def burst_filter(P: np.ndarray, burst_min: int, burst_max: int) -> np.ndarray:
    """Label maximal runs of ``P == 1``: drop short runs, keep a prefix of long ones."""
    labels = np.zeros(P.shape[0], dtype=np.int64)
    for start, stop in _runs(np.asarray(P) == 1):
        if stop - start >= burst_min:
            labels[start:min(stop, start + burst_max)] = 1
    return labels


def gen_parity(cfg: SeriesConfig, pcfg: ParityConfig) -> Series:
    if pcfg.order > cfg.num_sensors or max(pcfg.subset) >= cfg.num_sensors:
        raise ConfigError("parity subset exceeds the available sensors")
    if cfg.num_steps <= 10 * pcfg.burst_max:
        raise ConfigError("num_steps must exceed 10 * burst_max")
    rng = np.random.default_rng(cfg.seed)
    X = _backbone(cfg, rng, jitter=pcfg.phase_jitter)
    Z = phase_indicator(X, pcfg.lag)
    P = parity_signal(Z, pcfg.subset)
    return Series(X, burst_filter(P, pcfg.burst_min, pcfg.burst_max))


def windowize(X, step_labels, window: int, mode: str = "raw", lag: int = 3,
              label_rule: str = "last") -> WindowSet:
    """Slide a length-``window`` window over the stream.

    ``raw`` flattens the window time-major (``d = sensors * window``);
    ``indicators`` uses the phase-change indicators at the window's last step
    (``d = sensors``). ``label_rule="last"`` labels by the final step,
    ``"any"`` by any anomalous step inside the window.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(step_labels, dtype=np.int64)
    T, m = X.shape
    if not 1 <= window <= T:
        raise ConfigError("window must satisfy 1 <= window <= steps")
    ends = np.arange(window - 1, T)
    if mode == "raw":
        idx = ends[:, None] - np.arange(window - 1, -1, -1)[None, :]
        feats = X[idx].reshape(len(ends), window * m)
    elif mode == "indicators":
        if window < lag:
            raise ConfigError("indicator windows must be at least lag long")
        feats = phase_indicator(X, lag)[ends].astype(np.float64)
    else:
        raise ConfigError(f"unknown window mode {mode!r}")
    if label_rule == "last":
        labels = y[ends]
    elif label_rule == "any":
        c = np.concatenate(([0], np.cumsum(y)))
        labels = ((c[ends + 1] - c[ends + 1 - window]) > 0).astype(np.int64)
    else:
        raise ConfigError(f"unknown label rule {label_rule!r}")
    return WindowSet(np.ascontiguousarray(feats), labels.copy(), ends.astype(np.int64))


def temporal_holdout(samples: WindowSet, test_fraction: float = 0.3) -> Tuple[WindowSet, WindowSet]:
    n = len(samples)
    cut = n - int(round(test_fraction * n))
    return samples[:cut], samples[cut:]


def partition(samples: WindowSet, num_clients: int, scheme: str = "contiguous",
              seed: int = 0) -> ClientSplit:
    """Split samples into ``num_clients`` disjoint near-equal shards."""
    n = len(samples)
    if num_clients < 1:
        raise ConfigError("num_clients must be >= 1")
    if num_clients > n:
        raise ConfigError("more clients than samples")
    if scheme == "contiguous":
        order = np.arange(n)
    elif scheme == "shuffled":
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise ConfigError(f"unknown partition scheme {scheme!r}")
    return ClientSplit([samples[chunk] for chunk in np.array_split(order, num_clients)])


def write_series(path, series: Series) -> None:
    """Columnar text export: ``t,s0..s{m-1},label`` with round-trip reals."""
    X, y = series
    m = X.shape[1]
    lines = [",".join(["t"] + [f"s{j}" for j in range(m)] + ["label"])]
    for t in range(X.shape[0]):
        lines.append(",".join([str(t)] + [repr(float(v)) for v in X[t]] + [str(int(y[t]))]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(path) -> Series:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t" or header[-1] != "label":
            raise ConfigError(f"{path}: not a dataset file")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in r[1:-1]] for r in rows], dtype=np.float64)
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return Series(data.reshape(len(rows), len(header) - 2), labels)
