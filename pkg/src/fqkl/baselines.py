"""Classical federated baselines: RBF Fed-SVM and a tree-union Fed-RF."""

from __future__ import annotations

import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .datagen import ClientSplit, WindowSet
from .fedproto import CommLedger, GlobalModel, ProtocolParams, run_federation
from .svm import SvmConfig

LEAF = 0xFFFFFFFF
INTERNAL_NODE_BYTES = 4 + 8 + 4 + 4
LEAF_NODE_BYTES = 4 + 1
TREE_HEADER_BYTES = 4
FOREST_HEADER_BYTES = 4 + 4


def rbf_kernel(x, x2, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return float(np.exp(-gamma * np.sum((x - x2) ** 2)))


class RbfKernel:
    """``exp(-gamma * ||x - x'||^2)`` with the same interface as ``QuantumKernel``."""

    name = "rbf"

    def __init__(self, gamma: float):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)

    def __repr__(self):
        return f"RbfKernel(gamma={self.gamma!r})"

    def _sqdist(self, A, B):
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
            raise ValueError("expected 2-D inputs of equal feature dimension")
        d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.maximum(d, 0.0)

    def gram(self, X, rng=None) -> np.ndarray:
        K = np.exp(-self.gamma * self._sqdist(X, X))
        K = np.triu(K, 1)
        K = K + K.T
        np.fill_diagonal(K, 1.0)
        return K

    def cross_gram(self, A, B, rng=None) -> np.ndarray:
        return np.exp(-self.gamma * self._sqdist(A, B))


def fed_svm_rbf(split: ClientSplit, gamma: Optional[float] = None, cfg: SvmConfig = SvmConfig(),
                params: ProtocolParams = ProtocolParams()) -> Tuple[GlobalModel, CommLedger, RbfKernel]:
    """The federated SVM protocol with the RBF kernel; ``gamma`` defaults to ``1/d``."""
    if gamma is None:
        gamma = 1.0 / split.clients[0].dim
    kernel = RbfKernel(gamma)
    model, ledger = run_federation(split, kernel, cfg, params)
    return model, ledger, kernel


# -- trees -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat binary tree; ``feature[k] == -1`` marks a leaf with ``value[k]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def leaf_count(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node].astype(np.int64)

    def byte_size(self) -> int:
        leaves = self.leaf_count
        return (TREE_HEADER_BYTES + (self.node_count - leaves) * INTERNAL_NODE_BYTES
                + leaves * LEAF_NODE_BYTES)

    def encode(self) -> bytes:
        buf = io.BytesIO()
        buf.write(struct.pack("<I", self.node_count))
        for k in range(self.node_count):
            if self.feature[k] < 0:
                buf.write(struct.pack("<IB", LEAF, int(self.value[k])))
            else:
                buf.write(struct.pack("<IdII", int(self.feature[k]), float(self.threshold[k]),
                                      int(self.left[k]), int(self.right[k])))
        return buf.getvalue()


def _gini_best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best midpoint threshold on one feature: ``(gain-ready impurity, threshold)``."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.shape[0]
    boundary = np.flatnonzero(xs[1:] != xs[:-1])  # split after position k
    if boundary.size == 0:
        return None
    n_left = boundary + 1
    ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not ok.any():
        return None
    boundary, n_left = boundary[ok], n_left[ok]
    pos_left = np.cumsum(ys)[boundary]
    pos_total = ys.sum()
    n_right = n - n_left
    pos_right = pos_total - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    weighted = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
    best = int(np.argmin(weighted))
    k = boundary[best]
    return float(weighted[best]), 0.5 * (xs[k] + xs[k + 1])


def train_tree(samples: WindowSet, max_depth: int = 8, min_leaf: int = 1,
               rng: Optional[np.random.Generator] = None,
               max_features: Optional[int] = None) -> DecisionTree:
    """Greedy CART with Gini impurity.

    Each split draws ``max_features`` candidate features (all of them when
    ``None``); a node becomes a leaf when pure, at ``max_depth``, when it
    holds fewer than ``2 * min_leaf`` samples or when no candidate feature
    varies. Leaves predict the majority
    class, ties going to 0.
    """
    X = np.asarray(samples.features, dtype=np.float64)
    y = np.asarray(samples.labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot train a tree on no samples")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    d = X.shape[1]
    n_try = d if max_features is None else max(1, min(d, max_features))

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[int] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        pos = int(ys.sum())
        value[node] = 1 if 2 * pos > ys.shape[0] else 0
        if pos == 0 or pos == ys.shape[0] or depth >= max_depth or ys.shape[0] < 2 * min_leaf:
            continue
        best = None
        cand = rng.choice(d, size=n_try, replace=False) if n_try < d else np.arange(d)
        for j in cand:
            found = _gini_best_split(X[idx, j], ys, min_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(j), found[1])
        # zero-gain splits are allowed: XOR-like targets need them at the root
        if best is None:
            continue
        _, j, thr = best
        mask = X[idx, j] <= thr
        feature[node], threshold[node] = j, thr
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], idx[~mask], depth + 1))
        stack.append((left[node], idx[mask], depth + 1))

    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(value, dtype=np.int64), max_depth)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: List[DecisionTree]
    seeds: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")

    def votes(self, X) -> np.ndarray:
        """Fraction of trees voting for the anomaly class."""
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return (self.votes(X) > 0.5).astype(np.int64)

    def scores(self, X) -> np.ndarray:
        """Vote margin, positive exactly when the majority says anomaly."""
        return self.votes(X) - 0.5

    @property
    def node_count(self) -> int:
        return sum(t.node_count for t in self.trees)

    def byte_size(self) -> int:
        return FOREST_HEADER_BYTES + sum(t.byte_size() for t in self.trees)

    def encode(self, client_id: int = 0) -> bytes:
        head = struct.pack("<II", client_id, len(self.trees))
        return head + b"".join(t.encode() for t in self.trees)


def train_forest(samples: WindowSet, num_trees: int = 50, max_depth: int = 8,
                 min_leaf: int = 1, seed: int = 0,
                 max_features: Optional[int] = None) -> Forest:
    """Bagged CART trees with ``sqrt(d)`` candidate features per split by default."""
    if len(samples) == 0:
        raise ValueError("cannot train a forest on no samples")
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    d = samples.dim
    if max_features is None:
        max_features = max(1, int(math.isqrt(d)))
    seeds = np.random.SeedSequence(seed).generate_state(num_trees).tolist()
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, len(samples), len(samples))
        trees.append(train_tree(samples[boot], max_depth, min_leaf, rng, max_features))
    return Forest(trees, seeds)


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 50
    max_depth: int = 8
    min_leaf: int = 1
    threads: int = 1
    seed: int = 0


def fed_rf(split: ClientSplit, params: ForestParams = ForestParams()) -> Tuple[Forest, CommLedger]:
    """Every client grows a forest; the server concatenates them and broadcasts the union."""
    children = np.random.SeedSequence(params.seed).generate_state(split.num_clients).tolist()

    def local(k: int) -> Forest:
        return train_forest(split.clients[k], params.num_trees, params.max_depth,
                            params.min_leaf, seed=children[k])

    if params.threads > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            forests = list(pool.map(local, range(split.num_clients)))
    else:
        forests = [local(k) for k in range(split.num_clients)]
    ledger = CommLedger()
    for k, f in enumerate(forests):
        ledger.record(0, k, "uplink", f.byte_size())
    merged = Forest([t for f in forests for t in f.trees],
                    [s for f in forests for s in f.seeds])
    for k in range(split.num_clients):
        ledger.record(0, k, "downlink", merged.byte_size())
    return merged, ledger
