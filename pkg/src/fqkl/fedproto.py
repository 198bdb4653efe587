"""One-shot federated kernel SVM with support-vector sparsification.

Each client trains a local SVM on its own Gram matrix, keeps its ``m``
largest-``|alpha|`` support vectors, quantizes them and ships a
:class:`ClientPayload`. The server deduplicates records by content hash,
assembles the global Gram over all shipped vectors (diagonal blocks plus
cross-client overlaps), retrains the dual on it and broadcasts the result.

The protocol is kernel-agnostic: anything with ``gram(X, rng)`` and
``cross_gram(A, B, rng)`` methods works, and a bare
:class:`~fqkl.qkernel.FeatureMapSpec` is wrapped into an exact
:class:`~fqkl.qkernel.QuantumKernel`.
"""

from __future__ import annotations

import io
import logging
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .datagen import ClientSplit, WindowSet
from .qkernel import FeatureMapSpec, QuantumKernel
from .svm import SvmConfig, SvmModel, box_constraints, solve_dual

log = logging.getLogger(__name__)

FEATURE_BITS = 16
SERVER_ID = 0xFFFFFFFF
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

HEADER_FIXED = 4 + 4 + 1 + 16 + 4 + 8


class ProtocolError(RuntimeError):
    pass


class HashCollisionError(ProtocolError):
    pass


class SingleClassClientError(ProtocolError):
    pass


def as_kernel(kernel, shots: Optional[int] = None):
    if isinstance(kernel, FeatureMapSpec):
        return QuantumKernel(kernel, shots=shots)
    return kernel


# -- quantization ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantizedVec:
    """Uniform ``bits``-bit codes over ``[lo, hi]`` (scalars or per-column arrays)."""

    codes: np.ndarray
    bits: int
    lo: np.ndarray
    hi: np.ndarray

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1


def quantize(values, bits: int, lo, hi) -> QuantizedVec:
    """``code = round((v - lo) / (hi - lo) * (2**bits - 1))``, half away from zero.

    Values are clamped into ``[lo, hi]`` first. A degenerate range maps every
    value to code 0.
    """
    if not 1 <= bits <= 16:
        raise ValueError("bits must lie in [1, 16]")
    v = np.asarray(values, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("quantize needs finite values and range")
    if np.any(hi < lo):
        raise ValueError("quantize needs hi >= lo")
    levels = (1 << bits) - 1
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    unit = (np.clip(v, lo, hi) - lo) / safe
    codes = np.floor(unit * levels + 0.5)
    codes = np.where(span > 0, np.clip(codes, 0, levels), 0)
    return QuantizedVec(codes.astype(np.uint32), bits, lo, hi)


def dequantize(q: QuantizedVec) -> np.ndarray:
    span = q.hi - q.lo
    out = q.lo + q.codes * (span / q.levels)
    # pin the top code to hi exactly
    return np.where(q.codes == q.levels, q.hi + 0 * out, out)


def quantization_step(bits: int, lo, hi) -> np.ndarray:
    return (np.asarray(hi, dtype=np.float64) - np.asarray(lo, dtype=np.float64)) / ((1 << bits) - 1)


# -- hashing -----------------------------------------------------------------

def content_hash(x) -> int:
    """64-bit FNV-1a over the little-endian float64 bytes of ``x``."""
    h = FNV_OFFSET
    for byte in np.ascontiguousarray(x, dtype="<f8").tobytes():
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


# -- wire objects ------------------------------------------------------------

def alpha_code_bytes(bits: int) -> int:
    return (bits + 7) // 8


def payload_size(n_records: int, d: int, bits: int) -> int:
    """Exact uplink encoding length for ``n_records`` support vectors."""
    return HEADER_FIXED + 16 * d + n_records * (4 + 8 + 1 + alpha_code_bytes(bits) + 2 * d)


def broadcast_size(n_records: int, d: int, bits: int) -> int:
    """Exact downlink encoding length (the uplink layout minus hashes)."""
    return HEADER_FIXED + 16 * d + n_records * (4 + 1 + alpha_code_bytes(bits) + 2 * d)


class SvRecord(NamedTuple):
    id: int
    content_hash: int
    alpha_code: int
    label: int
    feature_codes: np.ndarray


@dataclass(frozen=True, eq=False)
class ClientPayload:
    """Everything a client sends upstream, stored column-wise.

    ``exact_features`` never goes on the wire; it is the full-precision
    testing hook that lets the server bypass feature quantization.
    """

    client_id: int
    bits: int
    alpha_lo: float
    alpha_hi: float
    feature_lo: np.ndarray
    feature_hi: np.ndarray
    bias: float
    ids: np.ndarray
    hashes: Tuple[int, ...]
    labels: np.ndarray
    alpha_codes: np.ndarray
    feature_codes: np.ndarray
    exact_features: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.hashes)

    @property
    def dim(self) -> int:
        return int(self.feature_lo.shape[0])

    @property
    def records(self) -> List[SvRecord]:
        return [SvRecord(int(self.ids[k]), self.hashes[k], int(self.alpha_codes[k]),
                         int(self.labels[k]), self.feature_codes[k]) for k in range(len(self))]

    def alphas(self) -> np.ndarray:
        return dequantize(QuantizedVec(self.alpha_codes, self.bits,
                                       np.float64(self.alpha_lo), np.float64(self.alpha_hi)))

    def features(self) -> np.ndarray:
        if self.exact_features is not None:
            return self.exact_features
        return dequantize(QuantizedVec(self.feature_codes, FEATURE_BITS,
                                       self.feature_lo, self.feature_hi))

    def feature_tolerance(self) -> np.ndarray:
        if self.exact_features is not None:
            return np.zeros(self.dim)
        return 0.5 * quantization_step(FEATURE_BITS, self.feature_lo, self.feature_hi)

    @property
    def byte_size(self) -> int:
        return payload_size(len(self), self.dim, self.bits)

    def encode(self) -> bytes:
        buf = io.BytesIO()
        d = self.dim
        buf.write(struct.pack("<IIBddI", self.client_id, len(self), self.bits,
                              self.alpha_lo, self.alpha_hi, d))
        buf.write(np.column_stack([self.feature_lo, self.feature_hi]).astype("<f8").tobytes())
        buf.write(struct.pack("<d", self.bias))
        ab = alpha_code_bytes(self.bits)
        for k in range(len(self)):
            buf.write(struct.pack("<IQb", int(self.ids[k]), self.hashes[k], int(self.labels[k])))
            buf.write(int(self.alpha_codes[k]).to_bytes(ab, "little"))
            buf.write(self.feature_codes[k].astype("<u2").tobytes())
        return buf.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "ClientPayload":
        client_id, count, bits, alo, ahi, d = struct.unpack_from("<IIBddI", data, 0)
        off = struct.calcsize("<IIBddI")
        ranges = np.frombuffer(data, dtype="<f8", count=2 * d, offset=off).reshape(d, 2)
        off += 16 * d
        (bias,) = struct.unpack_from("<d", data, off)
        off += 8
        ab = alpha_code_bytes(bits)
        ids, hashes, labels, acodes, fcodes = [], [], [], [], []
        for _ in range(count):
            i, h, lab = struct.unpack_from("<IQb", data, off)
            off += 13
            ids.append(i)
            hashes.append(h)
            labels.append(lab)
            acodes.append(int.from_bytes(data[off:off + ab], "little"))
            off += ab
            fcodes.append(np.frombuffer(data, dtype="<u2", count=d, offset=off))
            off += 2 * d
        if off != len(data):
            raise ProtocolError("trailing bytes in payload")
        return cls(client_id, bits, alo, ahi, ranges[:, 0].copy(), ranges[:, 1].copy(), bias,
                   np.array(ids, dtype=np.uint32), tuple(hashes), np.array(labels, dtype=np.int8),
                   np.array(acodes, dtype=np.uint32),
                   np.array(fcodes, dtype=np.uint32).reshape(count, d))


@dataclass(frozen=True, eq=False)
class GlobalModel:
    """Server-side model over the union of shipped support vectors.

    ``sv_owner[k]`` and ``sv_ids[k]`` trace global SV ``k`` back to exactly one
    payload record.
    """

    sv_owner: np.ndarray
    sv_ids: np.ndarray
    sv_features: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    client_biases: Tuple[float, ...] = ()
    num_candidates: int = 0

    @property
    def n_support(self) -> int:
        return int(self.alphas.shape[0])

    @classmethod
    def constant(cls, bias: float, d: int) -> "GlobalModel":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, d)),
                   np.zeros(0), np.zeros(0, np.int64), float(bias))


def encode_broadcast(model: GlobalModel, bits: int) -> bytes:
    """Downlink encoding: alphas to ``bits`` bits, features to 16 bits."""
    n, d = model.sv_features.shape
    a_hi = float(model.alphas.max()) if n else 0.0
    qa = quantize(model.alphas, bits, 0.0, a_hi)
    if n:
        f_lo, f_hi = model.sv_features.min(axis=0), model.sv_features.max(axis=0)
    else:
        f_lo = f_hi = np.zeros(d)
    qf = quantize(model.sv_features, FEATURE_BITS, f_lo, f_hi)
    buf = io.BytesIO()
    buf.write(struct.pack("<IIBddI", SERVER_ID, n, bits, 0.0, a_hi, d))
    buf.write(np.column_stack([f_lo, f_hi]).astype("<f8").tobytes())
    buf.write(struct.pack("<d", model.bias))
    ab = alpha_code_bytes(bits)
    for k in range(n):
        buf.write(struct.pack("<Ib", k, int(model.labels[k])))
        buf.write(int(qa.codes[k]).to_bytes(ab, "little"))
        buf.write(qf.codes[k].astype("<u2").tobytes())
    return buf.getvalue()


@dataclass
class CommLedger:
    """Byte counts as ``(round, client, direction, bytes)`` rows."""

    rows: List[Tuple[int, int, str, int]] = field(default_factory=list)

    def record(self, round_: int, client: int, direction: str, nbytes: int) -> None:
        if direction not in ("uplink", "downlink"):
            raise ValueError(f"bad direction {direction!r}")
        self.rows.append((round_, client, direction, int(nbytes)))

    def total(self, direction: str) -> int:
        return sum(r[3] for r in self.rows if r[2] == direction)

    @property
    def uplink(self) -> int:
        return self.total("uplink")

    @property
    def downlink(self) -> int:
        return self.total("downlink")

    def per_client(self, direction: str) -> dict:
        out = {}
        for _, client, dirn, nbytes in self.rows:
            if dirn == direction:
                out[client] = out.get(client, 0) + nbytes
        return out

    def to_csv(self) -> str:
        lines = ["round,client,direction,bytes"]
        lines += [f"{r},{c},{d},{b}" for r, c, d, b in self.rows]
        return "\n".join(lines) + "\n"


# -- protocol steps ----------------------------------------------------------

def select_top(model: SvmModel, budget: Optional[int], balanced: bool = False) -> np.ndarray:
    """Positions (into the model's SV arrays) of the kept support vectors.

    Ranked by ``|alpha|`` descending, ties by training index ascending. With
    ``balanced`` each class first gets up to ``budget // 2`` of its own best
    vectors and the rest of the budget goes to the best remaining ones.
    """
    order = np.lexsort((model.sv_indices, -np.abs(model.alphas)))
    if budget is None or budget >= order.shape[0]:
        return order
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not balanced:
        return order[:budget]
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    chosen = np.zeros(order.shape[0], dtype=bool)
    for cls in (1, -1):
        mine = order[model.labels[order] == cls]
        chosen[mine[:budget // 2]] = True
    rest = order[~chosen[order]]
    chosen[rest[:budget - int(chosen.sum())]] = True
    picked = np.flatnonzero(chosen)
    return picked[np.argsort(rank[picked])]


def merge_duplicate_svs(model: SvmModel, X: np.ndarray) -> SvmModel:
    """Collapse support vectors with identical features into one signed term.

    Duplicates contribute ``(sum of alpha_i y_i) * k(x, .)`` to the decision
    function, so replacing them by a single vector with that net coefficient
    leaves the local model unchanged. The lowest training index represents
    the group; groups whose coefficients cancel exactly are dropped.
    """
    groups = {}
    for pos, row in enumerate(model.sv_indices):
        groups.setdefault(content_hash(X[row]), []).append(pos)
    keep, net = [], []
    for members in groups.values():
        coef = float(np.sum(model.alphas[members] * model.labels[members]))
        if coef != 0.0:
            keep.append(min(members, key=lambda q: model.sv_indices[q]))
            net.append(coef)
    keep = np.array(keep, dtype=np.int64)
    net = np.array(net)
    order = np.argsort(model.sv_indices[keep], kind="stable")
    keep, net = keep[order], net[order]
    return dataclasses.replace(model, sv_indices=model.sv_indices[keep], alphas=np.abs(net),
                               box=model.box[keep],
                               labels=np.where(net > 0, 1, -1).astype(model.labels.dtype))


def collapse_duplicates(X: np.ndarray, y: np.ndarray, cfg: SvmConfig):
    """Representatives of identical ``(x, y)`` samples and their summed boxes.

    Identical samples have identical Gram rows, so the dual only sees the sum
    of their coefficients; one representative whose box is the sum of the
    group's boxes gives the same optimum and decision function on a smaller
    problem. Representatives are the first occurrence, in index order.
    """
    full_box = box_constraints(y, cfg)
    first = {}
    reps, box = [], []
    for i in range(len(y)):
        key = (content_hash(X[i]), int(y[i]))
        slot = first.get(key)
        if slot is None:
            first[key] = len(reps)
            reps.append(i)
            box.append(full_box[i])
        else:
            box[slot] += full_box[i]
    return np.array(reps, dtype=np.int64), np.array(box)


def client_local_round(data: WindowSet, kernel, cfg: SvmConfig = SvmConfig(),
                       budget: Optional[int] = 32, bits: int = 8, *, shots: Optional[int] = None,
                       client_id: int = 0, rng: Optional[np.random.Generator] = None,
                       full_precision: bool = False, balanced: bool = False,
                       merge_duplicates: bool = False) -> ClientPayload:
    """Lines 2-6 of the protocol for one client.

    ``budget=None`` keeps every support vector. ``full_precision`` attaches the
    unquantized vectors for the server to use (the byte size is unchanged).
    ``merge_duplicates`` trains on one representative per distinct sample
    and then nets opposite-label copies of the same vector into one term.
    """
    kernel = as_kernel(kernel, shots)
    if len(data) == 0:
        raise ProtocolError(f"client {client_id} has no data")
    X = data.features
    y = np.where(data.labels > 0, 1, -1)
    if np.all(y == y[0]):
        raise SingleClassClientError(f"client {client_id} holds a single class")
    if merge_duplicates:
        reps, box = collapse_duplicates(X, y, cfg)
        model = solve_dual(kernel.gram(X[reps], rng), y[reps], cfg, box=box)
        model = dataclasses.replace(model, sv_indices=reps[model.sv_indices])
        model = merge_duplicate_svs(model, X)
    else:
        model = solve_dual(kernel.gram(X, rng), y, cfg)
    keep = select_top(model, budget, balanced)
    rows = model.sv_indices[keep]
    alphas = model.alphas[keep]
    a_hi = float(alphas.max()) if alphas.size else 0.0
    qa = quantize(alphas, bits, 0.0, a_hi)
    f_lo, f_hi = X.min(axis=0), X.max(axis=0)
    qf = quantize(X[rows], FEATURE_BITS, f_lo, f_hi)
    return ClientPayload(
        client_id=client_id, bits=bits, alpha_lo=0.0, alpha_hi=a_hi,
        feature_lo=f_lo, feature_hi=f_hi, bias=model.bias,
        ids=rows.astype(np.uint32), hashes=tuple(content_hash(X[r]) for r in rows),
        labels=model.labels[keep].astype(np.int8), alpha_codes=qa.codes,
        feature_codes=qf.codes.reshape(len(rows), X.shape[1]),
        exact_features=X[rows].copy() if full_precision else None,
    )


class _Pool(NamedTuple):
    owner: np.ndarray
    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    blocks: List[np.ndarray]


def _deduplicate(payloads: Sequence[ClientPayload]) -> _Pool:
    seen = {}
    owner, ids, feats, labels, blocks = [], [], [], [], []
    for p in payloads:
        X = p.features()
        tol = p.feature_tolerance()
        block = []
        for k, h in enumerate(p.hashes):
            if h in seen:
                first_x, first_tol = seen[h]
                if np.any(np.abs(first_x - X[k]) > first_tol + tol + 1e-12):
                    raise HashCollisionError(f"hash {h:#018x} maps to different vectors")
                continue
            seen[h] = (X[k], tol)
            block.append(len(owner))
            owner.append(p.client_id)
            ids.append(int(p.ids[k]))
            feats.append(X[k])
            labels.append(int(p.labels[k]))
        blocks.append(np.array(block, dtype=np.int64))
    d = payloads[0].dim
    return _Pool(np.array(owner, dtype=np.int64), np.array(ids, dtype=np.int64),
                 np.array(feats, dtype=np.float64).reshape(len(owner), d),
                 np.array(labels, dtype=np.int64), blocks)


def global_gram(kernel, pool: _Pool, num_clients: int, scale: str = "none",
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Assemble the global Gram from per-client blocks.

    Diagonal blocks come from ``kernel.gram``; off-diagonal blocks from
    ``kernel.cross_gram`` and are mirrored so the result is exactly
    symmetric. ``scale="mean"`` divides every entry by ``num_clients``.
    """
    if scale not in ("none", "mean"):
        raise ValueError(f"unknown scale {scale!r}")
    n = pool.labels.shape[0]
    K = np.zeros((n, n))
    blocks = [b for b in pool.blocks if b.size]
    for a, rows_a in enumerate(blocks):
        Xa = pool.features[rows_a]
        K[np.ix_(rows_a, rows_a)] = kernel.gram(Xa, rng)
        for rows_b in blocks[a + 1:]:
            cross = kernel.cross_gram(Xa, pool.features[rows_b], rng)
            K[np.ix_(rows_a, rows_b)] = cross
            K[np.ix_(rows_b, rows_a)] = cross.T
    if scale == "mean":
        K /= num_clients
    return K


def aggregate(payloads: Sequence[ClientPayload], kernel, cfg: SvmConfig = SvmConfig(),
              scale: str = "none", rng: Optional[np.random.Generator] = None,
              num_clients: Optional[int] = None) -> GlobalModel:
    """Deduplicate, build the global Gram and retrain the dual at the server.

    If the pooled support vectors hold a single class the dual is undefined;
    the server then returns a constant model voting for that class.
    """
    kernel = as_kernel(kernel)
    nonempty = [p for p in payloads if len(p)]
    if not nonempty:
        raise ProtocolError("no support vectors were transmitted")
    pool = _deduplicate(nonempty)
    M = num_clients if num_clients is not None else len(payloads)
    biases = tuple(float(p.bias) for p in payloads)
    d = nonempty[0].dim
    y = np.where(pool.labels > 0, 1, -1)
    if np.all(y == y[0]):
        warnings.warn("pooled support vectors hold a single class; broadcasting a constant model",
                      RuntimeWarning, stacklevel=2)
        model = GlobalModel.constant(float(y[0]), d)
        return GlobalModel(model.sv_owner, model.sv_ids, model.sv_features, model.alphas,
                           model.labels, model.bias, biases, int(y.shape[0]))
    K = global_gram(kernel, pool, M, scale, rng)
    sol = solve_dual(K, y, cfg)
    keep = sol.sv_indices
    return GlobalModel(
        sv_owner=pool.owner[keep], sv_ids=pool.ids[keep], sv_features=pool.features[keep],
        alphas=sol.alphas, labels=sol.labels, bias=sol.bias,
        client_biases=biases, num_candidates=int(y.shape[0]),
    )


def global_predict_many(model: GlobalModel, kernel, X,
                        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Signed margins ``sum_k a_k y_k kappa(sv_k, x) + b`` for every row of ``X``."""
    kernel = as_kernel(kernel)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of feature vectors")
    if model.n_support == 0:
        return np.full(X.shape[0], model.bias)
    if X.shape[1] != model.sv_features.shape[1]:
        raise ValueError("feature dimension does not match the model")
    rows = kernel.cross_gram(X, model.sv_features, rng)
    return rows @ (model.alphas * model.labels) + model.bias


def global_predict(model: GlobalModel, kernel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("global_predict takes a single feature vector")
    if model.n_support and x.shape[0] != model.sv_features.shape[1]:
        raise ValueError("feature dimension does not match the model")
    return float(global_predict_many(model, kernel, x[None, :])[0])


@dataclass(frozen=True)
class ProtocolParams:
    budget: Optional[int] = 32
    bits: int = 8
    shots: Optional[int] = None
    scale: str = "none"
    balanced: bool = False
    merge_duplicates: bool = False
    full_precision: bool = False
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1 or None")
        if not 1 <= self.bits <= 16:
            raise ValueError("bits must lie in [1, 16]")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.scale not in ("none", "mean"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def _client_rngs(seed: int, n: int) -> Tuple[List[np.random.Generator], np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n + 1)
    return [np.random.default_rng(c) for c in children[:n]], np.random.default_rng(children[n])


def run_federation(split: ClientSplit, kernel, cfg: SvmConfig = SvmConfig(),
                   params: ProtocolParams = ProtocolParams()) -> Tuple[GlobalModel, CommLedger]:
    """Run the full one-shot protocol and account every transmitted byte.

    Clients holding a single class are skipped with a warning and send
    nothing; every client still receives the broadcast.
    """
    kernel = as_kernel(kernel, params.shots)
    rngs, server_rng = _client_rngs(params.seed, split.num_clients)

    def local(k: int) -> Optional[ClientPayload]:
        try:
            return client_local_round(split.clients[k], kernel, cfg, params.budget, params.bits,
                                      client_id=k, rng=rngs[k],
                                      full_precision=params.full_precision,
                                      balanced=params.balanced,
                                      merge_duplicates=params.merge_duplicates)
        except SingleClassClientError as exc:
            warnings.warn(f"{exc}; skipped", RuntimeWarning, stacklevel=2)
            return None

    if params.threads > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            results = list(pool.map(local, range(split.num_clients)))
    else:
        results = [local(k) for k in range(split.num_clients)]

    ledger = CommLedger()
    payloads = []
    for k, p in enumerate(results):
        if p is None:
            continue
        ledger.record(0, k, "uplink", p.byte_size)
        payloads.append(p)
        log.debug("client %d: %d records, bias %.4f, %d bytes", k, len(p), p.bias, p.byte_size)
    if not payloads:
        raise ProtocolError("every client was skipped")
    model = aggregate(payloads, kernel, cfg, params.scale, server_rng,
                      num_clients=len(payloads))
    down = broadcast_size(model.n_support, payloads[0].dim, params.bits)
    for k in range(split.num_clients):
        ledger.record(0, k, "downlink", down)
    return model, ledger
