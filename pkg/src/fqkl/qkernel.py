"""Statevector simulation of the entangling feature map and fidelity kernels.

States are plain ``complex128`` arrays of length ``2**num_qubits``; qubit ``q``
is bit ``q`` of the basis index. A layer of the map applies, for every chunk of
``num_qubits`` features, a Hadamard on each qubit, ``RZ(theta)`` with the
feature routed to qubit ``i % num_qubits`` and ``RZZ(theta_a * theta_b / pi)``
on the entangler pairs. Only the Hadamards mix amplitudes, so a layer is one
Walsh-Hadamard transform followed by a diagonal phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

MAX_QUBITS = 12
DEFAULT_ANGLE_RANGE = (0.0, math.pi)
_BATCH_ROWS = 2048


class InvalidInputError(ValueError):
    """Raised for empty, mis-shaped or non-finite kernel inputs."""


@dataclass(frozen=True, eq=False)
class Rescale:
    """Per-feature affine map from the training range onto rotation angles.

    Values outside ``[lo, hi]`` are clipped before mapping, so test data can
    never produce angles the training data did not span.
    """

    lo: np.ndarray
    hi: np.ndarray
    angle_range: Tuple[float, float] = DEFAULT_ANGLE_RANGE

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise InvalidInputError("rescale lo/hi must have equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("rescale parameters must be finite")
        if np.any(hi < lo):
            raise InvalidInputError("rescale requires lo <= hi")
        a, b = (float(v) for v in self.angle_range)
        if not (math.isfinite(a) and math.isfinite(b)) or b < a:
            raise InvalidInputError("angle_range must be finite and ordered")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "angle_range", (a, b))

    @classmethod
    def fit(cls, X, angle_range: Tuple[float, float] = DEFAULT_ANGLE_RANGE) -> "Rescale":
        X = _as_matrix(X)
        return cls(X.min(axis=0), X.max(axis=0), angle_range)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if X.shape[-1] != self.dim:
            raise InvalidInputError(
                f"rescale fitted on {self.dim} features, got {X.shape[-1]}")
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        unit = (np.clip(X, self.lo, self.hi) - self.lo) / safe
        a, b = self.angle_range
        return a + unit * (b - a)


@dataclass(frozen=True, eq=False)
class FeatureMapSpec:
    """The fixed embedding shared by every party of the federation.

    Attributes:
        num_qubits: register width, at most ``MAX_QUBITS``.
        depth: number of repeated (re-uploading) layers.
        entangler: ``"ring"`` or ``"linear"`` nearest-neighbour ZZ pairs.
        rescale: feature-to-angle map; ``None`` feeds raw values as angles.
    """

    num_qubits: int
    depth: int = 2
    entangler: str = "ring"
    rescale: Optional[Rescale] = field(default=None)

    def __post_init__(self):
        if not isinstance(self.num_qubits, (int, np.integer)) or not 1 <= self.num_qubits <= MAX_QUBITS:
            raise InvalidInputError(f"num_qubits must be in [1, {MAX_QUBITS}]")
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 1:
            raise InvalidInputError("depth must be a positive integer")
        if self.entangler not in ("ring", "linear"):
            raise InvalidInputError(f"unknown entangler {self.entangler!r}")

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return _entangler_pairs(self.num_qubits, self.entangler)

    def angles(self, X: np.ndarray) -> np.ndarray:
        return X if self.rescale is None else self.rescale(X)


@lru_cache(maxsize=None)
def _entangler_pairs(n: int, kind: str) -> Tuple[Tuple[int, int], ...]:
    pairs = tuple((q, q + 1) for q in range(n - 1))
    if kind == "ring" and n > 2:
        pairs += ((n - 1, 0),)
    return pairs


@lru_cache(maxsize=None)
def _z_signs(n: int) -> np.ndarray:
    # row q holds the Z eigenvalue (+1 for bit 0, -1 for bit 1) of qubit q
    z = np.arange(1 << n)
    bits = (z[None, :] >> np.arange(n)[:, None]) & 1
    signs = (1 - 2 * bits).astype(np.float64)
    signs.setflags(write=False)
    return signs


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("expected a nonempty list of feature vectors")
    if X.shape[1] == 0:
        raise InvalidInputError("feature vectors must have dimension >= 1")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("feature vectors must be finite")
    return X


def _hadamard_all(states: np.ndarray, n: int) -> None:
    rows = states.shape[0]
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for q in range(n):
        view = states.reshape(rows, -1, 2, 1 << q)
        a = view[:, :, 0, :].copy()
        b = view[:, :, 1, :]
        view[:, :, 0, :] += b
        view[:, :, 1, :] = a - b
    states *= inv_sqrt2 ** n


def _embed_block(spec: FeatureMapSpec, theta: np.ndarray) -> np.ndarray:
    n = spec.num_qubits
    rows, d = theta.shape
    signs = _z_signs(n)
    pairs = spec.pairs()
    left = [a for a, _ in pairs]
    right = [b for _, b in pairs]
    # one generator row per RZ and per RZZ; the phase of a chunk is coeffs @ generators
    generators = np.vstack([signs, signs[left] * signs[right]])
    phases = []
    for start in range(0, d, n):
        block = np.zeros((rows, n))
        part = theta[:, start:start + n]
        block[:, :part.shape[1]] = part
        coeffs = np.hstack([block, block[:, left] * block[:, right] / math.pi])
        phases.append(np.exp(-0.5j * (coeffs @ generators)))

    states = np.zeros((rows, 1 << n), dtype=np.complex128)
    states[:, 0] = 1.0
    for _ in range(spec.depth):
        for phase in phases:
            _hadamard_all(states, n)
            states *= phase
    return states


def embed_many(spec: FeatureMapSpec, X) -> np.ndarray:
    """Feature states for every row of ``X``, shape ``(len(X), 2**N)``."""
    X = _as_matrix(X)
    theta = spec.angles(X)
    out = np.empty((X.shape[0], spec.dim), dtype=np.complex128)
    for start in range(0, X.shape[0], _BATCH_ROWS):
        out[start:start + _BATCH_ROWS] = _embed_block(spec, theta[start:start + _BATCH_ROWS])
    return out


def embed(spec: FeatureMapSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("embed expects a single feature vector")
    return embed_many(spec, x)[0]


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared overlap ``|<a|b>|**2`` clamped into ``[0, 1]``.

    Real and imaginary parts are formed explicitly so swapping the arguments
    only flips the sign of the imaginary sum, which keeps the result
    bit-identical under exchange.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    re = np.sum(a.real * b.real + a.imag * b.imag)
    im = np.sum(a.real * b.imag - a.imag * b.real)
    return float(min(1.0, max(0.0, re * re + im * im)))


def estimate_fidelity_shots(f_exact: float, shots: int, rng: np.random.Generator) -> float:
    """Frequency of the all-zeros outcome of a compute-uncompute circuit."""
    if not 0.0 <= f_exact <= 1.0:
        raise InvalidInputError(f"fidelity {f_exact} outside [0, 1]")
    if shots < 1:
        raise InvalidInputError("shots must be >= 1")
    return rng.binomial(shots, f_exact) / shots


def _sample_shots(values: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    if shots < 1:
        raise InvalidInputError("shots must be >= 1")
    if rng is None:
        raise InvalidInputError("shot-mode kernels need a seeded generator")
    return rng.binomial(shots, values) / shots


def _overlaps(EA: np.ndarray, EB: np.ndarray) -> np.ndarray:
    return np.clip(np.abs(EA.conj() @ EB.T) ** 2, 0.0, 1.0)


def gram_from_states(E: np.ndarray, shots: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None,
                     repair: bool = False) -> np.ndarray:
    n = E.shape[0]
    F = _overlaps(E, E)
    iu = np.triu_indices(n, k=1)
    upper = F[iu]
    if shots is not None:
        upper = _sample_shots(upper, shots, rng)
    K = np.zeros((n, n))
    K[iu] = upper
    K += K.T
    np.fill_diagonal(K, 1.0)
    if repair:
        K = psd_repair(K)
    return K


def psd_repair(K: np.ndarray) -> np.ndarray:
    """Shift the diagonal by ``max(0, -lambda_min)`` to restore PSD."""
    lam = np.linalg.eigvalsh(K)[0]
    if lam < 0:
        K = K + (-lam) * np.eye(K.shape[0])
    return K


def gram(spec: FeatureMapSpec, X, shots: Optional[int] = None,
         rng: Optional[np.random.Generator] = None, repair: bool = False) -> np.ndarray:
    """Symmetric fidelity Gram matrix of the rows of ``X``.

    Embeddings are computed once per row. Only the strict upper triangle is
    evaluated (and, with ``shots``, sampled); the lower triangle mirrors it and
    the diagonal is exactly one. Shot-mode matrices are left as estimated
    unless ``repair`` is set.
    """
    return gram_from_states(embed_many(spec, X), shots, rng, repair)


def cross_gram(spec: FeatureMapSpec, A, B, shots: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Rectangular ``len(A) x len(B)`` matrix of fidelities."""
    EA = embed_many(spec, A)
    EB = embed_many(spec, B)
    F = _overlaps(EA, EB)
    if shots is not None:
        F = _sample_shots(F, shots, rng)
    return F


class QuantumKernel:
    """Fidelity kernel bound to one :class:`FeatureMapSpec`.

    ``shots=None`` gives exact overlaps; otherwise every off-diagonal overlap
    is replaced by a binomial estimate drawn from the ``rng`` passed per call.
    """

    name = "quantum"

    def __init__(self, spec: FeatureMapSpec, shots: Optional[int] = None, repair: bool = False):
        if shots is not None and shots < 1:
            raise InvalidInputError("shots must be >= 1")
        self.spec = spec
        self.shots = shots
        self.repair = repair

    def __repr__(self):
        return (f"QuantumKernel(num_qubits={self.spec.num_qubits}, depth={self.spec.depth}, "
                f"entangler={self.spec.entangler!r}, shots={self.shots})")

    def gram(self, X, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return gram(self.spec, X, self.shots, rng, self.repair)

    def cross_gram(self, A, B, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return cross_gram(self.spec, A, B, self.shots, rng)


def pairwise_fidelities(spec: FeatureMapSpec, A: Sequence, B: Sequence) -> np.ndarray:
    """Entrywise ``fidelity(embed(a), embed(b))``; slow reference path."""
    SA = [embed(spec, a) for a in A]
    SB = [embed(spec, b) for b in B]
    return np.array([[fidelity(sa, sb) for sb in SB] for sa in SA])
