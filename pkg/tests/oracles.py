"""Independent reference computations used by the test-suite.

Nothing here imports the code under test; each oracle recomputes its quantity
from the defining formula by the most direct route available.
"""

import itertools
import math

import numpy as np


def ry_state(x):
    return np.array([math.cos(x / 2), math.sin(x / 2)], dtype=np.complex128)


def ry_fidelity(x, x2):
    return math.cos((x - x2) / 2) ** 2


def overlap(a, b):
    return abs(np.vdot(a, b)) ** 2


def dual_value(alpha, K, y):
    ya = alpha * y
    return float(alpha.sum() - 0.5 * ya @ K @ ya)


def qp_active_set(K, y, box, tol=1e-10):
    """Exact SVM dual optimum by enumerating every face of the box.

    Each coordinate is pinned at 0, pinned at its upper bound or left free;
    the free block is solved from the KKT linear system with the equality
    constraint's multiplier. The best feasible stationary point is optimal
    because the problem is convex.
    """
    K = np.asarray(K, float)
    y = np.asarray(y, float)
    box = np.asarray(box, float)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best_val, best_alpha = -np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        alpha = np.where(pattern == 1, box, 0.0)
        free = np.flatnonzero(pattern == 2)
        if free.size:
            fixed = np.flatnonzero(pattern != 2)
            A = np.zeros((free.size + 1, free.size + 1))
            A[:free.size, :free.size] = Q[np.ix_(free, free)]
            A[:free.size, free.size] = y[free]
            A[free.size, :free.size] = y[free]
            rhs = np.empty(free.size + 1)
            rhs[:free.size] = 1.0 - Q[np.ix_(free, fixed)] @ alpha[fixed]
            rhs[free.size] = -y[fixed] @ alpha[fixed]
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.linalg.norm(A @ sol - rhs) > 1e-8:
                continue
            alpha[free] = sol[:free.size]
        if np.any(alpha < -tol) or np.any(alpha > box + tol) or abs(y @ alpha) > 1e-8:
            continue
        val = dual_value(alpha, K, y)
        if val > best_val:
            best_val, best_alpha = val, alpha
    return best_val, best_alpha


def qp_grid(K, y, box, steps=200):
    """Best dual value over a uniform grid of feasible points (n <= 3).

    The last coordinate is fixed by the equality constraint.
    """
    y = np.asarray(y, float)
    box = np.asarray(box, float)
    n = len(y)
    axes = [np.linspace(0, box[i], steps + 1) for i in range(n - 1)]
    best = -np.inf
    for head in itertools.product(*axes):
        head = np.array(head)
        last = -(y[:-1] @ head) * y[-1]
        if last < -1e-12 or last > box[-1] + 1e-12:
            continue
        best = max(best, dual_value(np.r_[head, last], K, y))
    return best


def xor_fold(row):
    acc = 0
    for bit in row:
        acc ^= int(bit)
    return acc


def indicator_loop(X, lag):
    T, m = X.shape
    Z = np.zeros((T, m), dtype=int)
    for t in range(lag, T):
        for j in range(m):
            Z[t, j] = 1 if X[t, j] - X[t - lag, j] > 0 else 0
    return Z


def run_filter_loop(P, lo, hi):
    out = [0] * len(P)
    t = 0
    while t < len(P):
        if P[t] == 1:
            s = t
            while t < len(P) and P[t] == 1:
                t += 1
            if t - s >= lo:
                for k in range(s, min(t, s + hi)):
                    out[k] = 1
        else:
            t += 1
    return np.array(out)


def run_lengths(labels):
    lengths, cur = [], 0
    for v in labels:
        if v:
            cur += 1
        elif cur:
            lengths.append(cur)
            cur = 0
    if cur:
        lengths.append(cur)
    return lengths


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) % (1 << 64)
    return h
