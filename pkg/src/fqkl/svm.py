"""Binary kernel SVM on a precomputed Gram matrix.

The dual is solved in its minimisation form

    min_a  1/2 a^T Q a - 1^T a,   Q_ij = y_i y_j K_ij,
    s.t.   0 <= a_i <= C_i,  sum_i y_i a_i = 0

by SMO with second-order working-set selection (Fan, Chen & Lin, 2005). The
solver needs no factorisation, so slightly indefinite shot-noise Grams are
tolerated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

ALPHA_PRUNE = 1e-8
_TAU = 1e-12


class SvmError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    class_weighting: bool = True
    kkt_tolerance: float = 1e-3
    max_passes: int = 200

    def __post_init__(self):
        if not self.C > 0:
            raise SvmError("C must be positive")
        if not self.kkt_tolerance > 0:
            raise SvmError("kkt_tolerance must be positive")
        if self.max_passes < 1:
            raise SvmError("max_passes must be >= 1")


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Sparse dual solution.

    ``sv_indices`` point into the training set; ``alphas``, ``labels`` (+-1)
    and ``box`` (the per-sample upper bound ``C_i``) are aligned with them.
    """

    sv_indices: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    box: np.ndarray
    objective: float = 0.0
    n_iter: int = 0
    converged: bool = True
    history: Optional[List[float]] = field(default=None, repr=False)

    @property
    def n_support(self) -> int:
        return int(self.sv_indices.shape[0])


def box_constraints(y: np.ndarray, cfg: SvmConfig) -> np.ndarray:
    """Per-sample ``C_i``; inverse class frequency when weighting is on."""
    n = y.shape[0]
    if not cfg.class_weighting:
        return np.full(n, float(cfg.C))
    n_pos = int(np.sum(y > 0))
    counts = np.where(y > 0, n_pos, n - n_pos)
    return cfg.C * n / (2.0 * counts)


def dual_objective(alpha: np.ndarray, K: np.ndarray, y: np.ndarray) -> float:
    """The maximisation-form objective ``1^T a - 1/2 a^T (YKY) a``."""
    ya = alpha * y
    return float(alpha.sum() - 0.5 * ya @ K @ ya)


def _check_inputs(K, y):
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise SvmError("Gram matrix must be square")
    if K.shape[0] != y.shape[0]:
        raise SvmError("Gram matrix and labels differ in size")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise SvmError("both classes are required")
    if not np.array_equal(K, K.T):
        raise SvmError("Gram matrix must be symmetric")
    return K, y


def _bias(alpha, grad, y, box):
    # b = -rho; on-margin vectors pin rho, otherwise take the feasible midpoint
    yg = y * grad
    free = (alpha > ALPHA_PRUNE) & (alpha < box - ALPHA_PRUNE)
    if np.any(free):
        return -float(np.mean(yg[free]))
    at_upper = alpha >= box - ALPHA_PRUNE
    at_lower = alpha <= ALPHA_PRUNE
    # rho must satisfy rho >= yg on one side and <= yg on the other
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if np.any(ub_mask) else np.inf
    lb = yg[lb_mask].max() if np.any(lb_mask) else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return -float(0.5 * (ub + lb))


def solve_dual(K, y, cfg: SvmConfig = SvmConfig(), trace: bool = False,
               box: Optional[np.ndarray] = None) -> SvmModel:
    """Train on Gram ``K`` with labels ``y`` in {-1, +1}.

    Iterates until the maximal violating pair gap drops below
    ``cfg.kkt_tolerance`` or ``cfg.max_passes * n`` pair updates have been
    made; in the latter case a :class:`ConvergenceWarning` is issued and the
    current iterate is returned with ``converged=False``. With ``trace`` the
    dual objective after every update is kept in ``history``. An explicit
    ``box`` replaces the per-sample bounds derived from ``cfg``.
    """
    K, y = _check_inputs(K, y)
    n = y.shape[0]
    if box is None:
        box = box_constraints(y, cfg)
    else:
        box = np.asarray(box, dtype=np.float64)
        if box.shape != (n,) or not np.all(np.isfinite(box)) or np.any(box <= 0):
            raise SvmError("box must hold one positive finite bound per sample")
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    eps = cfg.kkt_tolerance
    max_iter = cfg.max_passes * max(n, 1)
    history = [0.0] if trace else None
    converged = False
    it = 0
    pos = y > 0

    while it < max_iter:
        neg_yg = -y * grad
        up = np.where(pos, alpha < box, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < box)
        if not up.any() or not low.any():
            converged = True
            break
        masked_up = np.where(up, neg_yg, -np.inf)
        i = int(np.argmax(masked_up))
        g_max = masked_up[i]
        g_min = np.min(np.where(low, neg_yg, np.inf))
        if g_max - g_min < eps:
            converged = True
            break

        # second-order choice of j among violators of i
        b = g_max - neg_yg
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))

        yi, yj = y[i], y[j]
        old_ai, old_aj = alpha[i], alpha[j]
        Ci, Cj = box[i], box[j]
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_ai - old_aj
            ai, aj = old_ai + delta, old_aj + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_ai + old_aj
            ai, aj = old_ai - delta, old_aj + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # Q[:, k] = y * y_k * K[:, k]
        grad += y * (K[:, i] * (yi * (ai - old_ai)) + K[:, j] * (yj * (aj - old_aj)))
        it += 1
        if trace:
            history.append(float(-0.5 * alpha @ (grad - 1.0)))

    if not converged:
        warnings.warn(f"SMO stopped after {it} updates without meeting the KKT tolerance",
                      ConvergenceWarning, stacklevel=2)
    bias = _bias(alpha, grad, y, box)
    keep = np.flatnonzero(alpha > ALPHA_PRUNE)
    return SvmModel(
        sv_indices=keep,
        alphas=alpha[keep].copy(),
        labels=y[keep].astype(np.int64),
        bias=bias,
        box=box[keep].copy(),
        objective=float(-0.5 * alpha @ (grad - 1.0)),
        n_iter=it,
        converged=converged,
        history=history,
    )


def decision_value(model: SvmModel, kernel_row) -> float:
    """Signed margin ``sum_i a_i y_i k_i + b`` for one kernel row over the SVs."""
    row = np.asarray(kernel_row, dtype=np.float64).reshape(-1)
    if row.shape[0] != model.n_support:
        raise SvmError(f"kernel row has {row.shape[0]} entries, model has {model.n_support} SVs")
    return float(np.dot(model.alphas * model.labels, row) + model.bias)


def decision_values(model: SvmModel, kernel_rows) -> np.ndarray:
    """Vectorised :func:`decision_value` for a ``(n_test, n_sv)`` matrix."""
    rows = np.asarray(kernel_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.n_support:
        raise SvmError("kernel rows must have one column per support vector")
    return rows @ (model.alphas * model.labels) + model.bias


def kkt_residuals(alpha_full: np.ndarray, K, y, box, bias: float) -> np.ndarray:
    """Per-sample violation of the complementary-slackness conditions."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    margin = y * (K @ (alpha_full * y) + bias)
    lower = alpha_full <= ALPHA_PRUNE
    upper = alpha_full >= box - ALPHA_PRUNE
    res = np.abs(margin - 1.0)
    res = np.where(lower, np.maximum(0.0, 1.0 - margin), res)
    res = np.where(upper & ~lower, np.maximum(0.0, margin - 1.0), res)
    return res


def dense_alphas(model: SvmModel, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[model.sv_indices] = model.alphas
    return out
