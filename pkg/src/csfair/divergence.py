"""Differentiable dependence and discrepancy estimators.

Every estimator returns a :class:`DivergenceResult` holding the scalar
value and the exact analytic partial derivatives with respect to every
input observation, which the trainer injects into backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GroupMissingError, InvalidArgumentError, NumericalDomainError
from .kernels import KernelSpec, _as_matrix, gram_sums, kernel_grad_sum, kernel_matrix

EPS_NUM = 1e-10
PROB_CLIP = 1e-7
VAR_FLOOR = 1e-6


@dataclass
class DivergenceResult:
    value: float
    grad_p: np.ndarray
    grad_q: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalDomainError(f"non-finite divergence value {self.value}")


def _clamp(v: float) -> float:
    return 0.0 if -EPS_NUM < v < 0.0 else v


def cs_divergence(P, Q, spec: KernelSpec) -> DivergenceResult:
    """Empirical Cauchy-Schwarz divergence between two sample sets.

    value = log S_pp + log S_qq - 2 log S_pq over the normalized Gram sums.
    """
    P, Q = _as_matrix(P), _as_matrix(Q)
    n1, n2 = P.shape[0], Q.shape[0]
    s_pp, s_qq, s_pq = gram_sums(P, Q, spec)
    value = _clamp(float(np.log(s_pp) + np.log(s_qq) - 2.0 * np.log(s_pq)))
    ones_pp = np.ones((n1, n1))
    ones_qq = np.ones((n2, n2))
    ones_pq = np.ones((n1, n2))
    grad_p = (2.0 / (n1**2 * s_pp)) * kernel_grad_sum(P, P, ones_pp, spec) - (
        2.0 / (n1 * n2 * s_pq)
    ) * kernel_grad_sum(P, Q, ones_pq, spec)
    grad_q = (2.0 / (n2**2 * s_qq)) * kernel_grad_sum(Q, Q, ones_qq, spec) - (
        2.0 / (n1 * n2 * s_pq)
    ) * kernel_grad_sum(Q, P, ones_pq.T, spec)
    return DivergenceResult(value, grad_p, grad_q)


def mmd_squared(P, Q, spec: KernelSpec) -> DivergenceResult:
    """Biased squared MMD: S_pp + S_qq - 2 S_pq."""
    P, Q = _as_matrix(P), _as_matrix(Q)
    n1, n2 = P.shape[0], Q.shape[0]
    s_pp, s_qq, s_pq = gram_sums(P, Q, spec)
    value = _clamp(s_pp + s_qq - 2.0 * s_pq)
    grad_p = (2.0 / n1**2) * kernel_grad_sum(P, P, np.ones((n1, n1)), spec) - (
        2.0 / (n1 * n2)
    ) * kernel_grad_sum(P, Q, np.ones((n1, n2)), spec)
    grad_q = (2.0 / n2**2) * kernel_grad_sum(Q, Q, np.ones((n2, n2)), spec) - (
        2.0 / (n1 * n2)
    ) * kernel_grad_sum(Q, P, np.ones((n2, n1)), spec)
    return DivergenceResult(value, grad_p, grad_q)


def hsic(X, Y, spec_x: KernelSpec, spec_y: KernelSpec) -> DivergenceResult:
    """Biased HSIC estimate (1/N^2) tr(K H L H) with centering matrix H."""
    X, Y = _as_matrix(X), _as_matrix(Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise InvalidArgumentError(f"sample count mismatch: {n} vs {Y.shape[0]}")
    if n < 2:
        raise InvalidArgumentError("HSIC needs at least 2 samples")
    K = kernel_matrix(X, X, spec_x)
    L = kernel_matrix(Y, Y, spec_y)
    H = np.eye(n) - np.ones((n, n)) / n
    M = H @ L @ H
    value = _clamp(float(np.sum(K * M)) / n**2)
    grad_x = (2.0 / n**2) * kernel_grad_sum(X, X, M, spec_x)
    C = H @ K @ H
    grad_y = (2.0 / n**2) * kernel_grad_sum(Y, Y, C, spec_y)
    return DivergenceResult(value, grad_x, grad_y)


def mean_disparity(P, Q) -> DivergenceResult:
    """Absolute difference of the two sample means (scalar samples)."""
    P, Q = _as_matrix(P), _as_matrix(Q)
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise InvalidArgumentError("sample sets must be non-empty")
    if P.shape[1] != 1 or Q.shape[1] != 1:
        raise InvalidArgumentError("mean disparity is defined on scalar samples")
    diff = float(P.mean() - Q.mean())
    sign = float(np.sign(diff))  # 0 at the tie point
    grad_p = np.full_like(P, sign / P.shape[0])
    grad_q = np.full_like(Q, -sign / Q.shape[0])
    return DivergenceResult(abs(diff), grad_p, grad_q)


def pr_mutual_information(z, s) -> DivergenceResult:
    """Plugin mutual information between the Bernoulli prediction and the group.

    Uses the soft joint p(yhat=1, s) = (1/N) sum_{i: s_i=s} z_i so the value
    is differentiable in z.  ``grad_p`` carries d value / d z (shape (N, 1));
    ``grad_q`` is zero (the group labels are not differentiable).
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    s = np.asarray(s).reshape(-1).astype(int)
    if z.shape[0] != s.shape[0]:
        raise InvalidArgumentError("z and s must have equal length")
    n = z.shape[0]
    if n == 0:
        raise InvalidArgumentError("empty batch")
    groups = np.unique(s)
    if groups.size < 2:
        raise GroupMissingError("both groups must be present in the batch")
    zc = np.clip(z, PROB_CLIP, 1.0 - PROB_CLIP)
    # joint[y, g]: y in {0, 1} rows, one column per group
    joint = np.empty((2, groups.size))
    for k, g in enumerate(groups):
        mask = s == g
        joint[1, k] = zc[mask].sum() / n
        joint[0, k] = (1.0 - zc[mask]).sum() / n
    joint = np.clip(joint, PROB_CLIP, None)
    marg_y = joint.sum(axis=1)  # depends on z
    marg_s = joint.sum(axis=0)  # fixed group frequencies
    value = float(np.sum(joint * (np.log(joint) - np.log(np.outer(marg_y, marg_s)))))
    value = max(value, 0.0)
    # d MI / d joint[y, g] = log(joint[y, g] / marg_y[y]); marg_s is constant in z
    dj = np.log(joint) - np.log(marg_y)[:, None]
    grad = np.empty(n)
    for k, g in enumerate(groups):
        grad[s == g] = (dj[1, k] - dj[0, k]) / n
    # clipped coordinates sit on a flat region
    grad[(z <= PROB_CLIP) | (z >= 1.0 - PROB_CLIP)] = 0.0
    return DivergenceResult(value, grad[:, None], np.zeros((n, 1)))


def _moments(X: np.ndarray) -> tuple[float, float, bool]:
    mu = float(X.mean())
    var = float(X.var())
    floored = var < VAR_FLOOR
    return mu, max(var, VAR_FLOOR), floored


def kl_gaussian_moment(P, Q) -> DivergenceResult:
    """KL(p || q) after fitting a 1-d Gaussian to each side by sample moments."""
    P, Q = _as_matrix(P), _as_matrix(Q)
    if P.shape[1] != 1 or Q.shape[1] != 1:
        raise InvalidArgumentError("moment-matched KL is defined on scalar samples")
    n1, n2 = P.shape[0], Q.shape[0]
    if n1 < 2 or n2 < 2:
        raise InvalidArgumentError("need at least 2 samples per side")
    mu_p, var_p, floor_p = _moments(P)
    mu_q, var_q, floor_q = _moments(Q)
    value = 0.5 * (
        var_p / var_q - 1.0 + (mu_q - mu_p) ** 2 / var_q + np.log(var_q / var_p)
    )
    d_mu_p = (mu_p - mu_q) / var_q
    d_mu_q = (mu_q - mu_p) / var_q
    d_var_p = 0.5 * (1.0 / var_q - 1.0 / var_p)
    d_var_q = 0.5 * (1.0 / var_q - var_p / var_q**2 - (mu_q - mu_p) ** 2 / var_q**2)
    if floor_p:
        d_var_p = 0.0
    if floor_q:
        d_var_q = 0.0
    grad_p = d_mu_p / n1 + d_var_p * 2.0 * (P - mu_p) / n1
    grad_q = d_mu_q / n2 + d_var_q * 2.0 * (Q - mu_q) / n2
    return DivergenceResult(max(float(value), 0.0), grad_p, grad_q)


def distance_covariance(X, Y) -> DivergenceResult:
    """Squared empirical distance covariance via double-centered distances."""
    X, Y = _as_matrix(X), _as_matrix(Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise InvalidArgumentError(f"sample count mismatch: {n} vs {Y.shape[0]}")
    if n < 2:
        raise InvalidArgumentError("distance covariance needs at least 2 samples")
    a = _dist_matrix(X)
    b = _dist_matrix(Y)
    A = _double_center(a)
    B = _double_center(b)
    value = _clamp(float(np.sum(A * B)) / n**2)
    grad_x = _dcov_grad(X, a, B)
    grad_y = _dcov_grad(Y, b, A)
    return DivergenceResult(value, grad_x, grad_y)


def _dist_matrix(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=2))


def _double_center(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=0)[None, :] - a.mean(axis=1)[:, None] + a.mean()


def _dcov_grad(X: np.ndarray, a: np.ndarray, B: np.ndarray) -> np.ndarray:
    # d value / d x_k = (2/n^2) sum_j B_kj (x_k - x_j) / a_kj, B double-centered
    n = X.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(a > 0, B / a, 0.0)
    return (2.0 / n**2) * (C.sum(axis=1)[:, None] * X - C @ X)
