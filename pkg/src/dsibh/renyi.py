"""Matrix-based Renyi alpha-order entropy and mutual information.

Entropy is computed from a trace-normalized Gaussian Gram matrix of a
point sample: H_a(A) = (1/(1-a)) log2 sum_i lambda_i(A)^a. For the
default order a=2 this collapses to -log2 trace(A @ A), which needs no
eigendecomposition and differentiates cleanly. Joint entropy uses the
Hadamard product of the two Gram matrices, renormalized to unit trace,
and mutual information is I(X;T) = H(X) + H(T) - H(X,T).

The gradient path (order 2 only) flows through the kernel and the
normalization but treats the bandwidths as constants; callers that
select bandwidths from the same batch must hold them fixed for the
duration of a gradient step.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOrderError
from .numkit import as_matrix, check_finite

LN2 = float(np.log(2.0))
SIGMA_FLOOR = 1e-6


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    """Exactly symmetric matrix of squared Euclidean distances."""
    p = as_matrix(points, "points")
    sq = np.sum(p * p, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p @ p.T)
    d2 = np.maximum(d2, 0.0)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return d2


def select_sigma(points: np.ndarray) -> float:
    """Median pairwise distance, floored at 1e-6.

    Warns when every pairwise distance is zero (all points identical),
    in which case the floor value is returned.
    """
    p = as_matrix(points, "points")
    n = p.shape[0]
    if n < 2:
        raise InvalidArgumentError("need at least 2 points to select a bandwidth")
    d2 = pairwise_sq_dists(p)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    if med <= 0.0:
        warnings.warn("all points identical; falling back to bandwidth floor")
    return max(med, SIGMA_FLOOR)


def gram(points: np.ndarray, sigma: float) -> np.ndarray:
    """Trace-normalized Gaussian Gram matrix.

    K_ij = exp(-||p_i - p_j||^2 / (2 sigma^2)); returned as K / trace(K),
    so the diagonal is exactly 1/n and the trace exactly 1.
    """
    p = as_matrix(points, "points")
    n = p.shape[0]
    if n < 2:
        raise InvalidArgumentError("Gram matrix needs at least 2 points")
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    k = _kernel(p, sigma)
    return k / n


def _kernel(p: np.ndarray, sigma: float) -> np.ndarray:
    k = np.exp(-pairwise_sq_dists(p) / (2.0 * sigma * sigma))
    np.fill_diagonal(k, 1.0)
    return k


def _check_normalized(a: np.ndarray, name: str) -> np.ndarray:
    a = as_matrix(a, name)
    n = a.shape[0]
    if a.shape[1] != n:
        raise InvalidArgumentError(f"{name} must be square, got {a.shape}")
    if abs(float(np.trace(a)) - 1.0) > 1e-8:
        raise InvalidArgumentError(f"{name} is not trace-normalized")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
        raise InvalidArgumentError(f"{name} is not symmetric")
    return a


def entropy(a: np.ndarray, alpha: float = 2.0) -> float:
    """Entropy in bits of a normalized Gram matrix.

    Order 2 uses the trace formula -log2 trace(A @ A); other orders fall
    back to the eigenvalue sum.
    """
    a = _check_normalized(a, "gram matrix")
    if alpha <= 0 or alpha == 1.0:
        raise InvalidArgumentError("alpha must be positive and != 1")
    if alpha == 2.0:
        return float(-np.log2(np.einsum("ij,ji->", a, a)))
    lam = np.linalg.eigvalsh(a)
    lam = np.clip(lam, 0.0, None)
    return float(np.log2(np.sum(lam**alpha)) / (1.0 - alpha))


def joint_entropy(a: np.ndarray, b: np.ndarray, alpha: float = 2.0) -> float:
    """Entropy of the renormalized Hadamard product of two Gram matrices."""
    a = _check_normalized(a, "first gram matrix")
    b = _check_normalized(b, "second gram matrix")
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"gram size mismatch: {a.shape} vs {b.shape}"
        )
    had = a * b
    return entropy(had / np.trace(had), alpha)


def mutual_information(
    x_points: np.ndarray,
    t_points: np.ndarray,
    sigma_x: float,
    sigma_t: float,
    alpha: float = 2.0,
    clamp: bool = True,
) -> float:
    """Sample-based mutual information estimate in bits.

    Order-2 entropy is not subadditive, so on weakly dependent data the
    raw estimate can come out slightly negative; by default the reported
    value is clamped at 0. Pass clamp=False for the raw value (the
    gradient path always uses the raw value).
    """
    x = as_matrix(x_points, "x_points")
    t = as_matrix(t_points, "t_points")
    if x.shape[0] != t.shape[0]:
        raise InvalidArgumentError(
            f"row-count mismatch: {x.shape[0]} vs {t.shape[0]}"
        )
    a, b = gram(x, sigma_x), gram(t, sigma_t)
    value = entropy(a, alpha) + entropy(b, alpha) - joint_entropy(a, b, alpha)
    return max(0.0, value) if clamp else value


def mi_gradient(
    x_points: np.ndarray,
    t_points: np.ndarray,
    sigma_x: float,
    sigma_t: float,
    alpha: float = 2.0,
) -> tuple[float, np.ndarray]:
    """Unclamped MI value and its exact gradient w.r.t. every t entry.

    Only order 2 is supported: there the three entropies are plain log2
    traces and the chain through kernel and normalization is closed-form.
    """
    if alpha != 2.0:
        raise UnsupportedOrderError(
            f"analytic MI gradient requires alpha=2, got {alpha}"
        )
    x = as_matrix(x_points, "x_points")
    t = as_matrix(t_points, "t_points")
    if x.shape[0] != t.shape[0]:
        raise InvalidArgumentError(
            f"row-count mismatch: {x.shape[0]} vs {t.shape[0]}"
        )
    n = t.shape[0]
    a = gram(x, sigma_x)
    k_t = _kernel(t, sigma_t)
    b = k_t / n

    s_a = float(np.sum(a * a))  # trace(A^2), A symmetric
    s_b = float(np.sum(b * b))
    s_ab = float(np.sum((a * b) ** 2))  # trace(J^2) / n^2 for J = n(A o B)
    value = -np.log2(s_a) - np.log2(s_b) + np.log2(n * n * s_ab)

    # dMI/dB: -2B/(S_B ln2) from H(B), +2(A o A o B)/(S_AB ln2) from -H(X,T).
    g = (-2.0 * b / s_b + 2.0 * (a * a * b) / s_ab) / LN2
    # Chain through B = K/n and K_ij = exp(-||t_i - t_j||^2 / (2 sigma^2)).
    m = g * k_t
    grad = (-2.0 / (n * sigma_t * sigma_t)) * (m.sum(axis=1)[:, None] * t - m @ t)
    return float(value), check_finite(grad, "MI gradient")
