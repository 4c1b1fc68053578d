"""Objective terms for the three encoders, each returning its scalar
value together with an analytic gradient.

Label-encoder loss: negative log-likelihood of pairwise semantic
similarity under a sigmoid of code inner products, plus a quantization
penalty pulling relaxed outputs toward their binarized codes.

Modality-encoder loss: class-weighted softmax cross-entropy against the
label-derived class codes, plus a mutual-information compression term
against the raw input features, plus an l2 consistency term tying each
sample's code to its pair-level binary code. The class codes are
constants here; they only receive gradient during the label phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets, renyi
from .errors import InvalidArgumentError
from .numkit import as_matrix, check_finite, sigmoid, softplus


@dataclass(frozen=True)
class LossWeights:
    beta: float = 0.1  # mutual-information compression weight
    gamma: float = 1.0  # cross-modal consistency weight
    eta: float = 1.0  # quantization weight in the label loss

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0 or self.eta < 0:
            raise InvalidArgumentError("loss weights must be >= 0")


def sign_pm1(x: np.ndarray) -> np.ndarray:
    """Binarize to {-1, +1}; zero maps to +1."""
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def validate_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2:
        raise InvalidArgumentError("label matrix must be 2-D")
    if not np.isin(y, (0, 1)).all():
        raise InvalidArgumentError("labels must be binary 0/1")
    if np.any(y.sum(axis=1) == 0):
        raise InvalidArgumentError("every label row needs at least one set bit")
    return y.astype(np.uint8)


def similarity_from_labels(y: np.ndarray) -> np.ndarray:
    """S_ij = 1 iff rows i and j share at least one category label."""
    y = validate_labels(y).astype(np.float64)
    return (y @ y.T > 0.0).astype(np.float64)


def labnet_loss(
    outputs: np.ndarray,
    binary_codes: np.ndarray,
    s: np.ndarray,
    eta: float,
) -> tuple[float, np.ndarray]:
    """Pairwise likelihood loss plus quantization penalty.

    With U the relaxed outputs and D = U U^T the pairwise inner products,
    the value is -sum_{l,j} (S_lj D_lj - log(1 + e^{D_lj}))
    + eta * sum_l ||g_l - u_l||^2 over all ordered pairs, diagonal
    included. Returns (value, gradient w.r.t. outputs).
    """
    u = as_matrix(outputs, "outputs")
    g = as_matrix(binary_codes, "binary_codes")
    s = as_matrix(s, "similarity")
    n = u.shape[0]
    if g.shape != u.shape:
        raise InvalidArgumentError(
            f"binary codes shape {g.shape} != outputs shape {u.shape}"
        )
    if s.shape != (n, n):
        raise InvalidArgumentError(f"similarity must be {n}x{n}, got {s.shape}")
    delta = u @ u.T
    pair_term = -np.sum(s * delta - softplus(delta))
    resid = u - g
    quant_term = eta * np.sum(resid * resid)
    # d/dD of the pair term is sigmoid(D) - S; chain through D = U U^T.
    p = sigmoid(delta) - s
    grad = (p + p.T) @ u + 2.0 * eta * resid
    return float(pair_term + quant_term), check_finite(grad, "labnet gradient")


@dataclass(frozen=True)
class ClassCodeTable:
    """Distinct label rows (first-occurrence order) and their binary codes."""

    labels: np.ndarray  # [n_classes, label_dim] uint8
    codes: np.ndarray  # [n_classes, code_bits] in {-1, +1}

    @property
    def class_count(self) -> int:
        return self.labels.shape[0]


def class_table_build(y: np.ndarray, labnet: nets.MlpParams) -> ClassCodeTable:
    """Deduplicate label rows and binarize the label encoder's output for
    each distinct row."""
    y = validate_labels(y)
    seen: dict[bytes, int] = {}
    order = []
    for row in y:
        key = row.tobytes()
        if key not in seen:
            seen[key] = len(order)
            order.append(row)
    uniq = np.array(order, dtype=np.uint8)
    codes = sign_pm1(nets.forward(labnet, uniq.astype(np.float64)))
    return ClassCodeTable(uniq, codes)


def class_indices(y: np.ndarray, table: ClassCodeTable) -> np.ndarray:
    """Map each label row to its class id in the table."""
    y = validate_labels(y)
    lookup = {row.tobytes(): i for i, row in enumerate(table.labels)}
    try:
        return np.array([lookup[row.tobytes()] for row in y], dtype=np.int64)
    except KeyError:
        raise InvalidArgumentError("label row not present in class table") from None


def weighted_ce_loss(
    codes_m: np.ndarray,
    sample_class_index: np.ndarray,
    table: ClassCodeTable,
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of code/class-code inner products.

    Logits are Z = codes @ class_codes^T; the loss is the mean negative
    log-probability of each sample's own class, stabilized by row-max
    subtraction. Returns (value, gradient w.r.t. codes_m).
    """
    g = as_matrix(codes_m, "codes")
    idx = np.asarray(sample_class_index, dtype=np.int64)
    n = g.shape[0]
    if idx.shape != (n,):
        raise InvalidArgumentError("one class index per code row required")
    if idx.size and (idx.min() < 0 or idx.max() >= table.class_count):
        raise InvalidArgumentError("class index out of range")
    z = g @ table.codes.T  # [n, n_classes]
    z_shift = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(z_shift), axis=1))
    log_prob = z_shift - log_norm[:, None]
    loss = -float(np.mean(log_prob[np.arange(n), idx]))
    a = np.exp(log_prob)
    a[np.arange(n), idx] -= 1.0
    grad = (a / n) @ table.codes
    return loss, check_finite(grad, "cross-entropy gradient")


def consistency_loss(
    codes_m: np.ndarray, codes_y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Summed squared l2 gap to the pair-level binary codes."""
    g = as_matrix(codes_m, "codes")
    gy = as_matrix(codes_y, "pair codes")
    if g.shape != gy.shape:
        raise InvalidArgumentError(
            f"shape mismatch: {g.shape} vs {gy.shape}"
        )
    diff = g - gy
    return float(np.sum(diff * diff)), 2.0 * diff


@dataclass(frozen=True)
class ModalityBatch:
    """One minibatch for a modality encoder: raw features, the matching
    rows of the pair-level binary codes, and each row's class id."""

    features: np.ndarray
    pair_codes: np.ndarray
    class_idx: np.ndarray


def modality_loss(
    batch: ModalityBatch,
    params_m: nets.MlpParams,
    table: ClassCodeTable,
    weights: LossWeights,
    sigma_features: float | None = None,
    sigma_codes: float | None = None,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Combined modality objective and its gradient on the net parameters.

    value = cross-entropy + beta * MI(features; relaxed codes)
    + gamma * consistency. Bandwidths default to the batch median
    heuristic and are then held fixed, so the returned gradient is exact
    for the fixed-bandwidth objective.
    """
    x = as_matrix(batch.features, "features")
    codes = nets.forward(params_m, x)
    ce, d_ce = weighted_ce_loss(codes, batch.class_idx, table)
    d_out = d_ce
    total = ce
    if weights.beta != 0.0:
        sx = renyi.select_sigma(x) if sigma_features is None else sigma_features
        st = renyi.select_sigma(codes) if sigma_codes is None else sigma_codes
        mi, d_mi = renyi.mi_gradient(x, codes, sx, st)
        total += weights.beta * mi
        d_out = d_out + weights.beta * d_mi
    if weights.gamma != 0.0:
        cons, d_cons = consistency_loss(codes, batch.pair_codes)
        total += weights.gamma * cons
        d_out = d_out + weights.gamma * d_cons
    return float(total), nets.backward(params_m, x, d_out)
