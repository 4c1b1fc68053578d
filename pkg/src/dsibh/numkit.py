"""Dense-matrix building blocks used by every numeric module.

Matrices are plain 2-D float64 numpy arrays. numpy carries the heavy
lifting; this module adds the shape/finiteness contracts the rest of
the package relies on, plus the central-difference gradient checker
that validates every hand-derived gradient in the repo.

All public operations reject non-finite results, so callers can assume
NaN/Inf never propagate silently.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DomainError, InvalidArgumentError, NumericError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a C-contiguous 2-D float64 array and verify finiteness."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got ndim={out.ndim}")
    check_finite(out, name)
    return out


def check_finite(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.isfinite(a).all():
        raise NumericError(f"{name} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product accumulated in fixed inner-index order.

    Each output entry sums a[i,k]*b[k,j] in ascending k, so the result
    is bit-identical to a naive triple loop and immune to BLAS
    reassociation or thread-count effects.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return check_finite(out, "matmul result")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) computed as max(x, 0) + log1p(e^-|x|) to avoid overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


_UNARY: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "exp": np.exp,
    "log": np.log,
}

_BINARY: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op: str, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Apply a tagged pointwise function.

    Tags: add | sub | mul (Hadamard) with two operands of equal shape;
    sigmoid | tanh | relu | exp | log with one operand.
    """
    a = as_matrix(a, "a")
    if op in _BINARY:
        if b is None:
            raise InvalidArgumentError(f"elementwise '{op}' needs two operands")
        b = as_matrix(b, "b")
        if a.shape != b.shape:
            raise InvalidArgumentError(
                f"elementwise '{op}' shape mismatch: {a.shape} vs {b.shape}"
            )
        return check_finite(_BINARY[op](a, b), f"elementwise {op} result")
    if op in _UNARY:
        if b is not None:
            raise InvalidArgumentError(f"elementwise '{op}' takes one operand")
        if op == "log" and np.any(a <= 0.0):
            raise DomainError("log of non-positive entry")
        return check_finite(_UNARY[op](a), f"elementwise {op} result")
    raise InvalidArgumentError(f"unknown elementwise op '{op}'")


def grad_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    h: float = 1e-4,
) -> float:
    """Compare an analytic gradient against central finite differences.

    `f(x)` must return `(value, gradient)` with the gradient shaped like
    `x`. Returns the maximum over entries of
    |analytic - central_difference| / max(1, |central_difference|).
    """
    if h <= 0:
        raise InvalidArgumentError("step h must be positive")
    x = as_matrix(x, "x")
    _, analytic = f(x)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise InvalidArgumentError(
            f"gradient shape {analytic.shape} does not match input {x.shape}"
        )
    worst = 0.0
    flat = x.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = float(f(x)[0])
        flat[k] = orig - h
        f_minus = float(f(x)[0])
        flat[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("non-finite function value during grad_check")
        fd = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic.ravel()[k] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
