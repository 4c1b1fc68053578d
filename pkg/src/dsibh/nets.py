"""Encoder networks: configurable MLPs with ReLU hidden layers and a
tanh output layer, so every relaxed code lands strictly inside (-1, 1).

Forward and backward passes are hand-written numpy; gradients are exact
for the relu/tanh/affine chain and validated against finite differences
in the test suite. The same MLP class serves all three encoders (label,
image-modality, text-modality).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .numkit import as_matrix, check_finite

RELU, TANH = "relu", "tanh"
_ACT_TAGS = {RELU: 0, TANH: 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}

MODEL_MAGIC = b"DSIBM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class NetSpec:
    """Shape and initialization recipe for one encoder."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    code_bits: int
    init_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.input_dim < 1:
            raise InvalidArgumentError("input_dim must be >= 1")
        if not self.hidden_dims:
            raise InvalidArgumentError("hidden_dims must be non-empty")
        if any(h < 1 for h in self.hidden_dims):
            raise InvalidArgumentError("hidden layer widths must be >= 1")
        if self.code_bits < 1:
            raise InvalidArgumentError("code_bits must be >= 1")
        if self.init_scale < 0:
            raise InvalidArgumentError("init_scale must be >= 0")


@dataclass
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str

    def __post_init__(self):
        if self.activation not in _ACT_TAGS:
            raise InvalidArgumentError(f"unknown activation '{self.activation}'")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise InvalidArgumentError("layer weight/bias shapes inconsistent")


@dataclass
class MlpParams:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise InvalidArgumentError("MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise InvalidArgumentError("adjacent layer dimensions do not chain")
        if self.layers[-1].activation != TANH:
            raise InvalidArgumentError("final layer activation must be tanh")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def code_bits(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def init(spec: NetSpec) -> MlpParams:
    """Seeded init: weights uniform in +-init_scale/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(spec.init_seed)
    dims = (spec.input_dim, *spec.hidden_dims, spec.code_bits)
    layers = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = spec.init_scale / np.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = TANH if k == len(dims) - 2 else RELU
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return MlpParams(layers)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; rows map to rows."""
    out, _ = _forward_cached(params, x)
    return out


def _forward_cached(params: MlpParams, x: np.ndarray):
    a = as_matrix(x, "input")
    if a.shape[1] != params.input_dim:
        raise InvalidArgumentError(
            f"input has {a.shape[1]} columns, net expects {params.input_dim}"
        )
    caches = []  # (layer input, pre-activation output)
    for layer in params.layers:
        z = a @ layer.weight.T + layer.bias
        caches.append((a, z))
        a = _activate(z, layer.activation)
    return check_finite(a, "forward output"), caches


def backward(
    params: MlpParams, x: np.ndarray, upstream: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of sum(upstream * output) w.r.t. every weight and bias.

    Returns one (d_weight, d_bias) pair per layer, in layer order.
    """
    out, caches = _forward_cached(params, x)
    upstream = as_matrix(upstream, "upstream")
    if upstream.shape != out.shape:
        raise InvalidArgumentError(
            f"upstream shape {upstream.shape} does not match output {out.shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    delta = upstream
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        a_in, z = caches[k]
        if layer.activation == TANH:
            act = np.tanh(z)
            dz = delta * (1.0 - act * act)
        else:
            dz = delta * (z > 0.0)
        grads[k] = (dz.T @ a_in, dz.sum(axis=0))
        if k > 0:
            delta = dz @ layer.weight
    return grads


def zero_grads(params: MlpParams) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers]


def flatten_params(params_or_grads) -> np.ndarray:
    """Concatenate all weights then biases, layer by layer, into one vector."""
    if isinstance(params_or_grads, MlpParams):
        pairs = [(l.weight, l.bias) for l in params_or_grads.layers]
    else:
        pairs = list(params_or_grads)
    return np.concatenate([np.concatenate((w.ravel(), b.ravel())) for w, b in pairs])


def unflatten_like(template: MlpParams, vec: np.ndarray) -> MlpParams:
    """Rebuild an MlpParams with the template's shapes from a flat vector."""
    vec = np.asarray(vec, dtype=np.float64).ravel()
    need = sum(l.weight.size + l.bias.size for l in template.layers)
    if vec.size != need:
        raise InvalidArgumentError(
            f"vector length {vec.size} does not match template ({need} entries)"
        )
    layers, pos = [], 0
    for l in template.layers:
        nw, nb = l.weight.size, l.bias.size
        w = vec[pos : pos + nw].reshape(l.weight.shape)
        pos += nw
        b = vec[pos : pos + nb].copy()
        pos += nb
        layers.append(Layer(w.copy(), b, l.activation))
    return MlpParams(layers)


def save_model(params: MlpParams, path) -> None:
    """Write the model file: magic, version u16, layer count u16, then per
    layer (u32 out, u32 in, activation tag u8, f64 weights row-major,
    f64 biases), all little-endian."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HH", MODEL_VERSION, len(params.layers)))
        for layer in params.layers:
            out_dim, in_dim = layer.weight.shape
            fh.write(struct.pack("<IIB", out_dim, in_dim, _ACT_TAGS[layer.activation]))
            fh.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_model(path) -> MlpParams:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MODEL_MAGIC!r}")
    pos = len(MODEL_MAGIC)
    if len(buf) < pos + 4:
        raise FormatError(f"{path}: truncated header, {len(buf)} bytes")
    version, n_layers = struct.unpack_from("<HH", buf, pos)
    pos += 4
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    layers = []
    for k in range(n_layers):
        if len(buf) < pos + 9:
            raise FormatError(
                f"{path}: truncated at layer {k} header (byte {pos}, have {len(buf)})"
            )
        out_dim, in_dim, tag = struct.unpack_from("<IIB", buf, pos)
        pos += 9
        if tag not in _TAG_ACTS:
            raise FormatError(f"{path}: unknown activation tag {tag} at byte {pos - 1}")
        need = (out_dim * in_dim + out_dim) * 8
        if len(buf) < pos + need:
            raise FormatError(
                f"{path}: truncated layer {k} data, expected {pos + need} bytes, "
                f"got {len(buf)}"
            )
        w = np.frombuffer(buf, dtype="<f8", count=out_dim * in_dim, offset=pos)
        pos += out_dim * in_dim * 8
        b = np.frombuffer(buf, dtype="<f8", count=out_dim, offset=pos)
        pos += out_dim * 8
        layers.append(
            Layer(
                w.reshape(out_dim, in_dim).astype(np.float64),
                b.astype(np.float64),
                _TAG_ACTS[tag],
            )
        )
    if pos != len(buf):
        raise FormatError(
            f"{path}: {len(buf) - pos} trailing bytes after layer data (byte {pos})"
        )
    return MlpParams(layers)
