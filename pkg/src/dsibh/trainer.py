"""Alternating three-network training loop.

Each outer round runs the label encoder, then the image encoder, then
the text encoder. Label-encoder steps regress relaxed outputs toward
the current pair-level binary codes under the pairwise likelihood loss
and rebinarize those codes after every parameter update. Modality steps
minimize weighted cross entropy against the class-code table plus the
compression and consistency terms.
"""

from __future__ import annotations

import dataclasses
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import dataio, hamming, losses, nets
from .errors import InvalidArgumentError, NumericError, UnsupportedOrderError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CHECKPOINT_EVERY = 5


@dataclass(frozen=True)
class TrainConfig:
    code_bits: int = 16
    alpha: float = 2.0
    beta: float = 0.1
    gamma: float = 1.0
    eta: float = 1.0
    batch_size: int = 128
    lr_lab: float = 1e-3
    lr_img: float = 10.0**-4.5
    lr_txt: float = 10.0**-3.5
    iters_lab: int | None = None  # None = one epoch
    iters_img: int | None = None
    iters_txt: int | None = None
    outer_rounds: int = 50
    convergence_tol: float = 1e-4
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.code_bits < 8:
            raise InvalidArgumentError("code_bits must be >= 8")
        if self.batch_size < 2:
            raise InvalidArgumentError("batch_size must be >= 2")
        for name in ("lr_lab", "lr_img", "lr_txt"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.beta < 0 or self.gamma < 0 or self.eta < 0:
            raise InvalidArgumentError("beta, gamma, eta must be >= 0")
        if self.beta > 0 and self.alpha != 2.0:
            raise UnsupportedOrderError(
                "gradient-based training supports only entropy order alpha=2"
            )
        for name in ("iters_lab", "iters_img", "iters_txt"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.outer_rounds < 0:
            raise InvalidArgumentError("outer_rounds must be >= 0")
        if self.convergence_tol < 0:
            raise InvalidArgumentError("convergence_tol must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidArgumentError("optimizer must be 'adam' or 'sgd'")

    @property
    def weights(self) -> losses.LossWeights:
        return losses.LossWeights(self.beta, self.gamma, self.eta)


@dataclass(frozen=True)
class NetShapes:
    hidden_lab: tuple[int, ...] = (256,)
    hidden_img: tuple[int, ...] = (256,)
    hidden_txt: tuple[int, ...] = (256,)
    init_scale: float = 1.0


@dataclass
class TrainState:
    labnet: nets.MlpParams
    imgnet: nets.MlpParams
    txtnet: nets.MlpParams
    gy: np.ndarray  # [n_train, c] entries in {-1, +1}
    table: losses.ClassCodeTable
    rounds_run: int = 0
    loss_history: dict = field(default_factory=lambda: {"lab": [], "img": [], "txt": []})
    converged: bool = False


class AdamState:
    """First/second moment accumulators matching one network's layers."""

    def __init__(self, params: nets.MlpParams):
        self.m = nets.zero_grads(params)
        self.v = nets.zero_grads(params)
        self.t = 0


def adam_step(
    params: nets.MlpParams,
    grads: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
    state: AdamState,
) -> nets.MlpParams:
    """One bias-corrected Adam update; mutates the moment state."""
    if len(grads) != len(params.layers):
        raise InvalidArgumentError(
            f"{len(grads)} gradient pairs for {len(params.layers)} layers"
        )
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1**state.t
    bc2 = 1.0 - ADAM_BETA2**state.t
    new_layers = []
    for layer, (dw, db), (mw, mb), (vw, vb) in zip(
        params.layers, grads, state.m, state.v
    ):
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise InvalidArgumentError(
                f"gradient shape {dw.shape}/{db.shape} does not match layer "
                f"{layer.weight.shape}/{layer.bias.shape}"
            )
        mw *= ADAM_BETA1
        mw += (1.0 - ADAM_BETA1) * dw
        mb *= ADAM_BETA1
        mb += (1.0 - ADAM_BETA1) * db
        vw *= ADAM_BETA2
        vw += (1.0 - ADAM_BETA2) * dw * dw
        vb *= ADAM_BETA2
        vb += (1.0 - ADAM_BETA2) * db * db
        weight = layer.weight - lr * (mw / bc1) / (np.sqrt(vw / bc2) + ADAM_EPS)
        bias = layer.bias - lr * (mb / bc1) / (np.sqrt(vb / bc2) + ADAM_EPS)
        new_layers.append(nets.Layer(weight, bias, layer.activation))
    return nets.MlpParams(new_layers)


def sgd_step(
    params: nets.MlpParams,
    grads: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
) -> nets.MlpParams:
    if len(grads) != len(params.layers):
        raise InvalidArgumentError(
            f"{len(grads)} gradient pairs for {len(params.layers)} layers"
        )
    new_layers = []
    for layer, (dw, db) in zip(params.layers, grads):
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise InvalidArgumentError(
                f"gradient shape {dw.shape}/{db.shape} does not match layer "
                f"{layer.weight.shape}/{layer.bias.shape}"
            )
        new_layers.append(
            nets.Layer(layer.weight - lr * dw, layer.bias - lr * db, layer.activation)
        )
    return nets.MlpParams(new_layers)


def refresh_label_codes(labnet: nets.MlpParams, y: np.ndarray) -> np.ndarray:
    """Rebinarize every label row through the label encoder, sign(0)=+1."""
    return losses.sign_pm1(nets.forward(labnet, np.asarray(y, dtype=np.float64)))


def _epoch_steps(n: int, batch_size: int) -> int:
    # size-1 tail batches are dropped: Gram matrices need >= 2 points
    full, rem = divmod(n, batch_size)
    return full + (1 if rem >= 2 else 0)


def _batch_plan(
    rng: np.random.Generator, n: int, batch_size: int, steps: int
) -> list[np.ndarray]:
    plan: list[np.ndarray] = []
    while len(plan) < steps:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            if idx.size >= 2:
                plan.append(idx)
    return plan[:steps]


def _mean_or_zero(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _check_finite(loss: float) -> float:
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss!r}")
    return float(loss)


@contextmanager
def _phase_guard(phase: str, round_no: int, step_no: int):
    # annotate any numeric blow-up with where training stood
    try:
        yield
    except NumericError as exc:
        raise NumericError(
            f"{phase} diverged at round {round_no}, step {step_no}: {exc}; "
            "training aborted"
        ) from exc


def train(
    bundle: dataio.DatasetBundle,
    config: TrainConfig,
    shapes: NetShapes | None = None,
    checkpoint_dir=None,
) -> TrainState:
    """Run the alternating optimization on the bundle's training rows
    (all rows when no training tags are set). Fully determined by the
    bundle contents and the config."""
    shapes = shapes or NetShapes()
    train_idx = bundle.train_indices
    if train_idx.size == 0:
        train_idx = np.arange(bundle.n)
    x1 = bundle.x1[train_idx]
    x2 = bundle.x2[train_idx]
    y = bundle.y[train_idx]
    y_float = y.astype(np.float64)
    n = train_idx.size
    if n < 2:
        raise InvalidArgumentError(f"training needs at least 2 rows, got {n}")
    batch_size = min(config.batch_size, n)

    seeds = np.random.SeedSequence(config.seed).spawn(5)
    init_seed = [int(s.generate_state(1)[0]) for s in seeds[:3]]
    rng_shuffle = np.random.default_rng(seeds[3])
    rng_gy = np.random.default_rng(seeds[4])

    def make_net(input_dim, hidden, seed):
        spec = nets.NetSpec(
            input_dim=input_dim,
            hidden_dims=tuple(hidden),
            code_bits=config.code_bits,
            init_seed=seed,
            init_scale=shapes.init_scale,
        )
        return nets.init(spec)

    labnet = make_net(y.shape[1], shapes.hidden_lab, init_seed[0])
    imgnet = make_net(x1.shape[1], shapes.hidden_img, init_seed[1])
    txtnet = make_net(x2.shape[1], shapes.hidden_txt, init_seed[2])
    gy = rng_gy.integers(0, 2, size=(n, config.code_bits)).astype(np.float64) * 2.0 - 1.0

    state = TrainState(
        labnet=labnet,
        imgnet=imgnet,
        txtnet=txtnet,
        gy=gy,
        table=losses.class_table_build(y, labnet),
    )

    steps_lab = config.iters_lab if config.iters_lab is not None else _epoch_steps(n, batch_size)
    steps_img = config.iters_img if config.iters_img is not None else _epoch_steps(n, batch_size)
    steps_txt = config.iters_txt if config.iters_txt is not None else _epoch_steps(n, batch_size)

    use_adam = config.optimizer == "adam"
    opt_lab = AdamState(labnet) if use_adam else None
    opt_img = AdamState(imgnet) if use_adam else None
    opt_txt = AdamState(txtnet) if use_adam else None

    def step(params, grads, lr, opt):
        if use_adam:
            return adam_step(params, grads, lr, opt)
        return sgd_step(params, grads, lr)

    weights = config.weights
    prev_total = None
    for round_no in range(1, config.outer_rounds + 1):
        lab_losses = []
        for t, idx in enumerate(_batch_plan(rng_shuffle, n, batch_size, steps_lab), 1):
            with _phase_guard("labNet", round_no, t):
                yb = y_float[idx]
                s = losses.similarity_from_labels(y[idx])
                outputs = nets.forward(state.labnet, yb)
                loss, grad_out = losses.labnet_loss(
                    outputs, state.gy[idx], s, config.eta
                )
                lab_losses.append(_check_finite(loss))
                grads = nets.backward(state.labnet, yb, grad_out)
                state.labnet = step(state.labnet, grads, config.lr_lab, opt_lab)
                state.gy = refresh_label_codes(state.labnet, y_float)

        state.table = losses.class_table_build(y, state.labnet)
        class_idx = losses.class_indices(y, state.table)

        def modality_phase(params, x, lr, opt, steps, phase):
            phase_losses = []
            for t, idx in enumerate(_batch_plan(rng_shuffle, n, batch_size, steps), 1):
                with _phase_guard(phase, round_no, t):
                    batch = losses.ModalityBatch(x[idx], state.gy[idx], class_idx[idx])
                    loss, grads = losses.modality_loss(
                        batch, params, state.table, weights
                    )
                    phase_losses.append(_check_finite(loss))
                    params = step(params, grads, lr, opt)
            return params, phase_losses

        state.imgnet, img_losses = modality_phase(
            state.imgnet, x1, config.lr_img, opt_img, steps_img, "imgNet"
        )
        state.txtnet, txt_losses = modality_phase(
            state.txtnet, x2, config.lr_txt, opt_txt, steps_txt, "txtNet"
        )

        state.loss_history["lab"].append(_mean_or_zero(lab_losses))
        state.loss_history["img"].append(_mean_or_zero(img_losses))
        state.loss_history["txt"].append(_mean_or_zero(txt_losses))
        state.rounds_run = round_no

        if checkpoint_dir is not None and round_no % CHECKPOINT_EVERY == 0:
            _write_checkpoint(checkpoint_dir, round_no, state, config, y, train_idx)

        total = sum(h[-1] for h in state.loss_history.values())
        if prev_total is not None:
            improvement = (prev_total - total) / max(1.0, abs(prev_total))
            if improvement < config.convergence_tol:
                state.converged = True
                break
        prev_total = total
    return state


def _write_checkpoint(checkpoint_dir, round_no, state, config, y, train_idx) -> None:
    out = os.path.join(os.fspath(checkpoint_dir), f"round{round_no:03d}")
    os.makedirs(out, exist_ok=True)
    nets.save_model(state.labnet, os.path.join(out, "labnet.dsibm"))
    nets.save_model(state.imgnet, os.path.join(out, "imgnet.dsibm"))
    nets.save_model(state.txtnet, os.path.join(out, "txtnet.dsibm"))
    gy_db = hamming.build_db(state.gy, labels=y, ids=train_idx.astype(np.uint64))
    hamming.save_db(os.path.join(out, "gy.dsibc"), gy_db)
    echo = dataclasses.asdict(config)
    echo["round"] = round_no
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(json.dumps(echo, sort_keys=True, indent=2) + "\n")
