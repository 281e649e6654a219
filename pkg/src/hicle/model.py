"""MLP encoder + projection head with exact manual backpropagation.

The encoder stacks ReLU layers; the projection head ends in a linear
layer whose output rows are L2-normalized onto the unit sphere. Training
is SGD with classical momentum and a step learning-rate schedule. All
parameters are float64 and every run is bit-deterministic per seed.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io, rng
from .data import Dataset, augment
from .errors import ConfigError, NumericError, StructuralError
from .hierarchy import HierarchyTree, LabelPath
from .losses import LossConfig, hicone, himulcon, himulcone, simclr, supcon
from .sampling import SamplerConfig, plan_epoch

Layer = tuple[np.ndarray, np.ndarray]  # (weights in x out, bias)


@dataclass
class EncoderModel:
    encoder_layers: list[Layer]
    projection_layers: list[Layer]

    def all_parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in self.encoder_layers + self.projection_layers:
            out.extend((w, b))
        return out

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            [(w.copy(), b.copy()) for w, b in self.encoder_layers],
            [(w.copy(), b.copy()) for w, b in self.projection_layers],
        )


@dataclass
class OptimizerState:
    momentum: float
    buffers: list[np.ndarray]
    epoch: int = 0
    base_lr: float = 0.1


@dataclass
class TrainConfig:
    loss_kind: str = "himulcone"
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(
        default_factory=lambda: SamplerConfig(batch_size=64)
    )
    epochs: int = 50
    base_lr: float = 0.1
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 40
    momentum: float = 0.9
    seed: int = 0
    aug_sigma: float = 0.2
    encoder_dims: tuple[int, ...] = (64, 64)
    projection_dims: tuple[int, ...] = (16,)
    supcon_level: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.loss_kind not in ("himulcon", "hicone", "himulcone", "supcon", "simclr"):
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")


def init_model(
    input_dim: int,
    encoder_dims: Sequence[int],
    projection_dims: Sequence[int],
    seed: int,
) -> EncoderModel:
    """Seeded uniform fan-in init (bound sqrt(6/fan_in)), zero biases."""
    dims = [input_dim, *encoder_dims, *projection_dims]
    if any(d < 1 for d in dims):
        raise ConfigError("all layer dimensions must be positive")
    gen = rng.stream(seed, "model-init")
    layers: list[Layer] = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        w = gen.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    n_enc = len(encoder_dims)
    return EncoderModel(
        encoder_layers=layers[:n_enc], projection_layers=layers[n_enc:]
    )


def normalize_rows(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < 1e-30):
        raise NumericError("zero-norm projection input (collapsed activations)")
    return z / norms[:, None], norms


def normalize_backward(
    z: np.ndarray, unit: np.ndarray, norms: np.ndarray, grad_unit: np.ndarray
) -> np.ndarray:
    """Jacobian of row normalization: (I - u u^T)/||z|| applied to the gradient."""
    inner = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - inner * unit) / norms[:, None]


def forward(model: EncoderModel, x: np.ndarray):
    """Returns (encoder_features, unit_projections, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite model input")
    activations = [x]
    h = x
    for w, b in model.encoder_layers:
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    encoder_features = h
    proj_acts = [h]
    p = h
    for k, (w, b) in enumerate(model.projection_layers):
        p = p @ w + b
        if k < len(model.projection_layers) - 1:
            p = np.maximum(p, 0.0)
        proj_acts.append(p)
    unit, norms = normalize_rows(p)
    cache = {
        "activations": activations,
        "proj_acts": proj_acts,
        "pre_norm": p,
        "unit": unit,
        "norms": norms,
    }
    return encoder_features, unit, cache


def backward(model: EncoderModel, cache: dict, grad_wrt_projections: np.ndarray):
    """Exact parameter gradients for a matching forward pass.

    Returns (encoder_grads, projection_grads) mirroring the layer lists.
    """
    if grad_wrt_projections.shape != cache["unit"].shape:
        raise StructuralError("upstream gradient shape mismatch")
    g = normalize_backward(
        cache["pre_norm"], cache["unit"], cache["norms"], grad_wrt_projections
    )
    proj_grads: list[Layer] = [None] * len(model.projection_layers)
    for k in range(len(model.projection_layers) - 1, -1, -1):
        w, _ = model.projection_layers[k]
        if k < len(model.projection_layers) - 1:
            g = g * (cache["proj_acts"][k + 1] > 0)
        a_prev = cache["proj_acts"][k]
        proj_grads[k] = (a_prev.T @ g, g.sum(axis=0))
        g = g @ w.T
    enc_grads: list[Layer] = [None] * len(model.encoder_layers)
    for k in range(len(model.encoder_layers) - 1, -1, -1):
        w, _ = model.encoder_layers[k]
        g = g * (cache["activations"][k + 1] > 0)
        a_prev = cache["activations"][k]
        enc_grads[k] = (a_prev.T @ g, g.sum(axis=0))
        g = g @ w.T
    return enc_grads, proj_grads


def init_optimizer(model: EncoderModel, momentum: float, base_lr: float) -> OptimizerState:
    return OptimizerState(
        momentum=momentum,
        buffers=[np.zeros_like(p) for p in model.all_parameters()],
        base_lr=base_lr,
    )


def sgd_step(
    model: EncoderModel,
    grads: tuple[list[Layer], list[Layer]],
    state: OptimizerState,
    lr: float,
) -> None:
    """Classical momentum: v <- mu*v + g; w <- w - lr*v. In place."""
    flat_grads = []
    for gw, gb in grads[0] + grads[1]:
        flat_grads.extend((gw, gb))
    params = model.all_parameters()
    if len(flat_grads) != len(state.buffers):
        raise StructuralError("gradient/buffer count mismatch")
    for p, g, v in zip(params, flat_grads, state.buffers):
        if p.shape != g.shape:
            raise StructuralError("gradient shape mismatch")
        v *= state.momentum
        v += g
        p -= lr * v


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.base_lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def _batch_loss(proj, batch_paths, cfg: TrainConfig):
    if cfg.loss_kind == "himulcon":
        return himulcon(proj, batch_paths, cfg.loss)
    if cfg.loss_kind == "hicone":
        return hicone(proj, batch_paths, cfg.loss)
    if cfg.loss_kind == "himulcone":
        return himulcone(proj, batch_paths, cfg.loss)
    if cfg.loss_kind == "supcon":
        labels = [p.labels[: cfg.supcon_level + 1] for p in batch_paths]
        return supcon(proj, np.unique(labels, axis=0, return_inverse=True)[1],
                      cfg.loss.temperature)
    views = cfg.sampler.views_per_sample
    if views != 2:
        raise ConfigError("the augmentation-pair loss needs exactly 2 views")
    n = proj.shape[0]
    pairing = np.arange(n)
    pairing[0::2] += 1
    pairing[1::2] -= 1
    return simclr(proj, pairing, cfg.loss.temperature)


def train(
    dataset: Dataset,
    tree: HierarchyTree | None,
    cfg: TrainConfig,
    train_indices: np.ndarray | None = None,
):
    """Train the encoder; returns (model, per-epoch log).

    Each log entry records the epoch, mean per-sample loss, the mean
    training-time hierarchy-violation rate, and the learning rate.
    """
    if train_indices is None:
        train_indices = np.arange(len(dataset.paths), dtype=np.int64)
    sub_paths = [dataset.paths[i] for i in train_indices]
    sub_features = dataset.features[train_indices]
    views = cfg.sampler.views_per_sample

    model = init_model(
        dataset.features.shape[1], cfg.encoder_dims, cfg.projection_dims, cfg.seed
    )
    state = init_optimizer(model, cfg.momentum, cfg.base_lr)
    log = []
    for epoch in range(cfg.epochs):
        sampler_cfg = SamplerConfig(
            batch_size=cfg.sampler.batch_size,
            strategy=cfg.sampler.strategy,
            seed=rng.derive_seed(cfg.seed, f"epoch/{epoch}") ^ cfg.sampler.seed,
            views_per_sample=views,
        )
        plan = plan_epoch(sub_paths, tree, sampler_cfg)
        aug_gen = rng.stream(cfg.seed, f"augment/{epoch}")
        lr = lr_at_epoch(cfg, epoch)
        epoch_loss = 0.0
        epoch_rows = 0
        violation_rates = []
        for batch in plan.batches:
            rows = []
            batch_paths = []
            for local_idx in batch:
                base = sub_features[local_idx]
                path = sub_paths[local_idx]
                for _ in range(views):
                    rows.append(augment(base, cfg.aug_sigma, aug_gen))
                    batch_paths.append(
                        LabelPath(labels=path.labels, sample_id=path.sample_id)
                    )
            x = np.asarray(rows)
            _, proj, cache = forward(model, x)
            out = _batch_loss(proj, batch_paths, cfg)
            if not np.isfinite(out.total):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}"
                )
            grads = backward(model, cache, out.gradient)
            sgd_step(model, grads, state, lr)
            epoch_loss += out.total
            epoch_rows += x.shape[0]
            if out.violation_rate is not None:
                violation_rates.append(out.violation_rate)
        state.epoch = epoch
        log.append(
            {
                "epoch": epoch,
                "loss": epoch_loss / max(epoch_rows, 1),
                "violation_rate": (
                    float(np.mean(violation_rates)) if violation_rates else None
                ),
                "lr": lr,
            }
        )
    return model, log


def embed(model: EncoderModel, features: np.ndarray):
    """Frozen-model features: (encoder output, unit-norm projections)."""
    enc, proj, _ = forward(model, features)
    return enc, proj


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross entropy and gradient w.r.t. logits."""
    shift = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shift), axis=1))
    n = logits.shape[0]
    loss = float(np.mean(logz - shift[np.arange(n), labels]))
    probs = np.exp(shift - logz[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


def train_linear_probe(
    train_embeddings: np.ndarray,
    train_labels: np.ndarray,
    test_embeddings: np.ndarray,
    test_labels: np.ndarray,
    epochs: int = 100,
    base_lr: float = 0.5,
    momentum: float = 0.9,
    seed: int = 0,
):
    """Frozen-feature softmax classifier; returns ((W, b), held-out top-1)."""
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    classes = np.unique(train_labels)
    if len(classes) < 2:
        raise ConfigError("linear probe needs at least 2 classes")
    remap = {int(c): k for k, c in enumerate(classes)}
    y = np.asarray([remap[int(c)] for c in train_labels])
    d = train_embeddings.shape[1]
    gen = rng.stream(seed, "probe-init")
    w = 0.01 * gen.standard_normal((d, len(classes)))
    b = np.zeros(len(classes))
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    for _ in range(epochs):
        _, glogits = softmax_cross_entropy(train_embeddings @ w + b, y)
        gw = train_embeddings.T @ glogits
        gb = glogits.sum(axis=0)
        vw = momentum * vw + gw
        vb = momentum * vb + gb
        w -= base_lr * vw
        b -= base_lr * vb
    pred = np.argmax(test_embeddings @ w + b, axis=1)
    pred_classes = classes[pred]
    accuracy = float(np.mean(pred_classes == test_labels))
    return (w, b), accuracy


def save_checkpoint(model: EncoderModel, path: str | Path, config: dict) -> None:
    """Binary checkpoint plus a JSON config echo alongside (.json suffix)."""
    tensors = []
    for w, b in model.encoder_layers + model.projection_layers:
        tensors.append(w)
        tensors.append(b.reshape(1, -1))
    io.write_checkpoint_tensors(path, tensors)
    meta = dict(config)
    meta["n_encoder_layers"] = len(model.encoder_layers)
    meta["n_projection_layers"] = len(model.projection_layers)
    io.atomic_write_text(
        Path(path).with_suffix(".json"), json.dumps(meta, indent=2, sort_keys=True)
    )


def load_checkpoint(path: str | Path):
    """Returns (model, config echo)."""
    meta = json.loads(Path(path).with_suffix(".json").read_text())
    tensors = io.read_checkpoint_tensors(path)
    n_enc = int(meta["n_encoder_layers"])
    layers = [
        (tensors[2 * k], tensors[2 * k + 1].reshape(-1))
        for k in range(len(tensors) // 2)
    ]
    return EncoderModel(layers[:n_enc], layers[n_enc:]), meta
