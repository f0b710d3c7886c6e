"""Quasi-framelet graph convolution networks with hand-written gradients.

A convolution layer computes ``sigma(W^T (theta * (W (X F))))`` where ``F`` is
the feature weight matrix, ``W`` the (Chebyshev) framelet transform and
``theta`` one learnable diagonal per coefficient block. The shrinkage
variant additionally soft-thresholds the filtered coefficients.

Backpropagation uses the fact that the fast decomposition and
reconstruction are adjoint to each other: every block is a symmetric
polynomial in the Laplacian.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .chebyshev import FastTransformPlan, fast_decompose, fast_reconstruct
from .errors import ConfigError, InputError
from .exact import FrameletCoefficients
from .rng import stream

VARIANTS = ("relu-filter", "shrinkage")
MERGES = ("mean", "weighted")
INITIAL_THRESHOLD = 1e-4


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


def soft_threshold(c, t):
    """``sign(c) * max(|c| - t, 0)``."""
    c = np.asarray(c, dtype=float)
    out = np.sign(c) * np.maximum(np.abs(c) - t, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class ConvLayerParams:
    feature_weights: np.ndarray
    spectral_filter: np.ndarray
    shrink_raw: np.ndarray

    @property
    def shrink_thresholds(self) -> np.ndarray:
        return softplus(self.shrink_raw)

    @property
    def d_in(self) -> int:
        return self.feature_weights.shape[0]

    @property
    def d_out(self) -> int:
        return self.feature_weights.shape[1]

    @classmethod
    def init(cls, d_in: int, d_out: int, num_blocks: int, num_nodes: int,
             seed: int = 0, layer: int = 0) -> "ConvLayerParams":
        """Glorot-uniform feature weights, identity spectral filter."""
        a = math.sqrt(6.0 / (d_in + d_out))
        w = stream(seed, "init", layer).uniform(-a, a, size=(d_in, d_out))
        return cls(
            w,
            np.ones((num_blocks, num_nodes)),
            np.full(num_blocks, inverse_softplus(INITIAL_THRESHOLD)),
        )


@dataclass
class ConvCache:
    X: np.ndarray
    C: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    relu: bool


def _check_layer(plan: FastTransformPlan, params: ConvLayerParams, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != params.d_in:
        raise InputError(f"input shape {X.shape} does not match d_in={params.d_in}")
    if X.shape[0] != plan.num_nodes:
        raise InputError(f"input has {X.shape[0]} rows, plan has {plan.num_nodes} nodes")
    if params.spectral_filter.shape != (plan.num_blocks, plan.num_nodes):
        raise InputError(
            f"spectral filter shape {params.spectral_filter.shape} does not match "
            f"plan ({plan.num_blocks}, {plan.num_nodes})"
        )


def conv_forward(plan: FastTransformPlan, params: ConvLayerParams, X, variant: str = "relu-filter",
                 relu: bool = True, return_cache: bool = False):
    """One quasi-framelet convolution. ``relu=False`` gives the identity activation."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    X = np.asarray(X, dtype=float)
    _check_layer(plan, params, X)
    Xp = X @ params.feature_weights
    C = fast_decompose(plan, Xp).data
    Z = params.spectral_filter[:, :, None] * C
    if variant == "shrinkage":
        Cp = soft_threshold(Z, params.shrink_thresholds[:, None, None])
    else:
        Cp = Z
    Y = fast_reconstruct(plan, FrameletCoefficients(plan.K, plan.levels, Cp))
    out = np.maximum(Y, 0.0) if relu else Y
    if return_cache:
        return out, ConvCache(X, C, Z, Y, relu)
    return out


def conv_backward(plan: FastTransformPlan, params: ConvLayerParams, cache: ConvCache,
                  dout: np.ndarray, variant: str) -> tuple[dict, np.ndarray]:
    """Gradients of a convolution layer; returns ``(param_grads, dX)``."""
    dY = dout * (cache.Y > 0) if cache.relu else dout
    # adjoint of masked reconstruction: decompose, then mask
    dCp = fast_decompose(plan, dY).data * plan.mask[:, None, None]
    grads = {}
    if variant == "shrinkage":
        t = params.shrink_thresholds
        active = np.abs(cache.Z) > t[:, None, None]
        dZ = dCp * active
        dt = -np.sum(np.sign(cache.Z) * dZ, axis=(1, 2))
        grads["shrink_raw"] = dt * expit(params.shrink_raw)
    else:
        dZ = dCp
        grads["shrink_raw"] = np.zeros_like(params.shrink_raw)
    grads["spectral_filter"] = np.sum(dZ * cache.C, axis=2)
    dC = params.spectral_filter[:, :, None] * dZ
    dXp = fast_reconstruct(plan, FrameletCoefficients(plan.K, plan.levels, dC), apply_mask=False)
    grads["feature_weights"] = cache.X.T @ dXp
    return grads, dXp @ params.feature_weights.T


def dropout_mask(shape: tuple[int, int], rate: float, seed: int, step: int) -> np.ndarray:
    """Inverted-dropout multiplier drawn from the ``dropout`` stream."""
    if rate <= 0:
        return np.ones(shape)
    keep = stream(seed, "dropout", step).random(shape) >= rate
    return keep / (1.0 - rate)


@dataclass
class NetworkParams:
    """Two-layer network: conv -> ReLU -> dropout -> conv -> logits."""

    layer1: ConvLayerParams
    layer2: ConvLayerParams
    dropout_rate: float = 0.3
    variant: str = "relu-filter"

    def __post_init__(self):
        if self.layer1.d_out != self.layer2.d_in:
            raise InputError("layer1 output width must equal layer2 input width")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")

    @classmethod
    def init(cls, d_in: int, hidden: int, num_classes: int, plan: FastTransformPlan,
             seed: int = 0, dropout_rate: float = 0.3, variant: str = "relu-filter",
             layer_offset: int = 0) -> "NetworkParams":
        nb, n = plan.num_blocks, plan.num_nodes
        return cls(
            ConvLayerParams.init(d_in, hidden, nb, n, seed, layer_offset),
            ConvLayerParams.init(hidden, num_classes, nb, n, seed, layer_offset + 1),
            dropout_rate,
            variant,
        )

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
            out[f"{name}.feature_weights"] = layer.feature_weights
            out[f"{name}.spectral_filter"] = layer.spectral_filter
            out[f"{name}.shrink_raw"] = layer.shrink_raw
        return out

    def decay_keys(self) -> list[str]:
        return ["layer1.feature_weights", "layer2.feature_weights"]

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    conv1: ConvCache
    conv2: ConvCache
    drop: np.ndarray


def forward(net: NetworkParams, plan: FastTransformPlan, X, training: bool = False,
            seed: int = 0, step: int = 0):
    """Logits and the cache needed by :func:`backward`."""
    H, c1 = conv_forward(plan, net.layer1, X, net.variant, relu=True, return_cache=True)
    drop = dropout_mask(H.shape, net.dropout_rate, seed, step) if training else np.ones(H.shape)
    logits, c2 = conv_forward(plan, net.layer2, H * drop, net.variant, relu=False, return_cache=True)
    return logits, ForwardCache(c1, c2, drop)


def backward(net: NetworkParams, plan: FastTransformPlan, cache: ForwardCache, dlogits) -> dict:
    g2, dH = conv_backward(plan, net.layer2, cache.conv2, dlogits, net.variant)
    g1, _ = conv_backward(plan, net.layer1, cache.conv1, dH * cache.drop, net.variant)
    grads = {f"layer1.{k}": v for k, v in g1.items()}
    grads.update({f"layer2.{k}": v for k, v in g2.items()})
    return grads


# -- heterogeneous model -------------------------------------------------------


@dataclass
class HeteroModelParams:
    """One two-layer branch per meta-path, merged, then an optional classifier.

    With ``classifier=None`` the merged branch outputs are the logits.
    """

    branches: list[NetworkParams]
    merge: str = "mean"
    merge_logits: np.ndarray = None
    classifier: np.ndarray | None = None

    def __post_init__(self):
        if not self.branches:
            raise ConfigError("a heterogeneous model needs at least one meta-path")
        if self.merge not in MERGES:
            raise ConfigError(f"unknown merge {self.merge!r}; choose from {MERGES}")
        widths = {b.layer2.d_out for b in self.branches}
        if len(widths) != 1:
            raise InputError("all meta-path branches must share their output width")
        if self.merge_logits is None:
            self.merge_logits = np.zeros(len(self.branches))

    @classmethod
    def init(cls, d_in: int, hidden: int, num_classes: int, plans: Sequence[FastTransformPlan],
             seed: int = 0, dropout_rate: float = 0.3, variant: str = "relu-filter",
             merge: str = "mean", classifier_width: int | None = None) -> "HeteroModelParams":
        out = num_classes if classifier_width is None else classifier_width
        branches = [
            NetworkParams.init(d_in, hidden, out, p, seed, dropout_rate, variant, layer_offset=2 * i)
            for i, p in enumerate(plans)
        ]
        clf = None
        if classifier_width is not None:
            a = math.sqrt(6.0 / (classifier_width + num_classes))
            clf = stream(seed, "init-classifier").uniform(-a, a, size=(classifier_width, num_classes))
        return cls(branches, merge, None, clf)

    def merge_weights(self) -> np.ndarray:
        if self.merge == "mean":
            return np.full(len(self.branches), 1.0 / len(self.branches))
        return softmax(self.merge_logits)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, b in enumerate(self.branches):
            out.update({f"branch{i}.{k}": v for k, v in b.parameters().items()})
        if self.merge == "weighted":
            out["merge_logits"] = self.merge_logits
        if self.classifier is not None:
            out["classifier"] = self.classifier
        return out

    def decay_keys(self) -> list[str]:
        keys = [f"branch{i}.{k}" for i, b in enumerate(self.branches) for k in b.decay_keys()]
        if self.classifier is not None:
            keys.append("classifier")
        return keys

    def copy(self) -> "HeteroModelParams":
        return copy.deepcopy(self)


def merge_outputs(outputs: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Convex combination of branch outputs; a single branch passes through unchanged."""
    if len(outputs) == 1 and weights[0] == 1.0:
        return outputs[0]
    acc = weights[0] * outputs[0]
    for w, o in zip(weights[1:], outputs[1:]):
        acc = acc + w * o
    return acc


@dataclass
class HeteroCache:
    branches: list[ForwardCache]
    outputs: list[np.ndarray]
    merged: np.ndarray


def hetero_forward(hm: HeteroModelParams, plans: Sequence[FastTransformPlan], X,
                   training: bool = False, seed: int = 0, step: int = 0):
    if len(plans) != len(hm.branches):
        raise ConfigError(f"{len(hm.branches)} branches but {len(plans)} meta-path plans")
    outputs, caches = [], []
    for i, (branch, plan) in enumerate(zip(hm.branches, plans)):
        # branch i draws dropout from its own sub-stream; branch 0 matches the homogeneous model
        out, cache = forward(branch, plan, X, training, seed + 7919 * i, step)
        outputs.append(out)
        caches.append(cache)
    merged = merge_outputs(outputs, hm.merge_weights())
    logits = merged if hm.classifier is None else merged @ hm.classifier
    return logits, HeteroCache(caches, outputs, merged)


def hetero_backward(hm: HeteroModelParams, plans: Sequence[FastTransformPlan], cache: HeteroCache,
                    dlogits) -> dict:
    grads = {}
    if hm.classifier is not None:
        grads["classifier"] = cache.merged.T @ dlogits
        dmerged = dlogits @ hm.classifier.T
    else:
        dmerged = dlogits
    w = hm.merge_weights()
    if hm.merge == "weighted":
        dw = np.array([np.sum(dmerged * o) for o in cache.outputs])
        grads["merge_logits"] = w * (dw - np.dot(w, dw))
    for i, (branch, plan, bc) in enumerate(zip(hm.branches, plans, cache.branches)):
        g = backward(branch, plan, bc, w[i] * dmerged)
        grads.update({f"branch{i}.{k}": v for k, v in g.items()})
    return grads


# -- loss, optimiser, training -------------------------------------------------


def _model_forward(model, plans, X, training, seed, step):
    if isinstance(model, HeteroModelParams):
        return hetero_forward(model, plans, X, training, seed, step)
    return forward(model, plans, X, training, seed, step)


def _model_backward(model, plans, cache, dlogits):
    if isinstance(model, HeteroModelParams):
        return hetero_backward(model, plans, cache, dlogits)
    return backward(model, plans, cache, dlogits)


def cross_entropy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over rows ``idx`` and its gradient w.r.t. logits."""
    logp = log_softmax(logits[idx], axis=1)
    loss = -float(np.mean(logp[np.arange(idx.size), labels[idx]]))
    dsub = np.exp(logp)
    dsub[np.arange(idx.size), labels[idx]] -= 1.0
    dlogits = np.zeros_like(logits)
    np.add.at(dlogits, idx, dsub / idx.size)
    return loss, dlogits


def loss_and_grads(model, plans, X, labels, train_mask, weight_decay: float = 0.0,
                   training: bool = True, seed: int = 0, step: int = 0) -> tuple[float, dict]:
    """Masked mean cross-entropy plus ``0.5 * weight_decay * ||F||^2`` on feature weights.

    ``train_mask`` is a boolean mask or an index array; repeated indices
    count repeatedly.
    """
    idx = _as_index(train_mask, len(labels))
    if idx.size == 0:
        raise InputError("train mask is empty")
    labels = np.asarray(labels)
    logits, cache = _model_forward(model, plans, X, training, seed, step)
    loss, dlogits = cross_entropy(logits, labels, idx)
    grads = _model_backward(model, plans, cache, dlogits)
    params = model.parameters()
    for key in model.decay_keys():
        loss += 0.5 * weight_decay * float(np.sum(params[key] ** 2))
        grads[key] = grads[key] + weight_decay * params[key]
    return loss, {k: grads[k] for k in params}


def _as_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise InputError(f"boolean mask must have length {n}")
        return np.flatnonzero(mask)
    return mask.astype(np.int64).ravel()


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    early_stop_patience: int = 100
    hidden_units: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    freeze_filter: bool = False

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise ConfigError("invalid Adam betas/epsilon")


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict, config: TrainConfig) -> AdamState:
    """Bias-corrected Adam; updates ``params`` arrays in place."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            continue
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return state


@dataclass
class TrainData:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1


def predict(model, plans, X) -> np.ndarray:
    logits, _ = _model_forward(model, plans, X, False, 0, 0)
    return logits


def accuracy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    if idx.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def train(model, plans, data: TrainData, config: TrainConfig):
    """Full-batch Adam with early stopping on validation accuracy.

    Returns the parameters of the best validation epoch (ties broken by lower
    validation loss) and the per-epoch history.
    """
    model = model.copy()
    params = model.parameters()
    frozen = {k for k in params if config.freeze_filter and (k.endswith("spectral_filter"))}
    state = AdamState()
    history = History()
    best = None
    best_key = (-1.0, math.inf)
    since_best = 0
    val_idx = data.val_idx if data.val_idx.size else data.train_idx
    for epoch in range(config.epochs):
        loss, grads = loss_and_grads(
            model, plans, data.features, data.labels, data.train_idx,
            config.weight_decay, training=True, seed=config.seed, step=epoch,
        )
        for k in frozen:
            grads.pop(k, None)
        adam_step(state, params, grads, config)

        logits = predict(model, plans, data.features)
        val_loss, _ = cross_entropy(logits, data.labels, val_idx)
        val_acc = accuracy(logits, data.labels, val_idx)
        history.train_loss.append(loss)
        history.val_accuracy.append(val_acc)
        history.val_loss.append(val_loss)
        key = (val_acc, -val_loss)
        if key > (best_key[0], -best_key[1]):
            best_key = (val_acc, val_loss)
            best = model.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break
    history.stopped_epoch = epoch
    return best, history
