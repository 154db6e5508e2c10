"""Randomly initialized forward passes over assembled layer graphs.

Provides parameter initialization, the single batch-norm warmup pass,
and inference-mode feature/logit evaluation. Parameters live in a flat
``{"node.tensor": ndarray}`` dict and are never mutated in place; warmup
returns a fresh dict.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import ops
from .arch import LayerGraph
from .errors import EmptyWarmupBatch, NonFiniteActivation, ShapeMismatch

# Std of a standard normal truncated to [-2, 2]; draws are rescaled by it
# so the post-truncation variance hits the requested value.
_TRUNC_STD = 0.8796256610342398

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class InitConfig:
    """Initialization and batch-norm protocol knobs."""

    seed: int = 0
    readout_weight_variance: float = 1.0  # per-unit readout scale
    conv_gain: float = 2.0                # variance-scaling numerator (He)
    bn_momentum: float = 0.997
    bn_warmup_batch: int = 250

    def __post_init__(self):
        if self.readout_weight_variance <= 0:
            raise ValueError("readout_weight_variance must be positive")
        if not 0.0 <= self.bn_momentum <= 1.0:
            raise ValueError("bn_momentum must lie in [0, 1]")


@dataclass(frozen=True)
class FeatureBatch:
    """Penultimate activations for one batch under one initialization."""

    features: np.ndarray  # (N, d)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """N(0, std^2) truncated at two (pre-truncation) standard deviations."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return x * (std / _TRUNC_STD)


def init_params(graph: LayerGraph, cfg: InitConfig, member: int = 0) -> Params:
    """Draw a fresh parameter set; deterministic given (cfg.seed, member)."""
    rng = np.random.default_rng((cfg.seed, member, 0))
    params: Params = {}
    for node in graph.nodes:
        if node.kind == "conv":
            kh, kw = node.kernel
            fan_in = kh * kw * node.in_channels
            std = np.sqrt(cfg.conv_gain / fan_in)
            params[f"{node.name}.w"] = truncated_normal(
                rng, (kh, kw, node.in_channels, node.out_channels), std)
        elif node.kind == "bn":
            c = node.out_channels
            params[f"{node.name}.gamma"] = np.ones(c)
            params[f"{node.name}.beta"] = np.zeros(c)
            params[f"{node.name}.mean"] = np.zeros(c)
            params[f"{node.name}.var"] = np.ones(c)
        elif node.kind == "dense":
            std = np.sqrt(cfg.readout_weight_variance / node.in_channels)
            params[f"{node.name}.w"] = rng.standard_normal(
                (node.in_channels, node.out_channels)) * std
            if node.bias:
                params[f"{node.name}.b"] = np.zeros(node.out_channels)
    return params


def _check_inputs(graph: LayerGraph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(graph.input_shape):
        raise ShapeMismatch(
            f"expected (N, {graph.input_shape[0]}, {graph.input_shape[1]}, "
            f"{graph.input_shape[2]}), got {x.shape}")
    return x


def _run(graph: LayerGraph, params: Params, x: np.ndarray, stop: str,
         bn_train: bool = False, momentum: float = 1.0):
    """Evaluate nodes in order up to `stop`; optionally collect BN updates."""
    acts: dict[str, np.ndarray] = {}
    bn_updates: dict[str, np.ndarray] = {}
    for node in graph.nodes:
        k = node.kind
        if k == "input":
            acts[node.name] = x
        elif k == "conv":
            acts[node.name] = ops.conv2d_forward(
                acts[node.inputs[0]], params[f"{node.name}.w"])[0]
        elif k == "bn":
            src = acts[node.inputs[0]]
            g, b = params[f"{node.name}.gamma"], params[f"{node.name}.beta"]
            m, v = params[f"{node.name}.mean"], params[f"{node.name}.var"]
            if bn_train:
                y, nm, nv, _ = ops.bn_forward_train(src, g, b, m, v, momentum)
                bn_updates[f"{node.name}.mean"] = nm
                bn_updates[f"{node.name}.var"] = nv
                acts[node.name] = y
            else:
                acts[node.name] = ops.bn_forward_infer(src, g, b, m, v)
        elif k == "relu":
            acts[node.name] = ops.relu_forward(acts[node.inputs[0]])[0]
        elif k == "maxpool":
            acts[node.name] = ops.maxpool_forward(
                acts[node.inputs[0]], node.kernel, node.stride)[0]
        elif k == "add":
            acts[node.name] = ops.add_forward([acts[s] for s in node.inputs])[0]
        elif k == "concat":
            acts[node.name] = ops.concat_forward([acts[s] for s in node.inputs])[0]
        elif k == "gap":
            acts[node.name] = ops.gap_forward(acts[node.inputs[0]])[0]
        elif k == "dense":
            acts[node.name] = ops.dense_forward(
                acts[node.inputs[0]], params[f"{node.name}.w"],
                params.get(f"{node.name}.b"))[0]
        else:
            raise ValueError(f"unknown node kind {k}")
        if node.name == stop:
            break
    return acts[stop], bn_updates


def warmup_batchnorm(graph: LayerGraph, params: Params,
                     warmup_inputs: np.ndarray, momentum: float) -> Params:
    """Single statistics-updating pass; returns a new parameter set.

    Downstream batch-norm layers see batch-normalized activations during
    this pass, matching training-mode semantics. All later passes must run
    in inference mode.
    """
    warmup_inputs = _check_inputs(graph, warmup_inputs)
    if warmup_inputs.shape[0] == 0:
        raise EmptyWarmupBatch("warmup requires at least one sample")
    _, updates = _run(graph, params, warmup_inputs, graph.feature_node,
                      bn_train=True, momentum=momentum)
    out = dict(params)
    out.update(updates)
    return out


def forward_features(graph: LayerGraph, params: Params, x: np.ndarray) -> FeatureBatch:
    """Inference-mode penultimate activations (post-pooling, pre-readout)."""
    x = _check_inputs(graph, x)
    feats, _ = _run(graph, params, x, graph.feature_node)
    if not np.isfinite(feats).all():
        raise NonFiniteActivation("non-finite penultimate activations")
    return FeatureBatch(feats)


def forward_logits(graph: LayerGraph, params: Params, x: np.ndarray) -> np.ndarray:
    """Inference-mode class scores (readout applied to the features)."""
    x = _check_inputs(graph, x)
    logits, _ = _run(graph, params, x, graph.output_node)
    if not np.isfinite(logits).all():
        raise NonFiniteActivation("non-finite logits")
    return logits


class ConvNet:
    """Bundles a layer graph with its init protocol for ensemble evaluation.

    Inputs may be flat (N, H*W*C) row vectors; they are reshaped to the
    graph's input shape.
    """

    def __init__(self, graph: LayerGraph, cfg: InitConfig):
        self.graph = graph
        self.cfg = cfg

    @property
    def seed(self) -> int:
        return self.cfg.seed

    @property
    def feature_dim(self) -> int:
        return self.graph.feature_dim

    @property
    def warmup_batch(self) -> int:
        return self.cfg.bn_warmup_batch

    def _shape(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x.reshape(-1, *self.graph.input_shape)
        return x

    def member_params(self, member: int, warmup_inputs: np.ndarray) -> Params:
        params = init_params(self.graph, self.cfg, member)
        return warmup_batchnorm(self.graph, params, self._shape(warmup_inputs),
                                self.cfg.bn_momentum)

    def features(self, params: Params, x: np.ndarray) -> np.ndarray:
        return forward_features(self.graph, params, self._shape(x)).features


class ReluMLP:
    """One-hidden-layer ReLU network with per-weight variance sigma^2.

    The closed-form wide-limit kernel of this family is known, which makes
    it the verification target for the Monte-Carlo kernel machinery.
    """

    def __init__(self, in_dim: int, width: int, weight_variance: float = 1.0,
                 seed: int = 0):
        self.in_dim = in_dim
        self.width = width
        self.weight_variance = weight_variance
        self.seed = seed

    @property
    def feature_dim(self) -> int:
        return self.width

    warmup_batch = 0  # no batch norm, nothing to warm up

    def member_params(self, member: int, warmup_inputs=None) -> Params:
        rng = np.random.default_rng((self.seed, member, 0))
        w = rng.standard_normal((self.in_dim, self.width))
        return {"hidden.w": w * np.sqrt(self.weight_variance)}

    def features(self, params: Params, x: np.ndarray) -> np.ndarray:
        return np.maximum(np.asarray(x, dtype=np.float64) @ params["hidden.w"], 0.0)


# --- binary parameter / feature files ---

_FEATURE_MAGIC = "<Q"  # 8-byte little-endian column-count header


def write_feature_file(path, features: np.ndarray) -> None:
    """Little-endian float64 rows behind an 8-byte feature-dim header."""
    features = np.atleast_2d(np.asarray(features, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(struct.pack(_FEATURE_MAGIC, features.shape[1]))
        fh.write(features.tobytes())


def read_feature_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (dim,) = struct.unpack(_FEATURE_MAGIC, fh.read(8))
        flat = np.frombuffer(fh.read(), dtype="<f8")
    return flat.reshape(-1, dim)


def save_params(path, params: Params) -> None:
    """Binary dump shared by init parameters and trained checkpoints."""
    np.savez(path, **params)


def load_params(path) -> Params:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}
