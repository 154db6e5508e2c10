"""Minimal mini-batch SGD trainer for the shortened-training baseline.

Forward/backward passes are hand-rolled over the same layer vocabulary
the assembler emits (conv, bn, relu, max-pool, global-avg-pool, dense,
add, concat); every backward is validated against central finite
differences in the test suite. Single-threaded and bitwise deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .arch import LayerGraph
from .data import LabeledSet
from .errors import DivergedLoss
from .forward import InitConfig, Params, init_params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    if total_steps <= 1:
        return base_lr
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


def _forward_train(graph: LayerGraph, params: Params, x: np.ndarray,
                   bn_momentum: float):
    acts: dict[str, np.ndarray] = {}
    caches: dict[str, object] = {}
    bn_updates: dict[str, np.ndarray] = {}
    for node in graph.nodes:
        k, name = node.kind, node.name
        if k == "input":
            acts[name] = x
        elif k == "conv":
            acts[name], caches[name] = ops.conv2d_forward(
                acts[node.inputs[0]], params[f"{name}.w"])
        elif k == "bn":
            y, nm, nv, cache = ops.bn_forward_train(
                acts[node.inputs[0]], params[f"{name}.gamma"],
                params[f"{name}.beta"], params[f"{name}.mean"],
                params[f"{name}.var"], bn_momentum)
            acts[name], caches[name] = y, cache
            bn_updates[f"{name}.mean"] = nm
            bn_updates[f"{name}.var"] = nv
        elif k == "relu":
            acts[name], caches[name] = ops.relu_forward(acts[node.inputs[0]])
        elif k == "maxpool":
            acts[name], caches[name] = ops.maxpool_forward(
                acts[node.inputs[0]], node.kernel, node.stride)
        elif k == "add":
            acts[name], caches[name] = ops.add_forward(
                [acts[s] for s in node.inputs])
        elif k == "concat":
            acts[name], caches[name] = ops.concat_forward(
                [acts[s] for s in node.inputs])
        elif k == "gap":
            acts[name], caches[name] = ops.gap_forward(acts[node.inputs[0]])
        elif k == "dense":
            acts[name], caches[name] = ops.dense_forward(
                acts[node.inputs[0]], params[f"{name}.w"],
                params.get(f"{name}.b"))
        else:
            raise ValueError(f"unknown node kind {k}")
    return acts[graph.output_node], caches, bn_updates


def _backward(graph: LayerGraph, caches, dlogits: np.ndarray) -> Params:
    grads: Params = {}
    dacts: dict[str, np.ndarray] = {graph.output_node: dlogits}

    def push(name, dx):
        if name in dacts:
            dacts[name] = dacts[name] + dx
        else:
            dacts[name] = dx

    for node in reversed(graph.nodes):
        dy = dacts.pop(node.name, None)
        if dy is None or node.kind == "input":
            continue
        k, name = node.kind, node.name
        if k == "conv":
            dx, dw = ops.conv2d_backward(dy, caches[name])
            grads[f"{name}.w"] = dw
            push(node.inputs[0], dx)
        elif k == "bn":
            dx, dgamma, dbeta = ops.bn_backward(dy, caches[name])
            grads[f"{name}.gamma"] = dgamma
            grads[f"{name}.beta"] = dbeta
            push(node.inputs[0], dx)
        elif k == "relu":
            push(node.inputs[0], ops.relu_backward(dy, caches[name]))
        elif k == "maxpool":
            push(node.inputs[0], ops.maxpool_backward(dy, caches[name]))
        elif k == "add":
            for src, dx in zip(node.inputs, ops.add_backward(dy, caches[name])):
                push(src, dx)
        elif k == "concat":
            for src, dx in zip(node.inputs, ops.concat_backward(dy, caches[name])):
                push(src, dx)
        elif k == "gap":
            push(node.inputs[0], ops.gap_backward(dy, caches[name]))
        elif k == "dense":
            dx, dw, db = ops.dense_backward(dy, caches[name])
            grads[f"{name}.w"] = dw
            if db is not None:
                grads[f"{name}.b"] = db
            push(node.inputs[0], dx)
    return grads


def loss_and_grads(graph: LayerGraph, params: Params, x: np.ndarray,
                   y: np.ndarray, bn_momentum: float):
    """One training-mode pass: (loss, parameter grads, new moving stats)."""
    logits, caches, bn_updates = _forward_train(graph, params, x, bn_momentum)
    loss, dlogits = ops.softmax_cross_entropy(logits, y)
    return loss, _backward(graph, caches, dlogits), bn_updates


def train(graph: LayerGraph, init_cfg: InitConfig, train_pool: LabeledSet,
          cfg: TrainConfig, params: Params | None = None) -> Params:
    """SGD with momentum and cosine-decayed learning rate on softmax CE.

    Weight decay applies to conv/dense weights only. Batch norm runs in
    training mode with the init config's momentum. Raises DivergedLoss on
    a non-finite loss.
    """
    if params is None:
        params = init_params(graph, init_cfg)
    params = dict(params)
    x_all = np.asarray(train_pool.x, dtype=np.float64).reshape(-1, *graph.input_shape)
    y_all = np.asarray(train_pool.y)
    n = len(y_all)
    steps_per_epoch = -(-n // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    order_rng = np.random.default_rng((cfg.seed, 2))
    decayed = [k for k in params if k.endswith(".w")]
    trained = decayed + [k for k in params
                         if k.endswith((".gamma", ".beta", ".b"))]
    velocity = {k: np.zeros_like(params[k]) for k in trained}
    step = 0
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads, bn_updates = loss_and_grads(
                graph, params, x_all[idx], y_all[idx], init_cfg.bn_momentum)
            if not np.isfinite(loss):
                raise DivergedLoss(
                    f"loss={loss} at epoch {epoch} step {step}")
            lr = cosine_lr(cfg.learning_rate, step, total_steps)
            for k in trained:
                g = grads[k]
                if cfg.weight_decay and k in decayed:
                    g = g + cfg.weight_decay * params[k]
                velocity[k] = cfg.momentum * velocity[k] + g
                params[k] = params[k] - lr * velocity[k]
            params.update(bn_updates)
            step += 1
    return params


def evaluate_accuracy(graph: LayerGraph, params: Params, pool: LabeledSet,
                      batch_size: int = 256) -> float:
    """Inference-mode accuracy; argmax ties go to the lowest class index."""
    from .forward import forward_logits

    x_all = np.asarray(pool.x, dtype=np.float64).reshape(-1, *graph.input_shape)
    correct = 0
    for start in range(0, len(pool), batch_size):
        logits = forward_logits(graph, params, x_all[start:start + batch_size])
        correct += int(np.sum(np.argmax(logits, axis=1)
                              == pool.y[start:start + batch_size]))
    return correct / len(pool)
