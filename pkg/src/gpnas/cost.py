"""Analytic FLOPs and parameter accounting.

Per-op conventions (any fixed convention preserves cost ratios):
multiply-accumulates count 2 FLOPs; inference batch-norm 2 FLOPs per
element (scale, shift); ReLU 1 per element; max-pool window-1
comparisons per output element; n-way add n-1 per element; concat free;
global average pooling H*W per channel (sum plus divide).

Parameter counts cover trainable tensors only (conv/dense weights,
biases, batch-norm scale and shift); moving statistics are buffers and
excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

from .arch import LayerGraph, propagate_shapes


@dataclass(frozen=True)
class CostBreakdown:
    """Per-architecture cost record placed next to every score."""

    inference_flops: float        # per-sample forward cost F
    train_step_flops: float       # per-step per-sample cost, 2F
    kernel_eval_flops: float
    gp_inference_flops: float
    training_flops: float
    param_count: int

    def __post_init__(self):
        fields = (self.inference_flops, self.train_step_flops,
                  self.kernel_eval_flops, self.gp_inference_flops,
                  self.training_flops, self.param_count)
        if any(v < 0 for v in fields):
            raise ValueError("costs must be non-negative")

    @property
    def total_nngp_flops(self) -> float:
        return self.kernel_eval_flops + self.gp_inference_flops


def count_inference_flops(graph: LayerGraph) -> float:
    """Per-sample forward FLOPs, summed layer by layer."""
    shapes = propagate_shapes(graph)
    total = 0.0
    for node in graph.nodes:
        h, w, c = shapes[node.name]
        elems = h * w * c
        if node.kind == "conv":
            kh, kw = node.kernel
            total += 2.0 * kh * kw * node.in_channels * node.out_channels * h * w
        elif node.kind == "bn":
            total += 2.0 * elems
        elif node.kind == "relu":
            total += 1.0 * elems
        elif node.kind == "maxpool":
            kh, kw = node.kernel
            total += (kh * kw - 1.0) * elems
        elif node.kind == "add":
            total += (len(node.inputs) - 1.0) * elems
        elif node.kind == "gap":
            ih, iw, _ = shapes[node.inputs[0]]
            total += float(ih * iw) * c
        elif node.kind == "dense":
            total += 2.0 * node.in_channels * node.out_channels
            if node.bias:
                total += float(node.out_channels)
    return total


def nngp_flops_split(f_a: float, d_a: int, n_ensemble: int, n_d: int,
                     n_val: int, num_labels: int, reg_grid_size: int):
    """(kernel-evaluation, GP-inference) FLOPs for one kernel scoring run.

    Kernel evaluation covers the ensemble forward passes plus the Gram
    products; GP inference covers one Cholesky factorization and the
    triangular solves for every ridge value.
    """
    n_dv = n_d + n_val
    kernel_eval = n_ensemble * (f_a * n_dv + 2.0 * d_a * n_d * n_dv)
    gp_inference = reg_grid_size * (n_d ** 3 / 3.0
                                    + 4.0 * num_labels * n_d * n_dv)
    return kernel_eval, gp_inference


def nngp_flops(f_a: float, d_a: int, n_ensemble: int, n_d: int, n_val: int,
               num_labels: int, reg_grid_size: int) -> float:
    """Total kernel-scoring FLOPs (sum of the two split terms)."""
    kernel_eval, gp_inference = nngp_flops_split(
        f_a, d_a, n_ensemble, n_d, n_val, num_labels, reg_grid_size)
    return kernel_eval + gp_inference


def training_flops(f_a: float, epochs: int, n_train_all: int,
                   n_val_all: int) -> float:
    """Gradient training for `epochs` plus one validation pass.

    The per-step per-sample training cost is taken as twice the inference
    cost, which holds robustly for this layer vocabulary.
    """
    return 2.0 * epochs * f_a * n_train_all + f_a * n_val_all


def count_params(graph: LayerGraph) -> int:
    """Trainable parameter count."""
    total = 0
    for node in graph.nodes:
        if node.kind == "conv":
            kh, kw = node.kernel
            total += kh * kw * node.in_channels * node.out_channels
        elif node.kind == "bn":
            total += 2 * node.out_channels
        elif node.kind == "dense":
            total += node.in_channels * node.out_channels
            if node.bias:
                total += node.out_channels
    return total


def cost_breakdown(graph: LayerGraph, n_ensemble: int, n_d: int, n_val: int,
                   num_labels: int, reg_grid_size: int, epochs: int,
                   n_train_all: int, n_val_all: int) -> CostBreakdown:
    f_a = count_inference_flops(graph)
    kernel_eval, gp_inference = nngp_flops_split(
        f_a, graph.feature_dim, n_ensemble, n_d, n_val, num_labels, reg_grid_size)
    return CostBreakdown(
        inference_flops=f_a,
        train_step_flops=2.0 * f_a,
        kernel_eval_flops=kernel_eval,
        gp_inference_flops=gp_inference,
        training_flops=training_flops(f_a, epochs, n_train_all, n_val_all),
        param_count=count_params(graph),
    )
