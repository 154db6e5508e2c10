"""Monte-Carlo kernel accumulation and exact GP label inference.

The validation-accuracy score of an architecture is computed without any
gradient step: penultimate features of repeated random initializations
are averaged into train/train and val/train Gram matrices, and the GP
posterior mean under those kernels labels the validation set. The ridge
term is swept on a grid normalized by the kernel's mean eigenvalue, and
the best resulting accuracy is the score.

A closed-form kernel for one-hidden-layer ReLU networks is included as
an independent check of the Monte-Carlo estimator.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .arch import LayerGraph
from .data import DatasetSplit
from .errors import InferenceFailed, SingularKernel
from .forward import ConvNet, InitConfig

DEFAULT_REG_GRID = tuple(np.logspace(-7, 2, 20))


@dataclass(frozen=True)
class KernelPair:
    """Averaged train/train and val/train Gram estimates."""

    k_tt: np.ndarray       # (N_D, N_D)
    k_vt: np.ndarray       # (N_val, N_D)
    n_ensemble: int
    feature_dim: int

    def __post_init__(self):
        if not (np.isfinite(self.k_tt).all() and np.isfinite(self.k_vt).all()):
            raise ValueError("kernel entries must be finite")

    def scaled(self, c: float) -> "KernelPair":
        return KernelPair(c * self.k_tt, c * self.k_vt, self.n_ensemble,
                          self.feature_dim)

    def merge(self, other: "KernelPair") -> "KernelPair":
        """Combine two disjoint ensemble batches into one running mean."""
        if other.feature_dim != self.feature_dim:
            raise ValueError("feature dims disagree")
        n = self.n_ensemble + other.n_ensemble
        w_a, w_b = self.n_ensemble / n, other.n_ensemble / n
        return KernelPair(w_a * self.k_tt + w_b * other.k_tt,
                          w_a * self.k_vt + w_b * other.k_vt, n, self.feature_dim)


@dataclass(frozen=True)
class LabelMatrix:
    """Mean-zero one-hot targets: correct entry 1 - 1/L, others -1/L."""

    targets: np.ndarray  # (N_D, L)

    @classmethod
    def from_labels(cls, labels: np.ndarray, num_labels: int) -> "LabelMatrix":
        labels = np.asarray(labels)
        eye = np.eye(num_labels)
        return cls(eye[labels] - 1.0 / num_labels)


@dataclass(frozen=True)
class InferenceConfig:
    """Ridge sweep grid and target ensemble count."""

    reg_grid: tuple[float, ...] = DEFAULT_REG_GRID
    n_ensemble: int = 8

    def __post_init__(self):
        grid = np.asarray(self.reg_grid, dtype=float)
        if grid.size == 0 or (grid <= 0).any() or (np.diff(grid) <= 0).any():
            raise ValueError("reg_grid must be strictly increasing and positive")
        object.__setattr__(self, "reg_grid", tuple(float(g) for g in grid))
        if self.n_ensemble < 1:
            raise ValueError("n_ensemble must be >= 1")


def _as_network(network, init_cfg):
    if isinstance(network, LayerGraph):
        return ConvNet(network, init_cfg if init_cfg is not None else InitConfig())
    return network


def accumulate_kernels(network, split: DatasetSplit, n_ensemble: int,
                       init_cfg: InitConfig | None = None,
                       member_offset: int = 0) -> KernelPair:
    """Average feature Gram matrices over independent initializations.

    Each ensemble member k draws its own parameters and its own random
    batch-norm warmup subset of the training inputs, both seeded from
    (base seed, member index), so members are reproducible individually
    and two disjoint runs merge into exactly the single-run result.
    Running sums are kept in double precision and divided once.
    """
    if n_ensemble < 1:
        raise ValueError("n_ensemble must be >= 1")
    net = _as_network(network, init_cfg)
    x_train, x_val = split.nngp_train.x, split.nngp_val.x
    n_d = len(split.nngp_train)
    sum_tt = np.zeros((n_d, n_d))
    sum_vt = np.zeros((len(split.nngp_val), n_d))
    warm = int(min(getattr(net, "warmup_batch", 0), n_d))
    for k in range(member_offset, member_offset + n_ensemble):
        warm_inputs = None
        if warm:
            rng = np.random.default_rng((net.seed, k, 1))
            warm_inputs = x_train[rng.choice(n_d, size=warm, replace=False)]
        params = net.member_params(k, warm_inputs)
        z = net.features(params, x_train)
        z_val = net.features(params, x_val)
        sum_tt += z @ z.T
        sum_vt += z_val @ z.T
    scale = 1.0 / (n_ensemble * net.feature_dim)
    k_tt = sum_tt * scale
    return KernelPair(0.5 * (k_tt + k_tt.T), sum_vt * scale, n_ensemble,
                      net.feature_dim)


def analytic_relu_mlp_kernel(x: np.ndarray, x_other: np.ndarray,
                             weight_variance: float = 1.0) -> float:
    """Wide-limit kernel of a one-hidden-layer ReLU network.

    With hidden weights of per-entry variance s2, the second moment of the
    hidden features is the degree-1 arc-cosine form
    (s2 / 2pi) * |x| |x'| * (sin t + (pi - t) cos t), t the angle between
    the inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    x_other = np.asarray(x_other, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(x_other)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    cos_t = np.clip(x @ x_other / (nx * ny), -1.0, 1.0)
    theta = np.arccos(cos_t)
    return float(weight_variance * nx * ny / (2.0 * np.pi)
                 * (np.sin(theta) + (np.pi - theta) * cos_t))


def mean_eigenvalue(k_tt: np.ndarray) -> float:
    """Average eigenvalue, trace / N; non-negative for PSD input."""
    k_tt = np.asarray(k_tt)
    if k_tt.ndim != 2 or k_tt.shape[0] != k_tt.shape[1]:
        raise ValueError("k_tt must be square")
    return float(np.trace(k_tt) / k_tt.shape[0])


def gp_predict(kernels: KernelPair, targets: LabelMatrix,
               eps_tilde: float) -> np.ndarray:
    """Posterior-mean label scores Y = K_vt (K_tt + e~ lam I)^-1 targets.

    The ridge is relative to the mean eigenvalue lam, so the prediction is
    invariant under joint rescaling of both kernels. Solved via Cholesky.
    """
    lam = mean_eigenvalue(kernels.k_tt)
    n = kernels.k_tt.shape[0]
    system = kernels.k_tt + (eps_tilde * lam) * np.eye(n)
    try:
        factor = linalg.cho_factor(system, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularKernel(f"Cholesky failed at eps~={eps_tilde:g}: {exc}") from exc
    return kernels.k_vt @ linalg.cho_solve(factor, targets.targets)


def predicted_labels(scores: np.ndarray) -> np.ndarray:
    """Argmax labels; ties resolve to the lowest class index."""
    return np.argmax(scores, axis=1)


def nngp_validation_accuracy(network, split: DatasetSplit,
                             inf_cfg: InferenceConfig | None = None,
                             init_cfg: InitConfig | None = None,
                             kernels: KernelPair | None = None):
    """Best validation accuracy over the ridge sweep.

    Returns (accuracy, best eps~, KernelPair). Accuracy ties across the
    grid keep the first (smallest) ridge value. Precomputed kernels may be
    passed to rescore under a different grid.
    """
    inf_cfg = inf_cfg if inf_cfg is not None else InferenceConfig()
    if kernels is None:
        kernels = accumulate_kernels(network, split, inf_cfg.n_ensemble, init_cfg)
    targets = LabelMatrix.from_labels(split.nngp_train.y, split.num_labels)
    y_true = split.nngp_val.y
    best_acc, best_eps = -1.0, None
    failures = 0
    for eps in inf_cfg.reg_grid:
        try:
            scores = gp_predict(kernels, targets, eps)
        except SingularKernel:
            failures += 1
            continue
        acc = float(np.mean(predicted_labels(scores) == y_true))
        if acc > best_acc:
            best_acc, best_eps = acc, eps
    if failures == len(inf_cfg.reg_grid):
        raise InferenceFailed("every ridge value produced a singular system")
    return best_acc, best_eps, kernels


# --- kernel dump format: {N_D, N_val, d, n_ensemble} header + row-major f64 ---

_KERNEL_HEADER = "<4Q"


def save_kernel_pair(path, kernels: KernelPair) -> None:
    n_d = kernels.k_tt.shape[0]
    n_val = kernels.k_vt.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack(_KERNEL_HEADER, n_d, n_val, kernels.feature_dim,
                             kernels.n_ensemble))
        fh.write(np.ascontiguousarray(kernels.k_tt, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(kernels.k_vt, dtype="<f8").tobytes())


def load_kernel_pair(path) -> KernelPair:
    with open(path, "rb") as fh:
        n_d, n_val, dim, n_ens = struct.unpack(_KERNEL_HEADER,
                                               fh.read(struct.calcsize(_KERNEL_HEADER)))
        flat = np.frombuffer(fh.read(), dtype="<f8")
    k_tt = flat[:n_d * n_d].reshape(n_d, n_d)
    k_vt = flat[n_d * n_d:].reshape(n_val, n_d)
    return KernelPair(k_tt, k_vt, int(n_ens), int(dim))
