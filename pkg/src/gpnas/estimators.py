"""Scikit-learn style estimators wrapping the scoring engines.

These keep the package composable with pipelines, grid search and model
selection tooling: a gradient-free kernel classifier whose ``score`` is
the architecture's scoring signal, the shortened-training baseline
classifier, and the linear hybrid-metric regressor. Inputs are flat
``(n_samples, n_features)`` arrays; the conv estimators reshape rows to
the plan's input shape.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .arch import CellSpec, NetworkPlan, assemble_network, make_cell
from .data import LabeledSet
from .forward import ConvNet, InitConfig
from .nngp import (
    DEFAULT_REG_GRID,
    KernelPair,
    LabelMatrix,
    gp_predict,
    predicted_labels,
)
from .screening import PoolEntry, SearchPool, fit_hybrid, hybrid_score
from .trainer import TrainConfig, evaluate_accuracy, train

IDENTITY_CELL = make_cell([[0, 1], [0, 0]], ["input", "output"])


def _resolve_input_shape(input_shape, n_features):
    if input_shape is not None:
        if int(np.prod(input_shape)) != n_features:
            raise ValueError(f"input_shape {input_shape} does not match "
                             f"{n_features} features")
        return tuple(input_shape)
    return (1, n_features, 1)


class _ConvEstimatorBase(BaseEstimator):
    """Shared plumbing: cell + plan resolution and label encoding."""

    def _graph(self, n_features, n_classes):
        cell = self.cell if self.cell is not None else IDENTITY_CELL
        if not isinstance(cell, CellSpec):
            cell = make_cell(cell["matrix"], cell["ops"])
        plan = NetworkPlan(
            stem_channels=self.stem_channels, num_blocks=self.num_blocks,
            cells_per_block=self.cells_per_block,
            input_shape=_resolve_input_shape(self.input_shape, n_features),
            num_classes=n_classes)
        return assemble_network(cell, plan)

    def _encode(self, y):
        self.classes_, encoded = np.unique(y, return_inverse=True)
        return encoded


class NNGPClassifier(_ConvEstimatorBase, ClassifierMixin):
    """Gradient-free classifier built on Monte-Carlo kernel estimation.

    ``fit`` stores per-member penultimate features of the training set
    (no gradient step is taken); ``predict`` pushes new inputs through the
    same random networks and labels them by the GP posterior mean at the
    ``reg_scale`` ridge. ``score`` sweeps ``reg_grid`` and returns the
    best validation accuracy, which is the architecture-scoring signal;
    the winning ridge is stored as ``best_epsilon_``.

    Parameters mirror the scoring protocol: `n_ensemble` random
    initializations, batch-norm warmup batch and momentum, a readout-free
    feature kernel, and the mean-eigenvalue-relative ridge grid.
    """

    def __init__(self, cell=None, stem_channels=16, num_blocks=2,
                 cells_per_block=1, input_shape=None, n_ensemble=8,
                 reg_scale=1e-3, reg_grid=DEFAULT_REG_GRID, seed=0,
                 bn_momentum=0.997, bn_warmup_batch=250, conv_gain=2.0):
        self.cell = cell
        self.stem_channels = stem_channels
        self.num_blocks = num_blocks
        self.cells_per_block = cells_per_block
        self.input_shape = input_shape
        self.n_ensemble = n_ensemble
        self.reg_scale = reg_scale
        self.reg_grid = reg_grid
        self.seed = seed
        self.bn_momentum = bn_momentum
        self.bn_warmup_batch = bn_warmup_batch
        self.conv_gain = conv_gain

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        encoded = self._encode(y)
        graph = self._graph(X.shape[1], len(self.classes_))
        cfg = InitConfig(seed=self.seed, conv_gain=self.conv_gain,
                         bn_momentum=self.bn_momentum,
                         bn_warmup_batch=min(self.bn_warmup_batch, len(y)))
        net = ConvNet(graph, cfg)
        members, feats = [], []
        n = len(y)
        for k in range(self.n_ensemble):
            rng = np.random.default_rng((cfg.seed, k, 1))
            warm = X[rng.choice(n, size=min(cfg.bn_warmup_batch, n),
                                replace=False)]
            params = net.member_params(k, warm)
            members.append(params)
            feats.append(net.features(params, X))
        d = net.feature_dim
        k_tt = sum(z @ z.T for z in feats) / (self.n_ensemble * d)
        self.net_ = net
        self.members_ = members
        self.train_features_ = feats
        self.k_tt_ = 0.5 * (k_tt + k_tt.T)
        self.targets_ = LabelMatrix.from_labels(encoded, len(self.classes_))
        return self

    def _kernels(self, X) -> KernelPair:
        check_is_fitted(self, "k_tt_")
        X = check_array(X)
        d = self.net_.feature_dim
        k_vt = sum(self.net_.features(p, X) @ z.T
                   for p, z in zip(self.members_, self.train_features_))
        return KernelPair(self.k_tt_, k_vt / (self.n_ensemble * d),
                          self.n_ensemble, d)

    def decision_function(self, X, eps_tilde=None):
        eps = self.reg_scale if eps_tilde is None else eps_tilde
        return gp_predict(self._kernels(X), self.targets_, eps)

    def predict(self, X, eps_tilde=None):
        labels = predicted_labels(self.decision_function(X, eps_tilde))
        return self.classes_[labels]

    def score(self, X, y):
        """Best accuracy over the ridge grid (the scoring signal)."""
        X, y = check_X_y(X, y)
        kernels = self._kernels(X)
        best_acc, best_eps = -1.0, None
        for eps in self.reg_grid:
            pred = self.classes_[predicted_labels(
                gp_predict(kernels, self.targets_, eps))]
            acc = float(np.mean(pred == y))
            if acc > best_acc:
                best_acc, best_eps = acc, eps
        self.best_epsilon_ = best_eps
        return best_acc


class ShortTrainClassifier(_ConvEstimatorBase, ClassifierMixin):
    """Shortened-training baseline behind the same estimator surface."""

    def __init__(self, cell=None, stem_channels=16, num_blocks=2,
                 cells_per_block=1, input_shape=None, epochs=4, batch_size=64,
                 learning_rate=0.05, momentum=0.9, weight_decay=0.0, seed=0,
                 bn_momentum=0.997):
        self.cell = cell
        self.stem_channels = stem_channels
        self.num_blocks = num_blocks
        self.cells_per_block = cells_per_block
        self.input_shape = input_shape
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.seed = seed
        self.bn_momentum = bn_momentum

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        encoded = self._encode(y)
        self.graph_ = self._graph(X.shape[1], len(self.classes_))
        init_cfg = InitConfig(seed=self.seed, bn_momentum=self.bn_momentum)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate,
                          momentum=self.momentum,
                          weight_decay=self.weight_decay, seed=self.seed)
        self.params_ = train(self.graph_, init_cfg, LabeledSet(X, encoded), cfg)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        from .forward import forward_logits

        logits = forward_logits(self.graph_, self.params_,
                                X.reshape(-1, *self.graph_.input_shape))
        return self.classes_[np.argmax(logits, axis=1)]

    def score(self, X, y):
        X, y = check_X_y(X, y)
        check_is_fitted(self, "params_")
        encoded = np.searchsorted(self.classes_, y)
        return evaluate_accuracy(self.graph_, self.params_,
                                 LabeledSet(X, encoded))


class HybridMetric(RegressorMixin, BaseEstimator):
    """Three-parameter linear blend of two proxy scores.

    ``fit(X, y)`` takes columns [shortened-training score, kernel score]
    and the longer-budget target; exposes sklearn-style ``coef_`` and
    ``intercept_``.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 2:
            raise ValueError("expected exactly two proxy columns")
        pool = SearchPool(tuple(
            PoolEntry(f"e{i:06d}", nngp_score=float(r[1]),
                      short_train_score=float(r[0]))
            for i, r in enumerate(X)))
        self.model_ = fit_hybrid(pool, y)
        self.coef_ = np.array([self.model_.w_train, self.model_.w_nngp])
        self.intercept_ = self.model_.bias
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_

    def score_entry(self, entry: PoolEntry) -> float:
        check_is_fitted(self, "model_")
        return hybrid_score(self.model_, entry)
