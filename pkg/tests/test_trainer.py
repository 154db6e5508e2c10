import numpy as np
import pytest

from gpnas import data, forward, trainer
from gpnas.arch import LayerGraph, LayerNode
from gpnas.errors import DivergedLoss


def linear_readout_graph(dim, num_classes=2):
    """input -> gap (identity on 1x1 spatial) -> dense; a convex toy."""
    nodes = (
        LayerNode("in", "input", out_channels=dim),
        LayerNode("gap", "gap", ("in",), in_channels=dim, out_channels=dim),
        LayerNode("readout", "dense", ("gap",), in_channels=dim,
                  out_channels=num_classes, bias=True),
    )
    return LayerGraph(nodes, (1, 1, dim), num_classes, "gap", "readout")


def separable_pool(n, dim, rng):
    labels = rng.permutation(np.arange(n) % 2)
    x = rng.standard_normal((n, dim)) + 6.0 * (2 * labels[:, None] - 1)
    return data.LabeledSet(x, labels)


class TestTrain:
    def test_zero_lr_changes_only_bn_stats(self, desk_graph):
        rng = np.random.default_rng(0)
        pool = data.LabeledSet(rng.standard_normal((32, 4, 4, 2)),
                               rng.integers(0, 3, 32))
        init_cfg = forward.InitConfig(seed=1)
        before = forward.init_params(desk_graph, init_cfg)
        cfg = trainer.TrainConfig(epochs=1, batch_size=8, learning_rate=0.0)
        after = trainer.train(desk_graph, init_cfg, pool, cfg)
        for key, val in before.items():
            if key.endswith((".mean", ".var")):
                assert not np.array_equal(after[key], val), key
            else:
                assert np.array_equal(after[key], val), key

    def test_convex_toy_reaches_full_accuracy(self):
        rng = np.random.default_rng(1)
        pool = separable_pool(64, 4, rng)
        graph = linear_readout_graph(4)
        cfg = trainer.TrainConfig(epochs=100, batch_size=16, learning_rate=0.5,
                                  seed=2)
        theta = trainer.train(graph, forward.InitConfig(seed=3), pool, cfg)
        assert trainer.evaluate_accuracy(graph, theta, pool) == 1.0

    def test_bitwise_deterministic(self, desk_graph):
        rng = np.random.default_rng(4)
        pool = data.LabeledSet(rng.standard_normal((24, 4, 4, 2)),
                               rng.integers(0, 3, 24))
        init_cfg = forward.InitConfig(seed=5)
        cfg = trainer.TrainConfig(epochs=2, batch_size=8, learning_rate=0.05,
                                  seed=6)
        a = trainer.train(desk_graph, init_cfg, pool, cfg)
        b = trainer.train(desk_graph, init_cfg, pool, cfg)
        for key in a:
            assert np.array_equal(a[key], b[key]), key

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged_loss_raises(self, desk_graph):
        rng = np.random.default_rng(7)
        pool = data.LabeledSet(rng.standard_normal((32, 4, 4, 2)) * 10,
                               rng.integers(0, 3, 32))
        cfg = trainer.TrainConfig(epochs=5, batch_size=8, learning_rate=1e9)
        with pytest.raises(DivergedLoss):
            trainer.train(desk_graph, forward.InitConfig(seed=8), pool, cfg)

    def test_loss_decreases_on_average(self, desk_graph):
        rng = np.random.default_rng(9)
        labels = rng.permutation(np.arange(48) % 3)
        x = rng.standard_normal((48, 4, 4, 2)) + labels[:, None, None, None]
        pool = data.LabeledSet(x, labels)
        init_cfg = forward.InitConfig(seed=10)
        params = forward.init_params(desk_graph, init_cfg)
        loss0, _, _ = trainer.loss_and_grads(desk_graph, params, x, labels, 0.997)
        cfg = trainer.TrainConfig(epochs=4, batch_size=16, learning_rate=0.05,
                                  seed=11)
        theta = trainer.train(desk_graph, init_cfg, pool, cfg)
        loss1, _, _ = trainer.loss_and_grads(desk_graph, theta, x, labels, 0.997)
        assert loss1 < loss0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            trainer.TrainConfig(epochs=0)


class TestCosineDecay:
    def test_endpoints(self):
        assert trainer.cosine_lr(0.1, 0, 100) == pytest.approx(0.1)
        assert trainer.cosine_lr(0.1, 100, 100) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_decreasing(self):
        values = [trainer.cosine_lr(0.1, s, 50) for s in range(51)]
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestEvaluate:
    def test_self_consistent_labels_give_one(self, desk_graph, warmed_desk_params):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((20, 4, 4, 2))
        logits = forward.forward_logits(desk_graph, warmed_desk_params, x)
        pool = data.LabeledSet(x, np.argmax(logits, axis=1))
        assert trainer.evaluate_accuracy(desk_graph, warmed_desk_params, pool) == 1.0

    def test_random_labels_near_chance(self):
        rng = np.random.default_rng(13)
        graph = linear_readout_graph(8, num_classes=10)
        params = forward.init_params(graph, forward.InitConfig(seed=14))
        pool = data.LabeledSet(rng.standard_normal((2000, 8)),
                               rng.integers(0, 10, 2000))
        acc = trainer.evaluate_accuracy(graph, params, pool)
        assert abs(acc - 0.1) < 0.03  # ~3 binomial sigma

    def test_batch_size_invariance(self, desk_graph, warmed_desk_params):
        rng = np.random.default_rng(15)
        pool = data.LabeledSet(rng.standard_normal((50, 4, 4, 2)),
                               rng.integers(0, 3, 50))
        a = trainer.evaluate_accuracy(desk_graph, warmed_desk_params, pool,
                                      batch_size=7)
        b = trainer.evaluate_accuracy(desk_graph, warmed_desk_params, pool,
                                      batch_size=50)
        assert a == b


class TestCheckpoint:
    def test_trained_params_share_dump_layout(self, desk_graph, tmp_path):
        rng = np.random.default_rng(16)
        pool = data.LabeledSet(rng.standard_normal((16, 4, 4, 2)),
                               rng.integers(0, 3, 16))
        cfg = trainer.TrainConfig(epochs=1, batch_size=8, learning_rate=0.05)
        theta = trainer.train(desk_graph, forward.InitConfig(seed=17), pool, cfg)
        path = str(tmp_path / "trained.npz")
        forward.save_params(path, theta)
        back = forward.load_params(path)
        assert back.keys() == theta.keys()
        for key in theta:
            assert np.array_equal(back[key], theta[key])
