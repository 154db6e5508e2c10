import numpy as np
import pytest

from gpnas import arch, data, forward


@pytest.fixture(scope="session")
def identity_cell():
    return arch.make_cell([[0, 1], [0, 0]], ["input", "output"])


@pytest.fixture(scope="session")
def conv_cell():
    return arch.make_cell([[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                          ["input", "conv3x3-bn-relu", "output"])


@pytest.fixture(scope="session")
def desk_plan():
    return arch.NetworkPlan(stem_channels=8, num_blocks=2, cells_per_block=1,
                            input_shape=(4, 4, 2), num_classes=3)


@pytest.fixture(scope="session")
def desk_graph(conv_cell, desk_plan):
    return arch.assemble_network(conv_cell, desk_plan)


@pytest.fixture(scope="session")
def two_gaussian_split():
    """Well-separated 10-dim two-class split (Bayes rate ~ Phi(2))."""
    pool = data.make_synthetic(2, 10, 700, 4.0, seed=11)
    train_pool, val_pool = data.split_pools(pool, 1000, seed=12)
    return data.make_split(train_pool, val_pool, n_d=100, n_val=200, seed=13)


@pytest.fixture
def warmed_desk_params(desk_graph):
    cfg = forward.InitConfig(seed=5, bn_warmup_batch=16)
    params = forward.init_params(desk_graph, cfg)
    warm = np.random.default_rng(6).standard_normal((16, 4, 4, 2))
    return forward.warmup_batchnorm(desk_graph, params, warm, cfg.bn_momentum)
