import numpy as np
import pytest

from gpnas import arch, cost
from gpnas.arch import LayerGraph, LayerNode


def dense_only_graph(d_in, d_out, bias):
    nodes = (
        LayerNode("in", "input", out_channels=d_in),
        LayerNode("gap", "gap", ("in",), in_channels=d_in, out_channels=d_in),
        LayerNode("readout", "dense", ("gap",), in_channels=d_in,
                  out_channels=d_out, bias=bias),
    )
    return LayerGraph(nodes, (1, 1, d_in), d_out, "gap", "readout")


def naive_conv_flops(h, w, cin, cout, kh, kw):
    """Count scalar multiplies and adds of a literal convolution loop nest."""
    count = 0
    for _ in range(h * w):
        for _ in range(cout):
            count += 2 * kh * kw * cin  # mult + accumulate per tap
    return count


class TestInferenceFlops:
    def test_dense_layer_no_bias(self):
        graph = dense_only_graph(32, 10, bias=False)
        # gap on 1x1 spatial contributes 1 flop per channel (the divide)
        assert cost.count_inference_flops(graph) == 2 * 32 * 10 + 32

    def test_conv_formula_and_naive_oracle(self):
        nodes = (
            LayerNode("in", "input", out_channels=16),
            LayerNode("c", "conv", ("in",), (3, 3), 1, 16, 16),
            LayerNode("gap", "gap", ("c",), in_channels=16, out_channels=16),
            LayerNode("readout", "dense", ("gap",), in_channels=16,
                      out_channels=2, bias=False),
        )
        graph = LayerGraph(nodes, (8, 8, 16), 2, "gap", "readout")
        total = cost.count_inference_flops(graph)
        conv_part = total - (8 * 8) * 16 - 2 * 16 * 2  # remove gap + dense
        assert conv_part == 2 * 9 * 16 * 16 * 64 == 294_912
        assert conv_part == naive_conv_flops(8, 8, 16, 16, 3, 3)

    def test_population_scale_sanity(self):
        # paper-default plan over random cells lands in the GFLOPs range
        rng_seeds = range(8)
        plan = arch.NetworkPlan()  # stem 128, 3 blocks of 3 cells, 32x32x3
        values = []
        for seed in rng_seeds:
            cell = arch.sample_random_arch(seed)
            values.append(cost.count_inference_flops(
                arch.assemble_network(cell, plan)))
        mean = np.mean(values)
        assert 1e8 < mean < 1e11  # order-consistent with a few GFLOPs


class TestNngpFlops:
    def test_zero_ensemble_zero_grid(self):
        assert cost.nngp_flops(1e9, 512, 0, 100, 500, 10, 0) == 0.0

    def test_doubling_ensemble_doubles_kernel_eval(self):
        a, _ = cost.nngp_flops_split(2.51e9, 512, 8, 8000, 10000, 10, 20)
        b, _ = cost.nngp_flops_split(2.51e9, 512, 16, 8000, 10000, 10, 20)
        assert b == 2 * a

    def test_frozen_paper_scale_value(self):
        # direct transcription of the total-cost formula, frozen once
        f_a, d, n, n_d, n_val, labels, r = 2.51e9, 512, 8, 8000, 10000, 10, 20
        n_dv = n_d + n_val
        direct = (n * f_a * n_dv + r * n_d ** 3 / 3.0
                  + 2.0 * (d * n + 2 * labels * r) * n_d * n_dv)
        got = cost.nngp_flops(f_a, d, n, n_d, n_val, labels, r)
        assert got == direct
        assert got == pytest.approx(366148181333333.3, rel=1e-12)

    def test_split_identity(self):
        # the two-term decomposition always sums to the total expression
        rng = np.random.default_rng(0)
        for _ in range(500):
            f_a = float(rng.integers(1, 10**10))
            d = int(rng.integers(1, 4096))
            n = int(rng.integers(1, 64))
            n_d = int(rng.integers(1, 8000))
            n_val = int(rng.integers(1, 10000))
            labels = int(rng.integers(2, 1001))
            r = int(rng.integers(1, 40))
            kernel_eval, gp_inf = cost.nngp_flops_split(f_a, d, n, n_d, n_val,
                                                        labels, r)
            total = cost.nngp_flops(f_a, d, n, n_d, n_val, labels, r)
            assert total == kernel_eval + gp_inf

    def test_monotone_in_every_argument(self):
        base = (2.51e9, 512, 8, 1000, 2000, 10, 20)
        base_val = cost.nngp_flops(*base)
        for i in range(len(base)):
            bumped = list(base)
            bumped[i] = bumped[i] * 2
            assert cost.nngp_flops(*bumped) >= base_val


class TestTrainingFlops:
    def test_zero_epochs_is_validation_only(self):
        assert cost.training_flops(1e9, 0, 40000, 10000) == 1e9 * 10000

    def test_epoch_linearity(self):
        t4 = cost.training_flops(1e9, 4, 40000, 0)
        t12 = cost.training_flops(1e9, 12, 40000, 0)
        assert t12 == 3 * t4

    def test_cifar_scale_value(self):
        got = cost.training_flops(2.51e9, 12, 40000, 10000)
        assert got == 2.0 * 12 * 2.51e9 * 40000 + 2.51e9 * 10000

    def test_monotone(self):
        assert cost.training_flops(2e9, 4, 100, 10) > \
            cost.training_flops(1e9, 4, 100, 10)
        assert cost.training_flops(1e9, 8, 100, 10) > \
            cost.training_flops(1e9, 4, 100, 10)


class TestParams:
    def test_dense_with_bias(self):
        graph = dense_only_graph(32, 10, bias=True)
        assert cost.count_params(graph) == 32 * 10 + 10

    def test_identity_cell_paper_defaults_hand_count(self, identity_cell):
        # stem conv 3*3*3*128 + stem bn 2*128
        # ds1 conv 128*256 + bn 2*256; ds2 conv 256*512 + bn 2*512
        # readout 512*10 + 10; identity cells carry nothing
        graph = arch.assemble_network(identity_cell, arch.NetworkPlan())
        expect = (3456 + 256) + (32768 + 512) + (131072 + 1024) + 5130
        assert cost.count_params(graph) == expect == 174_218

    def test_doubling_stem_roughly_quadruples_conv_params(self, conv_cell):
        def conv_params(stem):
            plan = arch.NetworkPlan(stem_channels=stem, num_blocks=3,
                                    cells_per_block=3, input_shape=(8, 8, 1))
            graph = arch.assemble_network(conv_cell, plan)
            return sum((n.kernel[0] * n.kernel[1] * n.in_channels
                        * n.out_channels)
                       for n in graph.nodes if n.kind == "conv")

        ratio = conv_params(32) / conv_params(16)
        assert 3.4 < ratio <= 4.0


class TestBreakdown:
    def test_total_is_sum(self, desk_graph):
        bd = cost.cost_breakdown(desk_graph, n_ensemble=4, n_d=50, n_val=100,
                                 num_labels=3, reg_grid_size=20, epochs=4,
                                 n_train_all=500, n_val_all=100)
        assert bd.total_nngp_flops == bd.kernel_eval_flops + bd.gp_inference_flops
        assert bd.train_step_flops == 2 * bd.inference_flops
        assert bd.param_count == cost.count_params(desk_graph)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            cost.CostBreakdown(-1, 0, 0, 0, 0, 0)
