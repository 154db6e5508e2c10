import json

import pytest

from gpnas import arch
from gpnas.errors import (
    BadOpLabel,
    ChannelAllocationError,
    DisconnectedCell,
    MalformedDocument,
    MissingInputOrOutput,
    NonUpperTriangular,
)


def doc(matrix, ops):
    return json.dumps({"matrix": matrix, "ops": ops})


class TestParse:
    def test_identity_cell(self):
        cell = arch.parse_arch(doc([[0, 1], [0, 0]], ["input", "output"]))
        assert cell.num_vertices == 2
        assert cell.ops == ("input", "output")

    def test_three_vertex_conv_cell(self):
        cell = arch.parse_arch(doc([[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                                   ["input", "conv3x3-bn-relu", "output"]))
        assert cell.num_edges == 2

    def test_lower_triangular_entry_rejected(self):
        with pytest.raises(NonUpperTriangular):
            arch.parse_arch(doc([[0, 1], [1, 0]], ["input", "output"]))

    def test_diagonal_entry_rejected(self):
        with pytest.raises(NonUpperTriangular):
            arch.parse_arch(doc([[1, 1], [0, 0]], ["input", "output"]))

    def test_bad_json(self):
        with pytest.raises(MalformedDocument):
            arch.parse_arch("{not json")

    def test_missing_fields(self):
        with pytest.raises(MalformedDocument):
            arch.parse_arch(json.dumps({"matrix": [[0]]}))

    def test_non_binary_entry(self):
        with pytest.raises(MalformedDocument):
            arch.parse_arch(doc([[0, 2], [0, 0]], ["input", "output"]))

    def test_bad_op_label(self):
        with pytest.raises(BadOpLabel):
            arch.parse_arch(doc([[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                                ["input", "conv5x5", "output"]))

    def test_missing_output(self):
        with pytest.raises(MissingInputOrOutput):
            arch.parse_arch(doc([[0, 1], [0, 0]], ["input", "maxpool3x3"]))

    def test_duplicate_input(self):
        with pytest.raises(MissingInputOrOutput):
            arch.parse_arch(doc([[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                                ["input", "input", "output"]))

    def test_batch_parsing(self):
        text = "\n".join([doc([[0, 1], [0, 0]], ["input", "output"])] * 3)
        assert len(arch.parse_arch_batch(text)) == 3


class TestPrune:
    def test_dead_vertex_removed(self):
        # v1 has no outgoing edge; input reaches output directly
        cell = arch.make_cell(
            [[0, 1, 1], [0, 0, 0], [0, 0, 0]],
            ["input", "conv3x3-bn-relu", "output"])
        assert cell.num_vertices == 2
        assert cell.ops == ("input", "output")

    def test_connected_cell_unchanged(self, conv_cell):
        assert arch.prune_cell(conv_cell) == conv_cell

    def test_idempotent(self):
        raw = arch.CellSpec(((0, 1, 1), (0, 0, 0), (0, 0, 0)),
                            ("input", "conv3x3-bn-relu", "output"))
        once = arch.prune_cell(raw)
        assert arch.prune_cell(once) == once

    def test_disconnected_raises(self):
        # only internal vertex unreachable from input, output has no other in-edge
        with pytest.raises(DisconnectedCell):
            arch.make_cell([[0, 0, 0], [0, 0, 1], [0, 0, 0]],
                           ["input", "maxpool3x3", "output"])

    def test_no_edges_at_all(self):
        with pytest.raises(DisconnectedCell):
            arch.make_cell([[0, 0], [0, 0]], ["input", "output"])


class TestAssembly:
    def test_paper_default_feature_dim(self, identity_cell):
        graph = arch.assemble_network(identity_cell, arch.NetworkPlan())
        assert graph.feature_dim == 512  # 128 * 2 * 2

    def test_small_stem_feature_dim(self, identity_cell):
        plan = arch.NetworkPlan(stem_channels=16, num_blocks=3,
                                cells_per_block=3, input_shape=(8, 8, 1))
        assert arch.assemble_network(identity_cell, plan).feature_dim == 64

    @pytest.mark.parametrize("stem,blocks", [(4, 1), (8, 2), (16, 3), (6, 4)])
    def test_feature_dim_formula(self, identity_cell, stem, blocks):
        plan = arch.NetworkPlan(stem_channels=stem, num_blocks=blocks,
                                cells_per_block=1, input_shape=(8, 8, 1))
        graph = arch.assemble_network(identity_cell, plan)
        assert graph.feature_dim == stem * 2 ** (blocks - 1)

    def test_conv_cell_layer_count(self, conv_cell):
        # stem conv + 9 cell convs + 2 downsample convs, counted by walking
        plan = arch.NetworkPlan(stem_channels=16, num_blocks=3,
                                cells_per_block=3, input_shape=(8, 8, 1))
        graph = arch.assemble_network(conv_cell, plan)
        convs = [n for n in graph.nodes if n.kind == "conv"]
        pools = [n for n in graph.nodes if n.kind == "maxpool"]
        assert len(convs) == 1 + 9 + 2
        assert len(pools) == 2  # downsamples only; this cell has no pooling op
        assert [n.kind for n in graph.nodes[-2:]] == ["gap", "dense"]

    def test_assembly_pure(self, conv_cell, desk_plan):
        a = arch.assemble_network(conv_cell, desk_plan)
        b = arch.assemble_network(conv_cell, desk_plan)
        assert a == b

    def test_channel_budget_exceeded(self):
        # 3 branches into output but only 2 channels
        ops = ["input"] + ["conv1x1-bn-relu"] * 3 + ["output"]
        matrix = [[0, 1, 1, 1, 0],
                  [0, 0, 0, 0, 1],
                  [0, 0, 0, 0, 1],
                  [0, 0, 0, 0, 1],
                  [0, 0, 0, 0, 0]]
        cell = arch.make_cell(matrix, ops)
        plan = arch.NetworkPlan(stem_channels=2, num_blocks=1,
                                cells_per_block=1, input_shape=(4, 4, 1))
        with pytest.raises(ChannelAllocationError):
            arch.assemble_network(cell, plan)

    def test_branch_shares_even_split(self):
        assert arch._branch_shares(10, 3) == [4, 3, 3]
        assert arch._branch_shares(9, 3) == [3, 3, 3]

    def test_concat_channels_sum_to_budget(self):
        # diamond: input -> (conv, maxpool) -> output
        cell = arch.make_cell(
            [[0, 1, 1, 0], [0, 0, 0, 1], [0, 0, 0, 1], [0, 0, 0, 0]],
            ["input", "conv3x3-bn-relu", "maxpool3x3", "output"])
        plan = arch.NetworkPlan(stem_channels=9, num_blocks=1,
                                cells_per_block=1, input_shape=(4, 4, 1))
        graph = arch.assemble_network(cell, plan)
        shapes = arch.propagate_shapes(graph)
        assert shapes[graph.feature_node][2] == 9


class TestSampling:
    def test_deterministic(self):
        assert arch.sample_random_arch(0) == arch.sample_random_arch(0)

    def test_exhaustion_raises(self):
        from gpnas.errors import SamplingExhausted
        # the only valid 2-vertex cell needs one edge; cap at zero edges
        with pytest.raises(SamplingExhausted):
            arch.sample_random_arch(0, max_vertices=2, max_edges=0,
                                    max_tries=50)

    def test_two_vertices_always_identity(self):
        for seed in range(20):
            cell = arch.sample_random_arch(seed, max_vertices=2)
            assert cell.matrix == ((0, 1), (0, 0))

    def test_samples_all_valid(self, desk_plan):
        for seed in range(1000):
            cell = arch.sample_random_arch(seed, max_vertices=5)
            assert arch.prune_cell(cell) == cell
            assert cell.ops[0] == "input" and cell.ops[-1] == "output"
            assert cell.num_edges <= 9

    def test_edge_cap_respected(self):
        for seed in range(200):
            cell = arch.sample_random_arch(seed, max_vertices=7, max_edges=5)
            assert cell.num_edges <= 5

    def test_assemblable(self, desk_plan):
        rng_seeds = range(100)
        for seed in rng_seeds:
            cell = arch.sample_random_arch(seed, max_vertices=6)
            graph = arch.assemble_network(cell, desk_plan)
            assert graph.feature_dim == desk_plan.feature_dim


class TestShapes:
    def test_downsampling_halves_spatial(self, identity_cell):
        plan = arch.NetworkPlan(stem_channels=4, num_blocks=3,
                                cells_per_block=1, input_shape=(8, 8, 1))
        graph = arch.assemble_network(identity_cell, plan)
        shapes = arch.propagate_shapes(graph)
        assert shapes["ds1/maxpool"][:2] == (4, 4)
        assert shapes["ds2/maxpool"][:2] == (2, 2)
        assert shapes[graph.feature_node] == (1, 1, 16)

    def test_odd_sizes_ceil(self, identity_cell):
        plan = arch.NetworkPlan(stem_channels=4, num_blocks=2,
                                cells_per_block=1, input_shape=(1, 10, 1))
        graph = arch.assemble_network(identity_cell, plan)
        shapes = arch.propagate_shapes(graph)
        assert shapes["ds1/maxpool"][:2] == (1, 5)
