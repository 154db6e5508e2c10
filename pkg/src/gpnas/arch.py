"""Cell-based architecture descriptions and network assembly.

A candidate architecture is a labelled DAG ("cell"): a strictly
upper-triangular binary adjacency matrix plus one operation label per
vertex. Cells are stacked into blocks behind a convolutional stem, with a
downsampling layer between blocks, global average pooling and a dense
readout on top. Assembly produces a flat, topologically ordered layer
graph that the forward engine, trainer and cost model all consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadOpLabel,
    ChannelAllocationError,
    DisconnectedCell,
    MalformedDocument,
    MissingInputOrOutput,
    NonUpperTriangular,
    SamplingExhausted,
)

INPUT = "input"
OUTPUT = "output"
CONV3X3 = "conv3x3-bn-relu"
CONV1X1 = "conv1x1-bn-relu"
MAXPOOL3X3 = "maxpool3x3"

INTERNAL_OPS = (CONV3X3, CONV1X1, MAXPOOL3X3)
ALL_OPS = (INPUT, OUTPUT) + INTERNAL_OPS

# Search-space caps (configurable at the sampler).
DEFAULT_MAX_VERTICES = 7
DEFAULT_MAX_EDGES = 9


@dataclass(frozen=True)
class CellSpec:
    """Validated cell: adjacency matrix rows flow source -> destination."""

    matrix: tuple[tuple[int, ...], ...]
    ops: tuple[str, ...]

    @property
    def num_vertices(self) -> int:
        return len(self.ops)

    @property
    def num_edges(self) -> int:
        return sum(sum(row) for row in self.matrix)

    def in_edges(self, v: int) -> list[int]:
        return [u for u in range(v) if self.matrix[u][v]]

    def out_edges(self, u: int) -> list[int]:
        return [v for v in range(u + 1, self.num_vertices) if self.matrix[u][v]]

    def to_json(self) -> str:
        return json.dumps({"matrix": [list(r) for r in self.matrix], "ops": list(self.ops)})


def _check_structure(matrix, ops) -> None:
    v = len(ops)
    if len(matrix) != v or any(len(row) != v for row in matrix):
        raise MalformedDocument(f"matrix must be {v}x{v} to match ops")
    for i, row in enumerate(matrix):
        for j, entry in enumerate(row):
            if entry not in (0, 1):
                raise MalformedDocument(f"matrix[{i}][{j}]={entry!r} is not 0/1")
            if entry and j <= i:
                raise NonUpperTriangular(f"edge {i}->{j} set on or below the diagonal")
    for op in ops:
        if op not in ALL_OPS:
            raise BadOpLabel(f"unknown op label {op!r}")
    if v < 2 or ops[0] != INPUT or ops[-1] != OUTPUT:
        raise MissingInputOrOutput("ops must start with input and end with output")
    if ops.count(INPUT) != 1 or ops.count(OUTPUT) != 1:
        raise MissingInputOrOutput("input/output labels must each appear exactly once")


def make_cell(matrix, ops) -> CellSpec:
    """Validate and prune a (matrix, ops) pair into a canonical CellSpec."""
    matrix = tuple(tuple(int(e) for e in row) for row in matrix)
    ops = tuple(str(o) for o in ops)
    _check_structure(matrix, ops)
    return prune_cell(CellSpec(matrix, ops))


def parse_arch(text: str) -> CellSpec:
    """Parse a JSON architecture document into a validated CellSpec."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "matrix" not in doc or "ops" not in doc:
        raise MalformedDocument("document must be an object with 'matrix' and 'ops'")
    matrix, ops = doc["matrix"], doc["ops"]
    if not isinstance(matrix, list) or not isinstance(ops, list):
        raise MalformedDocument("'matrix' and 'ops' must be lists")
    return make_cell(matrix, ops)


def parse_arch_batch(text: str) -> list[CellSpec]:
    """Parse a newline-delimited batch of architecture documents."""
    return [parse_arch(line) for line in text.splitlines() if line.strip()]


def prune_cell(spec: CellSpec) -> CellSpec:
    """Drop vertices that are not on any input->output path.

    Idempotent; raises DisconnectedCell when input cannot reach output.
    """
    v = spec.num_vertices
    reach_fwd = {0}
    for u in range(v):
        if u in reach_fwd:
            reach_fwd.update(spec.out_edges(u))
    reach_bwd = {v - 1}
    for u in range(v - 1, -1, -1):
        if u in reach_bwd:
            reach_bwd.update(w for w in spec.in_edges(u))
    if (v - 1) not in reach_fwd or 0 not in reach_bwd:
        raise DisconnectedCell("no input->output path")
    keep = sorted(reach_fwd & reach_bwd)
    if len(keep) == v:
        return spec
    matrix = tuple(tuple(spec.matrix[a][b] for b in keep) for a in keep)
    ops = tuple(spec.ops[i] for i in keep)
    return CellSpec(matrix, ops)


def sample_random_arch(
    seed: int,
    max_vertices: int = DEFAULT_MAX_VERTICES,
    max_edges: int = DEFAULT_MAX_EDGES,
    max_tries: int = 10_000,
) -> CellSpec:
    """Draw a uniform random valid cell; deterministic given seed.

    Encodings (vertex count, upper-triangular bits, labels) are drawn
    uniformly and rejected until one passes validation, pruning and the
    edge cap.
    """
    if max_vertices < 2:
        raise ValueError("max_vertices must be >= 2")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        v = int(rng.integers(2, max_vertices + 1))
        matrix = np.triu(rng.integers(0, 2, size=(v, v)), k=1)
        if int(matrix.sum()) > max_edges:
            continue
        ops = [INPUT] + [INTERNAL_OPS[i] for i in rng.integers(0, 3, size=v - 2)] + [OUTPUT]
        try:
            return make_cell(matrix.tolist(), ops)
        except (DisconnectedCell, MissingInputOrOutput):
            continue
    raise SamplingExhausted(f"no valid cell in {max_tries} draws")


@dataclass(frozen=True)
class NetworkPlan:
    """Stack parameters used to grow a cell into a full network."""

    stem_channels: int = 128
    num_blocks: int = 3
    cells_per_block: int = 3
    input_shape: tuple[int, int, int] = (32, 32, 3)
    num_classes: int = 10

    def __post_init__(self):
        if min(self.stem_channels, self.num_blocks, self.cells_per_block) < 1:
            raise ValueError("plan fields must be positive")

    @property
    def feature_dim(self) -> int:
        # Two-fold widening at each of the (num_blocks - 1) downsamples.
        return self.stem_channels * 2 ** (self.num_blocks - 1)


@dataclass(frozen=True)
class LayerNode:
    """One primitive layer in the assembled graph."""

    name: str
    kind: str  # input | conv | bn | relu | maxpool | gap | dense | add | concat
    inputs: tuple[str, ...] = ()
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    in_channels: int = 0
    out_channels: int = 0
    bias: bool = False


@dataclass(frozen=True)
class LayerGraph:
    """Topologically ordered layer list plus bookkeeping for the engines."""

    nodes: tuple[LayerNode, ...]
    input_shape: tuple[int, int, int]
    num_classes: int
    feature_node: str
    output_node: str
    node_index: dict = field(compare=False, hash=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "node_index", {n.name: n for n in self.nodes})

    @property
    def feature_dim(self) -> int:
        return self.node_index[self.feature_node].out_channels

    def node(self, name: str) -> LayerNode:
        return self.node_index[name]


class _GraphBuilder:
    def __init__(self):
        self.nodes: list[LayerNode] = []
        self.names: set[str] = set()

    def add(self, name, kind, inputs=(), kernel=(0, 0), stride=1,
            in_channels=0, out_channels=0, bias=False) -> str:
        if name in self.names:
            raise ValueError(f"duplicate node name {name}")
        self.names.add(name)
        self.nodes.append(LayerNode(name, kind, tuple(inputs), tuple(kernel),
                                    stride, in_channels, out_channels, bias))
        return name

    def conv_bn_relu(self, prefix, src, kernel, cin, cout) -> str:
        c = self.add(f"{prefix}/conv", "conv", (src,), kernel, 1, cin, cout)
        b = self.add(f"{prefix}/bn", "bn", (c,), in_channels=cout, out_channels=cout)
        return self.add(f"{prefix}/relu", "relu", (b,), in_channels=cout, out_channels=cout)

    def projection(self, prefix, src, cin, cout) -> str:
        # Linear 1x1 channel adapter; no bn/relu so it stays a pure reshaping.
        return self.add(f"{prefix}/proj", "conv", (src,), (1, 1), 1, cin, cout)


def _branch_shares(channels: int, n_branches: int) -> list[int]:
    """Split the output channel budget across concat branches, earliest first."""
    if n_branches > channels:
        raise ChannelAllocationError(
            f"{n_branches} branches feed output but the cell has {channels} channels")
    base, rem = divmod(channels, n_branches)
    return [base + (1 if b < rem else 0) for b in range(n_branches)]


def _vertex_channels(spec: CellSpec, channels: int) -> list[int]:
    """Per-vertex output channel counts under the even-split convention."""
    v = spec.num_vertices
    out_branches = spec.in_edges(v - 1)
    shares = dict(zip(out_branches, _branch_shares(channels, len(out_branches))))
    counts = [0] * v
    counts[0] = channels
    counts[v - 1] = channels
    for u in range(v - 2, 0, -1):
        if u in shares:
            counts[u] = shares[u]
        else:
            counts[u] = max(counts[w] for w in spec.out_edges(u))
    return counts


def _build_cell(builder: _GraphBuilder, spec: CellSpec, prefix: str,
                src: str, channels: int) -> str:
    """Emit one cell mapping `channels` -> `channels`; returns output node name."""
    v = spec.num_vertices
    counts = _vertex_channels(spec, channels)
    tensor = [None] * v
    tensor[0] = src
    for t in range(1, v - 1):
        fan_in = []
        for u in spec.in_edges(t):
            s = tensor[u]
            if counts[u] != counts[t]:
                s = builder.projection(f"{prefix}/v{t}/from{u}", s, counts[u], counts[t])
            fan_in.append(s)
        if len(fan_in) > 1:
            joined = builder.add(f"{prefix}/v{t}/add", "add", tuple(fan_in),
                                 in_channels=counts[t], out_channels=counts[t])
        else:
            joined = fan_in[0]
        op = spec.ops[t]
        if op == CONV3X3:
            tensor[t] = builder.conv_bn_relu(f"{prefix}/v{t}", joined, (3, 3), counts[t], counts[t])
        elif op == CONV1X1:
            tensor[t] = builder.conv_bn_relu(f"{prefix}/v{t}", joined, (1, 1), counts[t], counts[t])
        elif op == MAXPOOL3X3:
            tensor[t] = builder.add(f"{prefix}/v{t}/maxpool", "maxpool", (joined,),
                                    (3, 3), 1, counts[t], counts[t])
        else:  # unreachable for validated specs
            raise BadOpLabel(op)
    branches = spec.in_edges(v - 1)
    shares = _branch_shares(channels, len(branches))
    concat_in = []
    for u, share in zip(branches, shares):
        s = tensor[u]
        if counts[u] != share:
            s = builder.projection(f"{prefix}/out/from{u}", s, counts[u], share)
        concat_in.append(s)
    if len(concat_in) == 1:
        return concat_in[0]
    return builder.add(f"{prefix}/out/concat", "concat", tuple(concat_in),
                       in_channels=channels, out_channels=channels)


def assemble_network(spec: CellSpec, plan: NetworkPlan) -> LayerGraph:
    """Grow a pruned cell into the full layer graph.

    Structure: 3x3 stem conv (+bn+relu) -> `num_blocks` blocks of
    `cells_per_block` cells -> between blocks a downsample (2x2/stride-2
    max-pool, then channel-doubling 1x1 conv + bn) -> global average
    pooling -> dense readout. Pure function of its arguments.
    """
    b = _GraphBuilder()
    cur = b.add("in", "input", out_channels=plan.input_shape[2])
    channels = plan.stem_channels
    cur = b.conv_bn_relu("stem", cur, (3, 3), plan.input_shape[2], channels)
    for block in range(plan.num_blocks):
        if block > 0:
            cur = b.add(f"ds{block}/maxpool", "maxpool", (cur,), (2, 2), 2,
                        in_channels=channels, out_channels=channels)
            cur = b.add(f"ds{block}/conv", "conv", (cur,), (1, 1), 1,
                        in_channels=channels, out_channels=2 * channels)
            channels *= 2
            cur = b.add(f"ds{block}/bn", "bn", (cur,), in_channels=channels,
                        out_channels=channels)
        for cell_i in range(plan.cells_per_block):
            cur = _build_cell(b, spec, f"b{block}c{cell_i}", cur, channels)
    feat = b.add("gap", "gap", (cur,), in_channels=channels, out_channels=channels)
    out = b.add("readout", "dense", (feat,), in_channels=channels,
                out_channels=plan.num_classes, bias=True)
    return LayerGraph(tuple(b.nodes), plan.input_shape, plan.num_classes, feat, out)


def propagate_shapes(graph: LayerGraph) -> dict[str, tuple[int, int, int]]:
    """Spatial/channel shape of every node's output, (H, W, C); dense is (1, 1, L)."""
    h, w, c = graph.input_shape
    shapes: dict[str, tuple[int, int, int]] = {}
    for node in graph.nodes:
        if node.kind == "input":
            shapes[node.name] = (h, w, c)
        elif node.kind in ("conv", "maxpool"):
            ih, iw, _ = shapes[node.inputs[0]]
            oh = -(-ih // node.stride)  # SAME padding: ceil division
            ow = -(-iw // node.stride)
            shapes[node.name] = (oh, ow, node.out_channels)
        elif node.kind in ("bn", "relu", "add"):
            shapes[node.name] = shapes[node.inputs[0]]
        elif node.kind == "concat":
            ih, iw, _ = shapes[node.inputs[0]]
            shapes[node.name] = (ih, iw, sum(shapes[s][2] for s in node.inputs))
        elif node.kind == "gap":
            _, _, ic = shapes[node.inputs[0]]
            shapes[node.name] = (1, 1, ic)
        elif node.kind == "dense":
            shapes[node.name] = (1, 1, node.out_channels)
        else:
            raise ValueError(f"unknown node kind {node.kind}")
    return shapes
