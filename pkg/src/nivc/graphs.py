"""Network architectures as explicit op graphs, plus weight storage.

A NetworkGraph is an ordered list of nodes (conv / relu / concat /
residual_add_input / fully_connected) whose inputs refer to earlier nodes or
to the graph input.  Weights live separately in a WeightStore so the same
graph can be evaluated with different parameter sets (per-QP model banks).

The weight file format ("NNWT") is bit-exact: save followed by load
reproduces every 32-bit float identically.
"""

import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    MissingModelError,
    ShapeMismatchError,
    TruncatedFileError,
    VersionMismatchError,
    WeightShapeError,
)
from .tensor import ALLOWED_KERNEL_SIZES, ConvKernel, add, concat_channels, conv2d_same, relu

INPUT = "input"

# (low, high, nominal training QP); bands are disjoint and cover 0..51
QP_BANDS = ((0, 24, 22), (25, 29, 27), (30, 34, 32), (35, 51, 37))
BAND_QPS = tuple(b[2] for b in QP_BANDS)

WEIGHT_MAGIC = b"NNWT"
WEIGHT_VERSION = 1


@dataclass(frozen=True)
class Node:
    """One graph op.  in_ch/out_ch double as in/out features for fc nodes."""

    id: str
    kind: str
    inputs: tuple
    in_ch: int = 0
    out_ch: int = 0
    kh: int = 0
    kw: int = 0

    @property
    def weighted(self):
        return self.kind in ("conv", "fully_connected")

    def weight_shape(self):
        if self.kind == "conv":
            return (self.out_ch, self.in_ch, self.kh, self.kw)
        if self.kind == "fully_connected":
            return (self.out_ch, self.in_ch)
        return None


@dataclass
class NetworkGraph:
    """Acyclic op graph in topological order; the last node is the output."""

    name: str
    input_channels: int
    nodes: list
    input_size: tuple = None  # (h, w) when the net only accepts one size

    def __post_init__(self):
        channels = {INPUT: self.input_channels}
        residuals = 0
        for node in self.nodes:
            if node.id in channels:
                raise ShapeMismatchError(f"duplicate node id {node.id!r}")
            for src in node.inputs:
                if src not in channels:
                    raise ShapeMismatchError(f"node {node.id!r} consumes unknown producer {src!r}")
            if node.kind == "conv":
                if node.kh not in ALLOWED_KERNEL_SIZES or node.kw not in ALLOWED_KERNEL_SIZES:
                    raise ShapeMismatchError(f"node {node.id!r}: kernel {node.kh}x{node.kw} not allowed")
                if channels[node.inputs[0]] != node.in_ch:
                    raise ShapeMismatchError(
                        f"node {node.id!r} expects {node.in_ch} channels, producer has "
                        f"{channels[node.inputs[0]]}")
                channels[node.id] = node.out_ch
            elif node.kind == "relu":
                channels[node.id] = channels[node.inputs[0]]
            elif node.kind == "concat":
                channels[node.id] = sum(channels[i] for i in node.inputs)
            elif node.kind == "residual_add_input":
                residuals += 1
                if channels[node.inputs[0]] != self.input_channels:
                    raise ShapeMismatchError(
                        f"residual node {node.id!r} input has {channels[node.inputs[0]]} channels, "
                        f"graph input has {self.input_channels}")
                channels[node.id] = self.input_channels
            elif node.kind == "fully_connected":
                channels[node.id] = node.out_ch
            else:
                raise ShapeMismatchError(f"unknown node kind {node.kind!r}")
        if residuals > 1:
            raise ShapeMismatchError(f"graph {self.name!r} has {residuals} residual nodes, at most 1 allowed")
        self._channels = channels

    @property
    def output_id(self):
        return self.nodes[-1].id

    @property
    def output_channels(self):
        return self._channels[self.output_id]

    def channels_of(self, node_id):
        return self._channels[node_id]

    def weighted_nodes(self):
        return [n for n in self.nodes if n.weighted]


@dataclass
class WeightStore:
    """node id -> (weights, bias) arrays, tagged with the architecture name."""

    tag: str = ""
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, node_id):
        try:
            return self.tensors[node_id]
        except KeyError:
            raise MissingModelError(f"no weights stored for node {node_id!r}") from None

    def __setitem__(self, node_id, pair):
        self.tensors[node_id] = pair

    def __contains__(self, node_id):
        return node_id in self.tensors

    def validate_for(self, graph):
        """Raise WeightShapeError unless the store exactly covers the graph."""
        wanted = {n.id: n for n in graph.weighted_nodes()}
        for node_id, (w, b) in self.tensors.items():
            node = wanted.pop(node_id, None)
            if node is None:
                raise WeightShapeError(f"store holds weights for unknown node {node_id!r}")
            if tuple(w.shape) != node.weight_shape() or tuple(b.shape) != (node.out_ch,):
                raise WeightShapeError(
                    f"node {node_id!r}: stored shapes {tuple(w.shape)}/{tuple(b.shape)} do not "
                    f"match graph shapes {node.weight_shape()}/({node.out_ch},)")
        if wanted:
            raise WeightShapeError(f"store is missing weights for nodes {sorted(wanted)}")

    def astype(self, dtype):
        out = WeightStore(tag=self.tag)
        for node_id, (w, b) in self.tensors.items():
            out.tensors[node_id] = (w.astype(dtype), b.astype(dtype))
        return out


@dataclass
class ModelBank:
    """Per-QP-band weight stores; bands are disjoint and cover QP 0..51."""

    bands: tuple  # ((low, high, WeightStore), ...)

    def __post_init__(self):
        covered = set()
        for low, high, _ in self.bands:
            span = set(range(low, high + 1))
            if covered & span:
                raise ShapeMismatchError("model bank bands overlap")
            covered |= span
        if covered != set(range(52)):
            raise ShapeMismatchError("model bank bands must cover QP 0..51 exactly")


def make_model_bank(stores):
    """Assemble a ModelBank from {nominal_qp: WeightStore} with the fixed banding."""
    missing = [q for q in BAND_QPS if q not in stores]
    if missing:
        raise MissingModelError(f"bank needs models for QPs {list(BAND_QPS)}, missing {missing}")
    return ModelBank(tuple((lo, hi, stores[q]) for lo, hi, q in QP_BANDS))


def select_model(bank, qp):
    if not 0 <= qp <= 51:
        raise ShapeMismatchError(f"qp {qp} outside 0..51")
    for low, high, store in bank.bands:
        if low <= qp <= high:
            return store
    raise AssertionError("unreachable: bands cover 0..51")


# ---------------------------------------------------------------------------
# builders


def _conv(nodes, nid, src, in_ch, out_ch, kh, kw, activation=True):
    nodes.append(Node(nid, "conv", (src,), in_ch, out_ch, kh, kw))
    if activation:
        nodes.append(Node(nid + "_relu", "relu", (nid,)))
        return nid + "_relu"
    return nid


def build_inception_filter(num_blocks, width_scale=1.0):
    """Residual restoration net: two 3x3/64 stem convs, `num_blocks`
    three-branch blocks (1x1 bottlenecks to 32 maps; one branch bare, one with
    parallel 1x3/3x1, one with a serial 3x3 then parallel 1x3/3x1; outputs
    concatenated to 160 maps), a 3x3 conv back to 1 map, and an input add.

    width_scale shrinks the 64/32 map counts for cheap test configurations.
    """
    if num_blocks < 0:
        raise ShapeMismatchError("num_blocks must be >= 0")
    c_pre = max(1, round(64 * width_scale))
    c_br = max(1, round(32 * width_scale))
    nodes = []
    cur = _conv(nodes, "pre1", INPUT, 1, c_pre, 3, 3)
    cur = _conv(nodes, "pre2", "pre1_relu", c_pre, c_pre, 3, 3)
    channels = c_pre
    for i in range(1, num_blocks + 1):
        p = f"b{i}_"
        a = _conv(nodes, p + "a1x1", cur, channels, c_br, 1, 1)
        b0 = _conv(nodes, p + "b1x1", cur, channels, c_br, 1, 1)
        b1 = _conv(nodes, p + "b1x3", b0, c_br, c_br, 1, 3)
        b2 = _conv(nodes, p + "b3x1", b0, c_br, c_br, 3, 1)
        nodes.append(Node(p + "bcat", "concat", (b1, b2)))
        c0 = _conv(nodes, p + "c1x1", cur, channels, c_br, 1, 1)
        c1 = _conv(nodes, p + "c3x3", c0, c_br, c_br, 3, 3)
        c2 = _conv(nodes, p + "c1x3", c1, c_br, c_br, 1, 3)
        c3 = _conv(nodes, p + "c3x1", c1, c_br, c_br, 3, 1)
        nodes.append(Node(p + "ccat", "concat", (c2, c3)))
        nodes.append(Node(p + "out", "concat", (a, p + "bcat", p + "ccat")))
        cur = p + "out"
        channels = 5 * c_br
    _conv(nodes, "post", cur, channels, 1, 3, 3, activation=False)
    nodes.append(Node("res", "residual_add_input", ("post",)))
    tag = f"inception{num_blocks}" if width_scale == 1.0 else f"inception{num_blocks}w{width_scale:g}"
    return NetworkGraph(tag, 1, nodes)


def build_vrcnn():
    """Four-layer variable-kernel restoration net with two parallel stages."""
    nodes = []
    _conv(nodes, "l1", INPUT, 1, 64, 5, 5)
    a = _conv(nodes, "l2a", "l1_relu", 64, 16, 5, 5)
    b = _conv(nodes, "l2b", "l1_relu", 64, 32, 3, 3)
    nodes.append(Node("l2cat", "concat", (a, b)))
    a = _conv(nodes, "l3a", "l2cat", 48, 16, 3, 3)
    b = _conv(nodes, "l3b", "l2cat", 48, 32, 1, 1)
    nodes.append(Node("l3cat", "concat", (a, b)))
    _conv(nodes, "l4", "l3cat", 48, 1, 3, 3, activation=False)
    nodes.append(Node("res", "residual_add_input", ("l4",)))
    return NetworkGraph("vrcnn", 1, nodes)


def build_arcnn():
    """Plain four-layer artifact reduction net (9x9/7x7/1x1/5x5, no skip)."""
    nodes = []
    _conv(nodes, "l1", INPUT, 1, 64, 9, 9)
    _conv(nodes, "l2", "l1_relu", 64, 32, 7, 7)
    _conv(nodes, "l3", "l2_relu", 32, 16, 1, 1)
    _conv(nodes, "l4", "l3_relu", 16, 1, 5, 5, activation=False)
    return NetworkGraph("arcnn", 1, nodes)


def build_fc_predictor(block_size=32, context_width=4, hidden_sizes=(512, 512)):
    """Fully-connected block predictor fed the flattened L-shaped context
    (the (N+K)x(N+K) square minus the NxN block), emitting N*N samples."""
    n, k = block_size, context_width
    if n not in (4, 8, 16, 32):
        raise ShapeMismatchError(f"block size {n} not supported")
    if k < 1:
        raise ShapeMismatchError("context width must be >= 1")
    in_features = (n + k) ** 2 - n * n
    nodes = []
    cur, cur_f = INPUT, in_features
    for i, hidden in enumerate(hidden_sizes, start=1):
        nodes.append(Node(f"fc{i}", "fully_connected", (cur,), cur_f, hidden))
        nodes.append(Node(f"fc{i}_relu", "relu", (f"fc{i}",)))
        cur, cur_f = f"fc{i}_relu", hidden
    nodes.append(Node("out", "fully_connected", (cur,), cur_f, n * n))
    tag = f"fcpred{n}k{k}h" + "x".join(str(h) for h in hidden_sizes)
    return NetworkGraph(tag, in_features, nodes, input_size=(1, 1))


_INCEPTION_RE = re.compile(r"^inception(\d+)(?:w([0-9.]+))?$")
_FCPRED_RE = re.compile(r"^fcpred(\d+)k(\d+)h([0-9x]+)$")


def graph_from_tag(tag):
    """Rebuild the architecture a weight file declares via its tag."""
    m = _INCEPTION_RE.match(tag)
    if m:
        scale = float(m.group(2)) if m.group(2) else 1.0
        return build_inception_filter(int(m.group(1)), width_scale=scale)
    if tag == "vrcnn":
        return build_vrcnn()
    if tag == "arcnn":
        return build_arcnn()
    m = _FCPRED_RE.match(tag)
    if m:
        hidden = tuple(int(h) for h in m.group(3).split("x"))
        return build_fc_predictor(int(m.group(1)), int(m.group(2)), hidden)
    raise WeightShapeError(f"unknown architecture tag {tag!r}")


# ---------------------------------------------------------------------------
# evaluation


def _fc_forward(x, w, b):
    flat = x.reshape(-1)
    if flat.shape[0] != w.shape[1]:
        raise ShapeMismatchError(f"fc input length {flat.shape[0]} != expected {w.shape[1]}")
    dtype = np.result_type(x.dtype, w.dtype)
    out = w.astype(dtype, copy=False) @ flat.astype(dtype, copy=False) + b.astype(dtype, copy=False)
    return out.reshape(-1, 1, 1)


def forward(graph, store, x, trace=None):
    """Evaluate the graph on one (c, h, w) tensor.

    `trace`, if given, is filled with every node's activation (used by the
    trainer's backward pass).  Evaluation order is the graph's node order, so
    results are deterministic.
    """
    if x.ndim != 3 or x.shape[0] != graph.input_channels:
        raise ShapeMismatchError(
            f"graph {graph.name!r} expects ({graph.input_channels}, h, w) input, got {x.shape}")
    if graph.input_size is not None and x.shape[1:] != graph.input_size:
        raise ShapeMismatchError(
            f"graph {graph.name!r} expects spatial size {graph.input_size}, got {x.shape[1:]}")
    acts = {INPUT: x}
    for node in graph.nodes:
        srcs = [acts[i] for i in node.inputs]
        if node.kind == "conv":
            w, b = store[node.id]
            if tuple(w.shape) != node.weight_shape():
                raise WeightShapeError(
                    f"node {node.id!r}: weights {tuple(w.shape)} != graph {node.weight_shape()}")
            y = conv2d_same(srcs[0], ConvKernel(w, b))
        elif node.kind == "relu":
            y = relu(srcs[0])
        elif node.kind == "concat":
            y = concat_channels(srcs)
        elif node.kind == "residual_add_input":
            y = add(srcs[0], acts[INPUT])
        else:  # fully_connected
            w, b = store[node.id]
            if tuple(w.shape) != node.weight_shape():
                raise WeightShapeError(
                    f"node {node.id!r}: weights {tuple(w.shape)} != graph {node.weight_shape()}")
            y = _fc_forward(srcs[0], w, b)
        acts[node.id] = y
        if trace is not None:
            trace[node.id] = y
    return acts[graph.output_id]


def count_parameters(graph, convention="with_bias"):
    """Total weight elements over conv/fc nodes; biases per `convention`."""
    if convention not in ("with_bias", "without_bias"):
        raise ValueError(f"unknown convention {convention!r}")
    total = 0
    for node in graph.weighted_nodes():
        total += int(np.prod(node.weight_shape()))
        if convention == "with_bias":
            total += node.out_ch
    return total


# ---------------------------------------------------------------------------
# weight file format: little-endian, no padding.
#   "NNWT" | u32 version | u16 tag len + tag | u32 node count |
#   per node: u16 id len + id | u8 rank | u32 dims... | f32 weights... |
#             u32 bias len | f32 bias...


def save_weights(store, graph, path):
    store.validate_for(graph)
    nodes = graph.weighted_nodes()
    tag = (store.tag or graph.name).encode()
    parts = [WEIGHT_MAGIC, struct.pack("<I", WEIGHT_VERSION),
             struct.pack("<H", len(tag)), tag, struct.pack("<I", len(nodes))]
    for node in nodes:
        w, b = store[node.id]
        w32 = np.ascontiguousarray(w, dtype="<f4")
        b32 = np.ascontiguousarray(b, dtype="<f4")
        nid = node.id.encode()
        parts.append(struct.pack("<H", len(nid)))
        parts.append(nid)
        parts.append(struct.pack("<B", w32.ndim))
        parts.append(struct.pack(f"<{w32.ndim}I", *w32.shape))
        parts.append(w32.tobytes())
        parts.append(struct.pack("<I", b32.size))
        parts.append(b32.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.context = "header"

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"weight file truncated while reading {self.context}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_weights(path, graph=None):
    """Read an NNWT file.  With `graph`, shapes are validated against it."""
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read())
    if cur.take(4) != WEIGHT_MAGIC:
        raise BadMagicError(f"{path}: not a weight file (bad magic)")
    version = cur.u32()
    if version != WEIGHT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {WEIGHT_VERSION}")
    tag = cur.take(cur.u16()).decode()
    store = WeightStore(tag=tag)
    for _ in range(cur.u32()):
        cur.context = "node header"
        node_id = cur.take(cur.u16()).decode()
        cur.context = f"layer {node_id!r}"
        rank = cur.u8()
        dims = tuple(cur.u32() for _ in range(rank))
        count = int(np.prod(dims)) if dims else 0
        w = np.frombuffer(cur.take(4 * count), dtype="<f4").reshape(dims)
        b = np.frombuffer(cur.take(4 * cur.u32()), dtype="<f4")
        store[node_id] = (w.copy(), b.copy())
    if graph is not None:
        store.validate_for(graph)
    return store
