"""Desk-scale training for the restoration filter and the block predictor.

Datasets are derived by running the codec itself (filter and neural mode off)
and pairing each reconstructed block with its source block.  Training is
plain mini-batch Adam on the mean-squared error, driven through the tensor
backward ops.  Every path is bit-reproducible under a fixed seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .codec import CodecConfig, encode_frame, gather_context, pad_to_grid
from .errors import ShapeMismatchError, TrainingDivergedError
from .graphs import (
    BAND_QPS,
    INPUT,
    WeightStore,
    build_fc_predictor,
    build_inception_filter,
    forward,
    make_model_bank,
)
from .imageio import Plane, frame_from_luma
from .tensor import ConvKernel, conv2d_backward, relu_backward


@dataclass
class PatchPair:
    degraded: np.ndarray  # float32 (1, n, n) in [0, 1]
    target: np.ndarray    # float32 (1, n, n) in [0, 1]
    qp: int

    def __post_init__(self):
        if self.degraded.shape != self.target.shape:
            raise ShapeMismatchError(
                f"patch pair shapes differ: {self.degraded.shape} vs {self.target.shape}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    steps: int = 500
    seed: int = 0
    num_blocks: int = 2
    channel_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.steps < 0:
            raise ShapeMismatchError("learning rate/batch size must be positive, steps >= 0")


def make_filter_dataset(images, qp, block_size=32):
    """Encode each luma plane at `qp` (no filter, no neural mode) and pair
    every reconstructed block with the matching source block."""
    pairs = []
    cfg = CodecConfig(qp=qp, block_size=block_size)
    for plane in images:
        if plane.width < block_size or plane.height < block_size:
            raise ShapeMismatchError(
                f"image {plane.width}x{plane.height} smaller than one {block_size} block")
        result = encode_frame(frame_from_luma(plane), cfg)
        source = pad_to_grid(plane.samples, block_size)
        recon = pad_to_grid(result.reconstruction.y.samples, block_size)
        for y0 in range(0, source.shape[0], block_size):
            for x0 in range(0, source.shape[1], block_size):
                deg = recon[y0:y0 + block_size, x0:x0 + block_size]
                tgt = source[y0:y0 + block_size, x0:x0 + block_size]
                pairs.append(PatchPair(
                    degraded=deg[None].astype(np.float32) / np.float32(255.0),
                    target=tgt[None].astype(np.float32) / np.float32(255.0),
                    qp=qp))
    return pairs


def mse_loss(output, target):
    """Mean squared error over all elements, with its gradient."""
    if output.shape != target.shape:
        raise ShapeMismatchError(f"mse shapes differ: {output.shape} vs {target.shape}")
    diff = output.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(output.dtype)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return params, state


# ---------------------------------------------------------------------------
# initialization and graph backward


def init_weights(graph, rng, dtype=np.float32):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    store = WeightStore(tag=graph.name)
    for node in graph.weighted_nodes():
        shape = node.weight_shape()
        if node.kind == "conv":
            fan_in = node.in_ch * node.kh * node.kw
            fan_out = node.out_ch * node.kh * node.kw
        else:
            fan_in, fan_out = node.in_ch, node.out_ch
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=shape).astype(dtype)
        store[node.id] = (w, np.zeros(node.out_ch, dtype=dtype))
    return store


def backward_graph(graph, store, x, grad_out, trace):
    """Backpropagate grad_out through a traced forward pass.

    Returns ({node id: (grad_w, grad_b)}, grad wrt the graph input).
    """
    grads = {graph.output_id: grad_out}
    wgrads = {}
    grad_input = np.zeros_like(x)

    def accumulate(node_id, g):
        if node_id == INPUT:
            nonlocal grad_input
            grad_input = grad_input + g
        elif node_id in grads:
            grads[node_id] = grads[node_id] + g
        else:
            grads[node_id] = g

    def activation(node_id):
        return x if node_id == INPUT else trace[node_id]

    for node in reversed(graph.nodes):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.kind == "conv":
            w, b = store[node.id]
            bundle = conv2d_backward(activation(node.inputs[0]), ConvKernel(w, b), g)
            wgrads[node.id] = (bundle.grad_weights, bundle.grad_bias)
            accumulate(node.inputs[0], bundle.grad_input)
        elif node.kind == "relu":
            accumulate(node.inputs[0], relu_backward(activation(node.inputs[0]), g))
        elif node.kind == "concat":
            offset = 0
            for src in node.inputs:
                c = activation(src).shape[0]
                accumulate(src, g[offset:offset + c])
                offset += c
        elif node.kind == "residual_add_input":
            accumulate(node.inputs[0], g)
            accumulate(INPUT, g)
        else:  # fully_connected
            w, _ = store[node.id]
            flat = activation(node.inputs[0]).reshape(-1)
            gv = g.reshape(-1)
            wgrads[node.id] = (np.outer(gv, flat), gv.copy())
            accumulate(node.inputs[0], (w.T @ gv).reshape(activation(node.inputs[0]).shape))
    return wgrads, grad_input


def _loss_and_grads(graph, store, batch_in, batch_target):
    """Average loss and averaged parameter gradients over a mini batch."""
    total_loss = 0.0
    acc = {n.id: None for n in graph.weighted_nodes()}
    for xin, target in zip(batch_in, batch_target):
        trace = {}
        out = forward(graph, store, xin, trace=trace)
        loss, grad = mse_loss(out, target)
        total_loss += loss
        wgrads, _ = backward_graph(graph, store, xin, grad, trace)
        for node_id, (gw, gb) in wgrads.items():
            if acc[node_id] is None:
                acc[node_id] = [gw, gb]
            else:
                acc[node_id][0] += gw
                acc[node_id][1] += gb
    scale = 1.0 / len(batch_in)
    for node_id in acc:
        if acc[node_id] is None:  # node unreachable from the loss
            w, b = store[node_id]
            acc[node_id] = [np.zeros_like(w), np.zeros_like(b)]
        else:
            acc[node_id][0] *= scale
            acc[node_id][1] *= scale
    return total_loss * scale, acc


def _run_training(graph, batches, config):
    rng = np.random.default_rng(config.seed)
    store = init_weights(graph, rng)
    node_ids = [n.id for n in graph.weighted_nodes()]
    params = []
    for node_id in node_ids:
        w, b = store[node_id]
        params.extend((w, b))
    state = AdamState()
    curve = []
    for step in range(config.steps):
        batch_in, batch_target = batches(rng, step)
        try:
            loss, acc = _loss_and_grads(graph, store, batch_in, batch_target)
        except ArithmeticError as exc:
            raise TrainingDivergedError(f"non-finite values at step {step}: {exc}") from exc
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"loss became non-finite at step {step}")
        curve.append(loss)
        grads = []
        for node_id in node_ids:
            grads.extend(acc[node_id])
        adam_step(params, grads, state, config.learning_rate)
    return store, curve


def train_filter(dataset, graph, config):
    """Mini-batch Adam on (degraded -> target) pairs; returns the trained
    weights and the per-step loss curve."""
    if not dataset:
        raise ShapeMismatchError("training dataset is empty")

    def batches(rng, _step):
        idx = rng.integers(0, len(dataset), size=config.batch_size)
        return ([dataset[i].degraded for i in idx], [dataset[i].target for i in idx])

    return _run_training(graph, batches, config)


def sample_context_pairs(plane, n, k, count, rng):
    """Random fully-interior (context, block) training pairs from one plane."""
    if plane.width < n + k or plane.height < n + k:
        raise ShapeMismatchError(
            f"image {plane.width}x{plane.height} too small for context sampling")
    samples = plane.samples
    pairs = []
    for _ in range(count):
        x0 = int(rng.integers(k, plane.width - n + 1))
        y0 = int(rng.integers(k, plane.height - n + 1))
        ctx = gather_context(samples, x0, y0, n, k)
        block = samples[y0:y0 + n, x0:x0 + n].astype(np.float32) / np.float32(255.0)
        pairs.append((ctx.reshape(-1, 1, 1), block.reshape(-1, 1, 1)))
    return pairs


def train_fc_predictor(images, n, k, config, hidden_sizes=(512, 512), samples_per_image=32):
    """Train the fully-connected predictor on random interior positions."""
    graph = build_fc_predictor(n, k, hidden_sizes)
    pool_rng = np.random.default_rng(config.seed + 1)
    pool = []
    for plane in images:
        pool.extend(sample_context_pairs(plane, n, k, samples_per_image, pool_rng))
    if not pool:
        raise ShapeMismatchError("no context pairs sampled")

    def batches(rng, _step):
        idx = rng.integers(0, len(pool), size=config.batch_size)
        return ([pool[i][0] for i in idx], [pool[i][1] for i in idx])

    store, _curve = _run_training(graph, batches, config)
    return store


def build_model_bank(images, config, qps=BAND_QPS, block_size=32):
    """Train one filter per nominal QP and assemble the banded ModelBank."""
    stores = {}
    for i, qp in enumerate(qps):
        graph = build_inception_filter(config.num_blocks, width_scale=config.channel_scale)
        dataset = make_filter_dataset(images, qp, block_size=block_size)
        band_config = TrainConfig(learning_rate=config.learning_rate,
                                  batch_size=config.batch_size, steps=config.steps,
                                  seed=config.seed + i, num_blocks=config.num_blocks,
                                  channel_scale=config.channel_scale)
        store, _curve = train_filter(dataset, graph, band_config)
        stores[qp] = store
    return make_model_bank(stores)


def write_loss_csv(path, curve):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(curve):
            fh.write(f"{step},{loss:.10g}\n")
