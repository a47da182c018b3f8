"""Block-based intra encoder/decoder.

One flat 32x32 grid per plane, raster order.  Each block competes 35
classical prediction modes (planar, DC, 33 angular) plus an optional neural
mode, goes through an orthonormal DCT, uniform quantization and Exp-Golomb
entropy coding, and is reconstructed on a shared float path so encoder and
decoder agree bit-for-bit.  An optional restoration network filters every
reconstructed block in-loop, so later blocks predict from filtered samples.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .bitio import (
    BitReader,
    BitWriter,
    exp_golomb_decode,
    exp_golomb_encode,
    exp_golomb_total_bits,
    signed_to_unsigned,
    unsigned_to_signed,
)
from .errors import CorruptStreamError, MissingModelError, ShapeMismatchError
from .graphs import forward, graph_from_tag, select_model
from .imageio import Frame, Plane

BITSTREAM_MAGIC = b"NCV1"
_HEADER = struct.Struct("<4sHHBBBB")

FLAG_NEURAL = 0x01
FLAG_FILTER = 0x02

# angular displacement per mode (2..34), in 1/32 sample units
ANGLES = (32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26, -32,
          -26, -21, -17, -13, -9, -5, -2, 0, 2, 5, 9, 13, 17, 21, 26, 32)
# inverse angles (modes 11..25), scaled by 8192, for projecting the side refs
INV_ANGLES = {11: -4096, 12: -1638, 13: -910, 14: -630, 15: -482, 16: -390,
              17: -315, 18: -256, 19: -315, 20: -390, 21: -482, 22: -630,
              23: -910, 24: -1638, 25: -4096}


def round_half_away(x):
    """Round to nearest integer, halves away from zero (never banker's)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class QuantParams:
    qp: int

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ShapeMismatchError(f"qp {self.qp} outside 0..51")

    @property
    def qstep(self):
        return 2.0 ** ((self.qp - 4) / 6.0)


@dataclass
class CodecConfig:
    qp: int = 32
    block_size: int = 32
    neural_mode: bool = False
    in_loop_filter: bool = False
    lambda_const: float = 0.57
    bank_id: int = 0

    @property
    def lam(self):
        return self.lambda_const * 2.0 ** ((self.qp - 12) / 3.0)


@dataclass
class Bitstream:
    width: int
    height: int
    qp: int
    neural_mode: bool
    in_loop_filter: bool
    bank_id: int
    payload: bytes
    payload_bits: int

    def serialize(self):
        flags = (FLAG_NEURAL if self.neural_mode else 0) | (FLAG_FILTER if self.in_loop_filter else 0)
        header = _HEADER.pack(BITSTREAM_MAGIC, self.width, self.height, self.qp,
                              flags, self.bank_id, 0)
        return header + self.payload

    @classmethod
    def parse(cls, data):
        if len(data) < _HEADER.size:
            raise CorruptStreamError(f"stream too short for header ({len(data)} bytes)")
        magic, width, height, qp, flags, bank_id, _ = _HEADER.unpack_from(data)
        if magic != BITSTREAM_MAGIC:
            raise CorruptStreamError(f"bad stream magic {magic!r}")
        if qp > 51:
            raise CorruptStreamError(f"header qp {qp} outside 0..51")
        payload = data[_HEADER.size:]
        return cls(width, height, qp, bool(flags & FLAG_NEURAL), bool(flags & FLAG_FILTER),
                   bank_id, payload, 8 * len(payload))


@dataclass
class RefArray:
    """Prediction references: above = corner + 2N samples, left = 2N samples."""

    above: np.ndarray  # int32, 2N+1
    left: np.ndarray   # int32, 2N
    flags: dict


# ---------------------------------------------------------------------------
# reference gathering


def gather_references(recon, x0, y0, n):
    """Collect (and substitute) the reference samples around block (x0, y0).

    Only samples from blocks earlier in raster order count as available.
    Unavailable runs are filled by scanning from the bottom-left-most sample
    towards the top-right and repeating the nearest available value; a frame
    with nothing available yet yields all 128.
    """
    h, w = recon.shape
    if x0 % n or y0 % n:
        raise ShapeMismatchError(f"block origin ({x0}, {y0}) not on the {n}-grid")
    avail = {
        "left": x0 > 0,
        "below_left": False,  # next block row, never reconstructed yet
        "corner": x0 > 0 and y0 > 0,
        "above": y0 > 0,
        "above_right": y0 > 0 and x0 + 2 * n <= w,
    }
    m = 4 * n + 1
    vals = np.zeros(m, dtype=np.int32)
    ok = np.zeros(m, dtype=bool)
    # scan order: below-left bottom -> left top -> corner -> above -> above-right
    if avail["left"]:
        vals[n:2 * n] = recon[y0:y0 + n, x0 - 1][::-1]
        ok[n:2 * n] = True
    if avail["corner"]:
        vals[2 * n] = recon[y0 - 1, x0 - 1]
        ok[2 * n] = True
    if avail["above"]:
        vals[2 * n + 1:3 * n + 1] = recon[y0 - 1, x0:x0 + n]
        ok[2 * n + 1:3 * n + 1] = True
    if avail["above_right"]:
        vals[3 * n + 1:] = recon[y0 - 1, x0 + n:x0 + 2 * n]
        ok[3 * n + 1:] = True

    if not ok.any():
        vals[:] = 128
    else:
        idx = np.where(ok, np.arange(m), -1)
        idx = np.maximum.accumulate(idx)
        idx[idx == -1] = int(np.argmax(ok))
        vals = vals[idx]

    left = vals[:2 * n][::-1].copy()          # top -> bottom
    above = np.concatenate(([vals[2 * n]], vals[2 * n + 1:]))
    return RefArray(above=above.astype(np.int32), left=left.astype(np.int32), flags=avail)


# ---------------------------------------------------------------------------
# classical intra prediction


def _angular_main_side(main, side, angle, inv_angle, n):
    """Main reference line with negative-index extension projected from the
    side references.  `main` and `side` are corner-plus-2n arrays.  Index i
    lives at array position i + n; one duplicate slot past 2n keeps the
    vectorized two-tap gather in bounds."""
    ref = np.zeros(3 * n + 2, dtype=np.int64)
    ref[n:3 * n + 1] = main
    if angle < 0:
        lo = (n * angle) >> 5
        for x in range(-1, lo, -1):  # lowest accessed index is lo + 1
            ref[n + x] = side[(x * inv_angle + 128) >> 8]
    ref[3 * n + 1] = ref[3 * n]
    return ref


def _angular_matrix(main, side, angle, inv_angle, n):
    ref = _angular_main_side(main, side, angle, inv_angle, n)
    pos = (np.arange(1, n + 1) * angle).astype(np.int64)
    idx = (pos >> 5)[:, None] + np.arange(n)[None, :] + n + 1
    fact = (pos & 31)[:, None]
    return ((32 - fact) * ref[idx] + fact * ref[idx + 1] + 16) >> 5


def predict_intra(refs, mode, n):
    """HEVC-style prediction: mode 0 planar, 1 DC, 2..34 angular with 1/32-pel
    linear interpolation.  No reference smoothing, no boundary filtering."""
    if not 0 <= mode <= 34:
        raise ShapeMismatchError(f"invalid intra mode {mode}")
    above = refs.above.astype(np.int64)                      # corner + 2n
    left = np.concatenate((above[:1], refs.left.astype(np.int64)))  # corner + 2n
    shift = n.bit_length()  # log2(n) + 1 for power-of-two n
    if mode == 0:
        xs = np.arange(n)
        ys = np.arange(n)
        pred = ((n - 1 - xs)[None, :] * left[1 + ys][:, None]
                + (xs + 1)[None, :] * above[n + 1]
                + (n - 1 - ys)[:, None] * above[1:n + 1][None, :]
                + (ys + 1)[:, None] * left[n + 1]
                + n) >> shift
    elif mode == 1:
        dc = (above[1:n + 1].sum() + left[1:n + 1].sum() + n) >> shift
        pred = np.full((n, n), dc, dtype=np.int64)
    else:
        angle = ANGLES[mode - 2]
        inv_angle = INV_ANGLES.get(mode, 0)
        if mode >= 18:
            pred = _angular_matrix(above, left, angle, inv_angle, n)
        else:
            pred = _angular_matrix(left, above, angle, inv_angle, n).T
    return pred.astype(np.uint8)


# ---------------------------------------------------------------------------
# neural prediction


def gather_context(recon, x0, y0, n, k):
    """Flattened L-shaped context (the (n+k)^2 - n^2 samples above/left of the
    block), normalized to [0, 1].  Out-of-frame or not-yet-coded positions are
    projected to the nearest causal sample (row above, else column left, else
    128)."""
    h, w = recon.shape
    vals = np.empty((n + k) * k + n * k, dtype=np.float32)
    i = 0
    for yy in range(y0 - k, y0 + n):
        xs = range(x0 - k, x0 + n) if yy < y0 else range(x0 - k, x0)
        for xx in xs:
            x = min(max(xx, 0), w - 1)
            y = min(max(yy, 0), h - 1)
            if y >= y0 and x >= x0:
                if y0 > 0:
                    y = y0 - 1
                elif x0 > 0:
                    x = x0 - 1
                else:
                    vals[i] = 128.0
                    i += 1
                    continue
            vals[i] = recon[y, x]
            i += 1
    return vals / np.float32(255.0)


def predict_neural(context, graph, store, n):
    """Run the fully-connected predictor on a populated, normalized context."""
    x = np.asarray(context, dtype=np.float32).reshape(-1, 1, 1)
    out = forward(graph, store, x).reshape(n, n)
    return round_half_away(np.clip(out * 255.0, 0.0, 255.0)).astype(np.uint8)


# ---------------------------------------------------------------------------
# transform / quantization / entropy


def dct2d(block, inverse=False):
    a = np.asarray(block, dtype=np.float64)
    return idctn(a, norm="ortho") if inverse else dctn(a, norm="ortho")


def quantize(coefs, q):
    return round_half_away(np.asarray(coefs) / q.qstep).astype(np.int32)


def dequantize(levels, q):
    return np.asarray(levels, dtype=np.float64) * q.qstep


@lru_cache(maxsize=None)
def zigzag_order(n):
    """(rows, cols) index arrays for the diagonal zigzag scan."""
    pos = sorted(((i, j) for i in range(n) for j in range(n)),
                 key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    rows = np.array([p[0] for p in pos])
    cols = np.array([p[1] for p in pos])
    return rows, cols


def entropy_encode_block(writer, neural, mode, levels_zz):
    """Signal bits (1-bit neural flag, 6-bit mode if classical) followed by
    every level as a signed-mapped order-0 Exp-Golomb codeword."""
    writer.write_bit(1 if neural else 0)
    if not neural:
        writer.write_bits(mode, 6)
    for m in signed_to_unsigned(levels_zz):
        exp_golomb_encode(writer, int(m))


def entropy_decode_block(reader, count):
    neural = reader.read_bit() == 1
    mode = 0
    if not neural:
        mode = reader.read_bits(6)
        if mode > 34:
            raise CorruptStreamError(f"invalid mode index {mode} in stream")
    levels = np.empty(count, dtype=np.int32)
    for i in range(count):
        levels[i] = unsigned_to_signed(exp_golomb_decode(reader))
    return neural, mode, levels


def block_bit_cost(neural, levels_zz):
    return 1 + (0 if neural else 6) + exp_golomb_total_bits(signed_to_unsigned(levels_zz))


# ---------------------------------------------------------------------------
# mode decision and block reconstruction


@dataclass
class ModeDecision:
    neural: bool
    mode: int
    levels: np.ndarray  # zigzag order
    recon: np.ndarray   # uint8 block
    bits: int
    cost: float


def reconstruct_block(pred, levels_zz, q, n):
    """Shared encoder/decoder reconstruction: dequantize, inverse transform,
    add prediction, round, clamp."""
    rows, cols = zigzag_order(n)
    lv = np.zeros((n, n), dtype=np.int32)
    lv[rows, cols] = levels_zz
    res = dct2d(dequantize(lv, q), inverse=True)
    return np.clip(round_half_away(pred.astype(np.float64) + res), 0, 255).astype(np.uint8)


def _trial(orig, pred, q, n, neural, mode, lam):
    rows, cols = zigzag_order(n)
    resid = orig.astype(np.float64) - pred.astype(np.float64)
    levels_zz = quantize(dct2d(resid), q)[rows, cols]
    bits = block_bit_cost(neural, levels_zz)
    recon = reconstruct_block(pred, levels_zz, q, n)
    ssd = int(np.sum((orig.astype(np.int64) - recon.astype(np.int64)) ** 2))
    return ModeDecision(neural, mode, levels_zz, recon, bits, ssd + lam * bits)


def rd_select_mode(orig, refs, q, config, context=None, pred_graph=None, pred_store=None):
    """Try every candidate mode and keep the lowest rate-distortion cost
    J = SSD + lambda * bits.  Ties keep the earlier candidate, so smaller mode
    indices win and classical modes beat the neural mode."""
    n = config.block_size
    best = None
    for mode in range(35):
        trial = _trial(orig, predict_intra(refs, mode, n), q, n, False, mode, config.lam)
        if best is None or trial.cost < best.cost:
            best = trial
    if config.neural_mode and pred_graph is not None:
        pred = predict_neural(context, pred_graph, pred_store, n)
        trial = _trial(orig, pred, q, n, True, 0, config.lam)
        if trial.cost < best.cost:
            best = trial
    return best


# ---------------------------------------------------------------------------
# frame pipeline


@dataclass
class EncodeResult:
    bitstream: Bitstream
    reconstruction: Frame


def pad_to_grid(samples, n):
    h, w = samples.shape
    ph, pw = (-h) % n, (-w) % n
    if ph or pw:
        return np.pad(samples, ((0, ph), (0, pw)), mode="edge")
    return samples


def apply_block_filter(block, graph, store):
    """Normalize, run the restoration net, de-normalize, round, clamp."""
    x = block[None].astype(np.float32) / np.float32(255.0)
    y = forward(graph, store, x)[0]
    return np.clip(round_half_away(y.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def _resolve_filter(config, filter_bank):
    if not config.in_loop_filter:
        return None, None
    if filter_bank is None:
        raise MissingModelError(f"in-loop filter enabled but model bank {config.bank_id} missing")
    store = select_model(filter_bank, config.qp)
    return graph_from_tag(store.tag), store


def _resolve_predictor(config, predictor):
    if not config.neural_mode:
        return None, None, 0
    if predictor is None:
        raise MissingModelError("neural mode enabled but no predictor weights supplied")
    graph = graph_from_tag(predictor.tag)
    n = config.block_size
    in_feat = graph.input_channels
    k = round((n * n + in_feat) ** 0.5 - n)
    if (n + k) ** 2 - n * n != in_feat or graph.output_channels != n * n:
        raise MissingModelError(
            f"predictor {predictor.tag!r} incompatible with block size {n}")
    return graph, predictor, k


def _code_plane(plane_samples, config, writer_or_reader, encode, fgraph, fstore,
                pgraph, pstore, ctx_k):
    n = config.block_size
    q = QuantParams(config.qp)
    padded = pad_to_grid(plane_samples, n) if encode else None
    h, w = (padded.shape if encode
            else (((plane_samples[0] + n - 1) // n) * n, ((plane_samples[1] + n - 1) // n) * n))
    recon = np.zeros((h, w), dtype=np.uint8)
    for y0 in range(0, h, n):
        for x0 in range(0, w, n):
            if encode:
                refs = gather_references(recon, x0, y0, n)
                ctx = gather_context(recon, x0, y0, n, ctx_k) if pgraph is not None else None
                dec = rd_select_mode(padded[y0:y0 + n, x0:x0 + n], refs, q, config,
                                     context=ctx, pred_graph=pgraph, pred_store=pstore)
                entropy_encode_block(writer_or_reader, dec.neural, dec.mode, dec.levels)
                block = dec.recon
            else:
                neural, mode, levels = entropy_decode_block(writer_or_reader, n * n)
                if neural:
                    if pgraph is None:
                        raise MissingModelError("stream uses the neural mode but no predictor supplied")
                    ctx = gather_context(recon, x0, y0, n, ctx_k)
                    pred = predict_neural(ctx, pgraph, pstore, n)
                else:
                    refs = gather_references(recon, x0, y0, n)
                    pred = predict_intra(refs, mode, n)
                block = reconstruct_block(pred, levels, q, n)
            if fgraph is not None:
                block = apply_block_filter(block, fgraph, fstore)
            recon[y0:y0 + n, x0:x0 + n] = block
    return recon


def encode_frame(frame, config, filter_bank=None, predictor=None):
    """Encode a frame plane by plane (Y, U, V at the same QP); returns the
    bitstream together with the encoder-side reconstruction."""
    if frame.y.width > 0xFFFF or frame.y.height > 0xFFFF:
        raise ShapeMismatchError("frame dimensions exceed the 16-bit header fields")
    fgraph, fstore = _resolve_filter(config, filter_bank)
    pgraph, pstore, ctx_k = _resolve_predictor(config, predictor)
    writer = BitWriter()
    recon_planes = []
    for plane in (frame.y, frame.u, frame.v):
        recon = _code_plane(plane.samples, config, writer, True,
                            fgraph, fstore, pgraph, pstore, ctx_k)
        recon_planes.append(Plane(recon[:plane.height, :plane.width]))
    stream = Bitstream(frame.y.width, frame.y.height, config.qp, config.neural_mode,
                       config.in_loop_filter, config.bank_id,
                       writer.getvalue(), writer.bit_length)
    return EncodeResult(stream, Frame(*recon_planes))


def decode_frame(bitstream, filter_bank=None, predictor=None, config=None):
    """Replay prediction, dequantization and filtering to reproduce the
    encoder's reconstruction exactly."""
    cfg = CodecConfig(qp=bitstream.qp,
                      block_size=config.block_size if config else 32,
                      neural_mode=bitstream.neural_mode,
                      in_loop_filter=bitstream.in_loop_filter,
                      bank_id=bitstream.bank_id)
    fgraph, fstore = _resolve_filter(cfg, filter_bank)
    pgraph, pstore, ctx_k = (None, None, 0)
    if cfg.neural_mode:
        pgraph, pstore, ctx_k = _resolve_predictor(cfg, predictor)
    reader = BitReader(bitstream.payload)
    lw, lh = bitstream.width, bitstream.height
    cw, ch = (lw + 1) // 2, (lh + 1) // 2
    planes = []
    for w, h in ((lw, lh), (cw, ch), (cw, ch)):
        recon = _code_plane((h, w), cfg, reader, False, fgraph, fstore, pgraph, pstore, ctx_k)
        planes.append(Plane(recon[:h, :w]))
    return Frame(*planes)
