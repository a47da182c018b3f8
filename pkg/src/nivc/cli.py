"""Command-line front end: encode, decode, train-filter, train-intra, eval,
bdrate, info.

Exit codes: 0 success, 2 input/config error, 3 corrupt stream, 4 missing
model, 5 training divergence.  Options may also come from a key=value file
via --config; explicit flags win.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import codec, evaluation, graphs, imageio, training
from .errors import (
    CorruptStreamError,
    ImageFormatError,
    MissingModelError,
    ShapeMismatchError,
    TrainingDivergedError,
    WeightFileError,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CORRUPT = 3
EXIT_MISSING_MODEL = 4
EXIT_DIVERGED = 5


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# shared helpers


def _read_config_file(path, known):
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            dest = key.strip().replace("-", "_")
            if dest not in known:
                raise CliError(f"{path}:{lineno}: unknown config key {key.strip()!r}")
            values[dest] = value.strip()
    return values


def _coerce(raw, like):
    if isinstance(like, bool) or like is None:
        if raw.lower() in ("1", "true", "on", "yes"):
            return True
        if raw.lower() in ("0", "false", "off", "no"):
            return False
    if isinstance(like, int) and not isinstance(like, bool):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def _merge_config(args, defaults):
    """Fill unset options (None) from --config values, then hard defaults."""
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config, set(defaults))
    else:
        file_values = {}
    for dest, default in defaults.items():
        if getattr(args, dest, None) is None:
            if dest in file_values:
                setattr(args, dest, _coerce(file_values[dest], default))
            else:
                setattr(args, dest, default)
    return args


def _require_file(path, what="input"):
    if not os.path.exists(path):
        raise CliError(f"{what} file not found: {path}")
    return path


def _check_qp(qp):
    if not 0 <= qp <= 51:
        raise CliError(f"qp {qp} outside the valid range 0..51")
    return qp


def _parse_qps(text):
    try:
        qps = [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise CliError(f"cannot parse QP list {text!r}") from None
    for qp in qps:
        _check_qp(qp)
    return qps


@dataclass
class LoadedInput:
    frame: "imageio.Frame"
    mono: bool


def _load_input(path, width=None, height=None, frames=None, frame_index=0):
    _require_file(path)
    if path.lower().endswith(".pgm"):
        return LoadedInput(imageio.frame_from_luma(imageio.read_pgm(path)), mono=True)
    if width is None or height is None:
        raise CliError(f"raw video input {path} requires --width and --height")
    if frames is not None and frames < frame_index + 1:
        raise CliError(f"--frames {frames} does not cover frame index {frame_index}")
    return LoadedInput(imageio.read_yuv420(path, width, height, frame_index), mono=False)


def _load_bank(path, bank_id):
    if path is None:
        raise MissingModelError(f"in-loop filter requested but model bank {bank_id} not supplied")
    stores = {}
    for qp in graphs.BAND_QPS:
        fname = os.path.join(path, f"qp{qp}.nnwt")
        if not os.path.exists(fname):
            raise MissingModelError(f"model bank {bank_id}: missing {fname}")
        stores[qp] = graphs.load_weights(fname)
    return graphs.make_model_bank(stores)


def _load_predictor(path):
    if path is None:
        raise MissingModelError("neural mode requested but no predictor weights supplied")
    _require_file(path, "predictor")
    return graphs.load_weights(path)


def _read_manifest(path):
    _require_file(path, "manifest")
    images = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                images.append(imageio.read_pgm(_require_file(line, "manifest image")))
    if not images:
        raise CliError(f"manifest {path} lists no images")
    return images


def _fmt(value):
    return "inf" if math.isinf(value) else f"{value:.4f}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_encode(args):
    args = _merge_config(args, dict(qp=32, neural=False, filter=False, bank_id=0,
                                    lambda_const=0.57, width=None, height=None,
                                    frames=None, frame_index=0))
    _check_qp(args.qp)
    loaded = _load_input(args.input, args.width, args.height, args.frames, args.frame_index)
    cfg = codec.CodecConfig(qp=args.qp, neural_mode=args.neural, in_loop_filter=args.filter,
                            lambda_const=args.lambda_const, bank_id=args.bank_id)
    bank = _load_bank(args.filter_bank, args.bank_id) if args.filter else None
    predictor = _load_predictor(args.predictor) if args.neural else None
    result = codec.encode_frame(loaded.frame, cfg, filter_bank=bank, predictor=predictor)
    with open(args.output, "wb") as fh:
        fh.write(result.bitstream.serialize())
    if args.recon:
        if args.recon.lower().endswith(".pgm"):
            imageio.write_pgm(args.recon, result.reconstruction.y)
        else:
            imageio.write_yuv420(args.recon, result.reconstruction)
    bpp = evaluation.bits_per_pixel(result.bitstream)
    parts = [f"bpp={bpp:.4f}",
             f"psnr_y={_fmt(evaluation.psnr(loaded.frame.y, result.reconstruction.y))}"]
    if not loaded.mono:
        parts.append(f"psnr_u={_fmt(evaluation.psnr(loaded.frame.u, result.reconstruction.u))}")
        parts.append(f"psnr_v={_fmt(evaluation.psnr(loaded.frame.v, result.reconstruction.v))}")
    print(" ".join(parts))
    return EXIT_OK


def cmd_decode(args):
    args = _merge_config(args, dict(bank_id=None))
    _require_file(args.input)
    with open(args.input, "rb") as fh:
        stream = codec.Bitstream.parse(fh.read())
    bank = _load_bank(args.filter_bank, stream.bank_id) if stream.in_loop_filter else None
    predictor = _load_predictor(args.predictor) if stream.neural_mode else None
    frame = codec.decode_frame(stream, filter_bank=bank, predictor=predictor)
    if args.output.lower().endswith(".pgm"):
        imageio.write_pgm(args.output, frame.y)
    else:
        imageio.write_yuv420(args.output, frame)
    print(f"decoded {stream.width}x{stream.height} qp={stream.qp} to {args.output}")
    return EXIT_OK


def cmd_train_filter(args):
    args = _merge_config(args, dict(qp=37, steps=500, lr=1e-4, batch=16, seed=0,
                                    blocks=2, scale=1.0))
    _check_qp(args.qp)
    images = _read_manifest(args.manifest)
    config = training.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                                  steps=args.steps, seed=args.seed,
                                  num_blocks=args.blocks, channel_scale=args.scale)
    graph = graphs.build_inception_filter(args.blocks, width_scale=args.scale)
    dataset = training.make_filter_dataset(images, args.qp)
    store, curve = training.train_filter(dataset, graph, config)
    graphs.save_weights(store, graph, args.out)
    if args.loss_csv:
        training.write_loss_csv(args.loss_csv, curve)
    final = curve[-1] if curve else float("nan")
    print(f"trained {graph.name} on {len(dataset)} pairs, final loss {final:.6g}, wrote {args.out}")
    return EXIT_OK


def cmd_train_intra(args):
    args = _merge_config(args, dict(block_size=32, context_width=4, hidden="512,512",
                                    steps=500, lr=1e-4, batch=16, seed=0, samples=32))
    images = _read_manifest(args.manifest)
    hidden = tuple(int(h) for h in args.hidden.split(","))
    config = training.TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                                  steps=args.steps, seed=args.seed)
    store = training.train_fc_predictor(images, args.block_size, args.context_width,
                                        config, hidden_sizes=hidden,
                                        samples_per_image=args.samples)
    graph = graphs.graph_from_tag(store.tag)
    graphs.save_weights(store, graph, args.out)
    print(f"trained {store.tag} predictor, wrote {args.out}")
    return EXIT_OK


def _rd_curves(plane_pairs):
    """Build one RDCurve per component from [(bpp, {comp: psnr})] samples."""
    comps = plane_pairs[0][1].keys()
    return {c: evaluation.RDCurve(tuple(evaluation.RDPoint(bpp, ps[c])
                                        for bpp, ps in plane_pairs)) for c in comps}


def _encode_curve(loaded, qps, cfg_base, bank, predictor):
    points = []
    for qp in qps:
        cfg = codec.CodecConfig(qp=qp, neural_mode=cfg_base.neural_mode,
                                in_loop_filter=cfg_base.in_loop_filter,
                                lambda_const=cfg_base.lambda_const, bank_id=cfg_base.bank_id)
        result = codec.encode_frame(loaded.frame, cfg, filter_bank=bank, predictor=predictor)
        psnrs = {"Y": evaluation.psnr(loaded.frame.y, result.reconstruction.y)}
        if not loaded.mono:
            psnrs["U"] = evaluation.psnr(loaded.frame.u, result.reconstruction.u)
            psnrs["V"] = evaluation.psnr(loaded.frame.v, result.reconstruction.v)
        points.append((evaluation.bits_per_pixel(result.bitstream), psnrs))
    return _rd_curves(points)


def cmd_eval(args):
    args = _merge_config(args, dict(qps="22,27,32,37", bank_id=0, lambda_const=0.57,
                                    anchor_filter=False, anchor_neural=False,
                                    test_filter=False, test_neural=False,
                                    width=None, height=None, frames=None))
    qps = _parse_qps(args.qps)
    if len(qps) < 4:
        raise CliError(f"BD-rate needs at least 4 QPs, got {len(qps)}")
    need_bank = args.anchor_filter or args.test_filter
    bank = _load_bank(args.filter_bank, args.bank_id) if need_bank else None
    need_pred = args.anchor_neural or args.test_neural
    predictor = _load_predictor(args.predictor) if need_pred else None
    anchor_cfg = codec.CodecConfig(neural_mode=args.anchor_neural, in_loop_filter=args.anchor_filter,
                                   lambda_const=args.lambda_const, bank_id=args.bank_id)
    test_cfg = codec.CodecConfig(neural_mode=args.test_neural, in_loop_filter=args.test_filter,
                                 lambda_const=args.lambda_const, bank_id=args.bank_id)
    results = []
    for path in args.images:
        loaded = _load_input(path, args.width, args.height, args.frames)
        anchor = _encode_curve(loaded, qps, anchor_cfg,
                               bank if args.anchor_filter else None,
                               predictor if args.anchor_neural else None)
        test = _encode_curve(loaded, qps, test_cfg,
                             bank if args.test_filter else None,
                             predictor if args.test_neural else None)
        row = {c: evaluation.bd_rate(anchor[c], test[c]) for c in anchor}
        results.append((os.path.basename(path), row))
        print(f"{path}: " + " ".join(f"bd_rate_{c.lower()}={v:+.2f}%" for c, v in row.items()))
    csv_text, _ = evaluation.emit_report(results, csv_path=args.report_csv, md_path=args.report_md)
    if not args.report_csv and not args.report_md:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _read_curve_csv(path):
    _require_file(path, "curve CSV")
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().lower().split(",")
        if header[:3] != ["qp", "rate", "psnr"]:
            raise CliError(f"{path}: expected header qp,rate,psnr")
        for line in fh:
            line = line.strip()
            if line:
                qp, rate, ps = line.split(",")[:3]
                rows.append((int(qp), float(rate), float(ps)))
    rows.sort()
    return evaluation.RDCurve(tuple(evaluation.RDPoint(r, p) for _, r, p in rows))


def cmd_bdrate(args):
    anchor = _read_curve_csv(args.anchor)
    test = _read_curve_csv(args.test)
    print(f"bd_rate={evaluation.bd_rate(anchor, test):+.4f}% "
          f"bd_psnr={evaluation.bd_psnr(anchor, test):+.4f}dB")
    return EXIT_OK


def cmd_info(args):
    graph = graphs.graph_from_tag(args.architecture)
    print(f"architecture {graph.name}: input channels {graph.input_channels}")
    for node in graph.nodes:
        if node.kind == "conv":
            detail = f"{node.in_ch}->{node.out_ch} kernel {node.kh}x{node.kw}"
        elif node.kind == "fully_connected":
            detail = f"{node.in_ch}->{node.out_ch}"
        else:
            detail = "<- " + ", ".join(node.inputs)
        print(f"  {node.id:<12} {node.kind:<20} {detail}")
    with_bias = graphs.count_parameters(graph, "with_bias")
    without = graphs.count_parameters(graph, "without_bias")
    print(f"parameters (with bias): {with_bias:,}")
    print(f"parameters (without bias): {without:,}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="nivc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value option file (flags override it)")

    p = sub.add_parser("encode", help="encode a PGM image or one raw YUV 4:2:0 frame")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="bitstream path")
    p.add_argument("--recon", help="optional reconstruction output (pgm or yuv)")
    p.add_argument("--qp", type=int)
    p.add_argument("--neural", action=argparse.BooleanOptionalAction)
    p.add_argument("--filter", action=argparse.BooleanOptionalAction)
    p.add_argument("--filter-bank", help="directory with qp22/27/32/37 .nnwt files")
    p.add_argument("--predictor", help="predictor .nnwt file")
    p.add_argument("--bank-id", type=int)
    p.add_argument("--lambda-const", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--frame-index", type=int)
    add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="reconstruction path (pgm or yuv)")
    p.add_argument("--filter-bank")
    p.add_argument("--predictor")
    add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train-filter", help="train a restoration filter for one QP")
    p.add_argument("--manifest", required=True, help="text file listing training PGM images")
    p.add_argument("--out", required=True, help="output .nnwt path")
    p.add_argument("--loss-csv")
    p.add_argument("--qp", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--scale", type=float)
    add_common(p)
    p.set_defaults(func=cmd_train_filter)

    p = sub.add_parser("train-intra", help="train the fully-connected block predictor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--block-size", type=int)
    p.add_argument("--context-width", type=int)
    p.add_argument("--hidden")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="context samples per image")
    add_common(p)
    p.set_defaults(func=cmd_train_intra)

    p = sub.add_parser("eval", help="encode at several QPs and report BD-rate")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--qps")
    p.add_argument("--anchor-filter", action=argparse.BooleanOptionalAction)
    p.add_argument("--anchor-neural", action=argparse.BooleanOptionalAction)
    p.add_argument("--test-filter", action=argparse.BooleanOptionalAction)
    p.add_argument("--test-neural", action=argparse.BooleanOptionalAction)
    p.add_argument("--filter-bank")
    p.add_argument("--predictor")
    p.add_argument("--bank-id", type=int)
    p.add_argument("--lambda-const", type=float)
    p.add_argument("--report-csv")
    p.add_argument("--report-md")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int)
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD metrics from two qp,rate,psnr CSV curves")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("info", help="print architecture layers and parameter counts")
    p.add_argument("architecture", help="e.g. inception12, vrcnn, arcnn, fcpred32k4h512x512")
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ImageFormatError, WeightFileError, ShapeMismatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CorruptStreamError as exc:
        print(f"error: corrupt stream: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except MissingModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_MODEL
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
