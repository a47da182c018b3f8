"""Rate/quality metrics: PSNR, bits per pixel, Bjontegaard deltas, reports."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .imageio import Plane


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for 8-bit planes; inf when identical."""
    xa = a.samples if isinstance(a, Plane) else np.asarray(a)
    xb = b.samples if isinstance(b, Plane) else np.asarray(b)
    if xa.shape != xb.shape:
        raise ShapeMismatchError(f"psnr operands differ: {xa.shape} vs {xb.shape}")
    mse = np.mean((xa.astype(np.float64) - xb.astype(np.float64)) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def bits_per_pixel(stream, dims=None):
    """Payload bits (header excluded) divided by the luma pixel count."""
    w, h = dims if dims is not None else (stream.width, stream.height)
    return stream.payload_bits / (w * h)


@dataclass(frozen=True)
class RDPoint:
    rate: float  # bits per pixel
    psnr: float  # dB

    def __post_init__(self):
        if not self.rate > 0:
            raise ShapeMismatchError(f"rate must be positive, got {self.rate}")
        if not math.isfinite(self.psnr):
            raise ShapeMismatchError("infinite PSNR cannot sit on an RD curve")


@dataclass
class RDCurve:
    """RD points ordered by increasing QP: rate strictly decreasing."""

    points: tuple

    def __post_init__(self):
        self.points = tuple(self.points)
        if len(self.points) < 4:
            raise ShapeMismatchError(f"RD curve needs >= 4 points, got {len(self.points)}")
        rates = [p.rate for p in self.points]
        if any(r2 >= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ShapeMismatchError(f"RD curve rates must strictly decrease with QP: {rates}")

    @property
    def rates(self):
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self):
        return np.array([p.psnr for p in self.points])


def _overlap(lo1, hi1, lo2, hi2):
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    if lo >= hi:
        raise ShapeMismatchError("RD curves have no overlapping range to integrate")
    return lo, hi


def _poly_mean(coeffs, lo, hi):
    integral = np.polyint(coeffs)
    return (np.polyval(integral, hi) - np.polyval(integral, lo)) / (hi - lo)


def bd_rate(anchor, test):
    """Average bitrate difference (%) at equal quality, Bjontegaard method:
    cubic fit of log10(rate) over PSNR, integrated across the common PSNR
    span.  Negative means the test curve saves bits."""
    pa = np.polyfit(anchor.psnrs, np.log10(anchor.rates), 3)
    pt = np.polyfit(test.psnrs, np.log10(test.rates), 3)
    lo, hi = _overlap(anchor.psnrs.min(), anchor.psnrs.max(), test.psnrs.min(), test.psnrs.max())
    avg_diff = _poly_mean(pt, lo, hi) - _poly_mean(pa, lo, hi)
    return (10.0 ** avg_diff - 1.0) * 100.0


def bd_psnr(anchor, test):
    """Average PSNR difference (dB) at equal rate, symmetric construction."""
    la, lt = np.log10(anchor.rates), np.log10(test.rates)
    pa = np.polyfit(la, anchor.psnrs, 3)
    pt = np.polyfit(lt, test.psnrs, 3)
    lo, hi = _overlap(la.min(), la.max(), lt.min(), lt.max())
    return _poly_mean(pt, lo, hi) - _poly_mean(pa, lo, hi)


# ---------------------------------------------------------------------------
# report emission


def _format_cell(value):
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.2f}"


def _csv_field(text):
    if any(ch in text for ch in ",\"\n"):
        return '"' + text.replace('"', '""') + '"'
    return text


def emit_report(results, columns=None, csv_path=None, md_path=None):
    """Render rows of {column: value} keyed by sequence name as CSV and
    Markdown tables, with a trailing arithmetic-mean row (numeric columns).

    `results` is a list of (name, values) pairs; empty input produces header
    rows only.
    """
    if columns is None:
        columns = []
        for _, values in results:
            for col in values:
                if col not in columns:
                    columns.append(col)
    header = ["sequence"] + list(columns)
    rows = []
    for name, values in results:
        rows.append([name] + [_format_cell(values.get(col)) for col in columns])
    if results:
        means = []
        for col in columns:
            nums = [v[col] for _, v in results
                    if isinstance(v.get(col), (int, float)) and math.isfinite(v[col])]
            means.append(sum(nums) / len(nums) if nums else None)
        rows.append(["average"] + [_format_cell(m) for m in means])

    csv_lines = [",".join(_csv_field(c) for c in header)]
    csv_lines += [",".join(_csv_field(c) for c in row) for row in rows]
    csv_text = "\r\n".join(csv_lines) + "\r\n"

    md_lines = ["| " + " | ".join(header) + " |",
                "| " + " | ".join("---" for _ in header) + " |"]
    md_lines += ["| " + " | ".join(row) + " |" for row in rows]
    md_text = "\n".join(md_lines) + "\n"

    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            fh.write(csv_text)
    if md_path:
        with open(md_path, "w") as fh:
            fh.write(md_text)
    return csv_text, md_text
