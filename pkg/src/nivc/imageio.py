"""8-bit picture containers and raw-file I/O (binary PGM, planar YUV 4:2:0)."""

from dataclasses import dataclass

import numpy as np

from .errors import ImageFormatError, ShapeMismatchError


@dataclass
class Plane:
    """One 8-bit sample plane, row-major."""

    samples: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.uint8)
        if self.samples.ndim != 2:
            raise ShapeMismatchError(f"plane samples must be 2-D, got {self.samples.shape}")

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def height(self):
        return self.samples.shape[0]


@dataclass
class Frame:
    """YUV 4:2:0 picture: chroma planes at half resolution (ceil) per axis."""

    y: Plane
    u: Plane
    v: Plane

    def __post_init__(self):
        cw, ch = (self.y.width + 1) // 2, (self.y.height + 1) // 2
        for name, p in (("u", self.u), ("v", self.v)):
            if (p.width, p.height) != (cw, ch):
                raise ShapeMismatchError(
                    f"{name} plane is {p.width}x{p.height}, expected {cw}x{ch} "
                    f"for {self.y.width}x{self.y.height} luma")


def frame_from_luma(plane, chroma_fill=128):
    """Wrap a single plane as a frame with constant chroma."""
    cw, ch = (plane.width + 1) // 2, (plane.height + 1) // 2
    flat = np.full((ch, cw), chroma_fill, dtype=np.uint8)
    return Frame(plane, Plane(flat.copy()), Plane(flat.copy()))


# ---------------------------------------------------------------------------
# PGM (binary, P5, maxval 255)


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: malformed PGM header")
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric PGM header fields") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval {maxval} unsupported, need 255")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise ImageFormatError(
            f"{path}: raster has {len(raster)} bytes, expected {width * height}")
    return Plane(np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy())


def write_pgm(path, plane):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{plane.width} {plane.height}\n255\n".encode())
        fh.write(plane.samples.tobytes())


# ---------------------------------------------------------------------------
# planar YUV 4:2:0, frame-sequential


def _yuv_frame_size(width, height):
    if width % 2 or height % 2:
        raise ImageFormatError(f"YUV 4:2:0 needs even dimensions, got {width}x{height}")
    return width * height * 3 // 2


def read_yuv420(path, width, height, frame_index=0):
    fsize = _yuv_frame_size(width, height)
    needed = (frame_index + 1) * fsize
    with open(path, "rb") as fh:
        data = fh.read(needed)
    if len(data) < needed:
        raise ImageFormatError(
            f"{path}: short YUV file, need {needed} bytes for frame {frame_index}, have {len(data)}")
    raw = np.frombuffer(data[frame_index * fsize:needed], dtype=np.uint8)
    cw, ch = width // 2, height // 2
    y = raw[:width * height].reshape(height, width)
    u = raw[width * height:width * height + cw * ch].reshape(ch, cw)
    v = raw[width * height + cw * ch:].reshape(ch, cw)
    return Frame(Plane(y.copy()), Plane(u.copy()), Plane(v.copy()))


def write_yuv420(path, frame, append=False):
    _yuv_frame_size(frame.y.width, frame.y.height)
    with open(path, "ab" if append else "wb") as fh:
        fh.write(frame.y.samples.tobytes())
        fh.write(frame.u.samples.tobytes())
        fh.write(frame.v.samples.tobytes())
