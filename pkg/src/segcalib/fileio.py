"""Tensor files, PGM label masks, JSON reports and atomic writes.

Tensor file layout (all little-endian)::

    b"CALT"  version:u8 = 1  ndim:u8  dims:u32[ndim]  payload:f32[prod(dims)]

The payload is row-major in (b, c, h, w) order truncated to ``ndim`` axes.
"""

import json
import math
import os
import struct
import tempfile

import numpy as np

MAGIC = b"CALT"
VERSION = 1


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def encode_tensor(arr):
    arr = np.asarray(arr)
    if arr.ndim > 255:
        raise FormatError("too many dimensions")
    head = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf):
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError("not a tensor file (bad magic)")
    version, ndim = struct.unpack_from("<BB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported tensor file version {version}")
    off = 6 + 4 * ndim
    if len(buf) < off:
        raise FormatError("truncated tensor header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    n = math.prod(dims)
    if len(buf) != off + 4 * n:
        raise FormatError(f"payload is {len(buf) - off} bytes, expected {4 * n}")
    return np.frombuffer(buf, dtype="<f4", offset=off, count=n).reshape(dims).astype(np.float32)


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


def write_tensor(path, arr):
    atomic_write(path, encode_tensor(arr))


def encode_pgm(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise FormatError("PGM masks are 2D")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise FormatError("PGM mask values must fit in 8 bits")
    h, w = labels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + labels.astype(np.uint8).tobytes()


def _pgm_tokens(buf, count):
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(buf):
            raise FormatError("truncated PGM header")
        ch = buf[i:i + 1]
        if ch == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j:j + 1].isspace():
                j += 1
            tokens.append(buf[i:j])
            i = j
    # a single whitespace byte separates the header from the raster
    return tokens, i + 1


def decode_pgm(buf):
    tokens, off = _pgm_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise FormatError("only binary PGM (P5) masks are supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("bad PGM header") from exc
    if not 0 < maxval < 256:
        raise FormatError("only 8-bit PGM masks are supported")
    raster = buf[off:]
    if len(raster) != w * h:
        raise FormatError(f"PGM raster is {len(raster)} bytes, expected {w * h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).astype(np.int64)


def read_pgm(path):
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(path, labels):
    atomic_write(path, encode_pgm(labels))


def round_sig(x, digits=6):
    """Round floats to ``digits`` significant digits, recursively through containers."""
    if isinstance(x, dict):
        return {k: round_sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round_sig(v, digits) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{digits}g}")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps_json(obj):
    return json.dumps(round_sig(obj), indent=2, sort_keys=False) + "\n"


def to_csv(rows, columns=None):
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = round_sig(r[c])
            cells.append("" if v is None else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def atomic_write(path, data):
    """Write via a temporary file in the same directory, then rename into place."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
