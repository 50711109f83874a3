"""File formats: float depth maps, quantized 16-bit depth maps, label
graymaps, sparse-sample CSV, and versioned JSON reports.

Formats are byte-exact: writing the same data twice produces identical files,
and every parse error reports where in the file it happened.
"""

import json
from pathlib import Path

import numpy as np

from .grid import SparseDepth

DEFAULT_QUANT_SCALE_M = 1.0 / 256.0  # meters per raw unit in quantized maps
MAX_SIDE = 16384  # readers refuse to allocate beyond this many pixels per side
REPORT_VERSION = "1.0"

_FLOAT_MAGIC = b"Pf"
_GRAY_MAGIC = b"P5"


class FormatError(Exception):
    """A file failed to parse; carries the location of the failure."""

    def __init__(self, path, message, byte_offset=None, line=None):
        self.path = str(path)
        self.byte_offset = byte_offset
        self.line = line
        where = ""
        if byte_offset is not None:
            where = f" at byte {byte_offset}"
        elif line is not None:
            where = f" on line {line}"
        super().__init__(f"{self.path}: {message}{where}")


def _dense_or_sparse(arr):
    """Maps with any zero entries are sparse by convention."""
    if np.any(arr == 0):
        return SparseDepth.from_map(arr)
    return arr


def _check_side(n, what, path, offset):
    if n < 1:
        raise FormatError(path, f"{what} must be >= 1, got {n}", byte_offset=offset)
    if n > MAX_SIDE:
        raise FormatError(
            path, f"{what} {n} exceeds the {MAX_SIDE}-pixel reader limit",
            byte_offset=offset)


def _read_line(buf, pos, path):
    nl = buf.find(b"\n", pos)
    if nl < 0:
        raise FormatError(path, "unterminated header line", byte_offset=pos)
    return buf[pos:nl].decode("ascii", errors="replace"), nl + 1


# ---------------------------------------------------------------------------
# float map: text header, then raw 32-bit floats, rows bottom-up


def _read_float_map(buf, path):
    magic, pos = _read_line(buf, 0, path)
    if magic.strip() != "Pf":
        raise FormatError(path, "not a float map (expected Pf)", byte_offset=0)
    dim_at = pos
    dims, pos = _read_line(buf, pos, path)
    parts = dims.split()
    if len(parts) != 2:
        raise FormatError(path, f"expected 'width height', got {dims!r}",
                          byte_offset=dim_at)
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(path, f"non-integer dimensions {dims!r}",
                          byte_offset=dim_at) from None
    _check_side(width, "width", path, dim_at)
    _check_side(height, "height", path, dim_at)
    scale_at = pos
    scale_line, pos = _read_line(buf, pos, path)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(path, f"bad scale/endianness line {scale_line!r}",
                          byte_offset=scale_at) from None
    if scale == 0 or not np.isfinite(scale):
        raise FormatError(path, f"scale must be finite and non-zero, got {scale}",
                          byte_offset=scale_at)
    need = height * width * 4
    have = len(buf) - pos
    if have < need:
        raise FormatError(
            path, f"truncated payload: expected {need} bytes, found {have}",
            byte_offset=len(buf))
    if have > need:
        raise FormatError(path, f"{have - need} trailing bytes after payload",
                          byte_offset=pos + need)
    dtype = "<f4" if scale < 0 else ">f4"
    raw = np.frombuffer(buf, dtype=dtype, count=height * width, offset=pos)
    bad = ~np.isfinite(raw)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise FormatError(path, "non-finite float in payload",
                          byte_offset=pos + 4 * first)
    values = np.flipud(raw.reshape(height, width)).astype(np.float64)
    values *= abs(scale)
    neg = values < 0
    if np.any(neg):
        first = int(np.argmax(np.flipud(neg).ravel()))
        raise FormatError(path, "negative depth in payload",
                          byte_offset=pos + 4 * first)
    return _dense_or_sparse(values)


def _write_float_map(arr, path):
    header = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    payload = np.flipud(arr).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# binary graymaps: quantized depth and label masks


def _read_graymap(buf, path):
    """Parse a P5 graymap; returns (raw uint array, scale-comment or None)."""
    magic, pos = _read_line(buf, 0, path)
    if magic.strip() != "P5":
        raise FormatError(path, "not a binary graymap (expected P5)", byte_offset=0)
    scale = None
    tokens = []
    token_at = pos
    while len(tokens) < 3:
        line_at = pos
        line, pos = _read_line(buf, pos, path)
        body = line.strip()
        if body.startswith("#"):
            comment = body[1:].strip()
            if comment.startswith("scale="):
                try:
                    scale = float(comment[len("scale="):])
                except ValueError:
                    raise FormatError(path, f"bad scale comment {body!r}",
                                      byte_offset=line_at) from None
                if scale <= 0 or not np.isfinite(scale):
                    raise FormatError(path, f"scale must be positive, got {scale}",
                                      byte_offset=line_at)
            continue
        for tok in body.split():
            try:
                tokens.append(int(tok))
            except ValueError:
                raise FormatError(path, f"non-integer header token {tok!r}",
                                  byte_offset=line_at) from None
        token_at = line_at
    if len(tokens) != 3:
        raise FormatError(path, "malformed graymap header", byte_offset=token_at)
    width, height, maxval = tokens
    _check_side(width, "width", path, token_at)
    _check_side(height, "height", path, token_at)
    if not 0 < maxval <= 65535:
        raise FormatError(path, f"max value must be in 1..65535, got {maxval}",
                          byte_offset=token_at)
    bytes_per = 1 if maxval <= 255 else 2
    need = height * width * bytes_per
    have = len(buf) - pos
    if have < need:
        raise FormatError(
            path, f"truncated payload: expected {need} bytes, found {have}",
            byte_offset=len(buf))
    if have > need:
        raise FormatError(path, f"{have - need} trailing bytes after payload",
                          byte_offset=pos + need)
    dtype = np.uint8 if bytes_per == 1 else ">u2"
    raw = np.frombuffer(buf, dtype=dtype, count=height * width, offset=pos)
    over = raw > maxval
    if np.any(over):
        first = int(np.argmax(over))
        raise FormatError(path, f"pixel value exceeds max value {maxval}",
                          byte_offset=pos + bytes_per * first)
    return raw.reshape(height, width), scale


def _write_graymap(raw, path, scale=None):
    h, w = raw.shape
    lines = ["P5"]
    if scale is not None:
        lines.append(f"# scale={scale!r}")
    lines.append(f"{w} {h}")
    lines.append("65535")
    header = ("\n".join(lines) + "\n").encode("ascii")
    Path(path).write_bytes(header + raw.astype(">u2").tobytes())


# ---------------------------------------------------------------------------
# public depth / mask entry points


def read_depth(path, default_scale_m=DEFAULT_QUANT_SCALE_M):
    """Read a depth map; returns a dense float64 array, or a SparseDepth when
    the file contains zero (missing) entries.

    The first bytes pick the format: 'Pf' float map or 'P5' quantized graymap
    (depth = raw * scale, raw 0 missing; scale from the '# scale=' header
    comment, default 1/256 m).
    """
    buf = Path(path).read_bytes()
    if buf[:2] == _FLOAT_MAGIC:
        return _read_float_map(buf, path)
    if buf[:2] == _GRAY_MAGIC:
        raw, scale = _read_graymap(buf, path)
        if scale is None:
            scale = default_scale_m
        return _dense_or_sparse(raw.astype(np.float64) * scale)
    raise FormatError(path, "unrecognized depth format (expected Pf or P5)",
                      byte_offset=0)


def write_depth(values, path, fmt="float_map", scale_m=DEFAULT_QUANT_SCALE_M):
    """Write a depth map (dense array or SparseDepth; zeros mean missing).

    float_map stores exact 32-bit floats; quantized_16bit stores
    round(depth / scale_m) big-endian with raw 0 reserved for missing pixels,
    so positive depths quantizing to 0 are bumped to raw 1 and depths beyond
    65535 * scale_m are an error.
    """
    if isinstance(values, SparseDepth):
        arr = values.map
    else:
        arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"depth map must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("depth map contains non-finite values")
    if np.any(arr < 0):
        raise ValueError("depth map contains negative values")
    if fmt == "float_map":
        _write_float_map(arr, path)
    elif fmt == "quantized_16bit":
        if scale_m <= 0:
            raise ValueError(f"quantization scale must be positive, got {scale_m}")
        raw = np.round(arr / scale_m)
        if np.any(raw > 65535):
            raise ValueError(
                f"depth {arr.max():g} m exceeds the 16-bit range at scale {scale_m:g}")
        raw = np.where((arr > 0) & (raw < 1), 1, raw)  # keep tiny depths present
        _write_graymap(raw.astype(np.uint16), path, scale=scale_m)
    else:
        raise ValueError(f"unknown depth format {fmt!r}")


def read_mask(path):
    """Read a label graymap as an int64 array; 8-bit files widen losslessly."""
    buf = Path(path).read_bytes()
    if buf[:2] != _GRAY_MAGIC:
        raise FormatError(path, "not a binary graymap (expected P5)", byte_offset=0)
    raw, _ = _read_graymap(buf, path)
    return raw.astype(np.int64)


def write_mask(labels, path):
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("mask labels must be integers")
    if arr.min() < 0 or arr.max() > 65535:
        raise ValueError("mask labels must fit in 0..65535")
    _write_graymap(arr.astype(np.uint16), path)


# ---------------------------------------------------------------------------
# sparse samples as CSV


def write_sparse_csv(sparse, path):
    rows, cols, depths = sparse.samples()
    lines = ["row,col,depth_m"]
    lines += [f"{r},{c},{float(d)!r}" for r, c, d in zip(rows, cols, depths)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_sparse_csv(path, height=None, width=None):
    """Read "row,col,depth_m" lines into a SparseDepth.

    An optional header line is skipped. Grid shape is taken from height/width
    when given, otherwise inferred as the tightest grid containing every
    sample (at least 2x2 so the result is a usable field).
    """
    text = Path(path).read_text(encoding="ascii")
    rows, cols, depths = [], [], []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.strip()
        if not body:
            continue
        parts = body.split(",")
        if lineno == 1 and not parts[0].strip().lstrip("-").isdigit():
            continue  # header line
        if len(parts) != 3:
            raise FormatError(path, f"expected 'row,col,depth_m', got {body!r}",
                              line=lineno)
        try:
            r, c, d = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError(path, f"malformed sample {body!r}",
                              line=lineno) from None
        if r < 0 or c < 0:
            raise FormatError(path, f"negative coordinate in {body!r}", line=lineno)
        if r >= MAX_SIDE or c >= MAX_SIDE:
            raise FormatError(
                path, f"coordinate exceeds the {MAX_SIDE}-pixel reader limit",
                line=lineno)
        if (height is not None and r >= height) or (width is not None and c >= width):
            raise FormatError(
                path, f"sample at ({r}, {c}) outside {height}x{width} grid",
                line=lineno)
        if not np.isfinite(d) or d <= 0:
            raise FormatError(path, f"depth must be positive and finite, got {parts[2]}",
                              line=lineno)
        if (r, c) in seen:
            raise FormatError(
                path, f"duplicate sample at ({r}, {c}), first seen on line {seen[(r, c)]}",
                line=lineno)
        seen[(r, c)] = lineno
        rows.append(r)
        cols.append(c)
        depths.append(d)
    if not rows:
        raise FormatError(path, "no samples in file", line=1)
    h = height if height is not None else max(max(rows) + 1, 2)
    w = width if width is not None else max(max(cols) + 1, 2)
    return SparseDepth.from_samples(h, w, rows, cols, depths)


# ---------------------------------------------------------------------------
# versioned JSON reports


def write_report(payload, path):
    """Write a schema-versioned JSON report with deterministic bytes."""
    doc = dict(payload)
    doc["schema_version"] = REPORT_VERSION
    text = json.dumps(doc, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="ascii")


def read_report(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    version = doc.get("schema_version")
    if not isinstance(version, str) or "." not in version:
        raise FormatError(path, f"missing or malformed schema_version {version!r}")
    major = version.split(".", 1)[0]
    if major != REPORT_VERSION.split(".", 1)[0]:
        raise FormatError(
            path, f"unsupported report schema major version {version!r}")
    return doc
