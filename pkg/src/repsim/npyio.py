"""Minimal NPY (version 1.0) reader and writer.

Only little-endian float32/float64, C-order, 1-D or 2-D payloads are
accepted; that is the whole interchange surface this toolkit needs, and
a parser this small can afford to name the exact field that broke.
Written files follow the reference layout: 6 magic bytes, version 1.0,
a 2-byte little-endian header length, then an ASCII dict literal padded
with spaces to a 64-byte-aligned preamble ending in a newline.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import NpyFormatError

MAGIC = b"\x93NUMPY"
SUPPORTED_DESCRS = {"<f4": np.float32, "<f8": np.float64}
ALIGN = 64


def read_npy(path: str) -> tuple[np.ndarray, str]:
    """Parse an NPY file into (float64 matrix, source dtype tag).

    float32 payloads are widened to float64; the returned tag ('f4' or
    'f8') records what was actually on disk. 1-D arrays come back as a
    single column.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    arr, tag = parse_npy_bytes(blob)
    return arr, tag


def parse_npy_bytes(blob: bytes) -> tuple[np.ndarray, str]:
    if len(blob) < 10:
        raise NpyFormatError(f"file too short for an NPY preamble ({len(blob)} bytes)")
    if blob[:6] != MAGIC:
        raise NpyFormatError(f"bad magic {blob[:6]!r}, expected {MAGIC!r}")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise NpyFormatError(f"unsupported format version {(major, minor)}, expected (1, 0)")
    hlen = int.from_bytes(blob[8:10], "little")
    if len(blob) < 10 + hlen:
        raise NpyFormatError(f"truncated header: declared {hlen} bytes, file has {len(blob) - 10}")
    try:
        header_text = blob[10 : 10 + hlen].decode("ascii")
    except UnicodeDecodeError as exc:
        raise NpyFormatError(f"header is not ASCII: {exc}") from None
    try:
        header = ast.literal_eval(header_text.strip())
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"header dict does not parse: {exc}") from None
    if not isinstance(header, dict):
        raise NpyFormatError(f"header is {type(header).__name__}, expected dict")
    extra = set(header) - {"descr", "fortran_order", "shape"}
    missing = {"descr", "fortran_order", "shape"} - set(header)
    if extra or missing:
        raise NpyFormatError(f"header keys wrong: extra={sorted(extra)} missing={sorted(missing)}")

    descr = header["descr"]
    if descr not in SUPPORTED_DESCRS:
        raise NpyFormatError(f"unsupported descr {descr!r}, expected '<f4' or '<f8'")
    if header["fortran_order"] is not False:
        raise NpyFormatError(f"fortran_order is {header['fortran_order']!r}, only False is supported")
    shape = header["shape"]
    if not (
        isinstance(shape, tuple)
        and len(shape) in (1, 2)
        and all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise NpyFormatError(f"shape {shape!r} is not a 1-D or 2-D nonnegative tuple")

    dtype = SUPPORTED_DESCRS[descr]
    count = 1
    for s in shape:
        count *= s
    payload = blob[10 + hlen :]
    expected = count * dtype().itemsize
    if len(payload) != expected:
        raise NpyFormatError(
            f"payload is {len(payload)} bytes, shape {shape} with descr {descr!r} needs {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    tag = descr[1:]
    return arr.astype(np.float64), tag


def _build_header(descr: str, shape: tuple) -> bytes:
    shape_txt = f"({shape[0]},)" if len(shape) == 1 else f"({shape[0]}, {shape[1]})"
    body = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}"
    preamble_len = len(MAGIC) + 2 + 2 + len(body) + 1
    pad = (-preamble_len) % ALIGN
    return (body + " " * pad + "\n").encode("ascii")


def write_npy(matrix, dtype: str, path: str) -> None:
    """Write a 1-D or 2-D array as NPY v1.0 with the given dtype tag.

    dtype is 'f4' or 'f8'; values are cast on write, so round-tripping
    is bit-exact only when the input already has that precision.
    """
    descr = "<" + dtype
    if descr not in SUPPORTED_DESCRS:
        raise NpyFormatError(f"unsupported dtype tag {dtype!r}, expected 'f4' or 'f8'")
    arr = np.asarray(matrix)
    if arr.ndim not in (1, 2):
        raise NpyFormatError(f"only 1-D or 2-D arrays are written, got ndim={arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype=SUPPORTED_DESCRS[descr])
    header = _build_header(descr, arr.shape)
    blob = MAGIC + bytes([1, 0]) + len(header).to_bytes(2, "little") + header + arr.tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
