"""Single-file model checkpoints with an embedded manifest.

Layout: 8 magic bytes, an 8-byte little-endian manifest length, the
manifest as canonical JSON (sorted keys, no whitespace), then one NPY
block per parameter in declaration order. The manifest records dims,
seed, method, per-block byte counts, and a SHA-256 over the parameter
payload; that hash also keys the pretrained-covariance cache file kept
next to the checkpoint, so a changed checkpoint never reuses a stale
cache. Saving, loading, and saving again produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import CheckpointError
from .manifold import CovarianceStats, cov_stats
from .model import PARAM_NAMES, MlpModel
from .npyio import parse_npy_bytes, write_npy, read_npy, MAGIC as NPY_MAGIC, _build_header

MAGIC = b"RSIMCKPT"
FORMAT_VERSION = 1


def _npy_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    header = _build_header("<f8", arr.shape)
    return NPY_MAGIC + bytes([1, 0]) + len(header).to_bytes(2, "little") + header + arr.tobytes()


def save_checkpoint(path: str, model: MlpModel, seed: int, method: str) -> dict:
    """Serialize a model; returns the manifest that was written."""
    blocks = []
    payload = b""
    for name in PARAM_NAMES:
        blob = _npy_bytes(getattr(model, name))
        blocks.append({"bytes": len(blob), "name": name})
        payload += blob
    manifest = {
        "blocks": blocks,
        "dims": list(model.dims),
        "format": FORMAT_VERSION,
        "method": str(method),
        "param_hash": hashlib.sha256(payload).hexdigest(),
        "seed": int(seed),
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(body).to_bytes(8, "little"))
        fh.write(body)
        fh.write(payload)
    return manifest


def load_checkpoint(path: str) -> tuple[MlpModel, dict]:
    """Read a checkpoint back into a model, verifying the payload hash."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    mlen = int.from_bytes(blob[8:16], "little")
    if len(blob) < 16 + mlen:
        raise CheckpointError(f"{path}: truncated manifest ({mlen} bytes declared)")
    try:
        manifest = json.loads(blob[16 : 16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: manifest does not parse: {exc}") from None
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}")
    dims = manifest.get("dims")
    if not (isinstance(dims, list) and len(dims) == 4):
        raise CheckpointError(f"{path}: manifest dims malformed: {dims!r}")

    payload = blob[16 + mlen :]
    if hashlib.sha256(payload).hexdigest() != manifest.get("param_hash"):
        raise CheckpointError(f"{path}: parameter payload hash mismatch")

    names = [b.get("name") for b in manifest.get("blocks", [])]
    if names != list(PARAM_NAMES):
        raise CheckpointError(f"{path}: expected blocks {PARAM_NAMES}, found {names}")

    model = MlpModel(*dims)
    pos = 0
    for block in manifest["blocks"]:
        size = int(block["bytes"])
        piece = payload[pos : pos + size]
        if len(piece) != size:
            raise CheckpointError(f"{path}: block {block['name']} truncated")
        arr, _tag = parse_npy_bytes(piece)
        target = getattr(model, block["name"])
        if arr.size != target.size:
            raise CheckpointError(
                f"{path}: block {block['name']} has {arr.size} values, model needs {target.size}"
            )
        setattr(model, block["name"], arr.reshape(target.shape).copy())
        pos += size
    if pos != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - pos} trailing payload bytes")
    return model, manifest


def sigma0_cache_path(ckpt_path: str, param_hash: str, tag: str = "") -> str:
    suffix = f"-{tag}" if tag else ""
    return f"{ckpt_path}.sig0-{param_hash[:12]}{suffix}.npy"


def load_or_compute_sigma0(cache_path: str, theta0: MlpModel, x) -> CovarianceStats:
    """Pretrained covariance over x, cached at the given path.

    The cache is a (d+2, d) float64 NPY: sample count in [0, 0], the
    mean in row 1, the covariance below. A file with the wrong shape is
    ignored and overwritten.
    """
    d = theta0.d_feat
    if os.path.exists(cache_path):
        packed, _tag = read_npy(cache_path)
        if packed.shape == (d + 2, d):
            return CovarianceStats(mu=packed[1].copy(), sigma=packed[2:].copy(),
                                   n=int(packed[0, 0]))
    stats = cov_stats(theta0.features(x))
    packed = np.zeros((d + 2, d))
    packed[0, 0] = stats.n
    packed[1] = stats.mu
    packed[2:] = stats.sigma
    write_npy(packed, "f8", cache_path)
    return stats
