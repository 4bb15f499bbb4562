"""The export pipeline: images in, NPY files and a manifest out.

Outputs for prefix P:

- P_features.npy: float32, shape (n, d), one row per image in sorted
  relative-path order.
- P_labels.npy: float32 class indices, written only when every image
  sits in a class subdirectory.
- P_manifest.json: model name, layer tap, counts, preprocessing
  description, and the output paths, serialized with sorted keys and
  no timestamps so identical exports produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .backbone import make_backbone
from .errors import ExportError
from .images import class_labels, discover_images


@dataclass(frozen=True)
class ExportManifest:
    """What an export produced, mirrored in the manifest JSON."""

    model: str
    layer_tap: str
    image_count: int
    feature_dim: int
    preprocessing: str
    features_path: str
    labels_path: str | None
    manifest_path: str

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "image_count": self.image_count,
            "layer_tap": self.layer_tap,
            "model": self.model,
            "outputs": {
                "features": self.features_path,
                "labels": self.labels_path,
                "manifest": self.manifest_path,
            },
            "preprocessing": self.preprocessing,
        }


def _write_npy(path: str, arr: np.ndarray) -> None:
    # np.save emits NPY v1.0 for plain little-endian float arrays,
    # which is exactly the interchange format the core toolkit reads.
    with open(path, "wb") as fh:
        np.save(fh, arr, allow_pickle=False)


def export_features(model_id: str, image_dir: str, out_prefix: str) -> ExportManifest:
    """Run every discovered image through the backbone and write outputs.

    Returns the manifest that was written to <out_prefix>_manifest.json.
    Raises ExportError for a missing model, missing or empty image
    directory, or an unreadable image.
    """
    backbone = make_backbone(model_id)
    records = discover_images(image_dir)
    feats = backbone.extract([r.path for r in records])
    if feats.ndim != 2 or feats.shape[0] != len(records):
        raise ExportError(
            f"backbone returned shape {feats.shape} for {len(records)} images"
        )
    if not np.isfinite(feats).all():
        raise ExportError("backbone produced non-finite feature values")

    features_path = out_prefix + "_features.npy"
    manifest_path = out_prefix + "_manifest.json"
    labels = class_labels(records)
    labels_path = out_prefix + "_labels.npy" if labels is not None else None

    _write_npy(features_path, feats.astype(np.float32, copy=False))
    if labels is not None:
        _write_npy(labels_path, np.asarray(labels, dtype=np.float32))

    manifest = ExportManifest(
        model=backbone.name,
        layer_tap=backbone.layer_tap,
        image_count=len(records),
        feature_dim=int(feats.shape[1]),
        preprocessing=backbone.preprocessing,
        features_path=features_path,
        labels_path=labels_path,
        manifest_path=manifest_path,
    )
    with open(manifest_path, "w", encoding="ascii") as fh:
        fh.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    return manifest
