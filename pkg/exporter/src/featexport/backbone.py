"""Feature backbones.

Two families behind one interface:

- "seeded:<dim>" projects 32x32 RGB pixels through a fixed random
  matrix whose seed derives from the model id, followed by tanh. No
  downloads, no heavyweight dependencies, fully deterministic; useful
  as an offline stand-in wherever real pretrained features are not the
  point of the experiment.
- torchvision classifier names (for example "resnet18") tap the
  pooled output just before the classification head. Requires the
  optional torch extra and locally available weights; the model is
  always switched to eval mode so no stochastic layer runs.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .errors import ExportError
from .images import load_rgb

SEEDED_SIDE = 32
SEEDED_PREPROCESSING = (
    f"RGB, bilinear resize to {SEEDED_SIDE}x{SEEDED_SIDE}, "
    "scaled to [-1, 1], flattened"
)
TORCH_SIDE = 224
TORCH_PREPROCESSING = (
    f"RGB, bilinear resize to {TORCH_SIDE}x{TORCH_SIDE}, "
    "scaled to [0, 1], normalized by ImageNet channel statistics"
)


class SeededProjection:
    """Deterministic random-projection features keyed by the model id."""

    def __init__(self, model_id: str, dim: int):
        if dim < 1:
            raise ExportError(f"feature dim must be positive, got {dim}")
        self.name = model_id
        self.dim = dim
        self.layer_tap = "projection.tanh"
        self.preprocessing = SEEDED_PREPROCESSING
        seed = int.from_bytes(
            hashlib.sha256(model_id.encode("ascii")).digest()[:8], "little"
        )
        rng = np.random.Generator(np.random.PCG64(seed))
        flat = SEEDED_SIDE * SEEDED_SIDE * 3
        self._weight = rng.standard_normal((flat, dim)) / np.sqrt(flat)

    def _preprocess(self, img: Image.Image) -> np.ndarray:
        img = img.resize((SEEDED_SIDE, SEEDED_SIDE), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float64) / 255.0
        return (2.0 * arr - 1.0).reshape(-1)

    def extract(self, paths: list[str]) -> np.ndarray:
        rows = []
        for path in paths:
            x = self._preprocess(load_rgb(path))
            rows.append(np.tanh(x @ self._weight))
        return np.asarray(rows, dtype=np.float32)


class TorchvisionBackbone:
    """Pooled pre-head features of a torchvision classifier, eval mode."""

    def __init__(self, model_id: str):
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise ExportError(
                f"model {model_id!r} needs the optional torch extra "
                "(pip install featexport[torch]); for an offline run use "
                "a 'seeded:<dim>' model instead"
            ) from exc
        factory = getattr(tvm, model_id, None)
        if factory is None:
            raise ExportError(
                f"unknown torchvision model {model_id!r}; "
                "expected a constructor name such as 'resnet18'"
            )
        try:
            net = factory(weights="DEFAULT")
        except Exception as exc:
            raise ExportError(
                f"could not load weights for {model_id!r}: {exc}; "
                "for an offline run use a 'seeded:<dim>' model instead"
            ) from exc
        self._torch = torch
        # Dropping the final classification layer leaves the pooled
        # backbone output, flattened per sample.
        children = list(net.children())
        self._net = torch.nn.Sequential(*children[:-1], torch.nn.Flatten(1))
        self._net.eval()
        self.name = model_id
        self.layer_tap = "backbone.pooled"
        self.preprocessing = TORCH_PREPROCESSING
        self.dim = None  # known after the first batch

    def _preprocess(self, img: Image.Image) -> np.ndarray:
        img = img.resize((TORCH_SIDE, TORCH_SIDE), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
        std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
        arr = (arr - mean) / std
        return arr.transpose(2, 0, 1)

    def extract(self, paths: list[str]) -> np.ndarray:
        torch = self._torch
        batch = np.stack([self._preprocess(load_rgb(p)) for p in paths])
        with torch.no_grad():
            out = self._net(torch.from_numpy(batch)).numpy()
        feats = np.asarray(out, dtype=np.float32)
        self.dim = feats.shape[1]
        return feats


def make_backbone(model_id: str):
    """Resolve a model id to a backbone instance."""
    if model_id.startswith("seeded:"):
        tail = model_id.split(":", 1)[1]
        try:
            dim = int(tail)
        except ValueError:
            raise ExportError(
                f"bad seeded model id {model_id!r}; expected 'seeded:<dim>'"
            ) from None
        return SeededProjection(model_id, dim)
    return TorchvisionBackbone(model_id)
