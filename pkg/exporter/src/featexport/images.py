"""Image discovery and loading.

Images are found either directly inside the given directory or exactly
one subdirectory deep. When every image sits in a subdirectory, the
subdirectory names become class labels; a flat directory exports
features only. Files are always processed in sorted relative-path
order so repeated exports see the same sequence.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from PIL import Image

from .errors import ExportError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class ImageRecord:
    """One discovered image: absolute path plus optional class name."""

    path: str
    class_name: str | None


def _is_image(name: str) -> bool:
    return name.lower().endswith(IMAGE_EXTENSIONS)


def discover_images(image_dir: str) -> list[ImageRecord]:
    """Enumerate images under image_dir in sorted relative-path order.

    Raises ExportError when the directory is missing or contains no
    images with a recognized extension.
    """
    if not os.path.isdir(image_dir):
        raise ExportError(f"images directory {image_dir!r} does not exist")
    records = []
    for entry in sorted(os.listdir(image_dir)):
        full = os.path.join(image_dir, entry)
        if os.path.isfile(full) and _is_image(entry):
            records.append(ImageRecord(path=full, class_name=None))
        elif os.path.isdir(full):
            for sub in sorted(os.listdir(full)):
                subfull = os.path.join(full, sub)
                if os.path.isfile(subfull) and _is_image(sub):
                    records.append(ImageRecord(path=subfull, class_name=entry))
    if not records:
        raise ExportError(
            f"no images found under {image_dir!r} "
            f"(looked for {', '.join(IMAGE_EXTENSIONS)} at depth 0 or 1)"
        )
    records.sort(key=lambda r: os.path.relpath(r.path, image_dir))
    return records


def load_rgb(path: str) -> Image.Image:
    """Open one image as RGB, with a descriptive error on failure."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except OSError as exc:
        raise ExportError(f"cannot read image {path!r}: {exc}") from exc


def class_labels(records: list[ImageRecord]) -> list[int] | None:
    """Class indices when every image has a class, else None.

    Indices follow the sorted order of distinct class names, so label
    assignment does not depend on discovery order.
    """
    if any(r.class_name is None for r in records):
        return None
    names = sorted({r.class_name for r in records})
    index = {name: i for i, name in enumerate(names)}
    return [index[r.class_name] for r in records]
