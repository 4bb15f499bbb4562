"""Image feature export to NPY files with a JSON manifest."""

from .errors import ExportError
from .export import ExportManifest, export_features

__all__ = ["ExportError", "ExportManifest", "export_features"]
