"""Failure type for the export pipeline."""


class ExportError(Exception):
    """Raised for any condition that prevents a complete, correct export."""
