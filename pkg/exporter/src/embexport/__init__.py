"""Image-to-embedding export: the boundary between image folders and the
embedding dataset files the classifier package consumes.

This package shares no code with the classifier; it speaks only the
documented jsonl/kemb file formats, so both sides accept and reject exactly
the same files.
"""

from .encoders import ClipEncoder, EncoderLoadError, ProjectionEncoder
from .export import ExportResult, export_embeddings, read_manifest
from .formats import ValidationReport, validate_file, write_bin, write_jsonl

__version__ = "0.1.0"
