"""Embedding exchange exporter for transformer-style encoders."""

from .errors import CorpusError, DimDriftError, ExportError, JobError, ModelLoadError
from .export import TARGETS, ExportJob, ExportResult, export
from .models import POOLINGS, load_model

__all__ = [
    "CorpusError",
    "DimDriftError",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "JobError",
    "ModelLoadError",
    "POOLINGS",
    "TARGETS",
    "export",
    "load_model",
]
