"""RGB-D capture adapter emitting scene bundles for the fusion pipeline."""

from .capture import ExtractError
from .extract import ExtractionJob, FramePaths, extract, load_job

__version__ = "0.1.0"
