"""Validators for configs, reports and run manifests."""

from .base import ValidationResult, load_schema
from .config import ConfigValidator, SampleConfigValidator
from .manifest import ManifestValidator
from .report import ReportValidator, ThresholdResultValidator

__all__ = [
    "ValidationResult",
    "ConfigValidator",
    "ManifestValidator",
    "ReportValidator",
    "SampleConfigValidator",
    "ThresholdResultValidator",
    "load_schema",
]
