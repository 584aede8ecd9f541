"""
Shared pieces of the schema validators.

Validators never raise on bad input; they collect problems in a
ValidationResult so callers decide whether a warning is fatal.
"""

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib.resources import files

from jsonschema import Draft202012Validator


@dataclass
class ValidationResult:
    """Result of validation check."""
    passed: bool
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Load a packaged schema, e.g. `load_schema("train_config")`."""
    resource = files("sparse_diffusion") / "schemas" / f"{name}.schema.json"
    return json.loads(resource.read_text(encoding="utf-8"))


def _location(path) -> str:
    parts = [str(p) for p in path]
    return ".".join(parts) if parts else "<root>"


class SchemaValidator:
    """Validates a document against one packaged JSON Schema."""

    schema_name: str = ""

    def __init__(self, config: dict | None = None):
        self.config = config or {}
        self.schema = load_schema(self.schema_name)
        self._validator = Draft202012Validator(self.schema)

    def validate(self, document: dict) -> ValidationResult:
        errors = []
        warnings = []

        if not isinstance(document, dict):
            return ValidationResult(passed=False, errors=["Document must be a mapping"])

        for error in sorted(self._validator.iter_errors(document), key=lambda e: list(e.path)):
            errors.append(f"{_location(error.path)}: {error.message}")

        if not errors:
            extra_errors, extra_warnings = self._check(document)
            errors.extend(extra_errors)
            warnings.extend(extra_warnings)

        return ValidationResult(
            passed=len(errors) == 0,
            errors=errors,
            warnings=warnings,
        )

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        """Checks a schema cannot express. Runs only on schema-valid documents."""
        return [], []
