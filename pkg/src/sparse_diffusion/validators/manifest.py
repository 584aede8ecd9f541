"""
ManifestValidator

Checks run manifests before they are appended to manifests.jsonl:
- command is one of the artifact-producing subcommands
- argv and config are present so the run can be replayed
- artifact paths are non-empty and unique
"""

from .base import SchemaValidator


class ManifestValidator(SchemaValidator):
    schema_name = "run_manifest"

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        errors = []
        warnings = []

        paths = list(document["artifacts"].values())
        if len(set(paths)) != len(paths):
            errors.append("Artifact paths must be unique within a manifest")

        if not document["artifacts"]:
            warnings.append(f"Manifest for '{document['command']}' lists no artifacts")

        if document.get("dataset_fingerprint") is None and document["command"] == "train":
            errors.append("Training manifests need a dataset fingerprint")

        return errors, warnings
