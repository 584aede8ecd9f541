"""Tests for the packaged JSON schemas."""

import pytest
from jsonschema import Draft202012Validator

from sparse_diffusion.validators import load_schema


SCHEMAS = ["train_config", "sample_config", "metrics_report", "threshold_result", "run_manifest"]


class TestSchemas:
    """Test suite for JSON schemas."""

    @pytest.mark.parametrize("name", SCHEMAS)
    def test_schema_is_valid(self, name):
        schema = load_schema(name)
        assert "$schema" in schema
        Draft202012Validator.check_schema(schema)

    def test_manifest_schema_requires_replay_fields(self):
        schema = load_schema("run_manifest")
        assert {"argv", "config", "seed", "artifacts"} <= set(schema["required"])

    def test_threshold_schema_requires_convergence_flag(self):
        assert "converged" in load_schema("threshold_result")["required"]

    def test_shipped_config_matches_schema(self, sample_config):
        errors = list(Draft202012Validator(load_schema("train_config")).iter_errors(sample_config))
        assert errors == []
