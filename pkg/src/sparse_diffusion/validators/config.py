"""
ConfigValidator

Validates run configuration documents (YAML or JSON) before any work starts:
- shape and types against the packaged train_config schema
- numeric ranges the optimiser and sampler need
- unknown sections/keys are reported as warnings, not errors
"""

from .base import SchemaValidator

KNOWN_KEYS = {
    "train": {"learning_rate", "batch_size", "total_steps", "ema_decay", "self_cond_prob", "seed", "log_every"},
    "model": {"hidden", "temb_dim", "sparsity_bits"},
    "schedule": {"kind", "offset"},
    "data": {"path", "synthetic", "preset", "n", "per_feature"},
    "sample": {"steps", "kind", "seed", "batch", "use_ema", "eta", "n"},
    "eval": {"metrics", "k", "bandwidth", "quantize_levels"},
}


class ConfigValidator(SchemaValidator):
    schema_name = "train_config"

    def validate(self, document: dict):
        result = super().validate(document)
        if isinstance(document, dict):
            result.warnings.extend(self._unknown_keys(document))
        return result

    def _unknown_keys(self, document: dict) -> list[str]:
        warnings = []
        for section, values in document.items():
            if section not in KNOWN_KEYS:
                warnings.append(f"Unknown config section: {section}")
                continue
            if not isinstance(values, dict):
                continue
            for key in values:
                if key not in KNOWN_KEYS[section]:
                    warnings.append(f"Unknown config key: {section}.{key}")
        return warnings

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        errors = []
        warnings = []

        train = document.get("train", {})
        if "learning_rate" in train and not train["learning_rate"] > 0:
            errors.append(f"train.learning_rate must be > 0 (got {train['learning_rate']})")
        if "ema_decay" in train and not 0.0 < train["ema_decay"] < 1.0:
            errors.append(f"train.ema_decay must lie in (0, 1) (got {train['ema_decay']})")
        if "self_cond_prob" in train and not 0.0 <= train["self_cond_prob"] <= 1.0:
            errors.append(f"train.self_cond_prob must lie in [0, 1] (got {train['self_cond_prob']})")
        if train.get("learning_rate", 0) > 1e-2:
            warnings.append(f"train.learning_rate {train['learning_rate']} is unusually large")

        sample = document.get("sample", {})
        if "steps" in sample and sample["steps"] < 1:
            errors.append(f"sample.steps must be >= 1 (got {sample['steps']})")

        data = document.get("data", {})
        if "path" in data and ("synthetic" in data or "preset" in data):
            errors.append("data.path cannot be combined with data.synthetic or data.preset")

        return errors, warnings


class SampleConfigValidator(SchemaValidator):
    """Validates the `sample` section on its own, for `sdd sample --config`."""

    schema_name = "sample_config"

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        errors = []
        if "steps" in document and document["steps"] < 1:
            errors.append(f"steps must be >= 1 (got {document['steps']})")
        if document.get("kind") == "ddim" and document.get("eta", 0) not in (0, 1):
            return errors, ["eta only affects the ddpm sampler"]
        return errors, []
