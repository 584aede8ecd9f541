"""
ReportValidator

Validates metrics reports: schema shape plus value ranges
(mmd >= 0, correlations in [-1, 1], lisi in [0, 1], histogram totals).
"""

from .base import SchemaValidator


class ReportValidator(SchemaValidator):
    schema_name = "metrics_report"

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        errors = []
        warnings = []

        lo, hi = document.get("lisi_lower"), document.get("lisi_upper")
        lisi = document.get("lisi")
        if lisi is not None and lo is not None and hi is not None and not lo <= lisi <= hi:
            errors.append(f"lisi {lisi} lies outside its interval [{lo}, {hi}]")

        expected = {"sparsity_hist_real": document["n_real"], "sparsity_hist_gen": document["n_gen"]}
        for key, rows in expected.items():
            hist = document.get(key)
            if hist is None:
                continue
            if len(hist["edges"]) != len(hist["counts"]) + 1:
                errors.append(f"{key}: expected {len(hist['counts']) + 1} edges, found {len(hist['edges'])}")
            if sum(hist["counts"]) != rows:
                errors.append(f"{key}: counts sum to {sum(hist['counts'])}, expected {rows}")

        if all(document.get(k) is None for k in ("w1_stat", "mmd", "scc", "lisi", "sparsity_w1")):
            warnings.append("Report contains no metric values")

        return errors, warnings


class ThresholdResultValidator(SchemaValidator):
    schema_name = "threshold_result"

    def _check(self, document: dict) -> tuple[list[str], list[str]]:
        warnings = []
        if not document["converged"]:
            warnings.append(
                f"threshold search unconverged: achieved {document['achieved_sparsity']:.4f} "
                f"for target {document['target_sparsity']:.4f}"
            )
        return [], warnings
