"""Tests for fingerprints and run manifests."""

import json

import numpy as np
import pytest

from sparse_diffusion.errors import ConfigError, FormatError
from sparse_diffusion.manifest import (
    MANIFEST_FILE,
    RunManifest,
    _fnv1a_python,
    append_manifest,
    fnv1a_64,
    matrix_fingerprint,
    read_manifests,
)


class TestFingerprint:
    """Test suite for FNV-1a fingerprints."""

    @pytest.mark.parametrize("data,expected", [
        (b"", 0xCBF29CE484222325),
        (b"a", 0xAF63DC4C8601EC8C),
        (b"foobar", 0x85944171F73967E8),
    ])
    def test_reference_vectors(self, data, expected):
        assert fnv1a_64(data) == expected

    def test_compiled_path_matches_python(self):
        data = bytes(np.random.default_rng(0).integers(0, 256, size=10000, dtype=np.uint8))
        assert fnv1a_64(data) == _fnv1a_python(data)

    def test_matrix_fingerprint_depends_on_shape(self):
        assert matrix_fingerprint(np.zeros((2, 3))) != matrix_fingerprint(np.zeros((3, 2)))

    def test_matrix_fingerprint_is_stable(self):
        m = np.arange(6.0).reshape(2, 3)
        assert matrix_fingerprint(m) == matrix_fingerprint(m.copy())
        assert len(matrix_fingerprint(m)) == 16


class TestManifests:
    """Test suite for manifest files."""

    def _manifest(self, **changes):
        values = dict(command="sample", argv=["sample", "m.sddckpt", "--out", "o.sddmat"], config={}, seed=1,
                      artifacts={"samples": "o.sddmat"})
        values.update(changes)
        return RunManifest(**values)

    def test_append_only(self, tmp_path):
        append_manifest(tmp_path, self._manifest(seed=1))
        append_manifest(tmp_path, self._manifest(seed=2))
        entries = read_manifests(tmp_path / MANIFEST_FILE)
        assert [e["seed"] for e in entries] == [1, 2]
        assert entries[0]["build"].startswith("sparse-data-diffusion")

    def test_invalid_manifest_is_not_written(self, tmp_path):
        with pytest.raises(ConfigError):
            append_manifest(tmp_path, self._manifest(command="dance"))
        assert not (tmp_path / MANIFEST_FILE).exists()

    def test_lines_are_sorted_json(self, tmp_path):
        path = append_manifest(tmp_path, self._manifest())
        line = path.read_text().splitlines()[0]
        assert list(json.loads(line)) == sorted(json.loads(line))

    def test_corrupt_line(self, tmp_path):
        path = tmp_path / MANIFEST_FILE
        path.write_text('{"seed": 1}\nnot json\n')
        with pytest.raises(FormatError) as info:
            read_manifests(path)
        assert info.value.line == 2
