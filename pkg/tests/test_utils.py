#!/usr/bin/env python3
"""
Tests for utility functions
"""

import pytest
import tempfile
import json
import os

import numpy as np

import sys
sys.path.insert(0, '..')

from utils import (
    format_duration,
    ensure_dir, safe_json_save, file_hash,
    central_difference, max_abs,
    get_env, get_env_bool, get_env_int
)


class TestTimeUtils:
    """Test time utilities"""

    def test_format_duration_milliseconds(self):
        assert format_duration(0.25) == "250ms"

    def test_format_duration_seconds(self):
        assert format_duration(4.2) == "4.20s"

    def test_format_duration_minutes(self):
        assert format_duration(125) == "2.1m"

    def test_format_duration_hours(self):
        assert format_duration(7200) == "2.0h"


class TestFileUtils:
    """Test file utilities"""

    def test_ensure_dir_creates(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            new_dir = os.path.join(tmpdir, "a", "b", "c")
            result = ensure_dir(new_dir)
            assert os.path.isdir(new_dir)
            assert result.exists()

    def test_safe_json_save_nested(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            filepath = os.path.join(tmpdir, "nested", "test.json")
            data = {"key": "value", "number": 42}

            path = safe_json_save(filepath, data)
            with open(path) as f:
                loaded = json.load(f)

            assert loaded == data
            assert path.exists()

    def test_file_hash_stable(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            a = os.path.join(tmpdir, "a.csv")
            b = os.path.join(tmpdir, "b.csv")
            for path in (a, b):
                with open(path, "w") as f:
                    f.write("t,q_1\n0,0.5\n")
            assert file_hash(a) == file_hash(b)
            assert len(file_hash(a)) == 64


class TestNumerics:
    """Test numeric helpers"""

    def test_central_difference_scalar(self):
        x = np.array([0.3, -1.2])
        grad = central_difference(lambda v: np.sin(v[0]) * v[1], x, 1e-6)
        assert np.allclose(grad, [np.cos(0.3) * -1.2, np.sin(0.3)], atol=1e-9)

    def test_central_difference_stacks_last_axis(self):
        x = np.array([1.0, 2.0, 3.0])
        jac = central_difference(lambda v: np.outer(v, v), x, 1e-4)
        assert jac.shape == (3, 3, 3)
        # d(x_i x_j)/dx_k
        assert jac[0, 1, 1] == pytest.approx(1.0)
        assert jac[0, 1, 0] == pytest.approx(2.0)
        assert jac[2, 2, 2] == pytest.approx(6.0)
        assert jac[0, 1, 2] == pytest.approx(0.0, abs=1e-9)

    def test_max_abs(self):
        assert max_abs([1.0, -3.5, 2.0]) == 3.5
        assert max_abs([]) == 0.0


class TestEnvUtils:
    """Test environment utilities"""

    def test_get_env_default(self):
        result = get_env("NONEXISTENT_VAR_12345", "default")
        assert result == "default"

    def test_get_env_required_raises(self):
        with pytest.raises(ValueError):
            get_env("NONEXISTENT_VAR_12345", required=True)

    def test_get_env_bool_true(self):
        os.environ["TEST_BOOL"] = "true"
        assert get_env_bool("TEST_BOOL") == True
        del os.environ["TEST_BOOL"]

    def test_get_env_bool_false(self):
        os.environ["TEST_BOOL"] = "false"
        assert get_env_bool("TEST_BOOL", default=True) == False
        del os.environ["TEST_BOOL"]

    def test_get_env_int(self):
        os.environ["TEST_INT"] = "42"
        assert get_env_int("TEST_INT") == 42
        del os.environ["TEST_INT"]

    def test_get_env_int_default(self):
        assert get_env_int("NONEXISTENT_VAR_12345", 7) == 7

    def test_get_env_int_malformed(self, monkeypatch):
        monkeypatch.setenv("TEST_INT", "four")
        with pytest.raises(ValueError):
            get_env_int("TEST_INT")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
