import json

import numpy as np
import pytest

from roughlevy.errors import ConfigurationError
from roughlevy.io import load_ensemble, load_field, save_ensemble, save_field
from roughlevy.levy import LevyConfig, sample_paths
from roughlevy.spectral import PeriodicField


def field_2d():
    return PeriodicField.from_function(lambda x, y: np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y), 4, 2, 2.0)


class TestFieldContainer:
    def test_round_trip_full_precision(self, tmp_path):
        u = field_2d()
        path = save_field(tmp_path / "u.rlf", u, {"seed": 3}, precision="complex128")
        v = load_field(path)
        assert (v.dim, v.grid_log2, v.period) == (2, 4, 2.0)
        np.testing.assert_array_equal(v.coeffs, u.coeffs)
        side = json.loads((tmp_path / "u.rlf.json").read_text())
        assert side["seed"] == 3 and side["dtype"] == "complex128"

    def test_single_precision_default(self, tmp_path):
        u = PeriodicField.from_values(np.random.default_rng(0).standard_normal(64))
        v = load_field(save_field(tmp_path / "u.rlf", u))
        np.testing.assert_allclose(v.coeffs, u.coeffs, atol=1e-7)
        assert (tmp_path / "u.rlf").stat().st_size == 20 + 8 * 64

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk"
        p.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(ConfigurationError):
            load_field(p)

    def test_truncated_payload(self, tmp_path):
        p = save_field(tmp_path / "u.rlf", field_2d())
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ConfigurationError):
            load_field(p)

    def test_unknown_precision(self, tmp_path):
        with pytest.raises(ConfigurationError):
            save_field(tmp_path / "u", field_2d(), precision="float16")


class TestEnsembleContainer:
    def test_round_trip(self, tmp_path):
        ens = sample_paths(LevyConfig.isotropic_1d(1.5, 4), np.linspace(0, 1, 9), 5)
        path = save_ensemble(tmp_path / "paths.rle", ens, {"note": "test"})
        back = load_ensemble(path)
        np.testing.assert_array_equal(back.values, ens.values)
        np.testing.assert_array_equal(back.times, ens.times)
        assert back.meta["M"] == 5 and back.meta["note"] == "test"

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.rle"
        p.write_bytes(b"RLFD" + bytes(40))
        with pytest.raises(ConfigurationError):
            load_ensemble(p)
