import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semgsnn import io
from semgsnn.encode import SpikeTensor
from semgsnn.errors import InputError, VersionError
from semgsnn.signal import CalibrationProfile, SignalBuffer
from semgsnn.snn import init_model


class TestSignalFile:
    def test_roundtrip_exact(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((3, 200)) * 1e-3
        io.write_signal(tmp_path / "s.semg", SignalBuffer(x, 2000.0))
        back = io.read_signal(tmp_path / "s.semg")
        np.testing.assert_array_equal(back.samples, x)
        assert back.rate_hz == 2000.0

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(float, (2, 5), elements=st.floats(-1e30, 1e30, allow_subnormal=False)))
    def test_roundtrip_property(self, tmp_path_factory, x):
        p = tmp_path_factory.mktemp("sig") / "s.semg"
        io.write_signal(p, SignalBuffer(x, 1000.0))
        np.testing.assert_array_equal(io.read_signal(p).samples, x)

    def test_decimal_notation(self, tmp_path):
        p = tmp_path / "s.semg"
        io.write_signal(p, SignalBuffer([[1e-7, 3e20, -2.5e-5]]))
        body = p.read_text().splitlines()[1:]
        assert not any("e" in line for line in body)

    def test_header(self, tmp_path):
        p = tmp_path / "s.semg"
        io.write_signal(p, SignalBuffer(np.zeros((2, 1)), 2000.0))
        assert p.read_text().splitlines()[0] == "semg,v1,channels=2,rate=2000"

    def test_non_finite(self, tmp_path):
        with pytest.raises(InputError):
            io.write_signal(tmp_path / "s.semg", SignalBuffer([[np.nan]]))

    def test_version(self, tmp_path):
        p = tmp_path / "s.semg"
        p.write_text("semg,v9,channels=1,rate=2000\n0.0\n")
        with pytest.raises(VersionError):
            io.read_signal(p)

    def test_channel_mismatch(self, tmp_path):
        p = tmp_path / "s.semg"
        p.write_text("semg,v1,channels=3,rate=2000\n0.0,1.0\n")
        with pytest.raises(InputError):
            io.read_signal(p)

    def test_wrong_kind(self, tmp_path):
        p = tmp_path / "s.semg"
        p.write_text("hello\n")
        with pytest.raises(InputError):
            io.read_signal(p)


class TestSpikeFile:
    def test_roundtrip(self, tmp_path):
        bits = (np.random.default_rng(1).random((2, 3, 17)) < 0.3).astype(np.uint8)
        io.write_spikes(tmp_path / "x.txt", SpikeTensor(bits))
        np.testing.assert_array_equal(io.read_spikes(tmp_path / "x.txt").bits, bits)

    def test_layout_channel_major(self, tmp_path):
        bits = np.zeros((2, 2, 2), np.uint8)
        bits[0, 1, 0] = 1
        bits[1, 0, 1] = 1
        io.write_spikes(tmp_path / "x.txt", SpikeTensor(bits))
        lines = (tmp_path / "x.txt").read_text().splitlines()
        assert lines == ["spikes,v1,channels=2,trains=2,steps=2", "0100", "0010"]

    def test_bad_char(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("spikes,v1,channels=1,trains=1,steps=2\n0\n2\n")
        with pytest.raises(InputError):
            io.read_spikes(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("spikes,v1,channels=1,trains=2,steps=2\n01\n")
        with pytest.raises(InputError):
            io.read_spikes(p)


class TestLabels:
    def test_roundtrip(self, tmp_path):
        labels = [(0, 10, 1), (20, 35, 0)]
        io.write_labels(tmp_path / "l.csv", labels)
        assert io.read_labels(tmp_path / "l.csv") == labels

    def test_headerless(self, tmp_path):
        (tmp_path / "l.csv").write_text("5,9,2\n")
        assert io.read_labels(tmp_path / "l.csv") == [(5, 9, 2)]


class TestJsonFiles:
    def test_profile_roundtrip(self, tmp_path):
        p = CalibrationProfile([0.5, 0.25], alpha=16.0, theta_min=0.07)
        io.write_profile(tmp_path / "p.json", p)
        q = io.read_profile(tmp_path / "p.json")
        np.testing.assert_array_equal(q.median_per_channel, p.median_per_channel)
        assert (q.alpha, q.theta_min) == (16.0, 0.07)

    def test_model_roundtrip(self, tmp_path):
        m = init_model(12, hidden=5, classes=3, population=2, seed=9, t_sim=7)
        io.write_model(tmp_path / "m.json", m)
        back = io.read_model(tmp_path / "m.json")
        np.testing.assert_array_equal(back.weights_in, m.weights_in)
        np.testing.assert_array_equal(back.weights_out, m.weights_out)
        assert (back.classes, back.population, back.t_sim, back.beta) == (3, 2, 7, m.beta)

    def test_model_layout(self, tmp_path):
        io.write_model(tmp_path / "m.json", init_model(4, hidden=2, classes=2, population=1))
        d = json.loads((tmp_path / "m.json").read_text())
        assert d["version"] == 1
        assert d["dims"] == {"H": 4, "hidden": 2, "classes": 2, "p": 1}
        assert set(d["lif"]) == {"beta", "u_th", "t_sim"}
        assert {"L", "t_fix"} <= set(d["solver"])

    def test_model_version(self, tmp_path):
        d = io.model_to_dict(init_model(4, hidden=2, classes=2, population=1))
        d["version"] = 2
        (tmp_path / "m.json").write_text(json.dumps(d))
        with pytest.raises(VersionError):
            io.read_model(tmp_path / "m.json")

    def test_model_dims_mismatch(self):
        d = io.model_to_dict(init_model(4, hidden=2, classes=2, population=1))
        d["dims"]["H"] = 5
        with pytest.raises(InputError):
            io.model_from_dict(d)

    def test_missing_version(self, tmp_path):
        (tmp_path / "p.json").write_text("{}")
        with pytest.raises(InputError):
            io.read_profile(tmp_path / "p.json")

    def test_sha256(self, tmp_path):
        (tmp_path / "a").write_bytes(b"abc")
        assert io.file_sha256(tmp_path / "a") == \
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
