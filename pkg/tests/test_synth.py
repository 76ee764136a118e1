import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgsnn.errors import ConfigError
from semgsnn.synth import (DEFAULT_TEMPLATES, SynthConfig, class_envelope, generate_dataset, generate_stream,
                           stratified_split)

SMALL = dict(actions_per_class=3, lead_in_ms=500, gap_ms=(200, 300))


def _mask(stream, intervals):
    m = np.zeros(stream.signal.samples.shape[1], bool)
    for a, b, *_ in intervals:
        m[a:b] = True
    return m


class TestGenerateStream:
    def test_deterministic(self):
        cfg = SynthConfig(**SMALL)
        a, b = generate_stream(cfg, 3), generate_stream(cfg, 3)
        np.testing.assert_array_equal(a.signal.samples, b.signal.samples)
        assert a.labels == b.labels

    def test_seed_changes_output(self):
        cfg = SynthConfig(**SMALL)
        assert not np.array_equal(generate_stream(cfg, 1).signal.samples, generate_stream(cfg, 2).signal.samples)

    def test_noiseless_zero_outside_actions(self):
        s = generate_stream(SynthConfig(snr_db=math.inf, **SMALL), 0)
        outside = ~_mask(s, s.labels)
        assert not np.abs(s.signal.samples[:, outside]).any()
        assert np.abs(s.signal.samples[:, ~outside]).sum() > 0

    def test_zero_actions(self):
        s = generate_stream(SynthConfig(actions_per_class=0, lead_in_ms=100), 0)
        assert s.labels == []
        assert s.signal.samples.shape[1] > 0

    def test_labels_sorted_disjoint_in_bounds(self):
        s = generate_stream(SynthConfig(distractors=2, **SMALL), 5)
        n = s.signal.samples.shape[1]
        spans = sorted([lab[:2] for lab in s.labels] + list(s.distractors))
        assert s.labels == sorted(s.labels)
        for (a0, b0), (a1, _) in zip(spans, spans[1:]):
            assert b0 <= a1
        assert all(0 <= a < b <= n for a, b in spans)
        assert len(s.distractors) == 2

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.integers(100, 300), st.integers(300, 700))
    def test_durations_in_range(self, seed, lo, hi):
        cfg = SynthConfig(action_ms=(lo, hi), **SMALL)
        s = generate_stream(cfg, seed)
        for a, b, _ in s.labels:
            assert cfg.samples(lo) <= b - a <= cfg.samples(hi)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-5, 20))
    def test_rms_inside_exceeds_outside(self, seed, snr):
        s = generate_stream(SynthConfig(snr_db=snr, **SMALL), seed)
        inside = _mask(s, s.labels)
        x = np.abs(s.signal.samples)
        assert np.sqrt(np.mean(x[:, inside] ** 2)) > np.sqrt(np.mean(x[:, ~inside] ** 2))

    def test_class_counts(self):
        s = generate_stream(SynthConfig(classes=3, **SMALL), 0)
        assert Counter(lab[2] for lab in s.labels) == {0: 3, 1: 3, 2: 3}

    def test_fixed_duration(self):
        s = generate_stream(SynthConfig(duration_s=20.0, **SMALL), 0)
        assert s.signal.samples.shape[1] == 40000

    def test_duration_too_short(self):
        with pytest.raises(ConfigError):
            generate_stream(SynthConfig(duration_s=1.0, **SMALL), 0)


class TestSynthConfig:
    def test_zero_classes(self):
        with pytest.raises(ConfigError, match="synth.classes"):
            SynthConfig(classes=0)

    def test_too_many_classes(self):
        with pytest.raises(ConfigError):
            SynthConfig(classes=len(DEFAULT_TEMPLATES) + 1)

    @pytest.mark.parametrize("kw", [dict(channels=0), dict(action_ms=(600, 150)), dict(snr_db=math.nan),
                                    dict(rate_hz=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SynthConfig(**kw)

    def test_templates_distinct(self):
        pats = [tuple(np.round(np.asarray(t["gains"]) / np.max(t["gains"]), 6)) for t in DEFAULT_TEMPLATES.values()]
        assert len(set(pats)) == len(pats)

    def test_envelope_positive_peak(self):
        env = class_envelope(DEFAULT_TEMPLATES[0], 500)
        assert env.shape == (500,) and env.max() > 0 and env.min() >= 0


class TestDataset:
    def test_split_arithmetic(self):
        labels = [(i * 10, i * 10 + 5, i % 4) for i in range(400)]
        train, test = stratified_split(labels, 0.8, 0)
        assert len(train) == 320 and len(test) == 80
        assert Counter(l[2] for l in train) == {c: 80 for c in range(4)}
        assert Counter(l[2] for l in test) == {c: 20 for c in range(4)}
        assert not set(train) & set(test)

    def test_split_seeded(self):
        labels = [(i, i + 1, i % 2) for i in range(20)]
        assert stratified_split(labels, 0.5, 1) == stratified_split(labels, 0.5, 1)
        assert stratified_split(labels, 0.5, 1) != stratified_split(labels, 0.5, 2)

    def test_generate_dataset(self):
        ds = generate_dataset(SynthConfig(actions_per_class=5, lead_in_ms=300, gap_ms=(200, 250)), 0, 0.6)
        train, test = ds
        assert len(train) == 12 and len(test) == 8
        assert sorted(train + test) == ds.stream.labels

    @pytest.mark.parametrize("split", [0.0, 1.0, 0.01])
    def test_bad_split(self, split):
        with pytest.raises(ConfigError):
            generate_dataset(SynthConfig(actions_per_class=5), 0, split)
