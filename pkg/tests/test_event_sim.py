import math

import numpy as np
import pytest

from franson.errors import ParameterError, RegimeError, UnsortedStreamError
from franson.event_sim import (
    DetectorModel,
    TimeTagStream,
    sample_outcome,
    simulate_streams,
)
from franson.interferometer import (
    JointOutcome,
    NmziConfig,
    ProbabilityTable,
    Slot,
    joint_probability_table,
    outcome_code,
)
from franson.spdc_source import PairBatch, PairSample, SpectralModel, sample_pairs

TAU = 30 / 0.299792458
IDEAL = DetectorModel(efficiency=1.0, jitter_sigma=0.0)


def nmzis(phi_a=0.0, phi_b=0.0):
    return NmziConfig(30.0, phi_a, "Alice"), NmziConfig(30.0, phi_b, "Bob")


def test_detector_validation():
    for kwargs in ({"efficiency": 1.5}, {"jitter_sigma": -1}, {"dark_rate": -2}):
        with pytest.raises(ParameterError):
            DetectorModel(**kwargs)


def test_stream_rejects_unsorted_and_negative():
    with pytest.raises(UnsortedStreamError):
        TimeTagStream(1, [5, 3])
    with pytest.raises(ParameterError):
        TimeTagStream(1, [-1, 3])


class TestSampleOutcome:
    def test_degenerate_table(self):
        rng = np.random.default_rng(0)
        target = JointOutcome(2, 4, Slot.SL)
        table = ProbabilityTable.degenerate(target)
        for _ in range(200):
            o = sample_outcome(table, rng)
            assert (o.port_A, o.port_B, o.slot) == (2, 4, Slot.SL)

    def test_unnormalized_rejected(self):
        with pytest.raises(ParameterError):
            sample_outcome(ProbabilityTable(np.full(12, 0.1)), np.random.default_rng(0))

    def test_multinomial_frequencies(self):
        a, b = nmzis(math.pi / 2, 0.0)
        table = joint_probability_table(a, b, PairSample(0, 0.0, 0.0, 0.0))
        rng = np.random.default_rng(1)
        n = 1_000_000
        codes = np.empty(n, dtype=np.int64)
        ll = []
        for i in range(n):
            o = sample_outcome(table, rng)
            codes[i] = o.code
            if o.slot is Slot.CENTRAL:
                ll.append(o.long_long)
        freq = np.bincount(codes, minlength=12) / n
        p = table.probs
        assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n))
        assert np.mean(ll) == pytest.approx(0.5, abs=0.002)


class TestSimulateStreams:
    def one_pair(self, t=1000.0):
        return PairBatch(np.array([t]), np.array([0.0]), np.array([0.0]))

    def test_forced_sl_outcome_single_trace(self):
        a, b = nmzis()
        code = outcome_code(1, 4, Slot.SL)
        streams = simulate_streams(a, b, self.one_pair(), IDEAL, seed=0, outcomes=[code])
        tags = {s.channel: s.tags.tolist() for s in streams}
        assert tags == {1: [1000], 2: [], 3: [], 4: [round(1000 + TAU)]}

    def test_forced_ls_and_central(self):
        a, b = nmzis()
        pairs = PairBatch(np.array([1000.0, 5000.0]), np.zeros(2), np.zeros(2))
        codes = [outcome_code(2, 3, Slot.LS), outcome_code(1, 3, Slot.CENTRAL)]
        streams = {s.channel: s.tags for s in
                   simulate_streams(a, b, pairs, IDEAL, seed=0, outcomes=codes)}
        assert streams[2].tolist() == [round(1000 + TAU)]
        assert streams[3][0] == 1000
        # central: both arms share the same delay (0 or tau)
        assert streams[1][0] - streams[3][1] == 0

    def test_zero_efficiency_leaves_only_darks(self):
        a, b = nmzis()
        pairs = sample_pairs(SpectralModel(), 10_000, seed=2)
        streams = simulate_streams(a, b, pairs, DetectorModel(0.0, 5.0), seed=2)
        assert all(len(s) == 0 for s in streams)
        streams = simulate_streams(a, b, pairs, DetectorModel(0.0, 5.0, dark_rate=1e5), seed=2)
        span_s = pairs.t_emit[-1] * 1e-12
        for s in streams:
            assert abs(len(s) - 1e5 * span_s) < 5 * math.sqrt(1e5 * span_s)

    def test_efficiency_thins_tags(self):
        a, b = nmzis()
        pairs = sample_pairs(SpectralModel(), 100_000, seed=3)
        streams = simulate_streams(a, b, pairs, DetectorModel(0.6, 5.0), seed=3)
        alice = len(streams[0]) + len(streams[1])
        assert abs(alice - 60_000) < 5 * math.sqrt(100_000 * 0.24)

    def test_singles_uniform(self):
        a, b = nmzis(0.0, 0.0)
        n = 1_000_000
        pairs = sample_pairs(SpectralModel(), n, seed=4)
        streams = simulate_streams(a, b, pairs, DetectorModel(), seed=4)
        for s in streams:
            assert abs(len(s) - n / 2) < 4 * math.sqrt(n / 4)

    def test_timing_structure_three_peaks(self):
        a, b = nmzis()
        pairs = sample_pairs(SpectralModel(), 50_000, seed=5)
        streams = simulate_streams(a, b, pairs, DetectorModel(jitter_sigma=5.0), seed=5)
        ta = np.sort(np.concatenate([streams[0].tags, streams[1].tags]))
        tb = np.sort(np.concatenate([streams[2].tags, streams[3].tags]))
        j = np.clip(np.searchsorted(tb, ta), 1, tb.size - 1)
        nearest = np.where(np.abs(ta - tb[j]) < np.abs(ta - tb[j - 1]), tb[j], tb[j - 1])
        d = (ta - nearest).astype(float)
        d = d[np.abs(d) < 300]
        jitter = 5.0 * math.sqrt(2)
        for centre in (-TAU, 0.0, TAU):
            peak = d[np.abs(d - centre) < 5 * jitter]
            assert peak.size > 0.2 * d.size
            assert abs(peak.mean() - centre) < 1.0
            assert peak.std() == pytest.approx(jitter, rel=0.05)
        between = np.abs(np.abs(d) - TAU / 2) < 10
        assert between.sum() == 0

    def test_seed_determinism(self):
        a, b = nmzis(0.4, 1.0)
        pairs = sample_pairs(SpectralModel(), 300_000, seed=6)
        det = DetectorModel(0.8, 5.0, 1e4)
        s1 = simulate_streams(a, b, pairs, det, seed=6)
        s2 = simulate_streams(a, b, pairs, det, seed=6)
        s3 = simulate_streams(a, b, pairs, det, seed=7)
        assert all(np.array_equal(x.tags, y.tags) for x, y in zip(s1, s2))
        assert not all(np.array_equal(x.tags, y.tags) for x, y in zip(s1, s3))

    def test_streams_sorted_and_integer(self):
        a, b = nmzis()
        pairs = sample_pairs(SpectralModel(), 50_000, seed=8)
        for s in simulate_streams(a, b, pairs, DetectorModel(dark_rate=1e5), seed=8):
            assert s.tags.dtype == np.int64
            assert np.all(np.diff(s.tags) >= 0)
            assert s.tags.size == 0 or s.tags[0] >= 0

    def test_regime_violation(self):
        a, b = nmzis()
        pairs = sample_pairs(SpectralModel(), 10, seed=9)
        with pytest.raises(RegimeError):
            simulate_streams(a, b, pairs, DetectorModel(), 0, model=SpectralModel(delta_f=0.001))
        with pytest.raises(RegimeError):
            simulate_streams(a, b, pairs, DetectorModel(jitter_sigma=30.0), 0)
        simulate_streams(a, b, pairs, DetectorModel(), 0, model=SpectralModel(delta_f=0.001),
                         force=True)

    def test_empty_pairs_rejected(self):
        a, b = nmzis()
        with pytest.raises(ParameterError):
            simulate_streams(a, b, [], IDEAL, 0)
