"""Per-pair outcome sampling and four-channel detector time-tag streams.

Channels are numbered like the interferometer ports: 1 and 2 belong to
Alice, 3 and 4 to Bob. Timestamps are integer picoseconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from franson._rng import chunk_bounds, substream
from franson.errors import ParameterError, RegimeError, UnsortedStreamError
from franson.interferometer import (
    JointOutcome,
    NmziConfig,
    ProbabilityTable,
    Slot,
    joint_phases,
    probability_rows,
)
from franson.spdc_source import SpectralModel, as_batch, validate_regime

CHANNELS = (1, 2, 3, 4)

# Outcome code layout (see interferometer.outcome_code): slot*4 + a*2 + b.
_CODE_SLOT = np.arange(12) // 4
_CODE_PORT_A = (np.arange(12) % 4) // 2 + 1
_CODE_PORT_B = np.arange(12) % 2 + 3


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    jitter_sigma: float = 5.0  # ps
    dark_rate: float = 0.0  # counts per second

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not self.jitter_sigma >= 0:
            raise ParameterError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if not self.dark_rate >= 0:
            raise ParameterError(f"dark_rate must be >= 0, got {self.dark_rate}")


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    channel: int
    tags: np.ndarray
    seed: int | None = None
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ParameterError(f"channel must be 1..4, got {self.channel}")
        tags = np.ascontiguousarray(self.tags, dtype=np.int64)
        object.__setattr__(self, "tags", tags)
        if tags.size and tags[0] < 0:
            raise ParameterError(f"channel {self.channel}: negative timestamp {tags[0]}")
        check_sorted(tags, f"channel {self.channel}")

    def __len__(self) -> int:
        return self.tags.size


def check_sorted(tags: np.ndarray, what: str = "stream") -> None:
    if tags.size > 1 and np.any(tags[1:] < tags[:-1]):
        bad = int(np.argmax(tags[1:] < tags[:-1]))
        raise UnsortedStreamError(f"{what} is not sorted at index {bad + 1}")


def sample_outcome(table: ProbabilityTable, rng: np.random.Generator) -> JointOutcome:
    """Inverse-CDF draw of one outcome; central outcomes get a fair SS/LL bit."""
    probs = np.asarray(table.probs, dtype=float)
    if probs.shape != (12,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ParameterError(f"probability table is not normalized (sum={probs.sum()!r})")
    cdf = np.cumsum(probs)
    code = min(int(np.searchsorted(cdf, rng.random(), side="right")), 11)
    while probs[code] == 0.0:  # never land on a zero-probability class via rounding
        code -= 1
    long_long = bool(rng.random() < 0.5) if code // 4 == Slot.CENTRAL else None
    return JointOutcome.from_code(code, long_long)


def draw_outcome_codes(joint_phase: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probability_rows(joint_phase), axis=1)
    cdf[:, -1] = 1.0
    return (u[:, None] >= cdf).sum(axis=1).astype(np.int8)


def simulate_streams(cfgA: NmziConfig, cfgB: NmziConfig, pairs, det: DetectorModel,
                     seed: int, *, model: SpectralModel | None = None,
                     outcomes=None, force: bool = False, config_hash: str = "",
                     min_factor: float = 10.0) -> list[TimeTagStream]:
    """Time tags on channels 1..4 for a batch of pairs.

    The regime is checked against ``model`` (when given) and refused with
    :class:`RegimeError` unless ``force``. ``outcomes`` may pin the outcome
    code of every pair, bypassing the probability tables.
    """
    batch = as_batch(pairs)
    n = len(batch)
    if n == 0:
        raise ParameterError("pair list is empty")
    if not math.isclose(cfgA.delta_L, cfgB.delta_L, rel_tol=0, abs_tol=1e-12):
        raise ParameterError(
            f"mismatched delta_L: Alice {cfgA.delta_L} mm, Bob {cfgB.delta_L} mm")
    tau = cfgA.tau
    if not force:
        if model is not None:
            report = validate_regime(model, cfgA.delta_L, min_factor, det.jitter_sigma)
            if not report.event_mode_permitted:
                raise RegimeError(f"event mode not permitted: {report.to_dict()}")
        elif tau < min_factor * det.jitter_sigma:
            raise RegimeError(f"arrival slots not separable: tau={tau:.3f} ps, "
                              f"jitter={det.jitter_sigma} ps")
    if outcomes is not None:
        outcomes = np.asarray(outcomes, dtype=np.int8)
        if outcomes.shape != (n,) or outcomes.min() < 0 or outcomes.max() > 11:
            raise ParameterError("outcomes must hold one code in 0..11 per pair")

    t_a = np.empty(n)
    t_b = np.empty(n)
    ch_a = np.empty(n, dtype=np.int8)
    ch_b = np.empty(n, dtype=np.int8)
    keep_a = np.ones(n, dtype=bool)
    keep_b = np.ones(n, dtype=bool)
    for k, lo, hi in chunk_bounds(n):
        m = hi - lo
        if outcomes is None:
            phase = joint_phases(cfgA.phase_plate, cfgB.phase_plate, batch.eps[lo:hi], tau)
            codes = draw_outcome_codes(phase, substream(seed, "outcomes", k).random(m))
        else:
            codes = outcomes[lo:hi]
        slot = _CODE_SLOT[codes]
        long_long = substream(seed, "ll_bit", k).random(m) < 0.5
        delay_a = np.where(slot == Slot.LS, tau, 0.0)
        delay_b = np.where(slot == Slot.SL, tau, 0.0)
        central_ll = (slot == Slot.CENTRAL) & long_long
        delay_a[central_ll] = tau
        delay_b[central_ll] = tau
        t_a[lo:hi] = batch.t_emit[lo:hi] + delay_a
        t_b[lo:hi] = batch.t_emit[lo:hi] + delay_b
        if det.jitter_sigma > 0:
            jit = substream(seed, "jitter", k).normal(0.0, det.jitter_sigma, 2 * m)
            t_a[lo:hi] += jit[:m]
            t_b[lo:hi] += jit[m:]
        if det.efficiency < 1.0:
            u = substream(seed, "efficiency", k).random(2 * m)
            keep_a[lo:hi] = u[:m] < det.efficiency
            keep_b[lo:hi] = u[m:] < det.efficiency
        ch_a[lo:hi] = _CODE_PORT_A[codes]
        ch_b[lo:hi] = _CODE_PORT_B[codes]

    times = {
        "a": np.maximum(np.rint(t_a), 0).astype(np.int64),
        "b": np.maximum(np.rint(t_b), 0).astype(np.int64),
    }
    span = int(math.ceil(batch.t_emit[-1] + tau + 10 * det.jitter_sigma)) + 1
    streams = []
    for ch in CHANNELS:
        side, chans, keep = ("a", ch_a, keep_a) if ch <= 2 else ("b", ch_b, keep_b)
        tags = times[side][(chans == ch) & keep]
        if det.dark_rate > 0:
            rng = substream(seed, "darks", ch)
            n_dark = rng.poisson(det.dark_rate * span * 1e-12)
            tags = np.concatenate([tags, rng.integers(0, span, n_dark, dtype=np.int64)])
        tags = np.sort(tags, kind="stable")
        streams.append(TimeTagStream(ch, tags, seed, config_hash,
                                     {"n_pairs": n, "span_ps": span}))
    return streams
