"""Entangled-pair ensemble and the Franson operating-regime check.

Units used throughout the package: optical frequencies in THz, pump
linewidth and pump jitter in GHz, times in ps, lengths in mm.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from franson._rng import chunk_bounds, substream
from franson.errors import ParameterError

C_MM_PER_PS = 0.299792458
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
# Coherence length uses the round 3e8 m/s so that 1 GHz maps to exactly 300 mm.
C_COHERENCE_MM_PER_PS = 0.3
GHZ_TO_THZ = 1e-3
DEFAULT_RATE = 1e6  # pairs per second


def delay_ps(delta_L: float) -> float:
    """Path-length imbalance (mm) to transit-time difference (ps)."""
    return delta_L / C_MM_PER_PS


@dataclass(frozen=True)
class SpectralModel:
    f0: float = 375.0  # THz (800 nm)
    delta_f: float = 1.0  # THz, FWHM
    pump_linewidth: float = 1.0  # GHz, FWHM
    distribution: str = "gaussian"

    def __post_init__(self):
        if not self.f0 > 0:
            raise ParameterError(f"f0 must be positive, got {self.f0}")
        if not self.delta_f > 0:
            raise ParameterError(f"delta_f must be positive, got {self.delta_f}")
        if not self.pump_linewidth >= 0:
            raise ParameterError(
                f"pump_linewidth must be non-negative, got {self.pump_linewidth}")
        if self.distribution != "gaussian":
            raise ParameterError(
                f"only gaussian spectra are supported, got {self.distribution!r}")

    @property
    def sigma_detuning(self) -> float:
        """Std of the signal detuning (THz)."""
        return self.delta_f * FWHM_TO_SIGMA

    @property
    def sigma_pump(self) -> float:
        """Std of the pump-frequency jitter (GHz)."""
        return self.pump_linewidth * FWHM_TO_SIGMA

    @property
    def coherence_length(self) -> float:
        """Pair coherence length c / linewidth in mm; infinite for a zero-width pump."""
        if self.pump_linewidth == 0:
            return math.inf
        return C_COHERENCE_MM_PER_PS / (self.pump_linewidth * GHZ_TO_THZ)

    @property
    def slot_time(self) -> float:
        """Single-photon coherence time 1 / delta_f in ps."""
        return 1.0 / self.delta_f


@dataclass(frozen=True)
class PairSample:
    id: int
    t_emit: float  # ps
    delta_j: float  # THz, signal detuning
    eps_j: float  # GHz, pump jitter
    f0: float = 0.0

    @property
    def f_signal(self) -> float:
        return self.f0 + self.delta_j + 0.5 * self.eps_j * GHZ_TO_THZ

    @property
    def f_idler(self) -> float:
        return self.f0 - self.delta_j + 0.5 * self.eps_j * GHZ_TO_THZ


@dataclass(frozen=True, eq=False)
class PairBatch(Sequence):
    """Column-oriented batch of pairs; indexing yields :class:`PairSample`."""

    t_emit: np.ndarray
    delta: np.ndarray
    eps: np.ndarray
    f0: float = 0.0
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(len(self.t_emit), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.t_emit)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PairBatch(self.t_emit[i], self.delta[i], self.eps[i], self.f0, self.ids[i])
        return PairSample(int(self.ids[i]), float(self.t_emit[i]),
                          float(self.delta[i]), float(self.eps[i]), self.f0)

    @classmethod
    def from_samples(cls, samples: Sequence[PairSample]) -> PairBatch:
        samples = list(samples)
        f0 = samples[0].f0 if samples else 0.0
        return cls(
            np.array([s.t_emit for s in samples], dtype=float),
            np.array([s.delta_j for s in samples], dtype=float),
            np.array([s.eps_j for s in samples], dtype=float),
            f0,
            np.array([s.id for s in samples], dtype=np.int64),
        )


def as_batch(pairs) -> PairBatch:
    if isinstance(pairs, PairBatch):
        return pairs
    return PairBatch.from_samples(pairs)


def sample_pairs(model: SpectralModel, n: int, mean_rate: float = DEFAULT_RATE,
                 seed: int = 0) -> PairBatch:
    """Draw ``n`` pairs: Gaussian detuning and pump jitter, Poisson emission times.

    ``mean_rate`` is in pairs per second. The result is bit-identical for a
    given ``(model, n, mean_rate, seed)``.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not mean_rate > 0:
        raise ParameterError(f"mean_rate must be positive, got {mean_rate}")
    mean_gap_ps = 1e12 / mean_rate
    gaps = np.empty(n)
    delta = np.empty(n)
    eps = np.empty(n)
    for k, lo, hi in chunk_bounds(n):
        m = hi - lo
        gaps[lo:hi] = substream(seed, "pairs", k, 0).exponential(mean_gap_ps, m)
        delta[lo:hi] = substream(seed, "pairs", k, 1).normal(0.0, model.sigma_detuning, m)
        if model.pump_linewidth > 0:
            eps[lo:hi] = substream(seed, "pairs", k, 2).normal(0.0, model.sigma_pump, m)
        else:
            eps[lo:hi] = 0.0
    return PairBatch(np.cumsum(gaps), delta, eps, model.f0)


@dataclass(frozen=True)
class RegimeReport:
    delta_L: float
    tau: float
    ratio_decoherence: float
    ratio_coherence: float
    min_factor: float
    local_decoherence: bool
    pair_coherence: bool
    slots_separable: bool

    @property
    def event_mode_permitted(self) -> bool:
        return self.local_decoherence and self.pair_coherence and self.slots_separable

    def to_dict(self) -> dict:
        return {
            "delta_L_mm": self.delta_L,
            "tau_ps": self.tau,
            "ratio_decoherence": self.ratio_decoherence,
            "ratio_coherence": self.ratio_coherence,
            "min_factor": self.min_factor,
            "local_decoherence": self.local_decoherence,
            "pair_coherence": self.pair_coherence,
            "slots_separable": self.slots_separable,
            "event_mode_permitted": self.event_mode_permitted,
        }


def validate_regime(model: SpectralModel, delta_L: float, min_factor: float = 10.0,
                    jitter_ps: float = 0.0) -> RegimeReport:
    """Check both Franson conditions for an imbalance ``delta_L`` (mm).

    Local decoherence needs ``delta_f * tau >= min_factor * pi``; pair
    coherence needs ``l_c >= min_factor * delta_L``. Event mode additionally
    needs the three arrival slots to be resolvable:
    ``tau >= min_factor * (1/delta_f + jitter_ps)``.
    Verdicts are reported, never raised.
    """
    if not delta_L > 0:
        raise ParameterError(f"delta_L must be positive, got {delta_L}")
    tau = delay_ps(delta_L)
    ratio_dec = model.delta_f * tau
    ratio_coh = delta_L / model.coherence_length
    return RegimeReport(
        delta_L=delta_L,
        tau=tau,
        ratio_decoherence=ratio_dec,
        ratio_coherence=ratio_coh,
        min_factor=min_factor,
        local_decoherence=ratio_dec >= min_factor * math.pi,
        pair_coherence=model.coherence_length >= min_factor * delta_L,
        slots_separable=tau >= min_factor * (model.slot_time + jitter_ps),
    )
