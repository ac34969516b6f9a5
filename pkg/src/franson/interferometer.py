"""Wave-optics core: unbalanced MZI port amplitudes and pair statistics.

Two descriptions of the same physics live here and are kept consistent by
the test-suite:

* analytic mode: per-pair local intensities and their closed-form ensemble
  averages over the Gaussian detuning / pump-jitter ensemble;
* event mode: a per-pair joint probability table over (Alice port, Bob port,
  arrival slot), from which detector time tags are drawn.

Intensities are normalized to I0 = 1. Phases are in radians; the static
2*pi*f0*tau term is absorbed into the experimenter's phase plates.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from franson.errors import ParameterError
from franson.spdc_source import GHZ_TO_THZ, PairSample, SpectralModel, delay_ps

TWO_PI = 2.0 * math.pi
ALICE_PORTS = (1, 2)
BOB_PORTS = (3, 4)
PORT_PAIRS = ((1, 3), (1, 4), (2, 3), (2, 4))


class Slot(enum.IntEnum):
    """Arrival-time class of a pair, keyed by tau_AB = t_A - t_B."""

    SL = 0  # Alice short, Bob long: tau_AB = -tau
    CENTRAL = 1  # SS or LL: tau_AB = 0
    LS = 2  # Alice long, Bob short: tau_AB = +tau

    @property
    def delay_sign(self) -> int:
        return self.value - 1


@dataclass(frozen=True)
class NmziConfig:
    delta_L: float  # mm
    phase_plate: float = 0.0  # rad
    label: str = "Alice"

    def __post_init__(self):
        if not self.delta_L > 0:
            raise ParameterError(f"delta_L must be positive, got {self.delta_L}")
        if self.label not in ("Alice", "Bob"):
            raise ParameterError(f"label must be 'Alice' or 'Bob', got {self.label!r}")
        object.__setattr__(self, "phase_plate", float(self.phase_plate) % TWO_PI)

    @property
    def tau(self) -> float:
        return delay_ps(self.delta_L)

    @property
    def ports(self) -> tuple[int, int]:
        return ALICE_PORTS if self.label == "Alice" else BOB_PORTS


@dataclass(frozen=True)
class PortAmplitudes:
    """Coefficients ``(a_S, a_L)`` on the path states for each output port."""

    amplitudes: dict[int, tuple[complex, complex]]

    def __getitem__(self, port: int) -> tuple[complex, complex]:
        return self.amplitudes[port]

    def port_norm(self, port: int) -> float:
        a_s, a_l = self.amplitudes[port]
        return abs(a_s) ** 2 + abs(a_l) ** 2


def port_amplitudes(cfg: NmziConfig, phase: float | None = None,
                    eta: float = 0.0) -> PortAmplitudes:
    """Output-port amplitudes of one interferometer at phase ``phase``.

    The lower-numbered port carries ``(|S> - |L> e^{i phase}) / 2`` and the
    other ``i (|S> + |L> e^{i phase}) / 2``. ``eta`` is a global phase; it
    drops out of every probability.
    """
    if phase is None:
        phase = cfg.phase_plate
    g = np.exp(1j * eta)
    e = np.exp(1j * phase)
    minus, plus = cfg.ports
    return PortAmplitudes({
        minus: (0.5 * g, -0.5 * g * e),
        plus: (0.5j * g, 0.5j * g * e),
    })


def port_sign(port: int) -> int:
    """-1 for the dark-at-zero-phase ports (1, 3), +1 for ports 2 and 4."""
    if port in (1, 3):
        return -1
    if port in (2, 4):
        return 1
    raise ParameterError(f"invalid port {port!r}; expected 1..4")


def parse_port_pair(port_pair) -> tuple[int, int]:
    if isinstance(port_pair, str):
        port_pair = tuple(int(ch) for ch in port_pair.strip("()").replace(",", "").replace(" ", ""))
    a, b = (int(p) for p in port_pair)
    if a not in ALICE_PORTS or b not in BOB_PORTS:
        raise ParameterError(f"invalid port pair {port_pair!r}; expected (1|2, 3|4)")
    return a, b


def local_intensity(port: int, phase_j):
    """Per-pair intensity at ``port`` when the photon is coherent over both paths."""
    return 0.5 * (1.0 + port_sign(port) * np.cos(phase_j))


def pair_phase_offsets(delta, eps, tau: float):
    """Per-pair phase excursions ``(alice, bob)`` from detuning and pump jitter.

    Signal sits at ``f0 + delta + eps/2`` and idler at ``f0 - delta + eps/2``,
    so the sum of the two offsets carries only the pump jitter.
    """
    half_eps = 0.5 * np.asarray(eps) * GHZ_TO_THZ
    delta = np.asarray(delta)
    return TWO_PI * (delta + half_eps) * tau, TWO_PI * (-delta + half_eps) * tau


def local_visibility(model: SpectralModel, delta_L: float) -> float:
    """Ensemble fringe visibility seen by one detector."""
    tau = delay_ps(delta_L)
    var = model.sigma_detuning ** 2 + 0.25 * (model.sigma_pump * GHZ_TO_THZ) ** 2
    return math.exp(-2.0 * math.pi ** 2 * var * tau ** 2)


def pump_visibility(model: SpectralModel, delta_L: float) -> float:
    """Visibility of the joint fringe, limited only by pump-frequency jitter."""
    tau = delay_ps(delta_L)
    return math.exp(-2.0 * math.pi ** 2 * (model.sigma_pump * GHZ_TO_THZ * tau) ** 2)


def local_mean_intensity(port: int, base_phase, model: SpectralModel, delta_L: float):
    """Ensemble-mean singles intensity at ``port``.

    Wideband sources give a flat 1/2; narrowband sources recover the
    single-photon fringe ``(1 -/+ cos phase) / 2``.
    """
    v = local_visibility(model, delta_L)
    return 0.5 * (1.0 + port_sign(port) * v * np.cos(base_phase))


@dataclass(frozen=True)
class JointOutcome:
    port_A: int
    port_B: int
    slot: Slot
    long_long: bool | None = None  # only meaningful for CENTRAL

    @property
    def code(self) -> int:
        return outcome_code(self.port_A, self.port_B, self.slot)

    @classmethod
    def from_code(cls, code: int, long_long: bool | None = None) -> JointOutcome:
        slot, rest = divmod(int(code), 4)
        a, b = divmod(rest, 2)
        return cls(a + 1, b + 3, Slot(slot), long_long if slot == Slot.CENTRAL else None)


def outcome_code(port_A: int, port_B: int, slot) -> int:
    """Flat index ``slot*4 + (port_A-1)*2 + (port_B-3)`` in ``0..11``."""
    return int(slot) * 4 + (port_A - 1) * 2 + (port_B - 3)


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    """Joint distribution of one pair over the 12 outcome classes.

    ``probs`` is indexed by :func:`outcome_code`.
    """

    probs: np.ndarray
    phi_j: float = 0.0
    psi_j: float = 0.0

    @property
    def joint_phase(self) -> float:
        return self.phi_j + self.psi_j

    def __getitem__(self, key) -> float:
        if isinstance(key, JointOutcome):
            return float(self.probs[key.code])
        port_A, port_B, slot = key
        return float(self.probs[outcome_code(port_A, port_B, slot)])

    def items(self):
        for code, p in enumerate(self.probs):
            yield JointOutcome.from_code(code), float(p)

    def total(self) -> float:
        return float(self.probs.sum())

    def slot_marginals(self) -> np.ndarray:
        return self.probs.reshape(3, 4).sum(axis=1)

    def port_marginals(self) -> dict[int, float]:
        p = self.probs.reshape(3, 2, 2).sum(axis=0)
        return {1: p[0].sum(), 2: p[1].sum(), 3: p[:, 0].sum(), 4: p[:, 1].sum()}

    @classmethod
    def degenerate(cls, outcome: JointOutcome) -> ProbabilityTable:
        probs = np.zeros(12)
        probs[outcome.code] = 1.0
        return cls(probs)


def joint_probability_table(cfgA: NmziConfig, cfgB: NmziConfig, pair: PairSample,
                            eta: float = 0.0) -> ProbabilityTable:
    """Per-pair probabilities built from products of the port amplitudes.

    Short/long path choices that arrive in different time slots add in
    probability; SS and LL share the central slot and add in amplitude.
    """
    if cfgA.label != "Alice" or cfgB.label != "Bob":
        raise ParameterError("cfgA must be Alice's interferometer and cfgB Bob's")
    if not math.isclose(cfgA.delta_L, cfgB.delta_L, rel_tol=0, abs_tol=1e-12):
        raise ParameterError(
            f"mismatched delta_L: Alice {cfgA.delta_L} mm, Bob {cfgB.delta_L} mm")
    off_a, off_b = pair_phase_offsets(pair.delta_j, pair.eps_j, cfgA.tau)
    phi_j = cfgA.phase_plate + float(off_a)
    psi_j = cfgB.phase_plate + float(off_b)
    amp_a = port_amplitudes(cfgA, phi_j, eta)
    amp_b = port_amplitudes(cfgB, psi_j, eta)
    probs = np.empty(12)
    for pa in ALICE_PORTS:
        a_s, a_l = amp_a[pa]
        for pb in BOB_PORTS:
            b_s, b_l = amp_b[pb]
            probs[outcome_code(pa, pb, Slot.SL)] = abs(a_s * b_l) ** 2
            probs[outcome_code(pa, pb, Slot.CENTRAL)] = abs(a_s * b_s + a_l * b_l) ** 2
            probs[outcome_code(pa, pb, Slot.LS)] = abs(a_l * b_s) ** 2
    return ProbabilityTable(probs, phi_j, psi_j)


def joint_phases(phi_A: float, phi_B: float, eps, tau: float) -> np.ndarray:
    """Per-pair joint phase ``phi_A + phi_B + 2 pi eps tau`` (detuning cancels)."""
    return phi_A + phi_B + TWO_PI * np.asarray(eps) * GHZ_TO_THZ * tau


def probability_rows(joint_phase) -> np.ndarray:
    """Closed-form tables for many pairs at once, shape ``(n, 12)``."""
    joint_phase = np.atleast_1d(np.asarray(joint_phase, dtype=float))
    out = np.full((joint_phase.size, 12), 1.0 / 16.0)
    c = np.cos(joint_phase) / 8.0
    for pa, pb in PORT_PAIRS:
        s = port_sign(pa) * port_sign(pb)
        out[:, outcome_code(pa, pb, Slot.CENTRAL)] = 0.125 + s * c
    return out


def gated_correlation_mean(phi_A, phi_B, model: SpectralModel, delta_L: float, port_pair):
    """Mean per-pair rate of central-slot coincidences at ``port_pair``.

    ``(1 -/+ V_p cos(phi_A + phi_B)) / 8`` with the minus sign for (1,4) and
    (2,3); ``V_p`` is :func:`pump_visibility`.
    """
    pa, pb = parse_port_pair(port_pair)
    s = port_sign(pa) * port_sign(pb)
    v = pump_visibility(model, delta_L)
    return (1.0 + s * v * np.cos(np.add(phi_A, phi_B))) / 8.0


def ungated_correlation_mean(phi_A, phi_B, model: SpectralModel, delta_L: float,
                             port_pair, estimator: str = "factorized"):
    """Intensity correlation without any time gating.

    ``factorized`` multiplies the two ensemble-mean singles (flat 1/4 for a
    wideband source). ``paired`` averages the per-pair product
    ``I_A,j * I_B,j`` over the ensemble; the sum phase survives that average,
    leaving a half-visibility fringe ``(1 -/+ V_p cos(phi_A + phi_B) / 2) / 4``.
    The Gaussian average is exact, so residual local-fringe terms appear when
    the source is not wideband.
    """
    pa, pb = parse_port_pair(port_pair)
    sa, sb = port_sign(pa), port_sign(pb)
    if estimator == "factorized":
        return (local_mean_intensity(pa, phi_A, model, delta_L)
                * local_mean_intensity(pb, phi_B, model, delta_L))
    if estimator != "paired":
        raise ParameterError(f"unknown estimator {estimator!r}")
    tau = delay_ps(delta_L)
    v_loc = local_visibility(model, delta_L)
    v_sum = pump_visibility(model, delta_L)
    v_diff = math.exp(-8.0 * math.pi ** 2 * (model.sigma_detuning * tau) ** 2)
    cross = 0.5 * (v_sum * np.cos(np.add(phi_A, phi_B))
                   + v_diff * np.cos(np.subtract(phi_A, phi_B)))
    return (1.0 + sa * v_loc * np.cos(phi_A) + sb * v_loc * np.cos(phi_B)
            + sa * sb * cross) / 4.0
