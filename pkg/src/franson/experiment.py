"""Experiment configuration and the end-to-end pipelines behind the CLI."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from franson.analysis import (
    FringeScan,
    chsh_phases,
    chsh_S,
    pair_key,
)
from franson.coincidence import delay_histogram, match_coincidences, slot_windows
from franson.errors import ConfigError
from franson.event_sim import DetectorModel, TimeTagStream, simulate_streams
from franson.interferometer import (
    PORT_PAIRS,
    NmziConfig,
    gated_correlation_mean,
    local_intensity,
    local_mean_intensity,
    pair_phase_offsets,
    ungated_correlation_mean,
)
from franson.spdc_source import SpectralModel, delay_ps, sample_pairs, validate_regime

# Keys that select a measurement setting or an output location rather than
# the experiment itself; they are left out of the config hash.
_UNHASHED = {"phi_A_rad", "phi_B_rad", "output_dir", "tag_format"}


@dataclass(frozen=True)
class ExperimentConfig:
    f0_THz: float = 375.0
    delta_f_THz: float = 1.0
    pump_linewidth_GHz: float = 1.0
    delta_L_mm: float = 30.0
    phi_A_rad: float = 0.0
    phi_B_rad: float = 0.0
    scan_variable: str = "sum"
    scan_start_rad: float = 0.0
    scan_stop_rad: float = 2 * math.pi
    scan_steps: int = 16
    efficiency: float = 1.0
    jitter_sigma_ps: float = 5.0
    dark_rate_cps: float = 0.0
    n_pairs: int = 1_000_000
    pair_rate_cps: float = 1e6
    seed: int = 20220315
    window_half_width_ps: float = 25.0
    hist_bin_ps: int = 5
    hist_range_ps: int = 300
    min_factor: float = 10.0
    chsh_a_rad: float = 0.0
    chsh_a_prime_rad: float = math.pi / 2
    chsh_b_rad: float = math.pi / 4
    chsh_b_prime_rad: float = 3 * math.pi / 4
    tag_format: str = "csv"
    output_dir: str = "out"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type == "int":
                if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                    if isinstance(value, float) and value.is_integer():
                        object.__setattr__(self, f.name, int(value))
                    else:
                        raise ConfigError(f"{f.name} must be an integer, got {value!r}", f.name)
            elif f.type == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
                    raise ConfigError(f"{f.name} must be a number, got {value!r}", f.name)
                object.__setattr__(self, f.name, float(value))
            elif f.type == "str" and not isinstance(value, str):
                raise ConfigError(f"{f.name} must be a string, got {value!r}", f.name)
        checks = {
            "f0_THz": self.f0_THz > 0,
            "delta_f_THz": self.delta_f_THz > 0,
            "pump_linewidth_GHz": self.pump_linewidth_GHz >= 0,
            "delta_L_mm": self.delta_L_mm > 0,
            "scan_steps": self.scan_steps >= 8,
            "efficiency": 0 <= self.efficiency <= 1,
            "jitter_sigma_ps": self.jitter_sigma_ps >= 0,
            "dark_rate_cps": self.dark_rate_cps >= 0,
            "n_pairs": self.n_pairs >= 1,
            "pair_rate_cps": self.pair_rate_cps > 0,
            "window_half_width_ps": self.window_half_width_ps > 0,
            "hist_bin_ps": self.hist_bin_ps > 0,
            "hist_range_ps": self.hist_range_ps > 0,
            "min_factor": self.min_factor > 0,
            "scan_variable": self.scan_variable in ("phi_A", "phi_B", "sum", "sync"),
            "tag_format": self.tag_format in ("csv", "bin"),
            "seed": 0 <= self.seed < 2**64,
        }
        for name, ok in checks.items():
            if not ok:
                raise ConfigError(f"invalid value for {name}: {getattr(self, name)!r}", name)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}", key)
            if isinstance(value, (dict, list)):
                raise ConfigError(f"config is flat; {key!r} holds a nested value", key)
        return cls(**data)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @property
    def config_hash(self) -> str:
        canon = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    # -- derived objects -----------------------------------------------
    @property
    def model(self) -> SpectralModel:
        return SpectralModel(self.f0_THz, self.delta_f_THz, self.pump_linewidth_GHz)

    @property
    def detector(self) -> DetectorModel:
        return DetectorModel(self.efficiency, self.jitter_sigma_ps, self.dark_rate_cps)

    @property
    def tau(self) -> float:
        return delay_ps(self.delta_L_mm)

    def regime(self):
        return validate_regime(self.model, self.delta_L_mm, self.min_factor, self.jitter_sigma_ps)

    def nmzis(self, phi_A: float | None = None, phi_B: float | None = None):
        return (NmziConfig(self.delta_L_mm, self.phi_A_rad if phi_A is None else phi_A, "Alice"),
                NmziConfig(self.delta_L_mm, self.phi_B_rad if phi_B is None else phi_B, "Bob"))

    def chsh_settings(self) -> dict[str, float]:
        return {"a": self.chsh_a_rad, "a'": self.chsh_a_prime_rad,
                "b": self.chsh_b_rad, "b'": self.chsh_b_prime_rad}

    def scan_points(self):
        """Phase grid and the ``(phi_A, phi_B)`` it maps to."""
        x = np.linspace(self.scan_start_rad, self.scan_stop_rad, self.scan_steps, endpoint=False)
        v = self.scan_variable
        if v == "phi_A":
            return x, x, np.full_like(x, self.phi_B_rad)
        if v == "phi_B":
            return x, np.full_like(x, self.phi_A_rad), x
        if v == "sum":
            return x, x - self.phi_B_rad, np.full_like(x, self.phi_B_rad)
        return x, x.copy(), x.copy()


def point_seed(seed: int, index: int) -> int:
    """Independent seed for scan point ``index``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1000, index))
    return int(ss.generate_state(1, np.uint64)[0])


# -- event-mode pipeline ------------------------------------------------

def simulate(cfg: ExperimentConfig, phi_A: float | None = None, phi_B: float | None = None,
             seed: int | None = None, force: bool = False):
    """Sample pairs and emit the four tag streams. Returns ``(pairs, streams)``."""
    seed = cfg.seed if seed is None else seed
    cfg_a, cfg_b = cfg.nmzis(phi_A, phi_B)
    pairs = sample_pairs(cfg.model, cfg.n_pairs, cfg.pair_rate_cps, seed)
    streams = simulate_streams(cfg_a, cfg_b, pairs, cfg.detector, seed, model=cfg.model,
                               force=force, config_hash=cfg.config_hash,
                               min_factor=cfg.min_factor)
    for s in streams:
        s.meta.update(phi_A_rad=cfg_a.phase_plate, phi_B_rad=cfg_b.phase_plate)
    return pairs, streams


def merged(streams: list[TimeTagStream], channels) -> np.ndarray:
    return np.sort(np.concatenate([s.tags for s in streams if s.channel in channels]),
                   kind="stable")


def coincide(cfg: ExperimentConfig, streams: list[TimeTagStream], histogram: bool = True) -> dict:
    """Singles, slot-window coincidence counts per port pair, and the delay histogram."""
    by_ch = {s.channel: s for s in streams}
    missing = {1, 2, 3, 4} - set(by_ch)
    if missing:
        raise ConfigError(f"missing tag streams for channels {sorted(missing)}")
    windows = slot_windows(cfg.tau, cfg.window_half_width_ps)
    out = {"singles": {str(ch): len(by_ch[ch]) for ch in (1, 2, 3, 4)}}
    for name, win in windows.items():
        out[name] = {pair_key((pa, pb)): match_coincidences(by_ch[pa], by_ch[pb], win)[0]
                     for pa, pb in PORT_PAIRS}
    if histogram:
        hist = delay_histogram(merged(streams, (1, 2)), merged(streams, (3, 4)),
                               cfg.hist_bin_ps, cfg.hist_range_ps)
        hw = cfg.window_half_width_ps
        out["histogram"] = hist
        out["peak_areas"] = {name: hist.area(win.offset - hw, win.offset + hw)
                             for name, win in windows.items()}
    return out


def paired_product_mean(cfg: ExperimentConfig, pairs, phi_A: float, phi_B: float, port_pair):
    """Sample mean and standard error of the per-pair intensity product."""
    off_a, off_b = pair_phase_offsets(pairs.delta, pairs.eps, cfg.tau)
    prod = (local_intensity(port_pair[0], phi_A + off_a)
            * local_intensity(port_pair[1], phi_B + off_b))
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))


def event_scan(cfg: ExperimentConfig, force: bool = False) -> FringeScan:
    """Monte Carlo scan: one independent simulation of ``n_pairs`` per point."""
    x, pa, pb = cfg.scan_points()
    n = cfg.n_pairs
    counts: dict[str, list] = {}
    rates: dict[str, list] = {}
    stderr: dict[str, list] = {}

    def put(store, key, value):
        store.setdefault(key, []).append(value)

    for i in range(x.size):
        pairs, streams = simulate(cfg, pa[i], pb[i], point_seed(cfg.seed, i), force)
        res = coincide(cfg, streams, histogram=False)
        for ch in "1234":
            put(counts, f"singles_{ch}", res["singles"][ch])
        for slot, prefix in (("CENTRAL", "gated"), ("SL", "side_SL"), ("LS", "side_LS")):
            for k, c in res[slot].items():
                put(counts, f"{prefix}_{k}", c)
        for pp in PORT_PAIRS:
            k = pair_key(pp)
            sa = res["singles"][str(pp[0])] / n
            sb = res["singles"][str(pp[1])] / n
            put(rates, f"ungated_factorized_{k}", sa * sb)
            # delta method on two independent binomial fractions
            put(stderr, f"ungated_factorized_{k}",
                math.sqrt((sb ** 2 * sa * (1 - sa) + sa ** 2 * sb * (1 - sb)) / n))
            mean, se = paired_product_mean(cfg, pairs, pa[i], pb[i], pp)
            put(rates, f"ungated_paired_{k}", mean)
            put(stderr, f"ungated_paired_{k}", se)
    count_arrays = {k: np.asarray(v) for k, v in counts.items()}
    rate_arrays = {k: v / n for k, v in count_arrays.items()}
    rate_arrays.update({k: np.asarray(v) for k, v in rates.items()})
    se_arrays = {k: np.asarray(v) for k, v in stderr.items()}
    central = sum(count_arrays[f"gated_{pair_key(pp)}"] for pp in PORT_PAIRS)
    for pp in PORT_PAIRS:
        k = pair_key(pp)
        frac = count_arrays[f"gated_{k}"] / np.maximum(central, 1)
        rate_arrays[f"gated_frac_{k}"] = frac
        se_arrays[f"gated_frac_{k}"] = np.sqrt(frac * (1 - frac) / np.maximum(central, 1))
    return FringeScan(cfg.scan_variable, x, pa, pb, rate_arrays, "event", count_arrays,
                      se_arrays, n, cfg.config_hash)


def analytic_scan(cfg: ExperimentConfig) -> FringeScan:
    """Closed-form predictions for every observable :func:`event_scan` produces."""
    x, pa, pb = cfg.scan_points()
    model, dl, eta = cfg.model, cfg.delta_L_mm, cfg.efficiency
    dark = cfg.dark_rate_cps / cfg.pair_rate_cps
    rates = {}
    for port, phase in ((1, pa), (2, pa), (3, pb), (4, pb)):
        rates[f"singles_{port}"] = eta * local_mean_intensity(port, phase, model, dl) + dark
    for pp in PORT_PAIRS:
        k = pair_key(pp)
        rates[f"gated_{k}"] = eta ** 2 * gated_correlation_mean(pa, pb, model, dl, pp)
        rates[f"side_SL_{k}"] = np.full_like(x, eta ** 2 / 16)
        rates[f"side_LS_{k}"] = np.full_like(x, eta ** 2 / 16)
        # share of all central-window coincidences
        rates[f"gated_frac_{k}"] = gated_correlation_mean(pa, pb, model, dl, pp) * 2.0
    for pp in PORT_PAIRS:
        k = pair_key(pp)
        rates[f"ungated_factorized_{k}"] = rates[f"singles_{pp[0]}"] * rates[f"singles_{pp[1]}"]
        rates[f"ungated_paired_{k}"] = ungated_correlation_mean(pa, pb, model, dl, pp, "paired")
    return FringeScan(cfg.scan_variable, x, pa, pb,
                      {k: np.asarray(v, dtype=float) for k, v in rates.items()},
                      "analytic", config_hash=cfg.config_hash)


def chsh_pipeline(cfg: ExperimentConfig, force: bool = False):
    """Simulate and count each CHSH setting pair in process.

    Each setting reuses ``cfg.seed`` so the result equals running ``simulate``
    and ``coincide`` per setting from files.
    """
    results = {}
    for key, (phi_a, phi_b) in chsh_phases(cfg.chsh_settings()).items():
        _, streams = simulate(cfg, phi_a, phi_b, force=force)
        results[key] = coincide(cfg, streams, histogram=False)["CENTRAL"]
    return chsh_S(results, cfg.chsh_settings(), cfg.config_hash)
