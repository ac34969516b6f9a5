"""Fringe fits, correlation values, CHSH and analytic-vs-Monte-Carlo reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from franson.errors import ConfigMismatchError, ParameterError
from franson.interferometer import PORT_PAIRS, parse_port_pair

TWO_PI = 2.0 * math.pi
CHSH_KEYS = (("a", "b"), ("a", "b'"), ("a'", "b"), ("a'", "b'"))
CHSH_SIGNS = (1, -1, 1, 1)
CANONICAL_SETTINGS = {"a": 0.0, "a'": math.pi / 2, "b": math.pi / 4, "b'": 3 * math.pi / 4}
SCAN_VARIABLES = ("phi_A", "phi_B", "sum", "sync")


def pair_key(port_pair) -> str:
    pa, pb = parse_port_pair(port_pair)
    return f"{pa}{pb}"


@dataclass(frozen=True, eq=False)
class FringeScan:
    """Rates per phase point for a set of named observables.

    ``rates`` are per emitted pair. Event-mode scans also carry raw
    ``counts`` and the number of pairs per point; ``stderr`` holds standard
    errors for observables that are sample means rather than counts.
    """

    variable: str
    x: np.ndarray
    phi_A: np.ndarray
    phi_B: np.ndarray
    rates: dict[str, np.ndarray]
    mode: str = "analytic"
    counts: dict[str, np.ndarray] = field(default_factory=dict)
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    n_pairs: int | None = None
    config_hash: str = ""

    def __post_init__(self):
        if self.variable not in SCAN_VARIABLES:
            raise ParameterError(f"scan variable must be one of {SCAN_VARIABLES}")
        x = np.asarray(self.x, dtype=float)
        if x.size < 8:
            raise ParameterError(f"a scan needs at least 8 points, got {x.size}")
        step = np.median(np.diff(np.sort(x)))
        if np.ptp(x) + step < TWO_PI - 1e-9:
            raise ParameterError("scan points must cover at least 2*pi")

    @property
    def observables(self) -> list[str]:
        return list(self.rates)

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "mode": self.mode,
            "config_hash": self.config_hash,
            "n_pairs": self.n_pairs,
            "x": self.x.tolist(),
            "phi_A": self.phi_A.tolist(),
            "phi_B": self.phi_B.tolist(),
            "rates": {k: np.asarray(v).tolist() for k, v in self.rates.items()},
            "counts": {k: np.asarray(v).tolist() for k, v in self.counts.items()},
            "stderr": {k: np.asarray(v).tolist() for k, v in self.stderr.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> FringeScan:
        arr = lambda m: {k: np.asarray(v) for k, v in m.items()}  # noqa: E731
        return cls(d["variable"], np.asarray(d["x"], dtype=float),
                   np.asarray(d["phi_A"], dtype=float), np.asarray(d["phi_B"], dtype=float),
                   arr(d["rates"]), d.get("mode", "analytic"), arr(d.get("counts", {})),
                   arr(d.get("stderr", {})), d.get("n_pairs"), d.get("config_hash", ""))

    def to_csv(self) -> str:
        names = self.observables
        lines = [f"# config_hash={self.config_hash} mode={self.mode} variable={self.variable}",
                 ",".join(["x_rad", "phi_A_rad", "phi_B_rad", *names])]
        for i in range(len(self.x)):
            row = [self.x[i], self.phi_A[i], self.phi_B[i], *(self.rates[k][i] for k in names)]
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FringeFit:
    visibility: float
    phase: float
    mean: float
    residual: float
    frequency: float = 1.0
    identifiable: bool = True


def fit_sinusoid(x, y, frequency: float = 1.0) -> FringeFit:
    """Least-squares fit of ``m * (1 + V cos(k x + c))`` at fixed ``k``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones_like(x), np.cos(frequency * x), np.sin(frequency * x)])
    (m, ca, sb), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = math.hypot(ca, sb)
    scale = max(abs(m), np.max(np.abs(y)), 1e-300)
    if np.ptp(y) <= 1e-14 * scale or m == 0:
        return FringeFit(0.0, math.nan, float(np.mean(y)), 0.0, frequency, identifiable=False)
    resid = y - design @ np.array([m, ca, sb])
    phase = math.atan2(-sb, ca) % TWO_PI
    return FringeFit(amp / m, phase, float(m),
                     float(np.sqrt(np.mean(resid ** 2)) / abs(m)), frequency)


def fit_fringe(scan: FringeScan, observable: str, frequency: float = 1.0) -> FringeFit:
    """Fit one observable of ``scan`` against the scanned phase."""
    if observable not in scan.rates:
        raise ParameterError(f"observable {observable!r} not in scan")
    return fit_sinusoid(scan.x, scan.rates[observable], frequency)


def fit_frequency(x, y, bounds: tuple[float, float] = (0.25, 4.0)) -> FringeFit:
    """Fit the fringe frequency too: coarse grid, then bounded refinement."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def cost(k):
        f = fit_sinusoid(x, y, k)
        return f.residual * abs(f.mean)

    grid = np.linspace(*bounds, 400)
    best = grid[int(np.argmin([cost(k) for k in grid]))]
    step = grid[1] - grid[0]
    res = minimize_scalar(cost, bounds=(max(bounds[0], best - step), min(bounds[1], best + step)),
                          method="bounded", options={"xatol": 1e-10})
    return fit_sinusoid(x, y, float(res.x))


def _counts_for(counts, port_pair) -> float:
    pa, pb = parse_port_pair(port_pair)
    for key in ((pa, pb), f"{pa}{pb}"):
        if key in counts:
            return float(counts[key])
    raise ParameterError(f"missing counts for port pair ({pa},{pb})")


def correlation_E(counts) -> float:
    """``(N13 + N24 - N14 - N23) / (N13 + N24 + N14 + N23)``."""
    n13, n14, n23, n24 = (_counts_for(counts, pp) for pp in PORT_PAIRS)
    total = n13 + n14 + n23 + n24
    if total <= 0:
        raise ParameterError("no coincidences: correlation undefined")
    return (n13 + n24 - n14 - n23) / total


def correlation_stderr(counts) -> float:
    total = sum(_counts_for(counts, pp) for pp in PORT_PAIRS)
    e = correlation_E(counts)
    return math.sqrt(max(1.0 - e * e, 0.0) / total)


def chsh_phases(settings: dict[str, float] | None = None) -> dict[tuple[str, str], tuple[float, float]]:
    """Phase-plate values ``(phi_A, phi_B)`` realizing each CHSH setting pair.

    The correlation depends on ``phi_A + phi_B``, so Bob's analyzer angle
    ``b`` is applied as ``phi_B = -b``; that gives ``E = V cos(a - b)``.
    """
    s = {**CANONICAL_SETTINGS, **(settings or {})}
    return {(ka, kb): (s[ka] % TWO_PI, (-s[kb]) % TWO_PI) for ka, kb in CHSH_KEYS}


@dataclass(frozen=True)
class ChshResult:
    settings: dict[str, float]
    E: dict[tuple[str, str], float]
    S: float
    stderr: float
    counts: dict[tuple[str, str], dict[str, int]] | None = None
    config_hash: str = ""

    def to_dict(self) -> dict:
        out = {
            "settings_rad": dict(self.settings),
            "E": {f"{a},{b}": v for (a, b), v in self.E.items()},
            "S": self.S,
            "stderr": self.stderr,
            "violates_local_bound": self.S > 2.0,
            "config_hash": self.config_hash,
        }
        if self.counts is not None:
            out["counts"] = {f"{a},{b}": {k: int(v) for k, v in c.items()}
                             for (a, b), c in self.counts.items()}
        return out


def chsh_S(results, settings: dict[str, float] | None = None, config_hash: str = "") -> ChshResult:
    """CHSH parameter ``|E(a,b) - E(a,b') + E(a',b) + E(a',b')|``.

    ``results`` maps each of the four setting pairs, e.g. ``("a", "b'")``, to
    either a correlation value or a dict of central-window counts per port
    pair; counts also yield a propagated standard error.
    """
    es, var, counts = {}, 0.0, {}
    for key in CHSH_KEYS:
        if key not in results:
            raise ParameterError(f"missing CHSH setting {key[0]},{key[1]}")
        r = results[key]
        if isinstance(r, dict):
            es[key] = correlation_E(r)
            var += correlation_stderr(r) ** 2
            counts[key] = {pair_key(pp): int(_counts_for(r, pp)) for pp in PORT_PAIRS}
        else:
            es[key] = float(r)
        if abs(es[key]) > 1 + 1e-12:
            raise ParameterError(f"|E| > 1 at setting {key}")
    s = abs(sum(sign * es[k] for sign, k in zip(CHSH_SIGNS, CHSH_KEYS)))
    return ChshResult({**CANONICAL_SETTINGS, **(settings or {})}, es, s, math.sqrt(var),
                      counts or None, config_hash)


def analytic_chsh(visibility: float, settings: dict[str, float] | None = None) -> ChshResult:
    phases = chsh_phases(settings)
    es = {k: visibility * math.cos(pa + pb) for k, (pa, pb) in phases.items()}
    return chsh_S(es, settings)


@dataclass(frozen=True)
class ReportRow:
    observable: str
    index: int
    x: float
    analytic: float
    estimate: float
    stderr: float
    z: float
    flagged: bool
    informational: bool = False
    note: str = ""


@dataclass(frozen=True)
class CompareReport:
    rows: list[ReportRow]
    threshold: float
    config_hash: str

    @property
    def flagged(self) -> list[ReportRow]:
        return [r for r in self.rows if r.flagged]

    @property
    def max_abs_z(self) -> float:
        zs = [abs(r.z) for r in self.rows if not r.informational]
        return max(zs) if zs else 0.0

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "threshold": self.threshold,
            "n_flagged": len(self.flagged),
            "max_abs_z": self.max_abs_z,
            "rows": [r.__dict__ for r in self.rows],
        }

    def summary(self) -> str:
        lines = [f"{'observable':<24}{'x':>8}{'analytic':>14}{'estimate':>14}{'z':>9}"]
        for r in self.rows:
            tag = "  FLAG" if r.flagged else ("  info: " + r.note if r.informational else "")
            lines.append(f"{r.observable:<24}{r.x:8.4f}{r.analytic:14.6g}{r.estimate:14.6g}"
                         f"{r.z:9.3f}{tag}")
        return "\n".join(lines)


def _zscore(diff: float, se: float) -> float:
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= 1e-15 else math.copysign(math.inf, diff)


UNGATED_NOTE = ("factorized = product of uniform singles means, flat 1/4; "
                "paired = ensemble mean of per-pair products, keeps a half-visibility fringe")


def compare_report(analytic: FringeScan, mc: FringeScan, threshold: float = 4.0) -> CompareReport:
    """Row per (observable, point): analytic value, estimate and z-score.

    Count observables use the binomial standard error under the analytic
    prediction; sample-mean observables use the scan's own ``stderr``.
    Rows with ``|z| > threshold`` are flagged. The factorized-vs-paired
    ungated gap is appended as informational rows.
    """
    if analytic.config_hash != mc.config_hash:
        raise ConfigMismatchError(
            f"config hash mismatch: {analytic.config_hash!r} vs {mc.config_hash!r}")
    if len(analytic.x) != len(mc.x) or not np.allclose(analytic.x, mc.x):
        raise ConfigMismatchError("scans were taken at different phase points")
    rows = []
    for name in analytic.rates:
        if name not in mc.rates:
            continue
        for i, x in enumerate(analytic.x):
            p = float(analytic.rates[name][i])
            est = float(mc.rates[name][i])
            if name in mc.stderr:
                se = float(mc.stderr[name][i])
            elif name in mc.counts and mc.n_pairs:
                se = math.sqrt(max(p * (1.0 - p), 0.0) / mc.n_pairs)
            else:
                se = 0.0
            z = _zscore(est - p, se)
            rows.append(ReportRow(name, i, float(x), p, est, se, z, abs(z) > threshold))
    for pp in PORT_PAIRS:
        k = pair_key(pp)
        fact, paired = f"ungated_factorized_{k}", f"ungated_paired_{k}"
        if fact in analytic.rates and paired in analytic.rates:
            for i, x in enumerate(analytic.x):
                a_f = float(analytic.rates[fact][i])
                a_p = float(analytic.rates[paired][i])
                rows.append(ReportRow(f"ungated_gap_{k}", i, float(x), a_f, a_p, 0.0, 0.0,
                                      False, True, UNGATED_NOTE))
    return CompareReport(rows, threshold, analytic.config_hash)
