"""Exit criteria, each at its pinned tolerance with N = 1e6 pairs per point.

Every test appends one PASS/FAIL line, printed in the terminal summary.
"""
import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from franson.analysis import (
    chsh_phases,
    compare_report,
    fit_fringe,
    fit_frequency,
)
from franson.cli import EXIT_OK, main
from franson.coincidence import match_coincidences, CoincidenceWindow
from franson.experiment import (
    ExperimentConfig,
    analytic_scan,
    chsh_pipeline,
    coincide,
    event_scan,
    simulate,
)
from franson.interferometer import (
    gated_correlation_mean,
    local_intensity,
    local_mean_intensity,
    pump_visibility,
    ungated_correlation_mean,
)
from franson.spdc_source import SpectralModel, delay_ps

N = 1_000_000
SQRT2 = math.sqrt(2)
FWHM = 2 * math.sqrt(2 * math.log(2))
PHI_B = 0.7  # fixed Bob phase during phi_A scans


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def oracle_vp(pump_ghz, dl=30.0):
    sigma = pump_ghz / FWHM * 1e-3
    return math.exp(-2 * math.pi ** 2 * (sigma * delay_ps(dl)) ** 2)


@pytest.fixture(scope="session")
def scan_pump1():
    cfg = ExperimentConfig(n_pairs=N, scan_variable="phi_A", phi_B_rad=PHI_B)
    return cfg, event_scan(cfg)


@pytest.fixture(scope="session")
def scan_pump0():
    cfg = ExperimentConfig(n_pairs=N, scan_variable="phi_A", phi_B_rad=PHI_B,
                           pump_linewidth_GHz=0.0)
    return cfg, event_scan(cfg)


@pytest.fixture(scope="session")
def scan_sync():
    cfg = ExperimentConfig(n_pairs=N, scan_variable="sync")
    return cfg, event_scan(cfg)


def test_01_closed_form_fidelity():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(10_000):
        pa, pb, phase = rng.uniform(-10, 10, 3)
        df = 10 ** rng.uniform(-4, 1)
        pump = rng.uniform(0, 10)
        dl = rng.uniform(1, 100)
        model = SpectralModel(delta_f=df, pump_linewidth=pump)
        tau = dl / 0.299792458
        sd, sp = df / FWHM, pump / FWHM * 1e-3
        v_loc = math.exp(-2 * math.pi ** 2 * (sd ** 2 + sp ** 2 / 4) * tau ** 2)
        v_p = math.exp(-2 * math.pi ** 2 * sp ** 2 * tau ** 2)
        v_d = math.exp(-8 * math.pi ** 2 * sd ** 2 * tau ** 2)
        errs = []
        for port, s in ((1, -1), (2, 1), (3, -1), (4, 1)):
            errs.append(local_intensity(port, phase) - (1 + s * math.cos(phase)) / 2)
            errs.append(local_mean_intensity(port, phase, model, dl)
                        - (1 + s * v_loc * math.cos(phase)) / 2)
        for (a, sa), (b, sb) in (((1, -1), (3, -1)), ((1, -1), (4, 1)),
                                 ((2, 1), (3, -1)), ((2, 1), (4, 1))):
            errs.append(gated_correlation_mean(pa, pb, model, dl, (a, b))
                        - (1 + sa * sb * v_p * math.cos(pa + pb)) / 8)
            fa = (1 + sa * v_loc * math.cos(pa)) / 2
            fb = (1 + sb * v_loc * math.cos(pb)) / 2
            errs.append(ungated_correlation_mean(pa, pb, model, dl, (a, b)) - fa * fb)
            paired = (1 + sa * v_loc * math.cos(pa) + sb * v_loc * math.cos(pb)
                      + sa * sb * 0.5 * (v_p * math.cos(pa + pb) + v_d * math.cos(pa - pb))) / 4
            errs.append(ungated_correlation_mean(pa, pb, model, dl, (a, b), "paired") - paired)
            if df * tau >= 10 * math.pi:
                # wideband: the paired estimator is exactly the half-visibility form
                errs.append(ungated_correlation_mean(pa, pb, model, dl, (a, b), "paired")
                            - (1 + sa * sb * 0.5 * v_p * math.cos(pa + pb)) / 4)
        worst = max(worst, max(abs(e) for e in errs))
    record(1, "closed-form fidelity", worst <= 1e-12, f"max |err| = {worst:.2e} (tol 1e-12)")


def test_02_uniform_locals(scan_pump1):
    _, scan = scan_pump1
    vis = {ch: fit_fringe(scan, f"singles_{ch}").visibility for ch in (1, 2, 3, 4)}
    worst = max(vis.values())
    record(2, "uniform singles vs phi_A", worst <= 0.01,
           f"max singles visibility = {worst:.4f} (tol 0.01)")


def test_03_nonlocal_fringe(scan_pump1, scan_pump0):
    details, ok = [], True
    target = oracle_vp(1.0)
    for label, (cfg, scan), check in (
            ("pump 1 GHz", scan_pump1, lambda v: abs(v - target) <= 0.02),
            ("pump 0", scan_pump0, lambda v: v >= 0.995)):
        for pp, offset in (("13", PHI_B), ("24", PHI_B), ("14", PHI_B + math.pi),
                           ("23", PHI_B + math.pi)):
            f = fit_fringe(scan, f"gated_{pp}")
            dphase = abs(math.remainder(f.phase - offset, 2 * math.pi))
            good = check(f.visibility) and dphase <= 0.05
            ok &= good
            details.append(f"{label} ({pp[0]},{pp[1]}) V={f.visibility:.4f} dphi={dphase:.4f}")
    record(3, "nonlocal fringe in phi_A + phi_B", ok,
           f"oracle V_p={target:.4f}; " + "; ".join(details))


def test_04_fringe_doubling(scan_sync):
    _, scan = scan_sync
    gated = fit_frequency(scan.x, scan.rates["gated_13"])
    narrow = ExperimentConfig(delta_f_THz=0.001, scan_variable="sync")
    local = fit_frequency(scan.x, analytic_scan(narrow).rates["singles_1"])
    ratio = gated.frequency / local.frequency
    record(4, "fringe doubling", abs(ratio - 2.0) <= 0.05,
           f"gated k={gated.frequency:.4f}, local k={local.frequency:.4f}, "
           f"ratio={ratio:.4f} (2.0 +- 0.05)")


def test_05_selection_mechanism(scan_pump1):
    _, scan = scan_pump1
    side = {name: fit_fringe(scan, name).visibility
            for name in scan.rates if name.startswith("side_")}
    worst = max(side.values())
    cfg = ExperimentConfig(n_pairs=N)
    _, streams = simulate(cfg)
    areas = coincide(cfg, streams)["peak_areas"]
    total = sum(areas.values())
    z = {k: (areas[k] - total * p) / math.sqrt(total * p * (1 - p))
         for k, p in (("SL", 0.25), ("CENTRAL", 0.5), ("LS", 0.25))}
    ok = worst <= 0.02 and all(abs(v) <= 3 for v in z.values())
    record(5, "selection mechanism", ok,
           f"max side-window visibility = {worst:.4f} (tol 0.02); peak areas "
           f"{areas['SL']}:{areas['CENTRAL']}:{areas['LS']}, "
           f"z = {', '.join(f'{k} {v:+.2f}' for k, v in z.items())} (tol 3)")


def test_06_ungated_comparison(scan_pump1):
    cfg, scan = scan_pump1
    model, dl = cfg.model, cfg.delta_L_mm
    fact = scan.rates["ungated_factorized_14"]
    fact_se = scan.stderr["ungated_factorized_14"]
    paired = scan.rates["ungated_paired_14"]
    paired_se = scan.stderr["ungated_paired_14"]
    v_p = oracle_vp(cfg.pump_linewidth_GHz)
    half_vis = (1 - 0.5 * v_p * np.cos(scan.phi_A + scan.phi_B)) / 4
    z_fact = (fact - 0.25) / fact_se
    z_paired = (paired - half_vis) / paired_se
    analytic_fact = ungated_correlation_mean(scan.phi_A, scan.phi_B, model, dl, (1, 4))
    analytic_paired = ungated_correlation_mean(scan.phi_A, scan.phi_B, model, dl, (1, 4), "paired")
    print("ungated (1,4): x, factorized MC, paired MC, paired oracle")
    for row in zip(scan.x, fact, paired, half_vis):
        print("  " + "  ".join(f"{v:.5f}" for v in row))
    print("factorized estimator = product of uniform singles means: the flat 1/4 "
          "separable-product claim; paired estimator keeps a half-visibility fringe")
    ok = (np.all(np.abs(z_fact) <= 3) and np.all(np.abs(z_paired) <= 3)
          and np.allclose(analytic_fact, 0.25, atol=1e-12)
          and np.allclose(analytic_paired, half_vis, atol=1e-12))
    record(6, "ungated factorized vs paired", ok,
           f"factorized max|z|={np.max(np.abs(z_fact)):.2f}, paired max|z|="
           f"{np.max(np.abs(z_paired)):.2f} (tol 3); paired fringe visibility "
           f"{fit_fringe(scan, 'ungated_paired_14').visibility:.4f} vs V_p/2={v_p / 2:.4f}")


def _file_pipeline_chsh(tmp_path, extra=()):
    counts = []
    for i, (pa, pb) in enumerate(chsh_phases().values()):
        d = tmp_path / f"setting{i}"
        common = ["--output_dir", str(d), "--n_pairs", str(N), "--tag_format", "bin",
                  "--phi_A_rad", repr(pa), "--phi_B_rad", repr(pb), *extra]
        assert main(["simulate", *common]) == EXIT_OK
        assert main(["coincide", *common]) == EXIT_OK
        counts.append(str(d / "coincidences.json"))
    out = tmp_path / "chsh"
    assert main(["chsh", "--counts", *counts, "--output_dir", str(out),
                 "--n_pairs", str(N), *extra]) == EXIT_OK
    return json.loads((out / "chsh.json").read_text())


def test_07_bell_violation(tmp_path):
    details, ok = [], True
    for pump, sub in ((1.0, "p1"), (0.0, "p0")):
        (tmp_path / sub).mkdir()
        res = _file_pipeline_chsh(tmp_path / sub, ["--pump_linewidth_GHz", repr(pump)])
        expect = 2 * SQRT2 * oracle_vp(pump)
        good = abs(res["S"] - expect) <= 0.05
        ok &= good
        details.append(f"pump {pump:g} GHz S={res['S']:.4f}+-{res['stderr']:.4f} "
                       f"(expect {expect:.4f} +- 0.05)")
    # pump broadened until V_p < 1/sqrt(2); pair coherence then fails the regime
    # check, so the simulation is forced
    broad = ExperimentConfig(n_pairs=N, pump_linewidth_GHz=4.0)
    v = pump_visibility(broad.model, broad.delta_L_mm)
    res = chsh_pipeline(broad, force=True)
    ok &= v < 1 / SQRT2 and res.S < 2 and abs(res.S - 2 * SQRT2 * v) <= 0.05
    details.append(f"pump 4 GHz V_p={v:.4f} S={res.S:.4f} (< 2)")
    record(7, "Bell violation via simulate->coincide->chsh", ok, "; ".join(details))


def _adversarial_streams(rng, case):
    n = int(rng.integers(1, 10_001))
    m = int(rng.integers(1, 10_001))
    hw = int(rng.integers(1, 50))
    offset = int(rng.integers(-150, 151))
    if case % 4 == 0:
        a = np.sort(rng.integers(0, 20 * max(n, m), n))
        b = np.sort(rng.integers(0, 20 * max(n, m), m))
    elif case % 4 == 1:
        # every Bob tag sits exactly on, or one tick outside, a window edge
        a = np.sort(rng.integers(0, 50 * n, n))
        pick = rng.choice(a, m)
        b = np.sort(pick - offset + rng.choice([-hw, hw, -hw - 1, hw + 1], m))
        b = np.maximum(b, 0)
    elif case % 4 == 2:
        # dense bursts with duplicates: many candidates per window
        a = np.sort(rng.integers(0, 5 * n, n) // 7 * 7)
        b = np.sort(rng.integers(0, 5 * n, m) // 3 * 3)
    else:
        a = np.sort(rng.integers(0, 3 * n, n))
        b = np.sort(a[rng.integers(0, n, m)] - offset + rng.integers(-hw - 2, hw + 3, m))
        b = np.maximum(b, 0)
    return a.astype(np.int64), np.sort(b).astype(np.int64), offset, hw


def _oracle_count(a, b, offset, hw):
    used = np.zeros(b.size, dtype=bool)
    count = 0
    for t in a:
        cand = np.flatnonzero((~used) & (np.abs(t - b - offset) <= hw))
        if cand.size:
            used[cand[0]] = True
            count += 1
    return count


def test_08_matcher_correctness():
    rng = np.random.default_rng(808)
    mismatches = 0
    for case in range(100):
        a, b, offset, hw = _adversarial_streams(rng, case)
        got = match_coincidences(a, b, CoincidenceWindow(offset, hw))[0]
        mismatches += got != _oracle_count(a, b, offset, hw)
    record(8, "matcher vs O(n^2) oracle", mismatches == 0,
           f"{100 - mismatches}/100 stream pairs identical")


def test_09_determinism(tmp_path):
    outputs = []
    for run in ("r1", "r2"):
        d = tmp_path / run
        for fmt in ("bin", "csv"):
            n = N if fmt == "bin" else 100_000
            args = ["--output_dir", str(d / fmt), "--n_pairs", str(n), "--tag_format", fmt]
            assert main(["simulate", *args]) == EXIT_OK
            assert main(["coincide", *args]) == EXIT_OK
        assert main(["chsh", "--output_dir", str(d / "chsh"), "--n_pairs", "200000"]) == EXIT_OK
        outputs.append(d)
    files = sorted(p.relative_to(outputs[0]) for p in outputs[0].rglob("*") if p.is_file())
    same = all((outputs[0] / f).read_bytes() == (outputs[1] / f).read_bytes() for f in files)
    record(9, "determinism", same and len(files) >= 12,
           f"{len(files)} output files byte-identical across runs: {same}")


def test_10_mode_consistency(scan_pump1):
    cfg, scan = scan_pump1
    report = compare_report(analytic_scan(cfg), scan)
    rows = [r for r in report.rows if not r.informational]
    worst = max(rows, key=lambda r: abs(r.z))
    record(10, "analytic vs Monte Carlo", not report.flagged,
           f"{len(rows)} rows, max |z| = {abs(worst.z):.2f} ({worst.observable} @ x={worst.x:.3f})"
           f" (tol 4)")
