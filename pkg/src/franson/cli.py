"""Command-line experiment runner.

Every config key is also a flag (``--delta_L_mm 30``); flags override the
config file, which defaults to ``$FRANSON_CONFIG`` when set.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from franson.analysis import FringeScan, chsh_phases, chsh_S, compare_report
from franson.errors import ConfigError, ConfigMismatchError, RegimeError
from franson.experiment import (
    ExperimentConfig,
    analytic_scan,
    chsh_pipeline,
    coincide,
    event_scan,
    simulate,
)
from franson.tagfile import TagFileError, read_stream, write_stream

log = logging.getLogger("franson")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_IO = 4
CONFIG_ENV = "FRANSON_CONFIG"

_CASTS = {"int": int, "float": float, "str": str}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        group.add_argument(f"--{f.name}", type=_CASTS[f.type], default=None, metavar=f.type.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="franson", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the operating regime")
    _add_config_flags(p)

    p = sub.add_parser("simulate", help="write four time-tag files")
    p.add_argument("--force", action="store_true", help="simulate even if the regime check fails")
    _add_config_flags(p)

    p = sub.add_parser("coincide", help="delay histogram and windowed counts from tag files")
    p.add_argument("tags", nargs="*", help="tag files (default: the simulate outputs)")
    _add_config_flags(p)

    p = sub.add_parser("scan", help="phase sweep to CSV")
    p.add_argument("--analytic", action="store_true")
    p.add_argument("--event", action="store_true")
    p.add_argument("--joint", action="store_true", help="scan phi_A + phi_B")
    p.add_argument("--sync", action="store_true", help="scan phi_A = phi_B")
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)

    p = sub.add_parser("chsh", help="CHSH parameter from the full pipeline")
    p.add_argument("--counts", nargs=4, metavar="JSON",
                   help="coincidences.json files, one per setting pair")
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)

    p = sub.add_parser("compare", help="analytic vs Monte Carlo report")
    p.add_argument("--mc", help="event scan JSON (default: run the scan now)")
    p.add_argument("--threshold", type=float, default=4.0)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    return parser


def load_config(args) -> ExperimentConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    data = ExperimentConfig.load(path).to_dict() if path else {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    if getattr(args, "joint", False):
        data["scan_variable"] = "sum"
    if getattr(args, "sync", False):
        data["scan_variable"] = "sync"
    return ExperimentConfig.from_dict(data)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def tag_path(cfg: ExperimentConfig, channel: int) -> Path:
    return Path(cfg.output_dir) / f"tags_ch{channel}.{cfg.tag_format}"


def cmd_validate(cfg, args) -> int:
    payload = {"config_hash": cfg.config_hash, **cfg.regime().to_dict()}
    _write_json(_outdir(cfg) / "regime.json", payload)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_simulate(cfg, args) -> int:
    _, streams = simulate(cfg, force=args.force)
    out = _outdir(cfg)
    for s in streams:
        write_stream(tag_path(cfg, s.channel), s, cfg.tag_format)
    print(json.dumps({"config_hash": cfg.config_hash,
                      "files": [str(tag_path(cfg, s.channel)) for s in streams],
                      "singles": {s.channel: len(s) for s in streams}}, indent=2))
    log.info("wrote tags to %s", out)
    return EXIT_OK


def _tag_phases(streams) -> tuple[float, float]:
    meta = streams[0].meta
    return float(meta.get("phi_A_rad", "nan")), float(meta.get("phi_B_rad", "nan"))


def cmd_coincide(cfg, args) -> int:
    paths = args.tags or [str(tag_path(cfg, ch)) for ch in (1, 2, 3, 4)]
    streams = [read_stream(p) for p in paths]
    hashes = {s.config_hash for s in streams}
    if hashes != {cfg.config_hash}:
        raise ConfigMismatchError(
            f"tag files carry config hash {sorted(hashes)}, current config is {cfg.config_hash}")
    res = coincide(cfg, streams)
    hist = res.pop("histogram")
    out = _outdir(cfg)
    with open(out / "histogram.csv", "w") as fh:
        fh.write(f"# config_hash={cfg.config_hash}\nbin_center_ps,count\n")
        for c, n in zip(hist.centers, hist.counts):
            fh.write(f"{c:g},{n}\n")
    phi_a, phi_b = _tag_phases(streams)
    payload = {"config_hash": cfg.config_hash, "phi_A_rad": phi_a, "phi_B_rad": phi_b,
               "half_width_ps": cfg.window_half_width_ps, "tau_ps": cfg.tau, **res}
    _write_json(out / "coincidences.json", payload)
    print(json.dumps(payload, indent=2, default=_jsonable))
    return EXIT_OK


def cmd_scan(cfg, args) -> int:
    if not (args.analytic or args.event):
        args.analytic = True
    out = _outdir(cfg)
    if args.analytic:
        scan = analytic_scan(cfg)
        (out / "scan_analytic.csv").write_text(scan.to_csv())
        print(f"wrote {out / 'scan_analytic.csv'}")
    if args.event:
        scan = event_scan(cfg, force=args.force)
        (out / "scan_event.csv").write_text(scan.to_csv())
        _write_json(out / "scan_event.json", scan.to_dict())
        print(f"wrote {out / 'scan_event.csv'}")
    return EXIT_OK


def _match_setting(phases, phi_a, phi_b):
    for key, (pa, pb) in phases.items():
        if (math.isclose(math.remainder(pa - phi_a, 2 * math.pi), 0, abs_tol=1e-9)
                and math.isclose(math.remainder(pb - phi_b, 2 * math.pi), 0, abs_tol=1e-9)):
            yield key


def cmd_chsh(cfg, args) -> int:
    if args.counts:
        phases = chsh_phases(cfg.chsh_settings())
        results = {}
        for path in args.counts:
            data = json.loads(Path(path).read_text())
            if data.get("config_hash") != cfg.config_hash:
                raise ConfigMismatchError(f"{path}: config hash {data.get('config_hash')} "
                                          f"!= {cfg.config_hash}")
            keys = [k for k in _match_setting(phases, data["phi_A_rad"], data["phi_B_rad"])
                    if k not in results]
            if not keys:
                raise ConfigError(f"{path}: phases do not match any CHSH setting", "counts")
            results[keys[0]] = data["CENTRAL"]
        result = chsh_S(results, cfg.chsh_settings(), cfg.config_hash)
    else:
        result = chsh_pipeline(cfg, force=args.force)
    _write_json(_outdir(cfg) / "chsh.json", result.to_dict())
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


def cmd_compare(cfg, args) -> int:
    if args.mc:
        mc = FringeScan.from_dict(json.loads(Path(args.mc).read_text()))
    else:
        mc = event_scan(cfg, force=args.force)
    report = compare_report(analytic_scan(cfg), mc, args.threshold)
    _write_json(_outdir(cfg) / "compare.json", report.to_dict())
    print(report.summary())
    print(f"flagged rows: {len(report.flagged)}  max |z|: {report.max_abs_z:.3f}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "coincide": cmd_coincide,
    "scan": cmd_scan,
    "chsh": cmd_chsh,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ConfigMismatchError) as exc:
        field = getattr(exc, "field", None)
        print(f"config error{f' [{field}]' if field else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (OSError, TagFileError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
