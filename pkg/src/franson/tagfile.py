"""Time-tag file formats.

CSV: optional ``# key=value ...`` comment lines, then the header
``channel,time_ps`` and one tag per row in time order.

Binary: the 8-byte magic ``FRTAG001`` followed by 16-byte little-endian
records ``(u64 time_ps, u8 channel, 7 pad bytes)``. Binary files have no
room for metadata, so it goes to a ``<file>.meta.json`` sidecar.
"""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from franson.errors import FransonError
from franson.event_sim import TimeTagStream

MAGIC = b"FRTAG001"
RECORD = np.dtype([("time_ps", "<u8"), ("channel", "u1"), ("pad", "V7")])
CSV_HEADER = "channel,time_ps"


class TagFileError(FransonError, OSError):
    pass


def _meta(stream: TimeTagStream) -> dict:
    return {"channel": stream.channel, "seed": stream.seed,
            "config_hash": stream.config_hash, **stream.meta}


def write_csv(path, stream: TimeTagStream) -> None:
    meta = " ".join(f"{k}={v}" for k, v in _meta(stream).items())
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {meta}\n{CSV_HEADER}\n")
        body = np.column_stack([np.full(stream.tags.size, stream.channel), stream.tags])
        np.savetxt(fh, body, fmt="%d", delimiter=",")


def read_csv(path) -> TimeTagStream:
    meta = {}
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            for item in line[1:].split():
                key, _, val = item.partition("=")
                meta[key] = val
            line = fh.readline()
        if line.strip() != CSV_HEADER:
            raise TagFileError(f"{path}: expected header {CSV_HEADER!r}, got {line.strip()!r}")
        body = fh.read()
    if body.strip():
        data = np.loadtxt(io.StringIO(body), dtype=np.int64, delimiter=",", ndmin=2)
    else:
        data = np.empty((0, 2), dtype=np.int64)
    channels = np.unique(data[:, 0])
    if channels.size > 1:
        raise TagFileError(f"{path}: multiple channels {channels.tolist()} in one file")
    channel = int(channels[0]) if channels.size else int(meta.get("channel", 0))
    return _build(channel, data[:, 1], meta)


def write_binary(path, stream: TimeTagStream) -> None:
    rec = np.zeros(stream.tags.size, dtype=RECORD)
    rec["time_ps"] = stream.tags
    rec["channel"] = stream.channel
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(rec.tobytes())
    Path(str(path) + ".meta.json").write_text(json.dumps(_meta(stream), sort_keys=True) + "\n")


def read_binary(path) -> TimeTagStream:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise TagFileError(f"{path}: bad magic {raw[:8]!r}")
    if (len(raw) - 8) % RECORD.itemsize:
        raise TagFileError(f"{path}: truncated record")
    rec = np.frombuffer(raw, dtype=RECORD, offset=8)
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    channels = np.unique(rec["channel"])
    if channels.size > 1:
        raise TagFileError(f"{path}: multiple channels {channels.tolist()} in one file")
    channel = int(channels[0]) if channels.size else int(meta.get("channel", 0))
    return _build(channel, rec["time_ps"].astype(np.int64), meta)


def _build(channel, tags, meta) -> TimeTagStream:
    seed = meta.get("seed")
    extra = {k: v for k, v in meta.items() if k not in ("channel", "seed", "config_hash")}
    return TimeTagStream(channel, tags, None if seed in (None, "None") else int(seed),
                         str(meta.get("config_hash", "")), extra)


def write_stream(path, stream: TimeTagStream, fmt: str = "csv") -> None:
    if fmt == "csv":
        write_csv(path, stream)
    elif fmt == "bin":
        write_binary(path, stream)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")


def read_stream(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        head = fh.read(8)
    return read_binary(path) if head == MAGIC else read_csv(path)
