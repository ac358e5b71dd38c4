"""Readers and writers for the on-disk formats used by the CLI.

* text files: UTF-8, one segment per line
* hypothesis pools: JSON lines, ``{"segment_id", "system", "rank", "text"}``
* manifests: JSON lines of :class:`~mbrfuse.datakit.SampleRecord`
* features: CSV, one frame per row, optional ``# frame_period_ms=<v>`` header
* config: ``key = value`` lines, ``#`` comments

Malformed input raises :class:`DataError` naming the file and line.
"""

from __future__ import annotations

import io
import json
import os
import re
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np

from .datakit import ManifestError, SampleRecord, check_unique_ids
from .mbr import Hypothesis, HypothesisPool
from .mcd import FeatureError, FeatureSequence


class DataError(ValueError):
    pass


def write_atomic(path: str | Path, data: str | bytes):
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not valid UTF-8 ({e.reason} at byte {e.start})") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [ln[:-1] if ln.endswith("\r") else ln for ln in lines]


def lines_to_text(lines) -> str:
    return "".join(ln + "\n" for ln in lines)


def _read_jsonl(path):
    for lineno, line in enumerate(read_lines(path), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        yield lineno, obj


# ---------------------------------------------------------------------------
# pools


def read_pool_file(path: str | Path) -> dict[str, HypothesisPool]:
    """Read one system's hypotheses, grouped by segment.

    Ranks within a segment must be exactly 0..k-1.
    """
    grouped: dict[str, list[Hypothesis]] = defaultdict(list)
    first_line: dict[str, int] = {}
    systems = set()
    for lineno, obj in _read_jsonl(path):
        missing = [k for k in ("segment_id", "system", "rank", "text") if k not in obj]
        if missing:
            raise DataError(f"{path}:{lineno}: missing field(s) {missing}")
        seg, system, rank, text = obj["segment_id"], obj["system"], obj["rank"], obj["text"]
        if isinstance(seg, int) and not isinstance(seg, bool):
            seg = str(seg)
        if not isinstance(seg, str) or not isinstance(system, str) or not isinstance(text, str):
            raise DataError(f"{path}:{lineno}: segment_id, system and text must be strings")
        if isinstance(rank, bool) or not isinstance(rank, int) or rank < 0:
            raise DataError(f"{path}:{lineno}: rank must be a non-negative integer")
        systems.add(system)
        grouped[seg].append(Hypothesis(text, system, rank))
        first_line.setdefault(seg, lineno)
    if len(systems) > 1:
        raise DataError(f"{path}: expected hypotheses from one system, found {sorted(systems)}")
    pools = {}
    for seg, members in grouped.items():
        ranks = sorted(h.rank for h in members)
        if ranks != list(range(len(members))):
            raise DataError(f"{path}:{first_line[seg]}: segment {seg}: ranks must be 0..{len(members) - 1}, got {ranks}")
        members.sort(key=lambda h: h.rank)
        pools[seg] = HypothesisPool(seg, members)
    return pools


# ---------------------------------------------------------------------------
# manifests


def read_manifest(path: str | Path) -> list[SampleRecord]:
    records = []
    seen = {}
    for lineno, obj in _read_jsonl(path):
        try:
            rec = SampleRecord.from_dict(obj)
        except (ManifestError, TypeError) as e:
            raise DataError(f"{path}:{lineno}: {e}") from None
        if not isinstance(rec.source_text, str):
            raise DataError(f"{path}:{lineno}: source_text must be a string")
        if rec.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {rec.id!r} (first seen on line {seen[rec.id]})")
        seen[rec.id] = lineno
        records.append(rec)
    return records


def manifest_to_text(records) -> str:
    check_unique_ids(records)
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)


# ---------------------------------------------------------------------------
# features

_PERIOD_RE = re.compile(r"#\s*frame_period_ms\s*=\s*(\S+)\s*$")


def read_features(path: str | Path) -> FeatureSequence:
    lines = read_lines(path)
    period = None
    rows = []
    width = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            m = _PERIOD_RE.match(line.strip())
            if m and lineno == 1:
                try:
                    period = float(m.group(1))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad frame_period_ms value {m.group(1)!r}") from None
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no frames")
    try:
        return FeatureSequence(np.array(rows), period)
    except FeatureError as e:
        raise DataError(f"{path}: {e}") from None


def features_to_text(seq: FeatureSequence) -> str:
    buf = io.StringIO()
    if seq.frame_period is not None:
        buf.write(f"# frame_period_ms={seq.frame_period!r}\n")
    for row in seq.frames:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` pairs; keys are flag names without leading dashes."""
    out = {}
    for lineno, line in enumerate(read_lines(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out
