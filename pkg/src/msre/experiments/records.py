"""JSONL record files: one header line, then one JSON object per sample.

The header carries the resolved configuration, its hash, the code version and
a timestamp. Record lines hold only quantities that are a function of
(configuration, L, sample index), so two runs of the same configuration give
byte-identical record lines.
"""
from __future__ import annotations

import datetime
import json
import os
from dataclasses import asdict, dataclass, field

from .. import __version__
from ..errors import ConfigError

SCHEMA = "msre.records/1"


@dataclass
class ExperimentRecord:
    config_hash: str
    L: int
    sample: int
    seed: int
    GE: float
    max_height: float
    heights_ell2H: float
    frac_above: list
    h_ladder: list
    solver: str
    solver_stats: dict
    K: int
    K_doublings: int = 0
    ge_recheck: float = 0.0  # |H(φ) − solver objective|
    site_heights: list | None = None
    kind: str = "record"

    def to_json(self) -> str:
        body = asdict(self)
        if body["site_heights"] is None:
            del body["site_heights"]
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentRecord":
        raw = dict(raw)
        raw.setdefault("site_heights", None)
        return cls(**raw)


@dataclass
class RecordSet:
    header: dict
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def by_L(self) -> dict:
        out = {}
        for r in self.records:
            out.setdefault(r.L, []).append(r)
        return out

    def done(self) -> set:
        return {(r.L, r.sample) for r in self.records} | {(e["L"], e["sample"]) for e in self.errors}


def make_header(config_dict: dict, config_hash: str) -> dict:
    return {
        "kind": "header",
        "schema": SCHEMA,
        "config": config_dict,
        "config_hash": config_hash,
        "code_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def error_line(L: int, sample: int, seed: int, exc: BaseException) -> str:
    return json.dumps({"kind": "error", "L": L, "sample": sample, "seed": seed,
                       "error": type(exc).__name__, "message": str(exc)}, sort_keys=True)


def read_records(path) -> RecordSet:
    """Parse a record file; a truncated final line (interrupted write) is ignored."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise ConfigError(f"{path}: empty record file")
    header = json.loads(lines[0])
    if header.get("kind") != "header" or header.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: missing or unknown header")
    rs = RecordSet(header)
    body = lines[1:]
    for i, line in enumerate(body):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            if i == len(body) - 1 or all(not x.strip() for x in body[i + 1:]):
                break
            raise ConfigError(f"{path}: corrupt line {i + 2}") from None
        if raw.get("kind") == "error":
            rs.errors.append(raw)
        else:
            rs.records.append(ExperimentRecord.from_dict(raw))
    return rs


def truncate_partial(path) -> None:
    """Drop an incomplete trailing line left by an interrupted run."""
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            fh.truncate(cut)


def body_lines(path) -> list:
    """Record and error lines without the header (for determinism checks)."""
    with open(path) as fh:
        return [x for x in fh.read().split("\n")[1:] if x.strip()]


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
