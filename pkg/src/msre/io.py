"""Binary container for disorder tables and lattice fields.

Layout: b"MSRE", uint32 little-endian header length, UTF-8 JSON header,
then the payload as little-endian float64 in C order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from . import __version__
from .errors import MsreError

MAGIC = b"MSRE"
FORMAT_VERSION = 1


class FormatError(MsreError):
    pass


def write_container(path, header: dict, data: np.ndarray) -> None:
    header = dict(header)
    header.setdefault("format_version", FORMAT_VERSION)
    header.setdefault("code_version", __version__)
    header["shape"] = list(data.shape)
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_container(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path}: not an MSRE container")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    shape = tuple(header["shape"])
    if int(np.prod(shape)) != data.size:
        raise FormatError(f"{path}: payload size {data.size} does not match shape {shape}")
    return header, data.reshape(shape).astype(np.float64)


def save_disorder(path, field) -> None:
    from .disorder import DisorderField  # noqa: F401
    dom = field.domain
    header = {
        "kind": "disorder",
        "box_lo": dom.lo.tolist(),
        "box_hi": dom.hi.tolist(),
        "mask": None if dom.is_box else dom.vertices().tolist(),
        "n": field.grid.n,
        "delta": field.grid.delta,
        "K": field.grid.K,
        "H": field.params.H,
        "seed": field.rng_seed,
        "resample": field.resample,
    }
    write_container(path, header, field.values)


def load_disorder(path):
    from .disorder import DisorderField, HeightGrid, HurstParams
    from .lattice import Domain
    header, data = read_container(path)
    if header.get("kind") != "disorder":
        raise FormatError(f"{path}: not a disorder file")
    dom = _domain_from_header(header)
    grid = HeightGrid(header["n"], header["delta"], header["K"])
    params = HurstParams(header["H"], header["n"])
    return DisorderField(dom, grid, params, data, header.get("seed"), header.get("resample", 0))


def _domain_from_header(header):
    from .lattice import Domain
    lo, hi = header["box_lo"], header["box_hi"]
    if header.get("mask") is None:
        return Domain(lo, hi)
    v = np.asarray(header["mask"], dtype=np.int64)
    mask = np.zeros(tuple(np.asarray(hi) - np.asarray(lo) + 1), dtype=bool)
    mask[tuple((v - np.asarray(lo)).T)] = True
    return Domain(lo, hi, mask)


def save_field(path, f, extra: dict | None = None) -> None:
    dom = f.domain
    header = {
        "kind": "field",
        "box_lo": dom.lo.tolist(),
        "box_hi": dom.hi.tolist(),
        "mask": None if dom.is_box else dom.vertices().tolist(),
        "n": f.n,
    }
    header.update(extra or {})
    write_container(path, header, f.values)


def load_field(path):
    from .lattice import LatticeField
    header, data = read_container(path)
    if header.get("kind") != "field":
        raise FormatError(f"{path}: not a field file")
    return LatticeField(_domain_from_header(header), data), header
