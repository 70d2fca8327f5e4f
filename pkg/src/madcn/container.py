"""Binary parameter container shared by the network and the baselines.

Layout::

    magic (5 bytes) | version (1 byte) | header length (uint32 LE) |
    JSON header (UTF-8) | float64 LE payload

The header's ``manifest`` lists every array as ``{name, shape, offset}`` with
offsets in bytes from the start of the payload, in write order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

VERSION = 1
_PREFIX = struct.Struct("<5sBI")


def write_container(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 5:
        raise ValueError("magic must be exactly 5 bytes")
    manifest = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = dict(header, manifest=manifest)
    blob = json.dumps(header, separators=(",", ":"), allow_nan=False).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_PREFIX.pack(magic, VERSION, len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"model file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: truncated file ({len(raw)} bytes)")
    got_magic, version, hlen = _PREFIX.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (this build reads version {VERSION})")
    start = _PREFIX.size + hlen
    if len(raw) < start:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from None
    payload = memoryview(raw)[start:]
    arrays = {}
    expected = 0
    for entry in header.get("manifest", []):
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        lo = int(entry["offset"])
        if lo + nbytes > len(payload):
            raise FormatError(f"{path}: truncated payload for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(payload[lo:lo + nbytes], dtype="<f8").astype(np.float64).reshape(shape)
        expected = max(expected, lo + nbytes)
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, manifest describes {expected}")
    return header, arrays
