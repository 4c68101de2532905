"""Binary file formats: mel matrices and parameter checkpoints.

Both formats are a 4-byte magic, a little-endian uint32 header length, a
UTF-8 JSON header, and a raw little-endian payload:

* mel files (magic ``ESML``): float32, row-major by frame; header carries
  frames/channels and the framing metadata.
* checkpoints (magic ``ESCK``): float64 in parameter declaration order;
  header carries topology, dimensions, the emotion inventory, and the
  per-parameter shapes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InputError

__all__ = ["save_mel", "load_mel", "save_checkpoint", "load_checkpoint"]

MEL_MAGIC = b"ESML"
CKPT_MAGIC = b"ESCK"
FORMAT_VERSION = 1


def _write_blob(path, magic: bytes, header: dict, payload: bytes):
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def _read_blob(path, magic: bytes) -> tuple[dict, bytes]:
    try:
        with open(path, "rb") as fh:
            got = fh.read(4)
            if got != magic:
                raise InputError(
                    f"{path}: bad magic {got!r}, expected {magic.decode()} file"
                )
            (header_len,) = struct.unpack("<I", fh.read(4))
            header_bytes = fh.read(header_len)
            if len(header_bytes) != header_len:
                raise InputError(f"{path}: truncated header")
            header = json.loads(header_bytes.decode("utf-8"))
            return header, fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (struct.error, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed container: {exc}") from exc


def save_mel(path, values: np.ndarray, metadata: dict | None = None):
    """Write a frames x channels float matrix with its framing metadata."""
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise InputError(f"mel payload must be 2-d, got shape {values.shape}")
    header = {
        "format_version": FORMAT_VERSION,
        "frames": int(values.shape[0]),
        "channels": int(values.shape[1]),
        "dtype": "float32",
        "metadata": metadata or {},
    }
    _write_blob(path, MEL_MAGIC, header, values.astype("<f4").tobytes())


def load_mel(path) -> tuple[np.ndarray, dict]:
    """Read a mel file; returns (float64 frames x channels, metadata dict)."""
    header, payload = _read_blob(path, MEL_MAGIC)
    frames, channels = header["frames"], header["channels"]
    expected = frames * channels * 4
    if len(payload) != expected:
        raise InputError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(frames, channels)
    return values.astype(float), header.get("metadata", {})


def save_checkpoint(path, header: dict, params: list[tuple[str, np.ndarray]]):
    """Write named parameter arrays (declaration order) behind a JSON header."""
    entries = []
    chunks = []
    for name, value in params:
        value = np.asarray(value, dtype=float)
        entries.append({"name": name, "shape": list(value.shape)})
        chunks.append(value.astype("<f8").tobytes())
    full_header = {"format_version": FORMAT_VERSION, **header, "params": entries}
    _write_blob(path, CKPT_MAGIC, full_header, b"".join(chunks))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (header, name -> float64 array)."""
    header, payload = _read_blob(path, CKPT_MAGIC)
    params = {}
    offset = 0
    for entry in header.get("params", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise InputError(f"{path}: payload truncated at parameter {entry['name']!r}")
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype="<f8").reshape(shape)
        params[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(payload):
        raise InputError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return header, params
