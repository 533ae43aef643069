"""PANT tensor container and checkpoint directories.

Layout, all little-endian: ``b"PANT"``, u16 version (1), u8 dtype code
(0 = f32, 1 = f64), u8 ndim, ndim x u32 dims, then the row-major payload.
"""
from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PANT"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_HEAD = struct.Struct("<4sHBB")


class ContainerError(Exception):
    code = "E_CONTAINER"

    def __init__(self, message: str):
        super().__init__(f"[{self.code}] {message}")


class BadMagic(ContainerError):
    code = "E_MAGIC"


class BadVersion(ContainerError):
    code = "E_VERSION"


class BadDtype(ContainerError):
    code = "E_DTYPE"


class Truncated(ContainerError):
    code = "E_TRUNCATED"


class TrailingBytes(ContainerError):
    code = "E_TRAILING"


def encode(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    code = CODES.get(array.dtype)
    if code is None:
        raise BadDtype(f"only float32/float64 can be stored, got {array.dtype}")
    if array.ndim > 255:
        raise ValueError("too many dimensions")
    head = _HEAD.pack(MAGIC, VERSION, code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return head + np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes()


def decode(buf: bytes, source: str = "buffer") -> np.ndarray:
    if len(buf) < _HEAD.size:
        raise Truncated(f"{source}: header needs {_HEAD.size} bytes, got {len(buf)}")
    magic, version, code, ndim = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"{source}: expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise BadVersion(f"{source}: unsupported version {version} (reader knows {VERSION})")
    if code not in DTYPES:
        raise BadDtype(f"{source}: unknown dtype code {code}")
    dims_end = _HEAD.size + 4 * ndim
    if len(buf) < dims_end:
        raise Truncated(f"{source}: header with {ndim} dims needs {dims_end} bytes, got {len(buf)}")
    dims = struct.unpack_from(f"<{ndim}I", buf, _HEAD.size)
    dtype = DTYPES[code]
    expected = dims_end + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) < expected:
        raise Truncated(f"{source}: expected {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise TrailingBytes(f"{source}: expected {expected} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=dtype, offset=dims_end).reshape(dims).astype(dtype.newbyteorder("="))


def write(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode(array))


def read(path, dtype=None) -> np.ndarray:
    path = Path(path)
    out = decode(path.read_bytes(), str(path))
    return out if dtype is None else out.astype(dtype, copy=False)


def save_checkpoint(directory, state: dict[str, np.ndarray], config_text: str) -> str:
    """Write one PANT file per tensor plus ``manifest.tsv`` and ``config.txt``.

    Returns the config hash recorded in the manifest.
    """
    directory = Path(directory)
    (directory / "tensors").mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(config_text.encode()).hexdigest()[:16]
    lines = [f"# config_hash={digest}", "name\tdims\tfile"]
    for i, (name, value) in enumerate(sorted(state.items())):
        rel = f"tensors/{i:04d}.pant"
        write(directory / rel, value)
        lines.append(f"{name}\t{','.join(map(str, value.shape))}\t{rel}")
    (directory / "config.txt").write_text(config_text)
    tmp = directory / "manifest.tsv.tmp"
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, directory / "manifest.tsv")
    return digest


def load_checkpoint(directory) -> tuple[dict[str, np.ndarray], str, str]:
    """Return ``(state, config_text, config_hash)``; dims are checked against the manifest."""
    directory = Path(directory)
    lines = (directory / "manifest.tsv").read_text().splitlines()
    if not lines or not lines[0].startswith("# config_hash="):
        raise ContainerError(f"{directory}: manifest lacks a config hash line")
    digest = lines[0].split("=", 1)[1]
    config_text = (directory / "config.txt").read_text()
    if hashlib.sha256(config_text.encode()).hexdigest()[:16] != digest:
        raise ContainerError(f"{directory}: config.txt does not match the manifest hash {digest}")
    state = {}
    for line in lines[2:]:
        name, dims, rel = line.split("\t")
        value = read(directory / rel)
        want = tuple(int(d) for d in dims.split(",")) if dims else ()
        if value.shape != want:
            raise ContainerError(f"{name}: manifest dims {list(want)} but file holds {list(value.shape)}")
        state[name] = value
    return state, config_text, digest
