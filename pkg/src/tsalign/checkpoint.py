"""Language-agnostic tensor serialization.

File layout: a UTF-8 text header, then a flat binary payload.

    tensorcheckpoint <count>
    <name> <dim0> <dim1> ...
    ... (count manifest lines)
    <raw little-endian float32 values, concatenated in manifest order>

Names must not contain whitespace. A 0-d tensor has a manifest line with no
dims. Values are stored as float32; loading widens back to float64.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

MAGIC = "tensorcheckpoint"


def _manifest_lines(tensors: dict[str, np.ndarray]) -> list[str]:
    lines = [f"{MAGIC} {len(tensors)}"]
    for name, arr in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"tensor name {name!r} must be non-empty without whitespace")
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} {dims}".rstrip())
    return lines


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    header = "\n".join(_manifest_lines(tensors)) + "\n"
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint_file(path) -> dict[str, np.ndarray]:
    """Read a checkpoint into float64 arrays, keyed by manifest order."""
    path = Path(path)
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError(f"{path}: not a tensor checkpoint (no header line)")
    first = raw[:newline].decode("utf-8", errors="replace").split()
    if len(first) != 2 or first[0] != MAGIC:
        raise ValueError(f"{path}: not a tensor checkpoint (bad magic line)")
    count = int(first[1])

    offset = newline + 1
    entries = []
    for _ in range(count):
        newline = raw.find(b"\n", offset)
        if newline < 0:
            raise ValueError(f"{path}: truncated manifest")
        parts = raw[offset:newline].decode("utf-8").split()
        name, dims = parts[0], tuple(int(d) for d in parts[1:])
        entries.append((name, dims))
        offset = newline + 1

    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate tensor names in manifest")

    tensors: dict[str, np.ndarray] = {}
    for name, dims in entries:
        n = int(np.prod(dims)) if dims else 1
        nbytes = 4 * n
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: payload too short for tensor {name}")
        flat = np.frombuffer(chunk, dtype="<f4")
        tensors[name] = flat.reshape(dims).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return tensors


def fingerprint_tensors(tensors: dict[str, np.ndarray]) -> str:
    """Content hash over the manifest and the float32 payload, hex digest."""
    h = hashlib.sha256()
    h.update(("\n".join(_manifest_lines(tensors)) + "\n").encode("utf-8"))
    for arr in tensors.values():
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()
