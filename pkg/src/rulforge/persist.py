"""Single-file container for models and window tensors.

Layout: one line of JSON (format tag, kind, free-form metadata, and a tensor
directory of name/shape/offset/count entries), a newline, then the raw
little-endian float64 payloads back to back. Writes go to a temp file in the
destination directory followed by an atomic rename, so readers never observe
a half-written file. Integer tensors are stored as float64 and cast back by
the caller.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DataError
from .preprocess import WindowSet

FORMAT_TAG = "rulforge-container"
FORMAT_VERSION = 1


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write-then-rename so the file appears complete or not at all."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_container(
    path: str | os.PathLike, kind: str, meta: dict, tensors: dict[str, np.ndarray]
) -> None:
    directory = []
    blobs = []
    offset = 0
    for name, array in tensors.items():
        array = np.ascontiguousarray(array, dtype=np.float64)
        blob = array.astype("<f8", copy=False).tobytes()
        directory.append(
            {
                "name": name,
                "shape": list(array.shape),
                "offset": offset,
                "count": int(array.size),
            }
        )
        blobs.append(blob)
        offset += array.size
    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "tensors": directory,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    atomic_write_bytes(path, head + b"\n" + b"".join(blobs))


def load_container(path: str | os.PathLike) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as handle:
        head_line = handle.readline()
        payload = handle.read()
    try:
        header = json.loads(head_line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a container file ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise DataError(f"{path}: missing container format tag")
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported container version {header.get('version')!r}")
    flat = np.frombuffer(payload, dtype="<f8")
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start = entry["offset"]
        stop = start + entry["count"]
        if stop > flat.size:
            raise DataError(f"{path}: tensor {entry['name']!r} extends past payload")
        tensors[entry["name"]] = (
            flat[start:stop].reshape(entry["shape"]).astype(np.float64)
        )
    return header["kind"], header["meta"], tensors


def save_windows(
    path: str | os.PathLike, windows: WindowSet, fingerprint: str, stride: int
) -> None:
    """Persist a WindowSet plus the preprocessing fingerprint it came from."""
    meta = {
        "fingerprint": fingerprint,
        "window_len": windows.window_len,
        "stride": stride,
        "columns": list(windows.columns),
        "cap": windows.cap,
    }
    tensors = {
        "data": windows.data,
        "labels": windows.labels,
        "units": windows.units.astype(np.float64),
        "last_cycles": windows.last_cycles.astype(np.float64),
    }
    save_container(path, kind="windows", meta=meta, tensors=tensors)


def load_windows(path: str | os.PathLike) -> tuple[WindowSet, dict]:
    kind, meta, tensors = load_container(path)
    if kind != "windows":
        raise DataError(f"{path} is a {kind!r} container, not windows")
    windows = WindowSet(
        data=tensors["data"],
        labels=tensors["labels"],
        window_len=int(meta["window_len"]),
        units=tensors["units"].astype(np.int64),
        last_cycles=tensors["last_cycles"].astype(np.int64),
        columns=tuple(meta["columns"]),
        cap=float(meta["cap"]),
    )
    return windows, meta
