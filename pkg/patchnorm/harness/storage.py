"""
Artifact storage: flat little-endian binary files with a JSON sidecar.

Tensor file:   <name>.bin (raw values) + <name>.json {"shape", "dtype", "seed", ...}
Checkpoint:    <name>.bin (concatenated float64 arrays) + <name>.json {"meta", "entries"}
All writes go to a temporary file in the target directory and are renamed into place.
"""
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ..errors import LoadError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
CHECKPOINT_FORMAT = "patchnorm-checkpoint"
CHECKPOINT_VERSION = 1
_ALLOWED_DTYPES = {"<f4", "<f8"}


def atomic_write_bytes(path: PathLike, payload: bytes):
    """Write payload to path via a temp file + rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _paths(path: PathLike) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".bin", ".json"):
        base = base.with_suffix("")
    return base.parent / f"{base.name}.bin", base.parent / f"{base.name}.json"


def _non_negative_int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValueError(f"{what} must be a non-negative integer, got {value!r}")
    return value


def _parse_shape(value: Any) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ValueError(f"shape must be a list, got {value!r}")
    return tuple(_non_negative_int(s, "shape dimension") for s in value)


def _read_sidecar(path: Path) -> dict[str, Any]:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise LoadError(f"Missing sidecar {path}") from e
    except json.JSONDecodeError as e:
        raise LoadError(f"Malformed sidecar {path}: {e}") from e


def write_tensor_file(path: PathLike, array: np.ndarray, seed: Optional[int] = None, **extra: Any) -> Path:
    """
    Store an array as raw little-endian values plus a JSON sidecar.

    Args:
        path: Target path (".bin" is added/replaced)
        array: Floating array of any shape
        seed: Generator seed recorded in the sidecar
        **extra: Additional JSON-serializable sidecar fields

    Returns:
        Path of the .bin file
    """
    bin_path, json_path = _paths(path)
    array = np.asarray(array)
    dtype = np.dtype("<f8") if array.dtype == np.float64 else np.dtype("<f4")
    payload = np.ascontiguousarray(array, dtype=dtype).tobytes()
    sidecar = {"shape": list(array.shape), "dtype": dtype.str, "seed": seed, **extra}

    atomic_write_bytes(bin_path, payload)
    atomic_write_text(json_path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    logger.debug(f"Wrote tensor {array.shape} to {bin_path}")
    return bin_path


def read_tensor_file(path: PathLike) -> tuple[np.ndarray, dict[str, Any]]:
    """
    Load an array written by write_tensor_file.

    Returns:
        (array, sidecar dict)

    Raises:
        LoadError: Missing files, unknown dtype, or size that disagrees with the shape
    """
    bin_path, json_path = _paths(path)
    sidecar = _read_sidecar(json_path)
    try:
        shape = _parse_shape(sidecar["shape"])
        dtype = np.dtype(sidecar["dtype"])
    except (KeyError, TypeError, ValueError) as e:
        raise LoadError(f"Sidecar {json_path} lacks a valid shape/dtype: {e}") from e
    if dtype.str not in _ALLOWED_DTYPES:
        raise LoadError(f"Unsupported dtype {dtype.str} in {json_path}")

    try:
        raw = bin_path.read_bytes()
    except FileNotFoundError as e:
        raise LoadError(f"Missing tensor file {bin_path}") from e
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise LoadError(f"{bin_path} holds {len(raw)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy(), sidecar


@dataclass
class Checkpoint:
    """Model metadata plus a flat record of named float64 arrays"""
    meta: dict[str, Any]
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(path: PathLike, checkpoint: Checkpoint) -> Path:
    bin_path, json_path = _paths(path)
    entries = []
    chunks = []
    offset = 0
    for key in sorted(checkpoint.arrays):
        values = np.ascontiguousarray(checkpoint.arrays[key], dtype="<f8")
        entries.append({"key": key, "shape": list(values.shape), "offset": offset, "count": int(values.size)})
        chunks.append(values.tobytes())
        offset += int(values.size)

    sidecar = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "meta": checkpoint.meta,
        "entries": entries,
    }
    atomic_write_bytes(bin_path, b"".join(chunks))
    atomic_write_text(json_path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    logger.info(f"Saved checkpoint {bin_path} ({len(entries)} arrays)")
    return bin_path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        LoadError: Wrong format marker, missing files, or entries outside the data
    """
    bin_path, json_path = _paths(path)
    sidecar = _read_sidecar(json_path)
    if sidecar.get("format") != CHECKPOINT_FORMAT:
        raise LoadError(f"{json_path} is not a {CHECKPOINT_FORMAT} sidecar")
    try:
        raw = bin_path.read_bytes()
    except FileNotFoundError as e:
        raise LoadError(f"Missing checkpoint data {bin_path}") from e

    values = np.frombuffer(raw, dtype="<f8")
    arrays = {}
    entries = sidecar.get("entries", [])
    if not isinstance(entries, list):
        raise LoadError(f"{json_path}: entries must be a list")
    for position, entry in enumerate(entries):
        try:
            key = entry["key"]
            if not isinstance(key, str):
                raise ValueError(f"key must be a string, got {key!r}")
            start = _non_negative_int(entry["offset"], "offset")
            count = _non_negative_int(entry["count"], "count")
            shape = _parse_shape(entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"{json_path}: entry {position} is malformed: {e}") from e
        if int(np.prod(shape, dtype=np.int64)) != count:
            raise LoadError(f"{json_path}: entry {key} has shape {list(shape)} but count {count}")
        if start + count > values.size:
            raise LoadError(f"Entry {key} runs past the end of {bin_path}")
        arrays[key] = values[start:start + count].reshape(shape).copy()
    return Checkpoint(meta=dict(sidecar.get("meta", {})), arrays=arrays)
