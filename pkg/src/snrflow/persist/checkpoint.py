"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic        8 bytes   b"LSRCKPT1"
    version      u32       1
    meta_len     u64       length of the metadata blob
    metadata     meta_len  UTF-8 JSON (CheckpointMetadata)
    count        u32       number of tensors
    directory    count x { name_len u32, name UTF-8, dtype u8, rank u32, extents u64 x rank }
    data         tensors in directory order, raw little-endian scalars, no padding

dtype codes: 1 = float32, 2 = float64. The header and directory are parsed and the
declared size checked against the file size before any tensor is materialised.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np
from pydantic import ValidationError

from snrflow.data.models import CheckpointMetadata, TensorEntry, ValidationReport
from snrflow.errors import FormatError, NonFiniteError, SnrFlowError, TruncationError
from snrflow.nn.params import FlatParams
from snrflow.utils.hashing import file_sha256

logger = logging.getLogger(__name__)

MAGIC = b"LSRCKPT1"
VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODE_OF = {"float32": 1, "float64": 2}
SUFFIX = ".lsr"


@dataclass
class Checkpoint:
    params: FlatParams
    metadata: CheckpointMetadata
    path: Path | None = None

    @property
    def iteration(self) -> int:
        return self.metadata.iteration

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        params, metadata = load_checkpoint(path)
        return cls(params=params, metadata=metadata, path=Path(path))

    def __iter__(self) -> Iterator[Any]:
        yield self.params
        yield self.metadata


@dataclass
class _Header:
    version: int
    metadata: CheckpointMetadata
    entries: list[TensorEntry] = field(default_factory=list)
    data_end: int = 0


# -- rng state ---------------------------------------------------------------------


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.tolist(), "dtype": str(value.dtype)}
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        if "__ndarray__" in value:
            return np.array(value["__ndarray__"], dtype=value["dtype"])
        return {k: _from_jsonable(v) for k, v in value.items()}
    return value


def rng_state_to_json(rng: np.random.Generator) -> dict[str, Any]:
    return _to_jsonable(rng.bit_generator.state)


def rng_from_json(state: Mapping[str, Any]) -> np.random.Generator:
    """Rebuild a generator positioned exactly where the saved one was"""
    restored = _from_jsonable(dict(state))
    bit_generator = getattr(np.random, restored["bit_generator"])()
    bit_generator.state = restored
    return np.random.Generator(bit_generator)


# -- writing -----------------------------------------------------------------------


def save_checkpoint(
    path: str | Path, params: Mapping[str, np.ndarray], metadata: CheckpointMetadata
) -> Path:
    """Write a checkpoint atomically (temporary file, then rename)"""
    path = Path(path)
    names = sorted(params)
    for name in names:
        value = params[name]
        if str(value.dtype) not in CODE_OF:
            raise FormatError(f"tensor {name!r} has unsupported dtype {value.dtype}")
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"refusing to save non-finite tensor {name!r}")

    meta_blob = metadata.model_dump_json().encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(meta_blob)))
        f.write(meta_blob)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            value = params[name]
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BI", CODE_OF[str(value.dtype)], value.ndim))
            f.write(struct.pack(f"<{value.ndim}Q", *value.shape))
        for name in names:
            value = params[name]
            f.write(np.ascontiguousarray(value, dtype=DTYPE_CODES[CODE_OF[str(value.dtype)]]).tobytes())
    os.replace(tmp, path)
    logger.debug("wrote checkpoint %s (%d tensors)", path, len(names))
    return path


# -- reading -----------------------------------------------------------------------


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncationError(f"file ends inside {what}")
    return data


def _read_header(f: BinaryIO, file_size: int) -> _Header:
    if _read_exact(f, len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad magic: not a checkpoint file")
    version, meta_len = struct.unpack("<IQ", _read_exact(f, 12, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if meta_len > file_size:
        raise TruncationError(f"metadata declares {meta_len} bytes, file has {file_size}")
    try:
        metadata = CheckpointMetadata.model_validate_json(_read_exact(f, meta_len, "metadata"))
    except ValidationError as e:
        raise FormatError(f"malformed metadata: {e}") from e
    (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))

    entries: list[TensorEntry] = []
    for idx in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(f, 4, f"directory entry {idx}"))
        if name_len > file_size:
            raise TruncationError(f"directory entry {idx} declares a {name_len}-byte name")
        try:
            name = _read_exact(f, name_len, f"directory entry {idx}").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"tensor name {idx} is not UTF-8") from e
        code, rank = struct.unpack("<BI", _read_exact(f, 5, f"directory entry {name!r}"))
        if code not in DTYPE_CODES:
            raise FormatError(f"tensor {name!r} has unknown dtype code {code}")
        if 8 * rank > file_size:
            raise TruncationError(f"tensor {name!r} declares rank {rank}", tensor_name=name)
        shape = list(struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, f"extents of {name!r}")))
        nbytes = math.prod(shape) * DTYPE_CODES[code].itemsize
        entries.append(
            TensorEntry(name=name, dtype=DTYPE_CODES[code].name, shape=shape, offset=0, nbytes=nbytes)
        )

    offset = f.tell()
    for entry in entries:
        entry.offset = offset
        offset += entry.nbytes
        if offset > file_size:
            raise TruncationError(
                f"tensor {entry.name!r} needs bytes up to {offset}, file has {file_size}",
                tensor_name=entry.name,
            )
    return _Header(version=version, metadata=metadata, entries=entries, data_end=offset)


def _read_tensor(f: BinaryIO, entry: TensorEntry) -> np.ndarray:
    f.seek(entry.offset)
    raw = _read_exact(f, entry.nbytes, f"tensor {entry.name!r}")
    dtype = np.dtype(entry.dtype).newbyteorder("<")
    # native byte order, owned and writable
    return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="), copy=True).reshape(entry.shape)


def load_checkpoint(
    path: str | Path, *, check_finite: bool = True
) -> tuple[FlatParams, CheckpointMetadata]:
    path = Path(path)
    file_size = path.stat().st_size
    with open(path, "rb") as f:
        header = _read_header(f, file_size)
        params: FlatParams = {}
        for entry in header.entries:
            value = _read_tensor(f, entry)
            if check_finite and not np.all(np.isfinite(value)):
                raise NonFiniteError(f"tensor {entry.name!r} in {path} is not finite")
            params[entry.name] = value
    if header.data_end != file_size:
        logger.warning("%s has %d trailing bytes", path, file_size - header.data_end)
    return params, header.metadata


def validate(path: str | Path) -> ValidationReport:
    """Check magic, version, declared lengths and finiteness without raising"""
    path = Path(path)
    report = ValidationReport(path=str(path), ok=False)
    try:
        file_size = path.stat().st_size
        report.sha256 = file_sha256(path)
        with open(path, "rb") as f:
            header = _read_header(f, file_size)
            report.version = header.version
            report.metadata = header.metadata
            for entry in header.entries:
                entry.finite = bool(np.all(np.isfinite(_read_tensor(f, entry))))
                if not entry.finite:
                    report.errors.append(f"tensor {entry.name!r} contains non-finite values")
            report.tensors = header.entries
        if header.data_end != file_size:
            report.errors.append(f"{file_size - header.data_end} trailing bytes after tensor data")
    except (SnrFlowError, OSError) as e:
        report.errors.append(f"{type(e).__name__}: {e}")
    report.ok = not report.errors
    return report
