"""
Binary weight files (``.fblw``).

Layout, all integers little-endian:

    magic        4 bytes  b"FBLW"
    version      u16
    mode         u16 length + UTF-8
    body variant u16 length + UTF-8
    face size    u32
    arch hash    u16 length + ASCII hex
    entry count  u32
    entries      repeated:
        name     u16 length + UTF-8
        kind     u8     0 = parameter, 1 = buffer (batch-norm running statistic)
        dtype    2 bytes b"f4" or b"f8"
        ndim     u8
        dims     ndim * u32
        data     prod(dims) values, little-endian

See docs/WEIGHT_FORMAT.md.
"""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Optional, Tuple, Union

import numpy as np

from app.model import ArchitectureSpec, ModelMode, WeightStore
from core.errors import ConfigurationError, DimensionError, StateError, WeightFileError
from core.tensor import Tensor
from graph.skeleton import BodyVariant

logger = logging.getLogger(__name__)

MAGIC = b"FBLW"
VERSION = 1

_VERSION = struct.Struct("<H")
_LENGTH = struct.Struct("<H")
_U32 = struct.Struct("<I")
_ENTRY_HEAD = struct.Struct("<B2sB")

KIND_PARAMETER = 0
KIND_BUFFER = 1
DTYPE_CODES = {b"f4": np.dtype("<f4"), b"f8": np.dtype("<f8")}


def _dtype_code(dtype: np.dtype) -> bytes:
    for code, candidate in DTYPE_CODES.items():
        if np.dtype(dtype).newbyteorder("<") == candidate:
            return code
    raise WeightFileError(f"Cannot store arrays of dtype {dtype}")


def _write_text(f: BinaryIO, text: str) -> None:
    data = text.encode("utf-8")
    f.write(_LENGTH.pack(len(data)))
    f.write(data)


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise WeightFileError(
                f"{self.path}: truncated at byte {self.offset} (needed {n} more bytes)"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, layout: struct.Struct) -> Tuple:
        return layout.unpack(self.take(layout.size))

    def text(self) -> str:
        (length,) = self.unpack(_LENGTH)
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise WeightFileError(f"{self.path}: undecodable string at byte {self.offset}") from e


def save_weights(store: WeightStore, path: Union[str, Path]) -> None:
    """Write every parameter and running statistic of ``store``."""
    path = Path(path)
    buffers = store.buffers()
    if len(buffers) != 2 * len(store.bn):
        raise StateError("Cannot save a store whose batch-norm running statistics are unset")
    entries = [(name, KIND_PARAMETER, t.data) for name, t in store.params.items()]
    entries += [(name, KIND_BUFFER, array) for name, array in buffers.items()]

    spec = store.spec
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(_VERSION.pack(VERSION))
        _write_text(f, spec.mode.value)
        _write_text(f, spec.body_variant.value)
        f.write(_U32.pack(spec.face_size))
        _write_text(f, spec.architecture_hash())
        f.write(_U32.pack(len(entries)))
        for name, kind, array in entries:
            code = _dtype_code(array.dtype)
            _write_text(f, name)
            f.write(_ENTRY_HEAD.pack(kind, code, array.ndim))
            for dim in array.shape:
                f.write(_U32.pack(dim))
            f.write(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    tmp.replace(path)
    logger.debug(f"Saved {len(entries)} weight entries to {path}")


def load_weights(
    path: Union[str, Path], expected: Optional[ArchitectureSpec] = None
) -> WeightStore:
    """Read a weight file back into a WeightStore.

    When ``expected`` is given the file's architecture hash must match it.

    Raises:
        WeightFileError: bad magic, unknown version, truncation, hash mismatch
            or entries that do not fit the recorded architecture
    """
    path = Path(path)
    if not path.exists():
        raise WeightFileError(f"Weight file not found: {path}")
    reader = _Reader(path.read_bytes(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise WeightFileError(f"{path}: not a weight file (bad magic bytes)")
    (version,) = reader.unpack(_VERSION)
    if version != VERSION:
        raise WeightFileError(f"{path}: unsupported format version {version}")

    try:
        mode = ModelMode(reader.text())
        variant = BodyVariant(reader.text())
        (face_size,) = reader.unpack(_U32)
        spec = ArchitectureSpec(mode=mode, body_variant=variant, face_size=face_size)
    except (ValueError, ConfigurationError) as e:
        raise WeightFileError(f"{path}: invalid architecture header: {e}") from e
    recorded_hash = reader.text()
    if recorded_hash != spec.architecture_hash():
        raise WeightFileError(f"{path}: architecture hash does not match its header")
    if expected is not None and recorded_hash != expected.architecture_hash():
        raise WeightFileError(
            f"{path}: architecture hash mismatch, file holds {spec.name} weights "
            f"but {expected.name} was configured"
        )

    (count,) = reader.unpack(_U32)
    params: "OrderedDict[str, Tensor]" = OrderedDict()
    buffers = {}
    for _ in range(count):
        name = reader.text()
        kind, code, ndim = reader.unpack(_ENTRY_HEAD)
        if code not in DTYPE_CODES:
            raise WeightFileError(f"{path}: entry '{name}' has unknown dtype code {code!r}")
        if kind not in (KIND_PARAMETER, KIND_BUFFER):
            raise WeightFileError(f"{path}: entry '{name}' has unknown kind {kind}")
        shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
        dtype = DTYPE_CODES[code]
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        array = np.frombuffer(reader.take(n_bytes), dtype=dtype).reshape(shape)
        array = array.astype(dtype.newbyteorder("="))
        if kind == KIND_PARAMETER:
            params[name] = Tensor(array, requires_grad=True, dtype=array.dtype)
        else:
            buffers[name] = array

    if reader.offset != len(reader.data):
        raise WeightFileError(f"{path}: {len(reader.data) - reader.offset} trailing bytes")
    try:
        store = WeightStore(spec, params, buffers)
    except (DimensionError, StateError) as e:
        raise WeightFileError(f"{path}: {e}") from e
    if len(store.buffers()) != 2 * len(store.bn):
        raise WeightFileError(f"{path}: batch-norm running statistics are missing")
    logger.debug(f"Loaded {spec.name} weights from {path}")
    return store
