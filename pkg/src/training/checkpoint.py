"""
Named-tensor archive used for checkpoints and perceptual weight import.

Layout:
    magic     8 bytes, b'MORPHCK1'
    length    8 bytes, little-endian uint64: size of the manifest in bytes
    manifest  UTF-8 JSON text: entry names, shapes, dtypes, byte offsets + string metadata
    data      raw little-endian IEEE-754 / int64 arrays, C order, at the manifest offsets
              (relative to the start of the data section)
"""
import logging
import os
import struct

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from utils.errors import ArchiveFormatError

logger = logging.getLogger(__name__)

MAGIC = b'MORPHCK1'
HEADER_SIZE = len(MAGIC) + 8
SUPPORTED_DTYPES = {'<f4', '<f8', '<i8'}


class EntryRecord(BaseModel):
    name: str = Field(..., description="Entry name, e.g. generator.encoder.blocks.0.weight")
    shape: list[int] = Field(..., description="Array extents")
    dtype: str = Field(..., description="Numpy dtype string: <f4, <f8 or <i8")
    offset: int = Field(..., ge=0, description="Byte offset within the data section")
    nbytes: int = Field(..., ge=0, description="Size in bytes")


class ArchiveManifest(BaseModel):
    entries: list[EntryRecord] = Field(default_factory=list)
    metadata: dict[str, str] = Field(default_factory=dict, description="Free-form string metadata (config, mode, step)")


def _storage_dtype(array: np.ndarray) -> np.dtype:
    if np.issubdtype(array.dtype, np.integer):
        return np.dtype('<i8')
    if array.dtype == np.float32:
        return np.dtype('<f4')
    return np.dtype('<f8')


class CheckpointArchive:
    """
    Ordered mapping of names to arrays plus string metadata, serialized bit-exactly.
    Entry order is preserved, so save -> load -> save yields identical bytes.
    """

    def __init__(self, entries: dict[str, np.ndarray] | None = None, metadata: dict[str, str] | None = None):
        self.entries: dict[str, np.ndarray] = dict(entries or {})
        self.metadata: dict[str, str] = dict(metadata or {})

    def add(self, prefix: str, entries: dict[str, np.ndarray]):
        for name, array in entries.items():
            self.entries[f'{prefix}{name}'] = np.asarray(array)

    def section(self, prefix: str) -> dict[str, np.ndarray]:
        """ Entries under `prefix`, with the prefix stripped. """
        return {name[len(prefix):]: array for name, array in self.entries.items() if name.startswith(prefix)}

    def to_bytes(self) -> bytes:
        records, chunks, offset = [], [], 0
        for name, array in self.entries.items():
            dtype = _storage_dtype(np.asarray(array))
            raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
            records.append(EntryRecord(name=name, shape=list(np.shape(array)), dtype=dtype.str,
                                       offset=offset, nbytes=len(raw)))
            chunks.append(raw)
            offset += len(raw)
        manifest = ArchiveManifest(entries=records, metadata=self.metadata).model_dump_json().encode('utf-8')
        return MAGIC + struct.pack('<Q', len(manifest)) + manifest + b''.join(chunks)

    @classmethod
    def from_bytes(cls, payload: bytes) -> 'CheckpointArchive':
        if len(payload) < HEADER_SIZE:
            raise ArchiveFormatError(len(payload), f"truncated header ({len(payload)} of {HEADER_SIZE} bytes)")
        if payload[:len(MAGIC)] != MAGIC:
            raise ArchiveFormatError(0, f"bad magic {payload[:len(MAGIC)]!r}")
        (manifest_size,) = struct.unpack('<Q', payload[len(MAGIC):HEADER_SIZE])
        data_start = HEADER_SIZE + manifest_size
        if data_start > len(payload):
            raise ArchiveFormatError(len(payload), f"manifest of {manifest_size} bytes runs past end of file")
        try:
            manifest = ArchiveManifest.model_validate_json(payload[HEADER_SIZE:data_start])
        except ValidationError as exc:
            raise ArchiveFormatError(HEADER_SIZE, f"invalid manifest: {exc.errors()[0]['msg']}") from exc

        entries = {}
        for record in manifest.entries:
            position = data_start + record.offset
            if record.dtype not in SUPPORTED_DTYPES:
                raise ArchiveFormatError(position, f"unsupported dtype {record.dtype} for '{record.name}'")
            dtype = np.dtype(record.dtype)
            expected = int(np.prod(record.shape, dtype=np.int64)) * dtype.itemsize
            if expected != record.nbytes:
                raise ArchiveFormatError(position, f"'{record.name}' declares {record.nbytes} bytes, "
                                                   f"shape {record.shape} needs {expected}")
            if position + record.nbytes > len(payload):
                raise ArchiveFormatError(position, f"data for '{record.name}' runs past end of file")
            array = np.frombuffer(payload, dtype=dtype, count=expected // dtype.itemsize, offset=position)
            entries[record.name] = array.reshape(record.shape).copy()
        return cls(entries, manifest.metadata)

    def save(self, path: str):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        payload = self.to_bytes()
        with open(path, 'wb') as f:
            f.write(payload)
        logger.info(f'wrote checkpoint {path} ({len(self.entries)} tensors, {len(payload)} bytes)')

    @classmethod
    def load(cls, path: str) -> 'CheckpointArchive':
        with open(path, 'rb') as f:
            payload = f.read()
        logger.debug(f'read {len(payload)} bytes from {path}')
        return cls.from_bytes(payload)
