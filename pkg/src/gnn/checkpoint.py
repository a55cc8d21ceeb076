"""Binary checkpoint format for trained prediction models.

Layout: b"GCGP", u32 version, u32 header length, UTF-8 JSON header
(hyper-parameters, normalization stats, tensor manifest), then every tensor
as little-endian float32 in manifest order.
"""
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
import json
import logging
import struct

import numpy as np

from gnn.features import NormStats
from gnn.model import Hyper, ModelParams, PredictionModel, ShapeMismatch, buffer_shapes, param_shapes

MAGIC = b"GCGP"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_STORAGE = np.dtype("<f4")

logger = logging.getLogger(__name__)


class CheckpointError(Exception):
    """Base class for checkpoint failures."""


class VersionMismatch(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


def save_checkpoint(params: ModelParams, norm_stats: NormStats,
                    metadata: Optional[Dict[str, Any]] = None) -> bytes:
    params.validate()
    manifest = [[name, list(shape)] for name, shape in param_shapes(params.hyper)]
    buffers = [[name, list(shape)] for name, shape in buffer_shapes(params.hyper)]
    header = {
        "hyper": params.hyper.to_dict(),
        "norm_stats": norm_stats.to_dict(),
        "tensors": manifest,
        "buffers": buffers,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [_PREFIX.pack(MAGIC, VERSION, len(header_bytes)), header_bytes]
    for name, _ in param_shapes(params.hyper):
        chunks.append(params.tensors[name].astype(_STORAGE).tobytes())
    for name, _ in buffer_shapes(params.hyper):
        chunks.append(params.buffers[name].astype(_STORAGE).tobytes())
    return b"".join(chunks)


def load_checkpoint(data: bytes) -> Tuple[ModelParams, NormStats, Dict[str, Any]]:
    """Decode a checkpoint; tensors come back as float64.

    Raises:
        CorruptCheckpoint: bad magic, truncated data or an unreadable header
        VersionMismatch: written by an incompatible format version
    """
    if len(data) < _PREFIX.size:
        raise CorruptCheckpoint(f"checkpoint is only {len(data)} bytes")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        hyper = Hyper(**header["hyper"])
        norm_stats = NormStats.from_dict(header["norm_stats"])
        manifest = [(name, tuple(shape)) for name, shape in header["tensors"]]
        buffer_manifest = [(name, tuple(shape)) for name, shape in header["buffers"]]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
        raise CorruptCheckpoint(f"unreadable header: {e}") from e
    if manifest != param_shapes(hyper) or buffer_manifest != buffer_shapes(hyper):
        raise CorruptCheckpoint("tensor manifest does not match the hyper-parameters")

    offset = start + header_len
    stores: Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]] = ({}, {})
    for store, entries in zip(stores, (manifest, buffer_manifest)):
        for name, shape in entries:
            count = int(np.prod(shape))
            end = offset + count * _STORAGE.itemsize
            if end > len(data):
                raise CorruptCheckpoint(f"checkpoint truncated inside tensor {name}")
            store[name] = np.frombuffer(data, dtype=_STORAGE, count=count, offset=offset) \
                .astype(np.float64).reshape(shape)
            offset = end
    if offset != len(data):
        raise CorruptCheckpoint(f"{len(data) - offset} trailing bytes after the last tensor")

    params = ModelParams(hyper, stores[0], stores[1])
    try:
        params.validate()
    except ShapeMismatch as e:
        raise CorruptCheckpoint(str(e)) from e
    return params, norm_stats, header.get("metadata", {})


def write_model(path: Path, model: PredictionModel) -> None:
    Path(path).write_bytes(save_checkpoint(model.params, model.norm_stats, model.metadata))
    logger.info(f"Saved model checkpoint to {path}")


def read_model(path: Path) -> PredictionModel:
    params, norm_stats, metadata = load_checkpoint(Path(path).read_bytes())
    logger.debug(f"Loaded model from {path}: {params.hyper}")
    return PredictionModel(params, norm_stats, metadata)
