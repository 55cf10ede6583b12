"""Little-endian binary containers for arrays, plus JSON sidecars.

Array container (``.bin``):

    bytes 0..3    magic  b"EMGT"
    u32           format version (1)
    u32           ndim
    ndim x u64    dims
    payload       float64 little-endian, C order

Every array file is accompanied by ``<name>.json`` holding labels, subject
ids, and whatever metadata the producing stage wants to carry forward.

Checkpoint container (``.ckpt``) for trained or initial network weights:

    bytes 0..3    magic  b"EMGC"
    u32           format version (1)
    u64           config length; that many bytes of UTF-8 JSON
    u32           tensor count
    per tensor    u16 name length, name UTF-8, u32 ndim, ndim x u64 dims,
                  float64 little-endian data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptBlob
from .features import FeatureMatrix, WindowTensor

ARRAY_MAGIC = b"EMGT"
CHECKPOINT_MAGIC = b"EMGC"
FORMAT_VERSION = 1


def write_array(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)  # asarray keeps 0-d rank
    with open(path, "wb") as f:
        f.write(ARRAY_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.astype("<f8").tobytes(order="C"))


def read_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != ARRAY_MAGIC:
        raise CorruptBlob(f"{path}: not an array container")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise CorruptBlob(f"{path}: unsupported format version {version}")
    offset = 12
    if len(blob) < offset + 8 * ndim:
        raise CorruptBlob(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    count = int(np.prod(dims)) if ndim else 1
    expected = offset + 8 * count
    if len(blob) != expected:
        raise CorruptBlob(
            f"{path}: expected {expected} bytes for shape {dims}, got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return data.reshape(dims).astype(np.float64)


def _sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def save_windows(path: str | Path, tensor: WindowTensor,
                 metadata: dict | None = None) -> None:
    write_array(path, tensor.data)
    sidecar = {
        "kind": "windows",
        "window_len_samples": tensor.window_len_samples,
        "stride_samples": tensor.stride_samples,
        "labels": tensor.labels.tolist(),
        "subject_ids": [str(s) for s in tensor.subject_ids],
        "metadata": metadata or {},
    }
    with open(_sidecar_path(path), "w") as f:
        json.dump(sidecar, f)


def load_windows(path: str | Path) -> tuple[WindowTensor, dict]:
    data = read_array(path)
    with open(_sidecar_path(path)) as f:
        sidecar = json.load(f)
    if sidecar.get("kind") != "windows":
        raise CorruptBlob(f"{_sidecar_path(path)}: sidecar kind is not 'windows'")
    tensor = WindowTensor(
        data=data,
        labels=np.asarray(sidecar["labels"], dtype=np.int8),
        subject_ids=np.asarray(sidecar["subject_ids"], dtype=str),
        window_len_samples=int(sidecar["window_len_samples"]),
        stride_samples=int(sidecar["stride_samples"]),
    )
    return tensor, sidecar.get("metadata", {})


def save_features(path: str | Path, features: FeatureMatrix,
                  metadata: dict | None = None) -> None:
    write_array(path, features.X)
    sidecar = {
        "kind": "features",
        "feature_names": list(features.feature_names),
        "labels": features.labels.tolist(),
        "subject_ids": [str(s) for s in features.subject_ids],
        "metadata": metadata or {},
    }
    with open(_sidecar_path(path), "w") as f:
        json.dump(sidecar, f)


def load_features(path: str | Path) -> tuple[FeatureMatrix, dict]:
    X = read_array(path)
    with open(_sidecar_path(path)) as f:
        sidecar = json.load(f)
    if sidecar.get("kind") != "features":
        raise CorruptBlob(f"{_sidecar_path(path)}: sidecar kind is not 'features'")
    features = FeatureMatrix(
        X=X,
        labels=np.asarray(sidecar["labels"], dtype=np.int8),
        subject_ids=np.asarray(sidecar["subject_ids"], dtype=str),
        feature_names=tuple(sidecar["feature_names"]),
    )
    return features, sidecar.get("metadata", {})


def checkpoint_bytes(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize a (config, tensors) pair to the checkpoint wire format."""
    config_blob = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC,
             struct.pack("<I", FORMAT_VERSION),
             struct.pack("<Q", len(config_blob)),
             config_blob,
             struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        name_blob = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_blob)))
        parts.append(name_blob)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def parse_checkpoint(blob: bytes,
                     origin: str = "<bytes>") -> tuple[dict, dict[str, np.ndarray]]:
    path = origin
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptBlob(f"{path}: not a checkpoint container")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CorruptBlob(f"{path}: unsupported format version {version}")
    (config_len,) = struct.unpack_from("<Q", blob, 8)
    offset = 16
    try:
        config = json.loads(blob[offset:offset + config_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBlob(f"{path}: bad config block: {exc}") from exc
    offset += config_len
    tensors = {}
    try:
        (n_tensors,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
            count = int(np.prod(dims)) if ndim else 1
            if len(blob) < offset + 8 * count:
                raise CorruptBlob(f"{path}: truncated tensor {name!r}")
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += 8 * count
            tensors[name] = data.reshape(dims).astype(np.float64)
    except struct.error as exc:
        raise CorruptBlob(f"{path}: truncated checkpoint: {exc}") from exc
    if offset != len(blob):
        raise CorruptBlob(f"{path}: {len(blob) - offset} trailing bytes")
    return config, tensors


def save_checkpoint(path: str | Path, config: dict,
                    tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(checkpoint_bytes(config, tensors))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    return parse_checkpoint(path.read_bytes(), origin=str(path))
