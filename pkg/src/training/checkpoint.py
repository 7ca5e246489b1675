"""Versioned binary checkpoints for ModelState and standalone KGE models.

Layout (little-endian): magic, u32 version, 32-byte config digest, u64 metadata
length, JSON metadata, u32 array count, then per array u16 name length, name,
u8 ndim, u64 dims, u64 byte length and float64 payload. Arrays are written in
sorted name order so identical states give identical files.
"""

import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from src.kge.fusion_head import FusionHead
from src.errors import CheckpointError
from src.kge.models import KgeModel, model_from_arrays
from src.training.state import ModelState
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"VKGCKPT\0"
FORMAT_VERSION = 1
DIGEST_SIZE = 32

_HEADER = struct.Struct("<8sI32sQ")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_U64 = struct.Struct("<Q")

KIND_MODEL_STATE = "model_state"
KIND_KGE_MODEL = "kge_model"


def _digest_bytes(digest: str) -> bytes:
    if not digest:
        return bytes(DIGEST_SIZE)
    raw = bytes.fromhex(digest)
    if len(raw) != DIGEST_SIZE:
        raise CheckpointError(f"config digest must be {DIGEST_SIZE} bytes, got {len(raw)}")
    return raw


def write_checkpoint(
    path: str | Path, arrays: dict[str, np.ndarray], meta: dict, digest: str = ""
) -> Path:
    path = Path(path)
    meta = dict(meta)
    meta["arrays"] = {name: list(np.shape(array)) for name, array in sorted(arrays.items())}
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, _digest_bytes(digest), len(meta_bytes)))
        f.write(meta_bytes)
        f.write(_COUNT.pack(len(arrays)))
        for name in sorted(arrays):
            array = np.ascontiguousarray(arrays[name], dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(_NAME_LEN.pack(len(encoded)))
            f.write(encoded)
            f.write(_NDIM.pack(array.ndim))
            for size in array.shape:
                f.write(_U64.pack(size))
            payload = array.tobytes()
            f.write(_U64.pack(len(payload)))
            f.write(payload)
    logger.info(f"[CHECKPOINT] ✓ wrote {meta.get('kind')} with {len(arrays)} arrays to {path}")
    return path


def _read_exact(f: BinaryIO, size: int, path: Path) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError(f"{path}: checkpoint is truncated")
    return data


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray], str]:
    """Return (metadata, arrays, config digest hex)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        magic, version, digest, meta_len = _HEADER.unpack(_read_exact(f, _HEADER.size, path))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )
        try:
            meta = json.loads(_read_exact(f, meta_len, path).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: corrupt metadata: {e}") from e

        (count,) = _COUNT.unpack(_read_exact(f, _COUNT.size, path))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _NAME_LEN.unpack(_read_exact(f, _NAME_LEN.size, path))
            name = _read_exact(f, name_len, path).decode("utf-8", errors="replace")
            (ndim,) = _NDIM.unpack(_read_exact(f, _NDIM.size, path))
            shape = tuple(
                _U64.unpack(_read_exact(f, _U64.size, path))[0] for _ in range(ndim)
            )
            (nbytes,) = _U64.unpack(_read_exact(f, _U64.size, path))
            if nbytes != 8 * int(np.prod(shape, dtype=np.int64)):
                raise CheckpointError(f"{path}: array '{name}' size does not match its shape")
            payload = _read_exact(f, nbytes, path)
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last array")

    declared = meta.pop("arrays", None)
    if declared is not None and sorted(declared) != sorted(arrays):
        raise CheckpointError(f"{path}: array table does not match its metadata")
    return meta, arrays, digest.hex() if any(digest) else ""


# --- ModelState ---


def save_checkpoint(state: ModelState, path: str | Path, digest: str = "") -> Path:
    return write_checkpoint(path, state.arrays(), state.meta(), digest)


def load_checkpoint(path: str | Path, cfg: TrainConfig | None = None) -> ModelState:
    meta, arrays, _ = read_checkpoint(path)
    if meta.get("kind") != KIND_MODEL_STATE:
        raise CheckpointError(
            f"{path}: expected a {KIND_MODEL_STATE} checkpoint, got {meta.get('kind')}"
        )
    state = ModelState.from_arrays(arrays, meta, cfg or TrainConfig())
    logger.info(
        f"[CHECKPOINT] ✓ loaded {state.method} state: stage {state.stage}, "
        f"epoch {state.epoch_in_stage}, completed {sorted(state.completed_stages)}"
    )
    return state


# --- KGE models ---


def save_kge_model(
    model: KgeModel, path: str | Path, method: str | None = None, digest: str = ""
) -> Path:
    arrays = {
        name: array for name, array in model.parameters().items() if not name.startswith("fusion.")
    }
    meta: dict = {
        "kind": KIND_KGE_MODEL,
        "method": method or model.variant,
        "variant": model.variant,
        "fusion": model.fusion is not None,
    }
    if model.fusion is not None:
        arrays.update(model.fusion.arrays())
        meta["fusion_fixed"] = model.fusion.fixed
        meta["fusion_missing"] = model.fusion.missing
    return write_checkpoint(path, arrays, meta, digest)


def kge_model_from_checkpoint(meta: dict, arrays: dict[str, np.ndarray]) -> KgeModel:
    try:
        model = model_from_arrays(meta["variant"], arrays)
        if meta.get("fusion"):
            model.fusion = FusionHead(
                arrays["fusion.text"],
                arrays["fusion.reduction"],
                fixed=bool(meta.get("fusion_fixed", False)),
                missing=int(meta.get("fusion_missing", 0)),
            )
    except KeyError as e:
        raise CheckpointError(f"KGE checkpoint is missing {e}") from e
    return model


def load_kge_model(path: str | Path) -> tuple[KgeModel, str]:
    """Return the model and the method name it was trained as."""
    meta, arrays, _ = read_checkpoint(path)
    if meta.get("kind") != KIND_KGE_MODEL:
        raise CheckpointError(
            f"{path}: expected a {KIND_KGE_MODEL} checkpoint, got {meta.get('kind')}"
        )
    return kge_model_from_checkpoint(meta, arrays), str(meta.get("method", meta["variant"]))
