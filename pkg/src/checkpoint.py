"""
Versioned checkpoint container for models and detectors

Layout: 8-byte magic, 4-byte big-endian header length, UTF-8 JSON header,
then raw little-endian float64 tensors in header order. Round trips are bit-exact.
"""
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
from packaging.version import InvalidVersion, Version

from src.classifier_model import ClassifierModel
from src.errors import CheckpointError
from src.grid_model import GridModel
from src.logger import get_logger
from src.output_stage import OutputHead
from src.settings import HeadType, Pooling
from src.text_data_model import Vocabulary

logger = get_logger(__name__)

MAGIC = b"RSDBENCH"
FORMAT_VERSION = "1.0"
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    kind: str
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)
    format_version: str = FORMAT_VERSION


def _check_version(found: str):
    try:
        found_v = Version(found)
    except InvalidVersion:
        raise CheckpointError(f"checkpoint has an invalid format version '{found}'")
    current = Version(FORMAT_VERSION)
    if found_v.major != current.major or found_v > current:
        raise CheckpointError(f"checkpoint format {found} is not readable by format {FORMAT_VERSION}")


def write_checkpoint(path: str, checkpoint: Checkpoint):
    index = []
    offset = 0
    blobs = []
    for name, tensor in checkpoint.tensors.items():
        data = np.ascontiguousarray(tensor, dtype=_DTYPE)
        blob = data.tobytes()
        index.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        "format_version": checkpoint.format_version,
        "kind": checkpoint.kind,
        "meta": checkpoint.meta,
        "tensors": index,
    }, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(">I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    logger.debug(f"Checkpoint '{checkpoint.kind}' written to {path}")


def read_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a ResidueBench checkpoint (bad magic)")
    try:
        (header_len,) = struct.unpack(">I", raw[8:12])
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint header ({e})")
    _check_version(header.get("format_version", ""))
    body = raw[12 + header_len:]
    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated tensor '{entry['name']}'")
        flat = np.frombuffer(body[start:start + nbytes], dtype=_DTYPE)
        tensors[entry["name"]] = flat.reshape(entry["shape"]).astype(np.float64)
    return Checkpoint(kind=header["kind"], tensors=tensors, meta=header.get("meta", {}),
                      format_version=header["format_version"])


# Models

def save_model(model: Union[ClassifierModel, GridModel], path: str):
    head_meta = {"head_type": model.head.head_type.value, "dropout": model.head.dropout}
    tensors = dict(model.all_params())
    if isinstance(model, ClassifierModel):
        meta = dict(head_meta, pooling=model.pooling.value, normalize_embedding=model.normalize_embedding,
                    seed=model.seed, vocabulary=model.vocabulary.to_list())
        write_checkpoint(path, Checkpoint(kind="model:text", tensors=tensors, meta=meta))
    else:
        meta = dict(head_meta, grid_size=model.grid_size, levels=model.levels, seed=model.seed)
        write_checkpoint(path, Checkpoint(kind="model:grid", tensors=tensors, meta=meta))


def load_model(path: str) -> Union[ClassifierModel, GridModel]:
    ckpt = read_checkpoint(path)
    t, meta = ckpt.tensors, ckpt.meta
    try:
        head = OutputHead(t["head_weight"], t["head_bias"], HeadType(meta["head_type"]), meta["dropout"])
        if ckpt.kind == "model:text":
            params = {k: t[k] for k in ("embedding", "attention", "encoder_weight", "encoder_bias")}
            return ClassifierModel(Vocabulary.from_list(meta["vocabulary"]), params, head,
                                   Pooling(meta["pooling"]), bool(meta["normalize_embedding"]), int(meta["seed"]))
        if ckpt.kind == "model:grid":
            return GridModel(int(meta["grid_size"]), t["grid_weight"], t["grid_bias"], head,
                             meta["levels"], int(meta["seed"]))
    except KeyError as e:
        raise CheckpointError(f"{path}: checkpoint is missing {e}")
    raise CheckpointError(f"{path}: '{ckpt.kind}' is not a model checkpoint")
