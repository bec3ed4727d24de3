"""
Checkpoint Files

Layout:
    DEXTERLAB-CHECKPOINT\n
    <header byte length>\n
    <JSON header, sorted keys>
    <float32 little-endian tensor payload>

The header carries everything that is not a tensor (config, counters,
curriculum and sampler state, RNG states, per-env snapshots, Adam step
counts) plus a manifest of (name, shape, offset) for the payload. Encoding
a decoded checkpoint reproduces the original bytes.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
import torch

from .errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"DEXTERLAB-CHECKPOINT"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")

# Header fields in the order they are checked on load
HEADER_FIELDS = (
    "format_version",
    "config",
    "timestep",
    "n_updates",
    "curriculum",
    "sampler",
    "rng",
    "workers",
    "optimizer_steps",
    "tensors",
)

ADAM_MOMENTS = ("exp_avg", "exp_avg_sq")


@dataclass
class Checkpoint:
    """Complete training state at an update boundary."""

    config: dict[str, Any]
    timestep: int
    n_updates: int
    curriculum: dict[str, Any]
    sampler: dict[str, Any]
    rng: dict[str, Any]
    workers: list[dict[str, Any]]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_steps: list[float] = field(default_factory=list)
    format_version: int = FORMAT_VERSION


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, array in ckpt.tensors.items():
        data = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes()
        manifest.append({"name": name, "shape": list(np.shape(array)), "offset": offset})
        chunks.append(data)
        offset += len(data)

    header = {
        "format_version": ckpt.format_version,
        "config": ckpt.config,
        "timestep": ckpt.timestep,
        "n_updates": ckpt.n_updates,
        "curriculum": ckpt.curriculum,
        "sampler": ckpt.sampler,
        "rng": ckpt.rng,
        "workers": ckpt.workers,
        "optimizer_steps": ckpt.optimizer_steps,
        "tensors": manifest,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True, indent=1).encode("utf-8")
    return MAGIC + b"\n" + str(len(header_bytes)).encode("ascii") + b"\n" + header_bytes + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    """
    Parse checkpoint bytes.

    Raises:
        CheckpointError: Naming the first field that is missing or inconsistent.
    """
    first = blob.find(b"\n")
    if first < 0 or blob[:first] != MAGIC:
        raise CheckpointError("not a dexterlab checkpoint (bad magic line)", field="magic")
    second = blob.find(b"\n", first + 1)
    try:
        if second < 0:
            raise ValueError
        header_len = int(blob[first + 1:second].decode("ascii"))
    except ValueError:
        raise CheckpointError("missing or malformed header length", field="header_length") from None

    start = second + 1
    if len(blob) < start + header_len:
        raise CheckpointError("file truncated inside the header", field="header")
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"header is not valid JSON: {e}", field="header") from e

    for name in HEADER_FIELDS:
        if name not in header:
            raise CheckpointError(f"header is missing '{name}'", field=name)
    if header["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported format_version {header['format_version']} (expected {FORMAT_VERSION})",
            field="format_version",
        )

    payload = blob[start + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name = entry["name"]
        shape = tuple(int(d) for d in entry["shape"])
        offset = int(entry["offset"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * PAYLOAD_DTYPE.itemsize
        if offset + nbytes > len(payload):
            raise CheckpointError(f"payload truncated in tensor '{name}'", field=f"tensors.{name}")
        tensors[name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=nbytes // PAYLOAD_DTYPE.itemsize,
                                      offset=offset).reshape(shape).copy()

    return Checkpoint(
        config=header["config"],
        timestep=int(header["timestep"]),
        n_updates=int(header["n_updates"]),
        curriculum=header["curriculum"],
        sampler=header["sampler"],
        rng=header["rng"],
        workers=header["workers"],
        tensors=tensors,
        optimizer_steps=list(header["optimizer_steps"]),
        format_version=int(header["format_version"]),
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    os.replace(tmp, path)
    logger.debug("checkpoint written: %s (t=%d)", path, ckpt.timestep)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}", field="path")
    return decode_checkpoint(path.read_bytes())


def capture_tensors(model: torch.nn.Module, optimizer: torch.optim.Optimizer) -> tuple[dict[str, np.ndarray], list[float]]:
    """Model parameters and Adam moments as float32 arrays, plus Adam step counts."""
    tensors = {name: t.detach().cpu().numpy().astype(PAYLOAD_DTYPE) for name, t in model.state_dict().items()}
    steps: list[float] = []
    state = optimizer.state_dict()["state"]
    for index in sorted(state):
        for moment in ADAM_MOMENTS:
            tensors[f"optimizer.{index}.{moment}"] = state[index][moment].detach().cpu().numpy().astype(PAYLOAD_DTYPE)
        steps.append(float(state[index]["step"]))
    return tensors, steps


def restore_tensors(model: torch.nn.Module, optimizer: torch.optim.Optimizer, ckpt: Checkpoint) -> None:
    """
    Load parameters and Adam state into freshly built objects.

    Raises:
        CheckpointError: On a missing tensor or a shape that differs from the model.
    """
    own = model.state_dict()
    restored = {}
    for name, current in own.items():
        if name not in ckpt.tensors:
            raise CheckpointError(f"checkpoint has no tensor '{name}'", field=f"tensors.{name}")
        stored = ckpt.tensors[name]
        if tuple(stored.shape) != tuple(current.shape):
            raise CheckpointError(
                f"shape mismatch for '{name}': checkpoint {tuple(stored.shape)} vs model {tuple(current.shape)}",
                field=f"tensors.{name}",
            )
        restored[name] = torch.as_tensor(stored.copy(), dtype=current.dtype)
    model.load_state_dict(restored)

    if not ckpt.optimizer_steps:
        return
    opt_state = optimizer.state_dict()
    params = list(model.parameters())
    state = {}
    for index, step in enumerate(ckpt.optimizer_steps):
        entry: dict[str, torch.Tensor] = {"step": torch.tensor(step)}
        for moment in ADAM_MOMENTS:
            name = f"optimizer.{index}.{moment}"
            if name not in ckpt.tensors:
                raise CheckpointError(f"checkpoint has no tensor '{name}'", field=f"tensors.{name}")
            stored = ckpt.tensors[name]
            if tuple(stored.shape) != tuple(params[index].shape):
                raise CheckpointError(f"shape mismatch for '{name}'", field=f"tensors.{name}")
            entry[moment] = torch.as_tensor(stored.copy(), dtype=params[index].dtype)
        state[index] = entry
    optimizer.load_state_dict({"state": state, "param_groups": opt_state["param_groups"]})
