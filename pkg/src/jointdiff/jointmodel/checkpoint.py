"""Checkpoint container.

Layout: magic ``JDCKPT``, uint32 format version, uint32 header length, UTF-8
JSON header (model config, epoch, optimizer step, loss history, extras), then
uint32 tensor count and the named tensors (model parameters followed by Adam
moments) in the shared tensor encoding.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import FormatError, IncompatibleVersionError
from ..numerics import Adam
from ..serialization import read_tensors, read_u32, write_tensors, write_u32
from .config import ModelConfig
from .model import JointModel

CHECKPOINT_MAGIC = b"JDCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: JointModel, optimizer: Adam | None = None, epoch: int = 0,
                    history=None, extra: dict | None = None) -> None:
    """Write atomically: a crash mid-write leaves the previous file intact."""
    path = Path(path)
    header = {
        "config": model.config.to_dict(),
        "epoch": int(epoch),
        "adam_step": optimizer.step_count if optimizer else 0,
        "has_optimizer": optimizer is not None,
        "history": [float(x) for x in (history or [])],
        "extra": extra or {},
    }
    tensors = [(name, p.data) for name, p in model.named_parameters().items()]
    if optimizer is not None:
        tensors += list(optimizer.state_arrays().items())
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        write_u32(fh, CHECKPOINT_VERSION)
        write_u32(fh, len(raw))
        fh.write(raw)
        write_tensors(fh, tensors)
    os.replace(tmp, path)


class Checkpoint:
    def __init__(self, model: JointModel, header: dict, optimizer: Adam | None):
        self.model = model
        self.header = header
        self.optimizer = optimizer

    @property
    def epoch(self) -> int:
        return self.header["epoch"]

    @property
    def history(self) -> list[float]:
        return self.header["history"]


def read_checkpoint_raw(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        version = read_u32(fh)
        if version != CHECKPOINT_VERSION:
            raise IncompatibleVersionError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        raw = fh.read(read_u32(fh))
        header = json.loads(raw.decode("utf-8"))
        tensors = read_tensors(fh)
    return header, tensors


def load_checkpoint(path, lr: float = 1e-4) -> Checkpoint:
    header, tensors = read_checkpoint_raw(path)
    model = JointModel(ModelConfig.from_dict(header["config"]))
    params = model.named_parameters()
    missing = [n for n in params if n not in tensors]
    if missing:
        raise FormatError(f"{path}: checkpoint lacks parameters {missing[:3]}...")
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            raise FormatError(f"{path}: parameter {name} has shape {tensors[name].shape}, expected {p.shape}")
        p.data = tensors[name].copy()
    opt = None
    if header.get("has_optimizer"):
        opt = Adam(params, lr=lr)
        opt.load_state_arrays(tensors, header["adam_step"])
    return Checkpoint(model, header, opt)
