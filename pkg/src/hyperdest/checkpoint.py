"""Self-describing binary checkpoint.

Layout (little endian)::

    b"HYPERDST"            8-byte magic
    uint32                 format version
    uint64                 header length H
    H bytes                UTF-8 JSON header (config echo, reference digest,
                           vocabularies, optimiser step, tensor index)
    tensor blocks          raw C-order array bytes, in index order
    32 bytes               SHA-256 of everything above

The header's ``tensors`` list gives ``name``, ``dtype``, ``shape``,
``offset`` (from the start of the block area) and ``nbytes`` per block.
Model parameters are named as in :meth:`DestinationModel.named_parameters`;
optimiser moments are ``adam.m/<name>`` and ``adam.v/<name>``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .encode import MetadataEncoder, ReferenceSet
from .model import DestinationModel, ModelSpec

MAGIC = b"HYPERDST"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: dict
    encoder: dict
    refs_digest: str
    tensors: dict  # name -> ndarray
    optimizer_step: int = 0
    config: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: DestinationModel, optimizer=None, config: Optional[dict] = None
                   ) -> "Checkpoint":
        tensors = {name: p.data.copy() for name, p in model.named_parameters().items()}
        step = 0
        if optimizer is not None:
            step = optimizer.t
            for p, m, v in zip(optimizer.params, optimizer.m, optimizer.v):
                tensors[f"adam.m/{p.name}"] = m.copy()
                tensors[f"adam.v/{p.name}"] = v.copy()
        return cls(model.spec.to_dict(), model.encoder.to_dict(), model.refs.digest(),
                   tensors, step, dict(config or {}))

    def to_model(self, refs: ReferenceSet) -> DestinationModel:
        if refs.digest() != self.refs_digest:
            raise CheckpointError("reference set digest does not match the checkpoint "
                                  f"({refs.digest()[:12]} != {self.refs_digest[:12]})")
        spec = ModelSpec(**self.spec)
        model = DestinationModel(spec, refs, MetadataEncoder.from_dict(self.encoder))
        for name, p in model.named_parameters().items():
            if name not in self.tensors:
                raise CheckpointError(f"checkpoint lacks tensor {name!r}")
            arr = self.tensors[name]
            if arr.shape != p.shape:
                raise CheckpointError(f"tensor {name!r}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)
            p.zero_grad()
        return model

    def restore_optimizer(self, optimizer) -> None:
        optimizer.t = self.optimizer_step
        for i, p in enumerate(optimizer.params):
            optimizer.m[i] = self.tensors[f"adam.m/{p.name}"].copy()
            optimizer.v[i] = self.tensors[f"adam.v/{p.name}"].copy()

    # -- serialisation --------------------------------------------------
    def to_bytes(self) -> bytes:
        index, blocks, offset = [], [], 0
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name])
            raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
            index.append({"name": name, "dtype": arr.dtype.str.lstrip("<>|="),
                          "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            blocks.append(raw)
            offset += len(raw)
        header = json.dumps({
            "spec": self.spec, "encoder": self.encoder, "refs_digest": self.refs_digest,
            "optimizer_step": self.optimizer_step, "config": self.config, "tensors": index,
        }, sort_keys=True).encode()
        body = MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(blocks)
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        if len(buf) < len(MAGIC) + 12 + 32 or buf[:len(MAGIC)] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic or too short)")
        body, digest = buf[:-32], buf[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise CheckpointError("checkpoint is truncated or corrupted (checksum mismatch)")
        version, hlen = struct.unpack_from("<IQ", body, len(MAGIC))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        start = len(MAGIC) + 12
        try:
            header = json.loads(body[start:start + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
        data = body[start + hlen:]
        tensors = {}
        for entry in header["tensors"]:
            lo, n = entry["offset"], entry["nbytes"]
            if lo + n > len(data):
                raise CheckpointError(f"tensor block {entry['name']!r} runs past end of file")
            dtype = np.dtype(entry["dtype"]).newbyteorder("<")
            arr = np.frombuffer(data[lo:lo + n], dtype=dtype).reshape(entry["shape"])
            tensors[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
        return cls(header["spec"], header["encoder"], header["refs_digest"], tensors,
                   header["optimizer_step"], header.get("config", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def save_checkpoint(path, model: DestinationModel, optimizer=None, config: Optional[dict] = None):
    ckpt = Checkpoint.from_model(model, optimizer, config)
    ckpt.save(path)
    return ckpt


def load_model(path, refs: ReferenceSet) -> DestinationModel:
    return Checkpoint.load(path).to_model(refs)
