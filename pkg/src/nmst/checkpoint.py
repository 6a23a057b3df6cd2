"""Self-describing model checkpoints.

Layout: the 8-byte magic ``NMSTCKPT``, a little-endian uint64 header length,
a UTF-8 JSON header, then float32 little-endian tensor payloads in manifest
order.  Header offsets are relative to the start of the payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Vocabulary
from .net.backbone import Architecture, param_shapes
from .net.lm import HeadSpec, RecurrentLM

MAGIC = b"NMSTCKPT"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    """Model parameters are held at float32 precision so that a save/load
    round trip is exact."""

    vocab: Vocabulary
    arch: Architecture
    head: HeadSpec
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = {k: np.asarray(v, dtype=np.float64).astype(DTYPE).astype(np.float64)
                       for k, v in self.params.items()}
        _check_params(self.arch, self.params)

    @classmethod
    def from_model(cls, model: RecurrentLM, metadata: dict | None = None) -> "ModelCheckpoint":
        return cls(model.vocab, model.arch, model.head, model.params, dict(metadata or {}))

    def to_model(self) -> RecurrentLM:
        return RecurrentLM(self.vocab, self.arch, self.head, self.params)

    def header(self) -> dict:
        manifest, offset = [], 0
        for name, shape in param_shapes(self.arch).items():
            nbytes = int(np.prod(shape)) * DTYPE.itemsize
            manifest.append({"name": name, "shape": list(shape), "offset": offset, "nbytes": nbytes})
            offset += nbytes
        return {"format_version": FORMAT_VERSION, "vocabulary": self.vocab.to_dict(),
                "architecture": self.arch.to_dict(), "head": self.head.to_dict(),
                "tensors": manifest, "metadata": self.metadata}

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode("utf-8")
        payload = b"".join(self.params[name].astype(DTYPE).tobytes() for name in param_shapes(self.arch))
        return MAGIC + struct.pack("<Q", len(head)) + head + payload

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelCheckpoint":
        if blob[:8] != MAGIC:
            raise CheckpointError("not a checkpoint (bad magic)")
        if len(blob) < 16:
            raise CheckpointError("truncated checkpoint header length")
        (hlen,) = struct.unpack("<Q", blob[8:16])
        if len(blob) < 16 + hlen:
            raise CheckpointError(f"truncated header: need {hlen} bytes at offset 16, have {len(blob) - 16}")
        try:
            header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable header: {exc}") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format_version {header.get('format_version')!r}, "
                                  f"expected {FORMAT_VERSION}")
        try:
            vocab = Vocabulary.from_dict(header["vocabulary"])
            arch = Architecture(**header["architecture"])
            head = HeadSpec(header["head"]["kind"], header["head"]["epsilon"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"invalid header metadata: {exc}") from None
        if arch.vocab_size != len(vocab):
            raise CheckpointError(f"architecture vocab_size {arch.vocab_size} != vocabulary size {len(vocab)}")
        expected = param_shapes(arch)
        manifest = header.get("tensors", [])
        if [t["name"] for t in manifest] != list(expected):
            raise CheckpointError(f"tensor manifest {[t['name'] for t in manifest]} does not match "
                                  f"architecture {list(expected)}")
        payload = memoryview(blob)[16 + hlen:]
        params, offset = {}, 0
        for t in manifest:
            shape = tuple(expected[t["name"]])
            if tuple(t["shape"]) != shape:
                raise CheckpointError(f"tensor {t['name']} has shape {tuple(t['shape'])}, architecture "
                                      f"requires {shape}")
            nbytes = int(np.prod(shape)) * DTYPE.itemsize
            if t["offset"] != offset or t.get("nbytes", nbytes) != nbytes:
                raise CheckpointError(f"tensor {t['name']} at offset {t['offset']}, expected {offset}")
            if offset + nbytes > len(payload):
                raise CheckpointError(f"truncated payload: tensor {t['name']} needs bytes "
                                      f"[{offset}, {offset + nbytes}) but payload ends at {len(payload)}")
            params[t["name"]] = np.frombuffer(payload[offset:offset + nbytes], DTYPE).reshape(shape).astype(np.float64)
            offset += nbytes
        if offset != len(payload):
            raise CheckpointError(f"{len(payload) - offset} trailing bytes after payload offset {offset}")
        return cls(vocab, arch, head, params, header.get("metadata", {}))

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _check_params(arch: Architecture, params: dict[str, np.ndarray]) -> None:
    expected = param_shapes(arch)
    if set(params) != set(expected):
        raise CheckpointError(f"parameter names {sorted(params)} do not match {sorted(expected)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(f"{name} has shape {params[name].shape}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise CheckpointError(f"{name} has non-finite entries")


def save_checkpoint(model_or_ckpt, path: str | Path, metadata: dict | None = None) -> ModelCheckpoint:
    ckpt = model_or_ckpt if isinstance(model_or_ckpt, ModelCheckpoint) else \
        ModelCheckpoint.from_model(model_or_ckpt, metadata)
    ckpt.save(path)
    return ckpt


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    return ModelCheckpoint.load(path)
