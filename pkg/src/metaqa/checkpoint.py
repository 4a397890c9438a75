"""Single-file checkpoints: one JSON header line, then raw float64 payload.

The header names every tensor with its shape in payload order; the payload is
the concatenation of the tensors as little-endian IEEE-754 doubles.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocab
from .encoder import EncoderConfig
from .errors import CheckpointError
from .model import MetaQAModel
from .tensor import Tensor

VERSION = "metaqa-ckpt/1"
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: EncoderConfig
    agents: tuple[str, ...]
    agent_domains: dict[str, str]
    vocab: tuple[str, ...]
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    disable_conf_emb: bool = False

    @classmethod
    def from_model(cls, model: MetaQAModel, metadata: dict | None = None) -> "Checkpoint":
        return cls(
            model.config,
            model.agents,
            dict(model.agent_domains),
            model.vocab.tokens,
            {n: p.data.copy() for n, p in model.params.items()},
            dict(metadata or {}),
            model.disable_conf_emb,
        )

    def to_model(self) -> MetaQAModel:
        params = {n: Tensor(a.copy(), requires_grad=True) for n, a in self.params.items()}
        return MetaQAModel(
            self.config, self.agents, dict(self.agent_domains), Vocab(self.vocab),
            params, self.disable_conf_emb,
        )

    def header(self) -> dict:
        return {
            "format": VERSION,
            "config": self.config.to_dict(),
            "agents": list(self.agents),
            "agent_domains": self.agent_domains,
            "vocab": list(self.vocab),
            "disable_conf_emb": self.disable_conf_emb,
            "metadata": self.metadata,
            "manifest": [[n, list(a.shape)] for n, a in self.params.items()],
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        payload = b"".join(np.ascontiguousarray(a, dtype=_LE_F64).tobytes() for a in self.params.values())
        return head + b"\n" + payload

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<checkpoint>") -> "Checkpoint":
        nl = blob.find(b"\n")
        if nl < 0:
            raise CheckpointError(f"{source}: missing header line")
        try:
            head = json.loads(blob[:nl].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{source}: unreadable header ({exc})") from None
        if not isinstance(head, dict) or head.get("format") != VERSION:
            found = head.get("format") if isinstance(head, dict) else None
            raise CheckpointError(f"{source}: version {found!r}, expected {VERSION!r}")
        payload = blob[nl + 1:]
        try:
            manifest = [(str(n), tuple(int(s) for s in shape)) for n, shape in head["manifest"]]
            config = EncoderConfig(**head["config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{source}: bad header ({exc})") from None
        need = sum(int(np.prod(shape)) for _, shape in manifest) * 8
        if len(payload) != need:
            raise CheckpointError(f"{source}: payload is {len(payload)} bytes, manifest needs {need}")
        params: dict[str, np.ndarray] = {}
        off = 0
        for name, shape in manifest:
            n = int(np.prod(shape))
            params[name] = np.frombuffer(payload, dtype=_LE_F64, count=n, offset=off).astype(np.float64).reshape(shape)
            off += n * 8
        return cls(
            config,
            tuple(head["agents"]),
            dict(head["agent_domains"]),
            tuple(head["vocab"]),
            params,
            dict(head.get("metadata", {})),
            bool(head.get("disable_conf_emb", False)),
        )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return Checkpoint.from_bytes(blob, source=str(path))
