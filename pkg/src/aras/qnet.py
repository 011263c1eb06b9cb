"""Multihead Q-network and its on-disk checkpoint format.

The image head runs two conv/batch-norm/ReLU/max-pool blocks over every
stacked frame with shared weights; the input head embeds each tick's
user signal; the fused features pass through one hidden fully-connected
layer to the 7 action values.

Checkpoints are a small binary container: magic ``ARAS1``, a JSON header
echoing the architecture and caller metadata, then named float32
little-endian weight sections with shape prefixes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NumericalFault
from .nn import (Adam, BatchNorm2d, Embedding, Linear, MaxPool2x2, Param,
                 ReLU, SparseConv2d, Conv2d)

MAGIC = b"ARAS1"
N_ACTIONS = 7


@dataclass(frozen=True, slots=True)
class NetSpec:
    grid_size: int = 16
    stack_size: int = 4
    in_channels: int = 2
    n_actions: int = N_ACTIONS
    conv_channels: tuple[int, int] = (8, 16)
    kernel: int = 3
    embed_dim: int = 8
    fc_hidden: int = 128

    def feature_dim(self) -> int:
        side = self.grid_size // 4
        return self.stack_size * (self.conv_channels[1] * side * side + self.embed_dim)

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "stack_size": self.stack_size,
            "in_channels": self.in_channels,
            "n_actions": self.n_actions,
            "conv_channels": list(self.conv_channels),
            "kernel": self.kernel,
            "embed_dim": self.embed_dim,
            "fc_hidden": self.fc_hidden,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetSpec":
        return NetSpec(
            grid_size=d["grid_size"],
            stack_size=d["stack_size"],
            in_channels=d["in_channels"],
            n_actions=d["n_actions"],
            conv_channels=tuple(d["conv_channels"]),
            kernel=d["kernel"],
            embed_dim=d["embed_dim"],
            fc_hidden=d["fc_hidden"],
        )


class QNetwork:
    def __init__(self, spec: NetSpec, rng: np.random.Generator, dtype=np.float32):
        if spec.grid_size % 4 != 0:
            raise CheckpointError("grid_size must be divisible by 4 for the two pooling stages")
        self.spec = spec
        self.dtype = dtype
        c1, c2 = spec.conv_channels
        # frames are near-one-hot, and a first layer needs no input gradient
        self.conv1 = SparseConv2d("conv1", spec.in_channels, c1, spec.kernel,
                                  rng, dtype, input_grad=False)
        self.bn1 = BatchNorm2d("bn1", c1, dtype)
        self.relu1 = ReLU()
        self.pool1 = MaxPool2x2()
        self.conv2 = Conv2d("conv2", c1, c2, spec.kernel, rng, dtype)
        self.bn2 = BatchNorm2d("bn2", c2, dtype)
        self.relu2 = ReLU()
        self.pool2 = MaxPool2x2()
        self.embed = Embedding("embed", 3, spec.embed_dim, rng, dtype)
        self.fc1 = Linear("fc1", spec.feature_dim(), spec.fc_hidden, rng, dtype)
        self.relu3 = ReLU()
        self.fc2 = Linear("fc2", spec.fc_hidden, spec.n_actions, rng, dtype)
        self._batch: int = 0

    def params(self) -> list[Param]:
        out: list[Param] = []
        for layer in (self.conv1, self.bn1, self.conv2, self.bn2,
                      self.embed, self.fc1, self.fc2):
            out.extend(layer.params())
        return out

    def bn_state(self) -> dict[str, np.ndarray]:
        d: dict[str, np.ndarray] = {}
        d.update(self.bn1.state())
        d.update(self.bn2.state())
        return d

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params()))

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def forward(self, frames: np.ndarray, inputs: np.ndarray, train: bool = False) -> np.ndarray:
        """frames: (B, k, C, G, G); inputs: (B, k) ints in {-1, 0, 1} -> (B, n_actions)."""
        spec = self.spec
        b, k = frames.shape[0], frames.shape[1]
        self._batch, self._k = b, k
        x = frames.reshape(b * k, spec.in_channels, spec.grid_size, spec.grid_size)
        x = np.ascontiguousarray(x, dtype=self.dtype)
        h = self.pool1.forward(self.relu1.forward(self.bn1.forward(self.conv1.forward(x), train)))
        h = self.pool2.forward(self.relu2.forward(self.bn2.forward(self.conv2.forward(h), train)))
        img = h.reshape(b, -1)
        emb = self.embed.forward(np.asarray(inputs) + 1).reshape(b, -1)
        self._split = img.shape[1]
        z = np.concatenate([img, emb], axis=1)
        q = self.fc2.forward(self.relu3.forward(self.fc1.forward(z)))
        if not np.isfinite(q).all():
            raise NumericalFault(
                f"non-finite Q-values (min={np.nanmin(q)}, max={np.nanmax(q)})"
            )
        return q

    def backward(self, dq: np.ndarray) -> None:
        """Accumulate parameter gradients for the most recent forward pass."""
        spec = self.spec
        b, k = self._batch, self._k
        dz = self.fc1.backward(self.relu3.backward(self.fc2.backward(dq)))
        dimg, demb = dz[:, :self._split], dz[:, self._split:]
        self.embed.backward(demb.reshape(b, k, spec.embed_dim))
        side = spec.grid_size // 4
        dh = dimg.reshape(b * k, spec.conv_channels[1], side, side)
        dh = self.conv2.backward(self.bn2.backward(self.relu2.backward(self.pool2.backward(dh))))
        self.conv1.backward(self.bn1.backward(self.relu1.backward(self.pool1.backward(dh))))

    def copy(self) -> "QNetwork":
        clone = QNetwork(self.spec, np.random.default_rng(0), self.dtype)
        clone.sync_from(self)
        return clone

    def sync_from(self, other: "QNetwork") -> None:
        for mine, theirs in zip(self.params(), other.params()):
            mine.data[...] = theirs.data
        self.bn1.running_mean[...] = other.bn1.running_mean
        self.bn1.running_var[...] = other.bn1.running_var
        self.bn2.running_mean[...] = other.bn2.running_mean
        self.bn2.running_var[...] = other.bn2.running_var

    def sections(self) -> list[tuple[str, np.ndarray]]:
        out = [(p.name, p.data) for p in self.params()]
        out.extend(sorted(self.bn_state().items()))
        return out


def save_checkpoint(path: str, net: QNetwork, meta: dict | None = None) -> None:
    header = json.dumps(
        {"schema_version": 1, "arch": net.spec.to_dict(), "meta": meta or {}},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        sections = net.sections()
        fh.write(struct.pack("<I", len(sections)))
        for name, arr in sections:
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str, dtype=np.float32) -> tuple[QNetwork, dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path!r}: {exc}") from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path!r} is not a checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    header = json.loads(blob[off:off + hlen].decode())
    off += hlen
    spec = NetSpec.from_dict(header["arch"])
    net = QNetwork(spec, np.random.default_rng(0), dtype)
    wanted = dict(net.sections())
    (n_sections,) = struct.unpack_from("<I", blob, off)
    off += 4
    seen = set()
    for _ in range(n_sections):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        if name not in wanted:
            raise CheckpointError(f"unknown weight section {name!r}")
        if wanted[name].shape != data.shape:
            raise CheckpointError(
                f"section {name!r} has shape {data.shape}, expected {wanted[name].shape}"
            )
        wanted[name][...] = data.astype(dtype)
        seen.add(name)
    missing = set(wanted) - seen
    if missing:
        raise CheckpointError(f"checkpoint is missing sections: {sorted(missing)}")
    meta = dict(header.get("meta", {}))
    meta["param_count"] = net.param_count()
    return net, meta


def make_adam(net: QNetwork, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Adam:
    return Adam(net.params(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)
