"""Named parameter store, Adam updates, and the checkpoint container.

Checkpoint layout: 8-byte magic, u64-LE JSON header length, UTF-8 JSON
header listing tensors (name, shape, dtype) in payload order, then raw
little-endian float64 payloads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor

CHECKPOINT_MAGIC = b"INKPROP1"


def he_uniform(rng, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Uniquely named learnable tensors plus their Adam moment buffers."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step_count: int = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params.keys())

    def n_values(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self.params.items():
            out.add(name, p.data.copy())
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.step_count = self.step_count
        return out


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray] | None = None,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """Standard Adam with bias correction, no weight decay. ``grads``
    defaults to the gradients accumulated on the stored tensors."""
    store.step_count += 1
    t = store.step_count
    for name, p in store.params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"gradient shape mismatch for {name!r}")
        m = store.adam_m.setdefault(name, np.zeros_like(p.data))
        v = store.adam_v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return store


def save_params(store: ParamStore, path: str | Path, meta: dict | None = None) -> None:
    entries = []
    payloads = []
    for name, p in store.params.items():
        entries.append({"name": name, "shape": list(p.data.shape), "dtype": "f8"})
        payloads.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    for prefix, table in (("adam_m/", store.adam_m), ("adam_v/", store.adam_v)):
        for name, arr in table.items():
            entries.append(
                {"name": prefix + name, "shape": list(arr.shape), "dtype": "f8"}
            )
            payloads.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = json.dumps(
        {"tensors": entries, "step": store.step_count, "meta": meta or {}}
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_params(path: str | Path) -> tuple[ParamStore, dict]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an inkprop checkpoint")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + hlen].decode())
    store = ParamStore()
    offset = 16 + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = (
            np.frombuffer(data, dtype="<f8", count=n, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += n * 8
        name = entry["name"]
        if name.startswith("adam_m/"):
            store.adam_m[name[7:]] = arr.copy()
        elif name.startswith("adam_v/"):
            store.adam_v[name[7:]] = arr.copy()
        else:
            store.add(name, arr)
    store.step_count = header.get("step", 0)
    return store, header.get("meta", {})
