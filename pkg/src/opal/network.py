"""Dense encoder with two heads, Kaiming init, and checkpoint blobs.

The encoder is a stack of fully connected ReLU layers; on top sit a linear
contrastive head (low-dimensional space where pair distances are taken)
and a linear classifier head (logits). Both cooperating networks in a run
share this architecture and differ only in their init seed.

Checkpoint blob layout (little-endian): magic ``OPALNET`` + u16 version,
length-prefixed architecture JSON, named row-major float32 tensors, then
optimizer scalars as JSON plus velocity tensors. Loading verifies the
architecture against the caller's expectation and rejects mismatches.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .optim import OptimizerState

__all__ = [
    "Arch",
    "NetworkParams",
    "ArchMismatchError",
    "init_params",
    "make_leaves",
    "encode_var",
    "project_contrastive_var",
    "classify_var",
    "encode",
    "project_contrastive",
    "classify",
    "save_network",
    "load_network",
]

NET_MAGIC = b"OPALNET"
NET_VERSION = 1


class ArchMismatchError(ValueError):
    """Checkpoint architecture differs from what the caller expects."""


@dataclass(frozen=True)
class Arch:
    input_dim: int
    num_classes: int
    encoder_dims: tuple = (256, 64)
    contrastive_dim: int = 32

    def __post_init__(self):
        object.__setattr__(self, "encoder_dims", tuple(int(v) for v in self.encoder_dims))
        if self.input_dim < 1 or self.num_classes < 2 or self.contrastive_dim < 1:
            raise ValueError("bad architecture sizes")

    @property
    def latent_dim(self):
        return self.encoder_dims[-1] if self.encoder_dims else self.input_dim

    def to_dict(self):
        d = asdict(self)
        d["encoder_dims"] = list(self.encoder_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            encoder_dims=tuple(d["encoder_dims"]),
            contrastive_dim=int(d["contrastive_dim"]),
        )


@dataclass
class NetworkParams:
    arch: Arch
    tensors: dict

    def copy(self):
        return NetworkParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def param_count(self):
        return sum(int(v.size) for v in self.tensors.values())


def _layer_sizes(arch):
    dims = [arch.input_dim] + list(arch.encoder_dims)
    enc = [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]
    return enc, (arch.latent_dim, arch.contrastive_dim), (arch.latent_dim, arch.num_classes)


def init_params(arch, seed, dtype=np.float32):
    """He-initialized weights, W ~ N(0, sqrt(2/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    enc, con, cls = _layer_sizes(arch)
    tensors = {}
    for i, (fan_in, fan_out) in enumerate(enc):
        tensors[f"enc{i}.W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)).astype(dtype)
        tensors[f"enc{i}.b"] = np.zeros(fan_out, dtype=dtype)
    for name, (fan_in, fan_out) in (("con", con), ("cls", cls)):
        tensors[f"{name}.W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)).astype(dtype)
        tensors[f"{name}.b"] = np.zeros(fan_out, dtype=dtype)
    return NetworkParams(arch, tensors)


def make_leaves(params):
    """Wrap every parameter tensor in a graph leaf; grads land on these."""
    return {name: ad.Var(t) for name, t in params.tensors.items()}


def encode_var(leaves, arch, X):
    h = ad.as_var(np.asarray(X))
    for i in range(len(arch.encoder_dims)):
        h = ad.relu(ad.add(ad.matmul(h, leaves[f"enc{i}.W"]), leaves[f"enc{i}.b"]))
    return h


def project_contrastive_var(leaves, arch, X):
    h = encode_var(leaves, arch, X)
    return ad.add(ad.matmul(h, leaves["con.W"]), leaves["con.b"])


def classify_var(leaves, arch, X):
    h = encode_var(leaves, arch, X)
    return ad.add(ad.matmul(h, leaves["cls.W"]), leaves["cls.b"])


def _encode_np(params, X):
    h = np.asarray(X, dtype=params.tensors["con.W"].dtype if params.tensors else np.float32)
    for i in range(len(params.arch.encoder_dims)):
        h = np.maximum(h @ params.tensors[f"enc{i}.W"] + params.tensors[f"enc{i}.b"], 0)
    return h


def encode(params, X):
    """Latent representations for a batch; rows are independent."""
    return _encode_np(params, X)


def project_contrastive(params, X):
    h = _encode_np(params, X)
    return h @ params.tensors["con.W"] + params.tensors["con.b"]


def classify(params, X):
    """Raw logits; softmax lives inside the losses and the ensemble vote."""
    h = _encode_np(params, X)
    return h @ params.tensors["cls.W"] + params.tensors["cls.b"]


def _write_tensors(buf, tensors):
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        t = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", t.ndim))
        for dim in t.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(t.tobytes())


def _read_tensors(view, offset):
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset : offset + nlen]).decode("utf-8")
        offset += nlen
        (ndim,) = struct.unpack_from("<B", view, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", view, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(view, dtype="<f4", count=size, offset=offset).reshape(shape).copy()
        offset += 4 * size
        tensors[name] = arr
    return tensors, offset


def save_network(params, opt_state, path_or_buf):
    """Serialize one network plus its optimizer state as a versioned blob."""
    buf = io.BytesIO()
    buf.write(NET_MAGIC)
    buf.write(struct.pack("<H", NET_VERSION))
    arch_json = json.dumps(params.arch.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(arch_json)))
    buf.write(arch_json)
    _write_tensors(buf, params.tensors)
    opt_json = json.dumps(
        {
            "lr0": opt_state.lr0,
            "total_steps": opt_state.total_steps,
            "t": opt_state.t,
            "momentum": opt_state.momentum,
            "weight_decay": opt_state.weight_decay,
            "nesterov": opt_state.nesterov,
        }
    ).encode("utf-8")
    buf.write(struct.pack("<I", len(opt_json)))
    buf.write(opt_json)
    _write_tensors(buf, opt_state.velocity)
    blob = buf.getvalue()
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        with open(path_or_buf, "wb") as fh:
            fh.write(blob)
    else:
        path_or_buf.write(blob)
    return blob


def load_network(source, expected_arch=None):
    """Read a network blob; raises ArchMismatchError on a different arch."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        blob = bytes(source)
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    if blob[: len(NET_MAGIC)] != NET_MAGIC:
        raise ValueError("not a network checkpoint blob")
    offset = len(NET_MAGIC)
    (version,) = struct.unpack_from("<H", blob, offset)
    offset += 2
    if version != NET_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (alen,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    arch = Arch.from_dict(json.loads(blob[offset : offset + alen].decode("utf-8")))
    offset += alen
    if expected_arch is not None and arch != expected_arch:
        raise ArchMismatchError(f"checkpoint arch {arch} does not match expected {expected_arch}")
    tensors, offset = _read_tensors(blob, offset)
    (olen,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    opt_raw = json.loads(blob[offset : offset + olen].decode("utf-8"))
    offset += olen
    velocity, offset = _read_tensors(blob, offset)
    opt = OptimizerState(
        lr0=float(opt_raw["lr0"]),
        total_steps=int(opt_raw["total_steps"]),
        t=int(opt_raw["t"]),
        momentum=float(opt_raw["momentum"]),
        weight_decay=float(opt_raw["weight_decay"]),
        nesterov=bool(opt_raw["nesterov"]),
        velocity=velocity,
    )
    return NetworkParams(arch, tensors), opt
