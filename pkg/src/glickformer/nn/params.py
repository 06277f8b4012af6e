from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Iterable

import numpy as np


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class Parameter:
    """A named float64 array with a gradient buffer of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class RngState:
    """Seed-derived generators, one independent stream per name.

    >>> a = RngState(7).stream("init").random()
    >>> a == RngState(7).stream("init").random()
    True
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        key = zlib.crc32(name.encode("utf-8"))
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
        return np.random.Generator(np.random.PCG64(ss))


def glorot_bound(shape) -> float:
    fan_in, fan_out = shape[0], shape[-1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_parameter(name: str, shape, scheme: str, rng: np.random.Generator | None = None) -> Parameter:
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return Parameter(name, np.zeros(shape))
    if scheme == "uniform-glorot":
        if rng is None:
            raise ValueError("glorot init needs a generator")
        b = glorot_bound(shape)
        return Parameter(name, rng.uniform(-b, b, size=shape))
    if scheme == "ones":
        return Parameter(name, np.ones(shape))
    raise ValueError(f"unknown init scheme {scheme!r}")


def unique_parameters(params: Iterable[Parameter]) -> list:
    """Deduplicate by identity (shared weights appear once), keep order."""
    seen, out = set(), []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    names = [p.name for p in out]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate parameter names: {dup}")
    return out


# -- checkpoint format ----------------------------------------------------------
#
# little endian
#   header    : b"GLKW" | version u32 | count u32
#   parameter : name_len u16 | name utf-8 | rank u8 | dims u32 * rank | f64 * prod(dims)

CKPT_MAGIC = b"GLKW"
CKPT_VERSION = 1


def save_parameters(path, params: Iterable[Parameter]) -> None:
    params = list(params)
    chunks = [struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(params))]
    for p in params:
        name = p.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", p.value.ndim))
        chunks.append(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        chunks.append(p.value.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_parameters(path) -> dict:
    data = Path(path).read_bytes()
    magic, version, count = struct.unpack_from("<4sII", data)
    if magic != CKPT_MAGIC:
        raise ValueError(f"{path}: not a GLKW checkpoint")
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(dims).astype(np.float64)
        off += 8 * n
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes after {count} parameters")
    return out
