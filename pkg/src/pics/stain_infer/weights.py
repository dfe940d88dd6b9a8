"""Named-tensor weight store and the PICSW1 container format.

PICSW1 byte layout (little endian):

    magic b"PICSW1"
    u32 record count
    per record:
        u16 name length, then that many UTF-8 bytes
        u8 rank, then rank u32 dims
        prod(dims) f32 values

Records keep their order; loading a file and saving it again reproduces
the bytes exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .network import NetSpec

PICSW1_MAGIC = b"PICSW1"

MAX_RANK = 8
MAX_RECORD_ELEMENTS = 1 << 28

DEFAULT_BN_EPS = 1e-5


class WeightsFormatError(ValueError):
    """A PICSW1 stream violates the format."""


@dataclass
class WeightStore:
    """Ordered mapping of record name to float32 tensor."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[str, np.ndarray] = {}
        for name, arr in self.tensors.items():
            a = np.asarray(arr, dtype=np.float32)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"record {name!r} holds non-finite values")
            if a.ndim > MAX_RANK:
                raise ValueError(f"record {name!r} rank {a.ndim} > {MAX_RANK}")
            clean[name] = a
        self.tensors = clean

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def total_floats(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


def validate_weights(spec: NetSpec, store: WeightStore) -> None:
    """Exact inventory check: every architecture record present with the
    right shape, nothing extra, norm statistics legal."""
    expected = spec.expected_records()
    missing = [n for n in expected if n not in store]
    extra = [n for n in store.names() if n not in expected]
    if missing or extra:
        raise ValueError(
            f"weight inventory mismatch: missing {missing[:4]}"
            f"{'...' if len(missing) > 4 else ''}, unexpected {extra[:4]}"
            f"{'...' if len(extra) > 4 else ''}"
        )
    for name, shape in expected.items():
        got = store[name].shape
        if got != shape:
            raise ValueError(f"record {name!r} has shape {got}, want {shape}")
    for name in expected:
        leaf = name.rsplit(".", 1)[1]
        if leaf == "var" and store[name].min() < 0:
            raise ValueError(f"record {name!r}: running variance must be >= 0")
        if leaf == "eps" and not (store[name].reshape(-1)[0] > 0):
            raise ValueError(f"record {name!r}: eps must be > 0")


def _init_record(name: str, shape, rng=None):
    leaf = name.rsplit(".", 1)[1]
    if leaf in ("gamma", "var"):
        return np.ones(shape, np.float32)
    if leaf in ("beta", "mean", "bias"):
        return np.zeros(shape, np.float32)
    if leaf == "eps":
        return np.full(shape, DEFAULT_BN_EPS, np.float32)
    # conv / upconv weight
    if rng is None:
        return np.zeros(shape, np.float32)
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(np.float32)


def zero_weights(spec: NetSpec) -> WeightStore:
    """All-zero convolutions with identity normalization: the residual
    path makes this network the identity map."""
    recs = {
        name: _init_record(name, shape)
        for name, shape in spec.expected_records().items()
    }
    return WeightStore(recs)


def random_weights(spec: NetSpec, seed: int = 0) -> WeightStore:
    """He-style random convolutions, identity normalization, fixed order
    draws so a seed pins every tensor."""
    rng = np.random.default_rng(seed)
    recs = {
        name: _init_record(name, shape, rng=rng)
        for name, shape in spec.expected_records().items()
    }
    return WeightStore(recs)


def dumps_weights(store: WeightStore) -> bytes:
    parts = [PICSW1_MAGIC, struct.pack("<I", len(store))]
    for name, arr in store.tensors.items():
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise ValueError(f"record name too long: {len(nb)} bytes")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads_weights(blob: bytes) -> WeightStore:
    if blob[: len(PICSW1_MAGIC)] != PICSW1_MAGIC:
        raise WeightsFormatError("not a PICSW1 stream")
    off = len(PICSW1_MAGIC)

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise WeightsFormatError(f"truncated stream while reading {what}")
        chunk = blob[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "record count"))
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (nlen,) = struct.unpack("<H", take(2, f"name length of record {i}"))
        try:
            name = take(nlen, f"name of record {i}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightsFormatError(f"record {i} name is not UTF-8") from exc
        if name in tensors:
            raise WeightsFormatError(f"duplicate record {name!r}")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        if rank > MAX_RANK:
            raise WeightsFormatError(f"record {name!r} rank {rank} > {MAX_RANK}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        n_elem = 1
        for d in dims:
            n_elem *= d
        if n_elem > MAX_RECORD_ELEMENTS:
            raise WeightsFormatError(f"record {name!r} too large: {dims}")
        raw = take(4 * n_elem, f"payload of {name!r}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    if off != len(blob):
        raise WeightsFormatError(f"{len(blob) - off} trailing bytes")
    return WeightStore(tensors)


def save_weights(path, store: WeightStore) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_weights(store))


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        return loads_weights(fh.read())


def spec_from_weights(store: WeightStore) -> NetSpec:
    """Recover the architecture a weight file was exported for.

    The record inventory pins every hyperparameter: the count of encoder
    levels gives the depth, the first convolution gives the base width
    and input channels, the head gives the outputs.  The recovered spec
    is validated against the full store before it is returned.
    """
    depth = 0
    while f"enc{depth}.conv1.weight" in store:
        depth += 1
    if depth < 2:
        raise WeightsFormatError(
            "store does not describe a recognizable network: "
            "need encoder records enc0 and enc1 at minimum"
        )
    first = store["enc0.conv1.weight"]
    if "head.weight" not in store:
        raise WeightsFormatError("store has no head record")
    head = store["head.weight"]
    if first.ndim != 4 or head.ndim != 4:
        raise WeightsFormatError("conv records must be rank 4")
    try:
        spec = NetSpec(
            depth=depth,
            base_filters=int(first.shape[0]),
            in_channels=int(first.shape[1]),
            out_channels=int(head.shape[0]),
        )
    except ValueError as exc:
        raise WeightsFormatError(f"inconsistent architecture: {exc}") from exc
    validate_weights(spec, store)
    return spec
