"""Bit-exact binary weight archives (GAAW format).

Layout, all integers little-endian:

====================  =======================================
bytes                 meaning
====================  =======================================
4                     magic ``GAAW``
2 (u16)               format version (currently 1)
4 (u32)               entry count
--- per entry ---
2 (u16)               name length in bytes
n                     name, UTF-8
1 (u8)                dtype code: 0 = f32, 1 = f16
1 (u8)                rank
4 * rank (u32)        dims
prod(dims) * size     payload, little-endian IEEE 754
====================  =======================================

Archives preserve stored dtype and payload bytes exactly, so
``read(write(a)) == a``. Lookups hand out float32 copies; f16 entries are
widened on access. Batch-norm quadruplets named ``<unit>.bn.gamma`` /
``beta`` / ``mean`` / ``var`` (optional ``<unit>.bn.eps``) are foldable
into ``<unit>.weight`` and ``<unit>.bias``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, DuplicateEntry, MissingWeight, TruncatedArchive

MAGIC = b"GAAW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_CODES = {np.dtype("float32"): 0, np.dtype("float16"): 1}
BN_SUFFIXES = ("gamma", "beta", "mean", "var")
DEFAULT_BN_EPS = 1e-5


@dataclass
class WeightEntry:
    name: str
    array: np.ndarray  # stored dtype: float32 or float16

    def __post_init__(self):
        if self.array.dtype not in _CODES:
            raise TypeError(f"unsupported archive dtype {self.array.dtype}")

    @property
    def dtype_code(self) -> int:
        return _CODES[self.array.dtype]

    def as_f32(self) -> np.ndarray:
        return np.ascontiguousarray(self.array, dtype=np.float32)

    def __eq__(self, other):
        return (
            isinstance(other, WeightEntry)
            and self.name == other.name
            and self.array.dtype == other.array.dtype
            and self.array.shape == other.array.shape
            and self.array.tobytes() == other.array.tobytes()
        )


class WeightArchive:
    """Ordered, immutable-by-convention mapping of names to tensors."""

    def __init__(self, entries: list[WeightEntry] | None = None):
        self._entries: dict[str, WeightEntry] = {}
        for e in entries or []:
            self.add_entry(e)

    def add_entry(self, entry: WeightEntry) -> None:
        if entry.name in self._entries:
            raise DuplicateEntry(f"duplicate archive entry {entry.name!r}")
        self._entries[entry.name] = entry

    def add(self, name: str, array, dtype=np.float32) -> None:
        arr = np.ascontiguousarray(array, dtype=dtype)
        self.add_entry(WeightEntry(name=name, array=arr))

    def drop(self, name: str) -> None:
        del self._entries[name]

    def __contains__(self, name) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other):
        return (
            isinstance(other, WeightArchive)
            and list(self._entries) == list(other._entries)
            and all(self._entries[k] == other._entries[k] for k in self._entries)
        )

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._entries[name].as_f32()
        except KeyError:
            raise MissingWeight(f"weight {name!r} not in archive") from None

    def entry(self, name: str) -> WeightEntry:
        try:
            return self._entries[name]
        except KeyError:
            raise MissingWeight(f"weight {name!r} not in archive") from None

    def names(self) -> list[str]:
        return list(self._entries)

    def param_count(self) -> int:
        return sum(e.array.size for e in self._entries.values())


def write_weights(archive: WeightArchive, path) -> None:
    """Serialize deterministically: same archive, same bytes."""
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(archive))]
    for name in archive.names():
        entry = archive.entry(name)
        encoded = name.encode("utf-8")
        arr = entry.array
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", entry.dtype_code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[entry.dtype_code]).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_weights(path, fold_bn: bool = True) -> WeightArchive:
    """Parse a GAAW file; folds any batch-norm entries unless told not to."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: missing GAAW magic")
    if len(data) < 10:
        raise TruncatedArchive(f"{path}: header truncated")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported archive version {version}")
    offset = 10
    archive = WeightArchive()
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + name_len].decode("utf-8")
            if len(data) < offset + name_len:
                raise struct.error("name truncated")
            offset += name_len
            code, rank = struct.unpack_from("<BB", data, offset)
            offset += 2
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
        except struct.error as exc:
            raise TruncatedArchive(f"{path}: entry header truncated ({exc})") from exc
        if code not in _DTYPES:
            raise BadMagic(f"{path}: unknown dtype code {code}")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = data[offset : offset + nbytes]
        if len(payload) != nbytes:
            raise TruncatedArchive(f"{path}: payload of {name!r} truncated")
        offset += nbytes
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        archive.add_entry(WeightEntry(name=name, array=arr))
    if fold_bn:
        fold_batchnorm(archive)
    return archive


def fold_batchnorm(archive: WeightArchive) -> WeightArchive:
    """Fold ``unit.bn.*`` quadruplets into ``unit.weight`` / ``unit.bias``.

    ``w' = w * gamma / sqrt(var + eps)`` per output channel and
    ``b' = beta + (b - mean) * gamma / sqrt(var + eps)``. The bn entries are
    removed and the folded bias lands right after its weight, so entry
    order is preserved. Mutates and returns the archive.
    """
    units = {
        name[: -len(".bn.gamma")]
        for name in archive.names()
        if name.endswith(".bn.gamma")
    }
    if not units:
        return archive

    def folded_pair(unit: str) -> tuple[np.ndarray, np.ndarray]:
        gamma = archive[f"{unit}.bn.gamma"].astype(np.float64)
        beta = archive[f"{unit}.bn.beta"].astype(np.float64)
        mean = archive[f"{unit}.bn.mean"].astype(np.float64)
        var = archive[f"{unit}.bn.var"].astype(np.float64)
        eps_name = f"{unit}.bn.eps"
        eps = float(archive[eps_name][0]) if eps_name in archive else DEFAULT_BN_EPS
        weight = archive[f"{unit}.weight"].astype(np.float64)
        bias_name = f"{unit}.bias"
        bias = (
            archive[bias_name].astype(np.float64)
            if bias_name in archive
            else np.zeros(weight.shape[0])
        )
        scale = gamma / np.sqrt(var + eps)
        folded_w = weight * scale.reshape(-1, *([1] * (weight.ndim - 1)))
        folded_b = beta + (bias - mean) * scale
        return folded_w.astype(np.float32), folded_b.astype(np.float32)

    rebuilt: dict[str, WeightEntry] = {}
    for name in archive.names():
        unit = name[: -len(".weight")] if name.endswith(".weight") else None
        if unit in units:
            w, b = folded_pair(unit)
            rebuilt[name] = WeightEntry(name=name, array=np.ascontiguousarray(w))
            rebuilt[f"{unit}.bias"] = WeightEntry(
                name=f"{unit}.bias", array=np.ascontiguousarray(b)
            )
            continue
        stem = name.rsplit(".bn.", 1)[0] if ".bn." in name else None
        if stem in units:
            continue  # consumed by the fold
        if name.endswith(".bias") and name[: -len(".bias")] in units:
            continue  # original bias replaced by the folded one
        if name not in rebuilt:
            rebuilt[name] = archive.entry(name)
    archive._entries = rebuilt
    return archive


def init_random(graph, seed: int = 0) -> WeightArchive:
    """Seeded archive covering a graph's manifest.

    Convolution weights draw from a fan-in-scaled uniform distribution
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are zero.
    """
    rng = np.random.default_rng(seed)
    archive = WeightArchive()
    for name, shape in graph.weight_manifest().items():
        if name.endswith(".bias"):
            archive.add(name, np.zeros(shape, dtype=np.float32))
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            archive.add(
                name, rng.uniform(-bound, bound, size=shape).astype(np.float32)
            )
    return archive
