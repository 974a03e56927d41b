"""Pruned-binary-tree codec: quantized segment means over a dyadic partition.

A signal of length M = 2**d0 is covered by the leaves of a binary tree pruned
from an initial depth d <= d0. Each leaf stores the uniformly quantized mean
of its samples, so the rate is q_bits per leaf. Pruning minimizes, exactly,

    sum_leaves ||w[leaf] - recon(leaf)||^2 + nu * q_bits * n_leaves

over every tree reachable by merging sibling leaves: costs are accumulated
bottom-up and a node keeps its children only when their combined subtree cost
does not exceed the node's own leaf cost (ties keep the split).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAGIC",
    "BitstreamError",
    "Leaf",
    "TreeCode",
    "Bitstream",
    "quantize",
    "segment_mean",
    "encode",
    "decode",
    "reconstruct",
    "rate_of",
    "lagrangian_cost",
    "TreeCodecPlug",
]

MAGIC = b"SAC1"
_HEADER_LEN = 11  # magic, d0, d, q_bits, M as 4-byte big-endian


class BitstreamError(ValueError):
    """Malformed serialized stream; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Leaf:
    """One leaf: tree level, half-open sample interval, quantized mean index."""

    level: int
    start: int
    stop: int
    index: int


@dataclass(frozen=True)
class TreeCode:
    depth_full: int
    signal_len: int
    q_bits: int
    nu: float
    leaves: tuple[Leaf, ...]


@dataclass(frozen=True)
class Bitstream:
    """Parsed form of the serialized codec output.

    Wire layout: 4 magic bytes "SAC1"; d0, d, q_bits as single bytes; M as a
    4-byte big-endian integer; the pre-order tree description, one bit per
    visited node (1 = split, 0 = leaf), MSB-first, zero-padded to a byte
    boundary; then q_bits per leaf in left-to-right leaf order, MSB-first,
    zero-padded to a byte boundary.
    """

    d0: int
    d: int
    q_bits: int
    m: int
    tree_bits: tuple[int, ...]
    leaf_indices: tuple[int, ...]

    @property
    def reported_rate_bits(self) -> int:
        """Rate charged by the codec: payload bits only, q_bits per leaf."""
        return self.q_bits * len(self.leaf_indices)

    @property
    def serialized_size_bits(self) -> int:
        tree_bytes = (len(self.tree_bits) + 7) // 8
        payload_bytes = (self.q_bits * len(self.leaf_indices) + 7) // 8
        return 8 * (_HEADER_LEN + tree_bytes + payload_bytes)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += bytes([self.d0, self.d, self.q_bits])
        out += struct.pack(">I", self.m)
        out += _pack_bits(self.tree_bits)
        payload = []
        for index in self.leaf_indices:
            payload.extend((index >> shift) & 1 for shift in range(self.q_bits - 1, -1, -1))
        out += _pack_bits(payload)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < _HEADER_LEN:
            raise BitstreamError("truncated header", offset=len(data))
        if data[:4] != MAGIC:
            raise BitstreamError(f"bad magic {data[:4]!r}", offset=0)
        d0, d, q_bits = data[4], data[5], data[6]
        m = struct.unpack(">I", data[7:11])[0]
        if d0 > 31 or m != 1 << d0:
            raise BitstreamError(f"signal length {m} inconsistent with d0={d0}", offset=7)
        if not 1 <= d <= d0:
            raise BitstreamError(f"depth d={d} outside [1, d0={d0}]", offset=5)
        if q_bits < 1:
            raise BitstreamError("q_bits must be >= 1", offset=6)

        tree_bits, n_leaves = _parse_tree_bits(data, d)
        tree_bytes = (len(tree_bits) + 7) // 8
        payload_start = _HEADER_LEN + tree_bytes
        payload_bits = q_bits * n_leaves
        expected_len = payload_start + (payload_bits + 7) // 8
        if len(data) < expected_len:
            raise BitstreamError(
                f"truncated leaf payload: need {expected_len} bytes, have {len(data)}",
                offset=len(data),
            )
        if len(data) > expected_len:
            raise BitstreamError("trailing data after leaf payload", offset=expected_len)

        indices = []
        for leaf in range(n_leaves):
            value = 0
            for bit in range(q_bits):
                pos = leaf * q_bits + bit
                byte = data[payload_start + pos // 8]
                value = (value << 1) | ((byte >> (7 - pos % 8)) & 1)
            indices.append(value)
        return cls(d0=d0, d=d, q_bits=q_bits, m=m, tree_bits=tree_bits, leaf_indices=tuple(indices))


def _pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for pos, bit in enumerate(bits):
        if bit:
            out[pos // 8] |= 1 << (7 - pos % 8)
    return bytes(out)


def _parse_tree_bits(data: bytes, d: int) -> tuple[tuple[int, ...], int]:
    """Walk the pre-order tree section; return (bits consumed, leaf count)."""
    avail = 8 * (len(data) - _HEADER_LEN)
    bits = []
    n_leaves = 0
    pending = [0]  # levels of nodes awaiting their bit, pre-order
    while pending:
        level = pending.pop()
        pos = len(bits)
        if pos >= avail:
            raise BitstreamError("truncated tree description", offset=len(data))
        byte = data[_HEADER_LEN + pos // 8]
        bit = (byte >> (7 - pos % 8)) & 1
        bits.append(bit)
        if bit:
            if level >= d:
                raise BitstreamError(
                    "tree bits split below the maximum depth",
                    offset=_HEADER_LEN + pos // 8,
                )
            pending.append(level + 1)  # right pushed first, left popped first
            pending.append(level + 1)
        else:
            n_leaves += 1
    return tuple(bits), n_leaves


def quantize(value: float, q_bits: int) -> tuple[int, float]:
    """Uniform scalar quantization of a value clamped to [0, 1].

    Returns (index, reconstruction) with index = round(value * (2**q_bits - 1)),
    ties rounding up, and reconstruction = index / (2**q_bits - 1).
    """
    if q_bits < 1:
        raise ValueError("q_bits must be >= 1")
    levels = (1 << q_bits) - 1
    clamped = min(max(float(value), 0.0), 1.0)
    index = int(np.floor(clamped * levels + 0.5))
    return index, index / levels


def _quantize_array(values: np.ndarray, q_bits: int) -> tuple[np.ndarray, np.ndarray]:
    levels = (1 << q_bits) - 1
    clamped = np.clip(values, 0.0, 1.0)
    index = np.floor(clamped * levels + 0.5).astype(np.int64)
    return index, index / levels


def segment_mean(w, interval: tuple[int, int]) -> float:
    """Mean of w over the half-open interval [start, stop)."""
    w = np.asarray(w, dtype=float)
    start, stop = interval
    if not 0 <= start < stop <= w.size:
        raise ValueError(f"invalid interval [{start}, {stop}) for length {w.size}")
    return float(w[start:stop].mean())


def encode(w, nu: float, d: int | None = None, q_bits: int = 8) -> tuple[TreeCode, Bitstream]:
    """Encode ``w`` (length a power of two) at Lagrangian weight ``nu``.

    ``d`` defaults to the maximal depth log2(len(w)). Returns the pruned tree
    and its serialized form.
    """
    w = np.asarray(w, dtype=float)
    m = w.size
    if m < 2 or m & (m - 1):
        raise ValueError(f"signal length must be a power of two >= 2, got {m}")
    d0 = m.bit_length() - 1
    if d is None:
        d = d0
    if not 1 <= d <= d0:
        raise ValueError(f"depth must be in [1, {d0}], got {d}")
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if q_bits < 1:
        raise ValueError("q_bits must be >= 1")

    leaf_bits = float(nu) * q_bits
    indices = []
    costs = []
    for level in range(d + 1):
        segments = w.reshape(1 << level, m >> level)
        q_index, recon = _quantize_array(segments.mean(axis=1), q_bits)
        sse = ((segments - recon[:, None]) ** 2).sum(axis=1)
        indices.append(q_index)
        costs.append(sse + leaf_bits)

    # Bottom-up exact minimization: a node splits only when its children's
    # combined best cost does not exceed its own leaf cost (merge on strict >).
    best = costs[d]
    split = [None] * d
    for level in range(d - 1, -1, -1):
        child_sum = best[0::2] + best[1::2]
        keep = child_sum <= costs[level]
        split[level] = keep
        best = np.where(keep, child_sum, costs[level])

    bits = []
    leaves = []
    stack = [(0, 0)]
    while stack:
        level, i = stack.pop()
        is_leaf = level == d or not split[level][i]
        bits.append(0 if is_leaf else 1)
        if is_leaf:
            width = m >> level
            leaves.append(Leaf(level, i * width, (i + 1) * width, int(indices[level][i])))
        else:
            stack.append((level + 1, 2 * i + 1))
            stack.append((level + 1, 2 * i))

    code = TreeCode(depth_full=d, signal_len=m, q_bits=q_bits, nu=float(nu), leaves=tuple(leaves))
    stream = Bitstream(
        d0=d0,
        d=d,
        q_bits=q_bits,
        m=m,
        tree_bits=tuple(bits),
        leaf_indices=tuple(leaf.index for leaf in leaves),
    )
    return code, stream


def reconstruct(code: TreeCode) -> np.ndarray:
    """Piecewise-constant reconstruction from the quantized leaf indices."""
    levels = (1 << code.q_bits) - 1
    out = np.empty(code.signal_len)
    for leaf in code.leaves:
        out[leaf.start : leaf.stop] = leaf.index / levels
    return out


def decode(data: Bitstream | bytes) -> np.ndarray:
    """Decode a stream (parsed or raw bytes) into the reconstructed signal."""
    stream = data if isinstance(data, Bitstream) else Bitstream.from_bytes(data)
    levels = (1 << stream.q_bits) - 1
    out = np.empty(stream.m)
    cursor = 0
    pos = 0  # sample position of the next leaf
    stack = [0]
    for bit in stream.tree_bits:
        level = stack.pop()
        if bit:
            stack.append(level + 1)
            stack.append(level + 1)
        else:
            width = stream.m >> level
            out[pos : pos + width] = stream.leaf_indices[cursor] / levels
            cursor += 1
            pos += width
    return out


def rate_of(code: TreeCode) -> int:
    """Rate in bits charged by the codec: q_bits per leaf."""
    return code.q_bits * len(code.leaves)


def lagrangian_cost(code: TreeCode, w) -> float:
    """Squared reconstruction error plus nu * q_bits per leaf, summed leaf by leaf."""
    w = np.asarray(w, dtype=float)
    levels = (1 << code.q_bits) - 1
    total = 0.0
    for leaf in code.leaves:
        recon = leaf.index / levels
        total += float(((w[leaf.start : leaf.stop] - recon) ** 2).sum())
    return total + code.nu * code.q_bits * len(code.leaves)


class TreeCodecPlug:
    """Adapter exposing the tree codec through the generic codec interface.

    ``compress(signal, theta)`` interprets theta as the Lagrangian weight nu.
    """

    def __init__(self, depth: int | None = None, q_bits: int = 8):
        self.depth = depth
        self.q_bits = int(q_bits)

    def compress(self, signal, theta: float) -> bytes:
        _, stream = encode(signal, nu=theta, d=self.depth, q_bits=self.q_bits)
        return stream.to_bytes()

    def decompress(self, data: bytes) -> np.ndarray:
        return decode(data)

    def rate_bits(self, data: bytes) -> int:
        return Bitstream.from_bytes(data).reported_rate_bits
