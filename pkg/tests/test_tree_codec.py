"""Tree codec tests.

The optimality checks enumerate every pruned subtree (677 of them at depth 4)
and score each candidate with one shared cost function, so the encoder's
output can be compared against the exhaustive minimum bit for bit.
"""

import math
import struct

import numpy as np
import pytest

from sysaware.tree_codec import (
    MAGIC,
    Bitstream,
    BitstreamError,
    TreeCodecPlug,
    decode,
    encode,
    lagrangian_cost,
    quantize,
    rate_of,
    reconstruct,
    segment_mean,
)

# ---------------------------------------------------------------- oracles #


def enumerate_partitions(depth_left, level=0, start=0, stop=None, m=None):
    """Yield every leaf partition reachable by pruning a depth-d binary tree."""
    if stop is None:
        stop = m
    yield [(level, start, stop)]
    if depth_left == 0:
        return
    mid = (start + stop) // 2
    for left in enumerate_partitions(depth_left - 1, level + 1, start, mid):
        for right in enumerate_partitions(depth_left - 1, level + 1, mid, stop):
            yield left + right


def partition_cost(w, partition, nu, q_bits):
    """Lagrangian cost of a candidate partition, same arithmetic as the codec."""
    levels = (1 << q_bits) - 1
    total = 0.0
    for _, start, stop in partition:
        seg = w[start:stop]
        index = int(np.floor(np.clip(seg.mean(), 0.0, 1.0) * levels + 0.5))
        recon = index / levels
        total += float(((seg - recon) ** 2).sum()) + nu * q_bits
    return total


def test_partition_enumeration_count():
    # c(d) = 1 + c(d-1)^2 with c(0) = 1: 2, 5, 26, 677
    assert sum(1 for _ in enumerate_partitions(1, m=2)) == 2
    assert sum(1 for _ in enumerate_partitions(2, m=4)) == 5
    assert sum(1 for _ in enumerate_partitions(3, m=8)) == 26
    assert sum(1 for _ in enumerate_partitions(4, m=16)) == 677


# ------------------------------------------------------- scalar utilities #


def test_quantize_examples():
    assert quantize(0.5, 8) == (128, 128 / 255)
    assert quantize(0.0, 8) == (0, 0.0)
    assert quantize(1.0, 8) == (255, 1.0)
    assert quantize(-0.2, 8) == (0, 0.0)  # clamped below
    assert quantize(1.7, 8) == (255, 1.0)  # clamped above
    assert quantize(0.5, 1) == (1, 1.0)  # tie at half a step rounds up


def test_quantize_monotone_and_idempotent():
    rng = np.random.default_rng(0)
    for q in (1, 2, 8, 12):
        values = np.sort(rng.uniform(-0.2, 1.2, size=50))
        idx = [quantize(v, q)[0] for v in values]
        assert all(a <= b for a, b in zip(idx, idx[1:]))
        for v in values:
            _, recon = quantize(v, q)
            assert quantize(recon, q)[1] == recon


def test_quantize_rejects_zero_bits():
    with pytest.raises(ValueError):
        quantize(0.5, 0)


def test_segment_mean_basic():
    w = np.array([1.0, 2.0, 3.0, 4.0])
    assert segment_mean(w, (0, 4)) == 2.5
    assert segment_mean(w, (1, 3)) == 2.5
    assert segment_mean(w, (3, 4)) == 4.0


def test_segment_mean_chirp_prefix_direct_summation():
    from sysaware.system_sim import make_chirp

    w = make_chirp(1024)
    # direct-summation oracle built with the math module only
    acc = math.fsum(
        0.5 + 0.5 * (i / 1024) * math.sin(2 * math.pi * (2 * (i / 1024) + 30 * (i / 1024) ** 2))
        for i in range(256)
    )
    assert abs(segment_mean(w, (0, 256)) - acc / 256) <= 1e-12


def test_segment_mean_rejects_bad_intervals():
    w = np.zeros(8)
    for interval in [(2, 2), (3, 1), (-1, 4), (0, 9)]:
        with pytest.raises(ValueError):
            segment_mean(w, interval)


# ----------------------------------------------------------------- encode #


def test_encode_constant_signal_collapses_to_root():
    code, stream = encode(np.full(16, 0.5), nu=0.01)
    assert len(code.leaves) == 1
    assert code.leaves[0].level == 0
    assert code.leaves[0].index == 128
    assert rate_of(code) == 8
    assert stream.tree_bits == (0,)


def test_encode_zero_nu_keeps_full_depth():
    rng = np.random.default_rng(1)
    w = rng.uniform(size=16)
    code, _ = encode(w, nu=0.0)
    assert len(code.leaves) == 16
    assert all(leaf.level == 4 for leaf in code.leaves)


def test_encode_step_signal_matches_enumeration():
    w = np.zeros(16)
    w[8:] = 1.0
    code, _ = encode(w, nu=0.001, d=4, q_bits=8)
    best = min(partition_cost(w, p, 0.001, 8) for p in enumerate_partitions(4, m=16))
    chosen = partition_cost(w, [(l.level, l.start, l.stop) for l in code.leaves], 0.001, 8)
    assert chosen == best
    # a two-segment step costs nothing beyond the rate of two leaves
    assert len(code.leaves) == 2


def test_encode_optimal_over_random_signals():
    rng = np.random.default_rng(42)
    for m, d in [(4, 2), (8, 3), (16, 4)]:
        for nu in (0.0, 1e-4, 1e-3, 1e-2, 0.1):
            for _ in range(5):
                w = rng.uniform(size=m)
                code, _ = encode(w, nu=nu, d=d)
                chosen = partition_cost(
                    w, [(l.level, l.start, l.stop) for l in code.leaves], nu, code.q_bits
                )
                best = min(
                    partition_cost(w, p, nu, code.q_bits) for p in enumerate_partitions(d, m=m)
                )
                assert chosen == best


def test_encode_rate_monotone_in_nu():
    rng = np.random.default_rng(5)
    for _ in range(10):
        w = rng.uniform(size=64)
        rates = [encode(w, nu=nu)[1].reported_rate_bits for nu in (0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_encode_partition_tiles_signal():
    rng = np.random.default_rng(9)
    for _ in range(20):
        w = rng.uniform(size=32)
        d = int(rng.integers(1, 6))
        code, _ = encode(w, nu=float(rng.uniform(0, 0.05)), d=d)
        spans = sorted((leaf.start, leaf.stop) for leaf in code.leaves)
        assert spans[0][0] == 0 and spans[-1][1] == 32
        assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
        for leaf in code.leaves:
            assert leaf.stop - leaf.start == 32 >> leaf.level
            assert leaf.level <= d


def test_encode_argument_errors():
    w = np.zeros(16)
    with pytest.raises(ValueError):
        encode(np.zeros(12), nu=0.0)  # not a power of two
    with pytest.raises(ValueError):
        encode(np.zeros(1), nu=0.0)
    with pytest.raises(ValueError):
        encode(w, nu=-0.1)
    with pytest.raises(ValueError):
        encode(w, nu=0.0, d=0)
    with pytest.raises(ValueError):
        encode(w, nu=0.0, d=5)
    with pytest.raises(ValueError):
        encode(w, nu=0.0, q_bits=0)


def test_lagrangian_cost_recomputed_from_first_principles():
    rng = np.random.default_rng(13)
    w = rng.uniform(size=32)
    code, _ = encode(w, nu=0.002)
    recon = reconstruct(code)
    sse = math.fsum((float(a) - float(b)) ** 2 for a, b in zip(w, recon))
    expected = sse + 0.002 * 8 * len(code.leaves)
    assert abs(lagrangian_cost(code, w) - expected) <= 1e-12


# ------------------------------------------------------------- round trip #


def test_round_trip_exact():
    rng = np.random.default_rng(21)
    for _ in range(20):
        w = rng.uniform(size=64)
        nu = float(rng.uniform(0, 0.02))
        q = int(rng.integers(1, 12))
        code, stream = encode(w, nu=nu, q_bits=q)
        data = stream.to_bytes()
        parsed = Bitstream.from_bytes(data)
        assert parsed == stream
        assert np.array_equal(decode(data), reconstruct(code))
        assert parsed.reported_rate_bits == rate_of(code) == q * len(code.leaves)


def test_single_leaf_stream_decodes_to_constant():
    data = MAGIC + bytes([2, 2, 8]) + struct.pack(">I", 4) + b"\x00" + bytes([128])
    assert np.array_equal(decode(data), np.full(4, 128 / 255))
    stream = Bitstream.from_bytes(data)
    assert stream.tree_bits == (0,)
    assert stream.leaf_indices == (128,)
    assert stream.reported_rate_bits == 8


def test_encoded_constant_half_signal_bytes():
    _, stream = encode(np.full(4, 0.5), nu=0.01)
    expected = MAGIC + bytes([2, 2, 8]) + struct.pack(">I", 4) + b"\x00" + bytes([128])
    assert stream.to_bytes() == expected


def test_padding_bits_are_zero():
    w = np.arange(16) / 16
    _, stream = encode(w, nu=0.0, q_bits=3)
    data = stream.to_bytes()
    # 31 tree bits in 4 bytes, 48 payload bits in 6 bytes
    assert len(data) == 11 + 4 + 6
    assert data[14] & 1 == 0  # final padding bit of the tree section


# ----------------------------------------------------------- parse errors #


def _valid_stream_bytes():
    _, stream = encode(np.full(4, 0.5), nu=0.01)
    return stream.to_bytes()


def test_parse_error_bad_magic():
    data = b"XAC1" + _valid_stream_bytes()[4:]
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(data)
    assert err.value.offset == 0


def test_parse_error_truncated_header():
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(b"SAC1\x02")
    assert err.value.offset == 5


def test_parse_error_length_field_mismatch():
    data = bytearray(_valid_stream_bytes())
    struct.pack_into(">I", data, 7, 5)
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(bytes(data))
    assert err.value.offset == 7


def test_parse_error_depth_out_of_range():
    for bad_d in (0, 3):
        data = bytearray(_valid_stream_bytes())
        data[5] = bad_d
        with pytest.raises(BitstreamError) as err:
            Bitstream.from_bytes(bytes(data))
        assert err.value.offset == 5


def test_parse_error_zero_q_bits():
    data = bytearray(_valid_stream_bytes())
    data[6] = 0
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(bytes(data))
    assert err.value.offset == 6


def test_parse_error_truncated_tree():
    data = _valid_stream_bytes()[:11]
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(data)
    assert err.value.offset == 11


def test_parse_error_split_below_max_depth():
    data = bytearray(_valid_stream_bytes())
    data[5] = 1  # d = 1, so a split at level 1 is illegal
    data[11] = 0b11000000
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(bytes(data))
    assert err.value.offset == 11
    assert "below" in str(err.value)


def test_parse_error_truncated_payload():
    data = _valid_stream_bytes()
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(data[:-1])
    assert err.value.offset == len(data) - 1


def test_parse_error_trailing_data():
    data = _valid_stream_bytes()
    with pytest.raises(BitstreamError) as err:
        Bitstream.from_bytes(data + b"\x00")
    assert err.value.offset == len(data)


# ------------------------------------------------------------------- plug #


def test_plug_matches_library_calls():
    rng = np.random.default_rng(33)
    w = rng.uniform(size=32)
    plug = TreeCodecPlug(q_bits=8)
    blob = plug.compress(w, 0.003)
    code, stream = encode(w, nu=0.003, q_bits=8)
    assert blob == stream.to_bytes()
    assert np.array_equal(plug.decompress(blob), reconstruct(code))
    assert plug.rate_bits(blob) == rate_of(code)


def test_plug_fixed_depth():
    w = np.random.default_rng(35).uniform(size=32)
    plug = TreeCodecPlug(depth=2, q_bits=6)
    blob = plug.compress(w, 0.0)
    assert Bitstream.from_bytes(blob).d == 2
    assert plug.rate_bits(blob) == 6 * 4
