import random
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from ctxswitch.codec import (
    ALTERA_LIKE,
    HEADER_SIZE,
    XILINX_LIKE,
    BadCheckpoint,
    BadMagic,
    BitOrder,
    CodecError,
    CrcMismatch,
    DigestMismatch,
    MachineState,
    NodeDescriptor,
    ScanAlignmentError,
    UnsupportedVersion,
    decode_context,
    encode_context,
    from_native_scan,
    to_native_scan,
)
from ctxswitch.planner import make_plan, plan_checkpoints
from ctxswitch.randgen import random_circuit
from oracles import crc32_bitwise

NODES = [NodeDescriptor("n", bits, order) for bits in (8, 16, 32, 64) for order in BitOrder]


def _reframe(body: bytes) -> bytes:
    return body + zlib.crc32(body).to_bytes(4, "little")


def test_crc_check_value():
    assert crc32_bitwise(b"123456789") == 0xCBF43926
    assert zlib.crc32(b"123456789") == 0xCBF43926


def test_header_size_from_field_table():
    assert HEADER_SIZE == 4 + 1 + 8 + 8 + 2 + 4 + 4 + 4 == 35


def test_zero_live_registers_image_size(ring3):
    p = make_plan(ring3, 0, {"S0", "S1", "S2", "S3"})
    img = encode_context(ring3, p, MachineState("S3", {"acc": 5, "tmp": 5}, 2, 1))
    assert len(img) == 39
    assert int.from_bytes(img[31:35], "little") == 0


def test_ring3_payload(ring3):
    p = plan_checkpoints(ring3, 2)
    img = encode_context(ring3, p, MachineState("S0", {"acc": 1, "tmp": 1}, 1, 1))
    assert img[:4] == b"CTXS" and img[4] == 1
    assert int.from_bytes(img[5:13], "little") == ring3.digest
    assert int.from_bytes(img[13:21], "little") == p.plan_digest
    assert int.from_bytes(img[21:23], "little") == 0
    assert int.from_bytes(img[23:27], "little") == 1
    assert int.from_bytes(img[27:31], "little") == 1
    assert int.from_bytes(img[31:35], "little") == 8
    assert img[35:36] == b"\x01"
    assert int.from_bytes(img[-4:], "little") == crc32_bitwise(img[:-4])


def test_decode_payload_three(ring3):
    p = plan_checkpoints(ring3, 2)
    img = bytearray(encode_context(ring3, p, MachineState("S0", {"acc": 1, "tmp": 0}, 1, 1)))
    img[35] = 0x03
    m = decode_context(_reframe(bytes(img[:-4])), ring3, p)
    assert m == MachineState("S0", {"acc": 3, "tmp": 0}, 1, 1)


def test_round_trip_zeroes_dead_registers(ring3):
    p = plan_checkpoints(ring3, 2)
    m = MachineState("S0", {"acc": 200, "tmp": 77}, 9, 4)
    assert decode_context(encode_context(ring3, p, m), ring3, p) == MachineState("S0", {"acc": 200, "tmp": 0}, 9, 4)


def test_encode_errors(ring3):
    p = plan_checkpoints(ring3, 2)
    with pytest.raises(BadCheckpoint):
        encode_context(ring3, p, MachineState("S1", {"acc": 0, "tmp": 0}))
    with pytest.raises(CodecError):
        encode_context(ring3, p, MachineState("S0", {"acc": 256, "tmp": 0}))
    other = random_circuit(random.Random(1))
    with pytest.raises(DigestMismatch):
        encode_context(other, p, MachineState("S0", {}))


def test_decode_errors(ring3):
    p = plan_checkpoints(ring3, 2)
    img = encode_context(ring3, p, MachineState("S0", {"acc": 1, "tmp": 0}, 1, 1))
    with pytest.raises(BadMagic):
        decode_context(b"XTXS" + img[4:], ring3, p)
    with pytest.raises(UnsupportedVersion):
        decode_context(_reframe(img[:4] + b"\x02" + img[5:-4]), ring3, p)
    with pytest.raises(CrcMismatch):
        decode_context(img[:-1] + bytes([img[-1] ^ 1]), ring3, p)
    with pytest.raises(CodecError):
        decode_context(img[:-5], ring3, p)
    foreign = random_circuit(random.Random(2))
    with pytest.raises(DigestMismatch):
        decode_context(_reframe(img[:5] + foreign.digest.to_bytes(8, "little") + img[13:-4]), ring3, p)
    with pytest.raises(DigestMismatch):
        decode_context(img, ring3, plan_checkpoints(ring3, 1))
    with pytest.raises(BadCheckpoint):
        decode_context(_reframe(img[:21] + (9).to_bytes(2, "little") + img[23:-4]), ring3, p)
    with pytest.raises(BadCheckpoint):
        decode_context(_reframe(img[:21] + (1).to_bytes(2, "little") + img[23:-4]), ring3, p)


def test_every_single_bit_flip_rejected(ring3):
    p = plan_checkpoints(ring3, 2)
    img = encode_context(ring3, p, MachineState("S0", {"acc": 0x5A, "tmp": 0}, 3, 2))
    for bit in range(len(img) * 8):
        bad = bytearray(img)
        bad[bit // 8] ^= 1 << (bit % 8)
        with pytest.raises(CodecError):
            decode_context(bytes(bad), ring3, p)


def test_scan_examples():
    lsb8 = NodeDescriptor("a", 8, BitOrder.LSB_FIRST)
    msb8 = NodeDescriptor("b", 8, BitOrder.MSB_FIRST)
    assert to_native_scan(b"\x01", lsb8) == [0x01]
    assert to_native_scan(b"\x01", msb8) == [0x80]
    assert to_native_scan(b"\x01\x02\x03", NodeDescriptor("c", 16)) == [0x0201, 0x0003]
    assert to_native_scan(b"\x01", NodeDescriptor("d", 16, BitOrder.MSB_FIRST)) == [0x8000]


def test_scan_padding_must_be_zero():
    node = NodeDescriptor("a", 32)
    assert from_native_scan([0x00030201], node, 3) == b"\x01\x02\x03"
    with pytest.raises(ScanAlignmentError):
        from_native_scan([0x01030201], node, 3)
    with pytest.raises(ScanAlignmentError):
        from_native_scan([1 << 32], node)


def test_descriptor_validation():
    with pytest.raises(ValueError):
        NodeDescriptor("x", 12)
    assert (XILINX_LIKE.scan_word_bits, XILINX_LIKE.bit_order) == (32, BitOrder.LSB_FIRST)
    assert (ALTERA_LIKE.scan_word_bits, ALTERA_LIKE.bit_order) == (64, BitOrder.MSB_FIRST)


def test_cross_vendor_transport(ring3):
    p = plan_checkpoints(ring3, 2)
    m = MachineState("S0", {"acc": 1, "tmp": 0}, 1, 1)
    img = encode_context(ring3, p, m)
    on_xilinx = from_native_scan(to_native_scan(img, XILINX_LIKE), XILINX_LIKE)
    on_altera = from_native_scan(to_native_scan(on_xilinx, ALTERA_LIKE), ALTERA_LIKE)
    assert on_altera == img
    assert decode_context(on_altera, ring3, p) == m


@given(st.binary(max_size=64), st.sampled_from(NODES))
def test_scan_round_trip_bytes(data, node):
    words = to_native_scan(data, node)
    assert all(0 <= w < 1 << node.scan_word_bits for w in words)
    assert from_native_scan(words, node, len(data)) == data


def _random_state(rng, c, p):
    cp = rng.choice(p.checkpoints)
    regs = {r.id: rng.randrange(1 << r.width) for r in c.registers}
    return MachineState(cp, regs, rng.randrange(2**32), rng.randrange(2**32))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(NODES), st.sampled_from(NODES))
def test_codec_round_trip_properties(seed, a, b):
    rng = random.Random(seed)
    c = random_circuit(rng)
    p = plan_checkpoints(c, rng.choice([0, 1, 2, 4]))
    if not p.checkpoints:
        return
    m = _random_state(rng, c, p)
    img = encode_context(c, p, m)
    live = set(p.live[m.current_state])
    expected = MachineState(m.current_state, {r: (v if r in live else 0) for r, v in m.registers.items()},
                            m.input_cursor, m.output_count)
    assert decode_context(img, c, p) == expected
    assert encode_context(c, p, m) == img
    moved = from_native_scan(to_native_scan(from_native_scan(to_native_scan(img, a), a), b), b)
    assert decode_context(moved, c, p) == expected
