"""Platform-neutral context images and per-node scan-word conversion.

Image layout (all integers little-endian)::

    magic        4   b"CTXS"
    version      1   0x01
    circuit      8   circuit digest
    plan         8   plan digest
    state index  2   index of the checkpoint state in the circuit
    cursor       4   input values consumed
    outputs      4   output values emitted
    bit length   4   payload length in bits
    payload      ceil(bits / 8), live registers packed LSB-first
    crc32        4   CRC-32/IEEE of everything above
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .circuit import Circuit
from .planner import CheckpointPlan

MAGIC = b"CTXS"
VERSION = 1
HEADER = struct.Struct("<4sBQQHIII")
HEADER_SIZE = HEADER.size  # 35
CRC_SIZE = 4
_U32 = 0xFFFFFFFF


class CodecError(ValueError):
    pass


class BadMagic(CodecError):
    pass


class UnsupportedVersion(CodecError):
    pass


class DigestMismatch(CodecError):
    pass


class CrcMismatch(CodecError):
    pass


class Truncated(CodecError):
    pass


class BadCheckpoint(CodecError):
    pass


class ScanAlignmentError(CodecError):
    pass


@dataclass(frozen=True)
class MachineState:
    current_state: str
    registers: Mapping[str, int] = field(hash=False)
    input_cursor: int = 0
    output_count: int = 0


def _pack_bits(values: Sequence[tuple[int, int]]) -> tuple[bytes, int]:
    acc, nbits = 0, 0
    for value, width in values:
        acc |= (value & ((1 << width) - 1)) << nbits
        nbits += width
    return acc.to_bytes((nbits + 7) // 8, "little"), nbits


def encode_context(c: Circuit, p: CheckpointPlan, m: MachineState) -> bytes:
    if p.circuit_digest != c.digest:
        raise DigestMismatch("plan does not belong to this circuit")
    if m.current_state not in p.live:
        raise BadCheckpoint(f"state {m.current_state!r} is not a checkpoint")
    if not (0 <= m.input_cursor <= _U32 and 0 <= m.output_count <= _U32):
        raise CodecError("stream counters exceed 32 bits")
    regs = c.register_map
    fields = []
    for rid in p.live[m.current_state]:
        value = m.registers.get(rid, 0)
        if not 0 <= value < (1 << regs[rid].width):
            raise CodecError(f"register {rid!r} value {value} exceeds its width")
        fields.append((value, regs[rid].width))
    payload, nbits = _pack_bits(fields)
    header = HEADER.pack(
        MAGIC, VERSION, c.digest, p.plan_digest, c.state_index[m.current_state],
        m.input_cursor, m.output_count, nbits,
    )
    body = header + payload
    return body + struct.pack("<I", zlib.crc32(body))


@dataclass(frozen=True)
class ImageHeader:
    circuit_digest: int
    plan_digest: int
    state_index: int
    input_cursor: int
    output_count: int
    payload_bits: int

    @property
    def total_size(self) -> int:
        return HEADER_SIZE + (self.payload_bits + 7) // 8 + CRC_SIZE


def read_header(data: bytes) -> ImageHeader:
    """Parse and sanity-check the fixed header; no CRC check."""
    if len(data) < HEADER_SIZE + CRC_SIZE:
        raise Truncated(f"image of {len(data)} bytes is shorter than the fixed frame")
    magic, version, cdig, pdig, idx, cursor, outputs, nbits = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version}")
    return ImageHeader(cdig, pdig, idx, cursor, outputs, nbits)


def decode_context(data: bytes, c: Circuit, p: CheckpointPlan) -> MachineState:
    """Inverse of :func:`encode_context`; dead registers come back as zero."""
    data = bytes(data)
    hdr = read_header(data)
    if len(data) != hdr.total_size:
        raise Truncated(f"image is {len(data)} bytes, header declares {hdr.total_size}")
    (crc,) = struct.unpack_from("<I", data, len(data) - CRC_SIZE)
    if zlib.crc32(data[:-CRC_SIZE]) != crc:
        raise CrcMismatch("CRC mismatch")
    if hdr.circuit_digest != c.digest:
        raise DigestMismatch("image belongs to a different circuit")
    if hdr.plan_digest != p.plan_digest:
        raise DigestMismatch("image belongs to a different plan")
    if hdr.state_index >= len(c.states):
        raise BadCheckpoint(f"state index {hdr.state_index} out of range")
    state = c.states[hdr.state_index].id
    if state not in p.live:
        raise BadCheckpoint(f"state {state!r} is not a checkpoint of the plan")
    regs = c.register_map
    live = p.live[state]
    expected_bits = sum(regs[r].width for r in live)
    if hdr.payload_bits != expected_bits:
        raise Truncated(f"payload holds {hdr.payload_bits} bits, checkpoint needs {expected_bits}")
    acc = int.from_bytes(data[HEADER_SIZE:-CRC_SIZE], "little")
    if acc >> expected_bits:
        raise CodecError("non-zero padding bits in payload")
    values = {r.id: 0 for r in c.registers}
    for rid in live:
        width = regs[rid].width
        values[rid] = acc & ((1 << width) - 1)
        acc >>= width
    return MachineState(state, values, hdr.input_cursor, hdr.output_count)


# -- heterogeneous nodes -------------------------------------------------------------


class BitOrder(str, Enum):
    LSB_FIRST = "lsb-first"
    MSB_FIRST = "msb-first"


@dataclass(frozen=True)
class NodeDescriptor:
    arch_id: str
    scan_word_bits: int = 32
    bit_order: BitOrder = BitOrder.LSB_FIRST
    storage_root: Optional[str] = None

    def __post_init__(self):
        if self.scan_word_bits not in (8, 16, 32, 64):
            raise ValueError(f"scan_word_bits must be 8, 16, 32 or 64, not {self.scan_word_bits}")
        object.__setattr__(self, "bit_order", BitOrder(self.bit_order))


XILINX_LIKE = NodeDescriptor("xilinx-like", 32, BitOrder.LSB_FIRST)
ALTERA_LIKE = NodeDescriptor("altera-like", 64, BitOrder.MSB_FIRST)
DEFAULT_NODES = {n.arch_id: n for n in (XILINX_LIKE, ALTERA_LIKE)}


def _reverse_bits(word: int, width: int) -> int:
    return int(format(word, f"0{width}b")[::-1], 2)


def to_native_scan(data: bytes, node: NodeDescriptor) -> list[int]:
    """Regroup a canonical byte stream into the node's scan words.

    Bit ``k`` of the stream (byte ``k // 8``, bit ``k % 8``) lands in word
    ``k // W``; LSB_FIRST places it at bit ``k % W``, MSB_FIRST at
    ``W - 1 - k % W``. The final word is zero-padded.
    """
    width = node.scan_word_bits
    step = width // 8
    padded = bytes(data) + bytes(-len(data) % step)
    words = [int.from_bytes(padded[i:i + step], "little") for i in range(0, len(padded), step)]
    if node.bit_order is BitOrder.MSB_FIRST:
        words = [_reverse_bits(w, width) for w in words]
    return words


def from_native_scan(words: Sequence[int], node: NodeDescriptor, length: Optional[int] = None) -> bytes:
    """Inverse of :func:`to_native_scan`.

    ``length`` is the byte length to recover. When omitted and the stream
    carries a context image, the image header supplies it; otherwise every
    byte of the word span is returned. Bits beyond ``length`` must be zero.
    """
    width = node.scan_word_bits
    step = width // 8
    limit = 1 << width
    if node.bit_order is BitOrder.MSB_FIRST:
        words = [_reverse_bits(w, width) if 0 <= w < limit else -1 for w in words]
    chunks = []
    for w in words:
        if not 0 <= w < limit:
            raise ScanAlignmentError(f"scan word {w!r} does not fit in {width} bits")
        chunks.append(w.to_bytes(step, "little"))
    raw = b"".join(chunks)
    if length is None:
        if raw[:4] == MAGIC and len(raw) >= HEADER_SIZE:
            length = read_header(raw.ljust(HEADER_SIZE + CRC_SIZE, b"\0")).total_size
        else:
            length = len(raw)
    if length > len(raw):
        raise ScanAlignmentError(f"scan words hold {len(raw)} bytes, {length} expected")
    if any(raw[length:]):
        raise ScanAlignmentError("non-zero padding beyond the image")
    return raw[:length]
