"""Bit-exact p4mr frame codec.

Header layout, most significant byte first (19 bytes / 152 bits)::

    preamble:64 | app_id:8 | routing_id:8 | collection_id:8 | data:64

A frame is the header followed by payload words. PACKED frames carry
``data`` items; every other kind carries exactly one word (the item, the
result value, or zero for a collection signal), so single-item frames are
always 27 bytes.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import BadPreamble, MtuTooSmall, TruncatedFrame, WordTooLong, ZeroOrigin

PREAMBLE = 0x50344D5250344D52  # b"P4MRP4MR"
HEADER_BYTES = 19
ITEM_BYTES = 8
UNIT_FRAME_BYTES = HEADER_BYTES + ITEM_BYTES

UNIT = 1
PACKED = 2
COLLECT = 3
RESULT = 4
APP_IDS = (UNIT, PACKED, COLLECT, RESULT)

PER_ITEM = "PER_ITEM"
MTU_PACKED = "MTU_PACKED"

_HEADER = struct.Struct(">QBBBQ")
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Header:
    app_id: int
    routing_id: int
    collection_id: int = 0
    data: int = 0
    preamble: int = PREAMBLE

    def __post_init__(self):
        for name, bits in (("app_id", 8), ("routing_id", 8), ("collection_id", 8),
                           ("data", 64), ("preamble", 64)):
            v = getattr(self, name)
            if not 0 <= v < (1 << bits):
                raise ValueError(f"{name}={v} does not fit in {bits} bits")


@dataclass(frozen=True)
class Frame:
    header: Header
    items: tuple[int, ...] = ()

    @property
    def app_id(self) -> int:
        return self.header.app_id

    @property
    def routing_id(self) -> int:
        return self.header.routing_id

    @property
    def nbytes(self) -> int:
        return HEADER_BYTES + ITEM_BYTES * len(self.items)

    @property
    def bits(self) -> int:
        return 8 * self.nbytes

    def with_routing(self, routing_id: int) -> "Frame":
        h = self.header
        return Frame(Header(h.app_id, routing_id, h.collection_id, h.data, h.preamble), self.items)


def encode_header(h: Header) -> bytes:
    return _HEADER.pack(h.preamble, h.app_id, h.routing_id, h.collection_id, h.data)


def decode_header(data: bytes) -> Header:
    if len(data) < HEADER_BYTES:
        raise TruncatedFrame(f"need {HEADER_BYTES} bytes, have {len(data)}")
    pre, app, rid, cid, word = _HEADER.unpack_from(data)
    if pre != PREAMBLE:
        raise BadPreamble(f"preamble {pre:#018x}")
    return Header(app, rid, cid, word, pre)


def encode_frame(f: Frame) -> bytes:
    return encode_header(f.header) + b"".join(i.to_bytes(8, "big") for i in f.items)


def decode_frame(data: bytes) -> tuple[Frame, int]:
    """Decode one frame from the front of ``data``; returns (frame, bytes consumed)."""
    h = decode_header(data)
    count = h.data if h.app_id == PACKED else 1
    end = HEADER_BYTES + ITEM_BYTES * count
    if len(data) < end:
        raise TruncatedFrame(f"frame needs {end} bytes, have {len(data)}")
    items = tuple(int.from_bytes(data[o:o + 8], "big") for o in range(HEADER_BYTES, end, 8))
    return Frame(h, items), end


def decode_stream(data: bytes) -> list[Frame]:
    frames, pos = [], 0
    while pos < len(data):
        f, used = decode_frame(data[pos:])
        frames.append(f)
        pos += used
    return frames


def to_hex(data: bytes) -> str:
    return data.hex().upper()


def from_hex(text: str) -> bytes:
    return bytes.fromhex(text)


# -- constructors -------------------------------------------------------------

def unit_frame(routing_id: int, value: int) -> Frame:
    return Frame(Header(UNIT, routing_id, 0, value), (value,))


def packed_frame(routing_id: int, items: Sequence[int]) -> Frame:
    if not items:
        raise ValueError("a packed frame carries at least one item")
    return Frame(Header(PACKED, routing_id, 0, len(items)), tuple(items))


def result_frame(routing_id: int, value: int, tag: int = 0) -> Frame:
    return Frame(Header(RESULT, routing_id, tag, value), (value,))


def make_collection_packet(routing_id: int, origin_id: int) -> Header:
    if origin_id == 0:
        raise ZeroOrigin("collection signals need a nonzero origin id")
    return Header(COLLECT, routing_id, origin_id, 0)


def collection_frame(routing_id: int, origin_id: int) -> Frame:
    return Frame(make_collection_packet(routing_id, origin_id), (0,))


# -- items --------------------------------------------------------------------

def word_item(word) -> int:
    """Pack a word of at most 8 bytes into a 64-bit item, zero padded on the right."""
    raw = word.encode("utf-8") if isinstance(word, str) else bytes(word)
    if len(raw) > ITEM_BYTES:
        raise WordTooLong(f"{raw!r} is {len(raw)} bytes; items hold {ITEM_BYTES}")
    return int.from_bytes(raw.ljust(ITEM_BYTES, b"\0"), "big")


def item_word(item: int) -> str:
    return item.to_bytes(8, "big").rstrip(b"\0").decode("utf-8", errors="replace")


def _as_item(x) -> int:
    if isinstance(x, int):
        if not 0 <= x <= _MASK64:
            raise ValueError(f"item {x} is not a 64-bit unsigned value")
        return x
    return word_item(x)


def max_items(mtu: int) -> int:
    if mtu < UNIT_FRAME_BYTES:
        raise MtuTooSmall(f"mtu {mtu} < {UNIT_FRAME_BYTES} (header plus one item)")
    return (mtu - HEADER_BYTES) // ITEM_BYTES


def serialize_dataset(items: Iterable, mode: str, mtu: int, routing_id: int) -> list[Frame]:
    k_max = max_items(mtu)
    values = [_as_item(x) for x in items]
    if mode == PER_ITEM:
        return [unit_frame(routing_id, v) for v in values]
    if mode == MTU_PACKED:
        return [packed_frame(routing_id, values[i:i + k_max])
                for i in range(0, len(values), k_max)]
    raise ValueError(f"unknown serialization mode {mode!r}")


def packed_frame_count(n_items: int, mtu: int) -> int:
    return math.ceil(n_items / max_items(mtu))
