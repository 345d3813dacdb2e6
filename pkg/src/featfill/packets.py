"""Eight-row packetization of quantized mosaics and a seeded loss channel.

Wire format (big-endian, 24-byte header)::

    magic u16 = 0x4C50 | version u8 = 1 | frame_id u32 | seq u16 | total u16
    row_offset u16 | rows u8 = 8 | width u16 | quant lo f32 | quant hi f32
    rows * width payload bytes

Loss decisions come from SplitMix64 (Steele, Lea & Flood 2014): one 64-bit
draw per packet in ``seq`` order, ``u = (x >> 11) * 2**-53``, packet dropped
when ``u < p``.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import warnings
from dataclasses import dataclass

import numpy as np

from .tensor_core import QuantParams

log = logging.getLogger(__name__)

ROWS_PER_PACKET = 8
WIRE_MAGIC = 0x4C50
WIRE_VERSION = 1
_WIRE_HEADER = struct.Struct(">HBIHHHBHff")
WIRE_HEADER_SIZE = _WIRE_HEADER.size

_END_MARKER = b"LP-END"
_MASK64 = (1 << 64) - 1


class PacketError(ValueError):
    """Inconsistent, malformed or conflicting packets."""


class TransportError(RuntimeError):
    """Socket-level failure in the loopback transport (not simulated loss)."""


class DuplicatePacketWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Packet:
    frame_id: int
    seq: int
    total: int
    row_offset: int
    rows: int
    width: int
    lo: float
    hi: float
    payload: bytes

    def __post_init__(self):
        if self.row_offset != self.seq * ROWS_PER_PACKET:
            raise PacketError(f"row_offset {self.row_offset} != 8 * seq {self.seq}")
        if not 0 <= self.seq < self.total:
            raise PacketError(f"seq {self.seq} outside [0, {self.total})")
        if len(self.payload) != self.rows * self.width:
            raise PacketError(f"payload of {len(self.payload)} bytes, expected {self.rows * self.width}")

    @property
    def quant(self) -> QuantParams:
        return QuantParams(self.lo, self.hi)

    def to_bytes(self) -> bytes:
        header = _WIRE_HEADER.pack(WIRE_MAGIC, WIRE_VERSION, self.frame_id, self.seq, self.total,
                                   self.row_offset, self.rows, self.width, self.lo, self.hi)
        return header + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Packet":
        if len(raw) < WIRE_HEADER_SIZE:
            raise PacketError(f"datagram of {len(raw)} bytes is shorter than the header")
        magic, version, frame_id, seq, total, row_offset, rows, width, lo, hi = \
            _WIRE_HEADER.unpack_from(raw)
        if magic != WIRE_MAGIC or version != WIRE_VERSION:
            raise PacketError(f"bad magic/version {magic:#06x}/{version}")
        return cls(frame_id, seq, total, row_offset, rows, width, lo, hi, bytes(raw[WIRE_HEADER_SIZE:]))


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError(f"loss probability {self.loss_probability} outside [0, 1]")
        if not 0 <= self.rng_seed <= _MASK64:
            raise ValueError("rng_seed must fit in an unsigned 64-bit integer")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def packetize(data: np.ndarray, params: QuantParams, frame_id: int = 0) -> list[Packet]:
    data = np.asarray(data)
    if data.ndim != 2 or data.dtype != np.uint8:
        raise PacketError("packetize expects a 2-D uint8 grid")
    height, width = data.shape
    if height % ROWS_PER_PACKET:
        raise PacketError(f"grid height {height} is not a multiple of {ROWS_PER_PACKET}")
    total = height // ROWS_PER_PACKET
    return [
        Packet(frame_id, seq, total, seq * ROWS_PER_PACKET, ROWS_PER_PACKET, width,
               params.lo, params.hi,
               data[seq * ROWS_PER_PACKET:(seq + 1) * ROWS_PER_PACKET].tobytes())
        for seq in range(total)
    ]


def drop_pattern(count: int, config: ChannelConfig) -> np.ndarray:
    """Boolean array, True where packet ``seq`` is lost."""
    rng = SplitMix64(config.rng_seed)
    p = config.loss_probability
    return np.array([rng.next_unit() < p for _ in range(count)], dtype=bool)


def drop(packets, config: ChannelConfig) -> list[Packet]:
    """Independently discard each packet with probability ``p``.

    Decisions depend only on (seed, p, seq), never on frame_id or arrival order.
    """
    packets = list(packets)
    if not packets:
        return []
    lost = drop_pattern(max(pkt.seq for pkt in packets) + 1, config)
    return [pkt for pkt in packets if not lost[pkt.seq]]


def reassemble(packets, total: int, dims: tuple[int, int]):
    """Rebuild ``(bytes, loss_mask, QuantParams)`` from whatever arrived.

    Missing rows are zero-filled and flagged True in the mask.  Duplicates keep
    the first arrival and raise a :class:`DuplicatePacketWarning`.
    """
    height, width = dims
    if height != total * ROWS_PER_PACKET:
        raise PacketError(f"height {height} does not match {total} packets of {ROWS_PER_PACKET} rows")
    data = np.zeros((height, width), dtype=np.uint8)
    mask = np.ones((height, width), dtype=bool)
    first = None
    seen = set()
    for pkt in packets:
        if first is None:
            first = pkt
        elif (pkt.frame_id, pkt.total, pkt.width, pkt.lo, pkt.hi) != \
                (first.frame_id, first.total, first.width, first.lo, first.hi):
            raise PacketError(f"packet seq {pkt.seq} header conflicts with seq {first.seq}")
        if pkt.total != total or pkt.width != width:
            raise PacketError(f"packet seq {pkt.seq} geometry disagrees with the expected mosaic")
        if pkt.seq in seen:
            warnings.warn(f"duplicate packet seq {pkt.seq} ignored", DuplicatePacketWarning, stacklevel=2)
            continue
        seen.add(pkt.seq)
        rows = slice(pkt.row_offset, pkt.row_offset + pkt.rows)
        data[rows] = np.frombuffer(pkt.payload, dtype=np.uint8).reshape(pkt.rows, width)
        mask[rows] = False
    params = first.quant if first is not None else QuantParams(0.0, 0.0)
    return data, mask, params


def transport_loopback(packets, config: ChannelConfig, timeout: float = 2.0) -> list[Packet]:
    """Send packets through a loopback UDP socket, dropping per ``config``.

    Returns the packets that were received, in arrival order.
    """
    packets = list(packets)
    survivors = drop(packets, config)
    try:
        rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rx.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        rx.bind(("127.0.0.1", 0))
        rx.settimeout(timeout)
        addr = rx.getsockname()
    except OSError as exc:
        raise TransportError(f"could not open receive socket: {exc}") from exc

    received: list[Packet] = []
    errors: list[BaseException] = []

    def receive():
        try:
            while True:
                raw, _ = rx.recvfrom(65535)
                if raw == _END_MARKER:
                    return
                received.append(Packet.from_bytes(raw))
        except socket.timeout:
            log.warning("loopback receiver timed out after %d packets", len(received))
        except (OSError, PacketError) as exc:
            errors.append(exc)

    worker = threading.Thread(target=receive, name="loopback-rx")
    worker.start()
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as tx:
            for pkt in survivors:
                tx.sendto(pkt.to_bytes(), addr)
            tx.sendto(_END_MARKER, addr)
    except OSError as exc:
        errors.append(exc)
    finally:
        worker.join()
        rx.close()
    if errors:
        raise TransportError(f"loopback transport failed: {errors[0]}") from errors[0]
    return received
