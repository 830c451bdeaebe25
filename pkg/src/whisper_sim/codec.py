"""Signaling-packet framing.

A signaling packet is a back-to-back train of packlets. Every packlet looks
like a complete 802.15.4 frame (preamble, SFD, length, payload, FCS) so that a
receiver waking up anywhere in the train can lock onto the next one.

Byte layout of one packlet (defaults)::

    00 00 | a7 | 03 | cc | ff ff
    preamble SFD  len  counter FCS (little-endian)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

PREAMBLE_BYTE = 0x00
DEFAULT_SFD = 0xA7
FCS_LEN = 2
MAX_COUNTER = 255

# Reflected form of x^16 + x^12 + x^5 + 1 (bits are shifted out LSB first).
_POLY_REFLECTED = 0x8408


class TxMode(enum.Enum):
    """How the radio serializes the signaling packet."""

    LOOPING = "looping"  # length field ignored by the radio; every packlet is packlet-sized
    BUFFERED = "buffered"  # first length field covers the whole packet; hardware appends a footer


@dataclass(frozen=True)
class PackletConfig:
    preamble_len: int = 2
    sfd: int = DEFAULT_SFD
    payload_len: int = 1
    bitrate: int = 250_000

    def __post_init__(self) -> None:
        if not 1 <= self.preamble_len <= 8:
            raise ValueError(f"preamble_len must be in 1..8, got {self.preamble_len}")
        if self.payload_len < 1:
            raise ValueError("payload_len must be >= 1")
        if not 0 <= self.sfd <= 0xFF:
            raise ValueError("sfd must be a single byte")
        if self.bitrate <= 0:
            raise ValueError("bitrate must be positive")

    @property
    def size_bytes(self) -> int:
        return self.preamble_len + 1 + 1 + self.payload_len + FCS_LEN

    @property
    def length_field(self) -> int:
        """Length byte of a packlet-sized frame: payload plus FCS."""
        return self.payload_len + FCS_LEN

    @property
    def byte_ns(self) -> int:
        return _exact_ns(8, self.bitrate)


@dataclass(frozen=True)
class Packlet:
    counter: int
    length_field: int
    fcs: bytes
    data: bytes = b""


@dataclass(frozen=True)
class SignalingPacket:
    config: PackletConfig
    n_tx: int
    start_counter: int = 0
    mode: TxMode = TxMode.LOOPING

    def to_bytes(self, data: bytes = b"") -> bytes:
        return build_signaling_packet(self.config, self.n_tx, self.start_counter, self.mode, data)

    @property
    def counters(self) -> range:
        return range(self.start_counter, self.start_counter + self.n_tx)


def _exact_ns(bits: int, bitrate: int) -> int:
    num = bits * 1_000_000_000
    if num % bitrate:
        raise ValueError(f"{bits} bits at {bitrate} bit/s is not a whole number of nanoseconds")
    return num // bitrate


def _make_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _POLY_REFLECTED if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_FCS_TABLE = _make_table()


def fcs_value(payload: bytes) -> int:
    """16-bit ITU-T CRC as used for the 802.15.4 FCS (init 0, LSB first)."""
    crc = 0
    table = _FCS_TABLE
    for byte in payload:
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc


def compute_fcs(payload: bytes) -> bytes:
    """Return the 2-byte FCS in on-air order (low byte first)."""
    if not payload:
        raise ValueError("payload must be non-empty")
    return fcs_value(payload).to_bytes(2, "little")


def packlet_duration(config: PackletConfig) -> int:
    """Air time of one packlet in integer nanoseconds."""
    return _exact_ns(config.size_bytes * 8, config.bitrate)


def packlet_bytes(config: PackletConfig, counter: int, data: bytes = b"", length_field: int | None = None) -> bytes:
    if not 0 <= counter <= MAX_COUNTER:
        raise ValueError(f"counter {counter} out of range 0..{MAX_COUNTER}")
    if len(data) != config.payload_len - 1:
        raise ValueError(f"packlet data must be {config.payload_len - 1} bytes, got {len(data)}")
    payload = bytes([counter]) + data
    length = config.length_field if length_field is None else length_field
    return (
        bytes([PREAMBLE_BYTE]) * config.preamble_len
        + bytes([config.sfd, length])
        + payload
        + compute_fcs(payload)
    )


def build_signaling_packet(
    config: PackletConfig,
    n_tx: int,
    start_counter: int = 0,
    mode: TxMode = TxMode.LOOPING,
    data: bytes = b"",
) -> bytes:
    """Serialize ``n_tx`` back-to-back packlets starting at ``start_counter``.

    In buffered mode the first length field announces the number of bytes the
    radio sends after it (all remaining packlets plus the trailing footer), and
    the footer is appended as the FCS over those bytes.
    """
    if n_tx < 1:
        raise ValueError("n_tx must be >= 1")
    if start_counter < 0 or start_counter + n_tx > MAX_COUNTER + 1:
        raise ValueError(
            f"counters {start_counter}..{start_counter + n_tx - 1} exceed the 1-byte range"
        )
    parts = [packlet_bytes(config, start_counter + k, data) for k in range(n_tx)]
    if mode is TxMode.LOOPING:
        return b"".join(parts)

    header = config.preamble_len + 2
    remaining = n_tx * config.size_bytes - header + FCS_LEN
    first = bytearray(parts[0])
    first[config.preamble_len + 1] = remaining
    body = bytes(first[header:]) + b"".join(parts[1:])
    return bytes(first[:header]) + body + fcs_value(body).to_bytes(2, "little")


def first_length_field(config: PackletConfig, n_tx: int) -> int:
    """Length field a buffered-mode signaling packet of ``n_tx`` packlets carries."""
    return n_tx * config.size_bytes - (config.preamble_len + 2) + FCS_LEN


def scan_for_packlet(
    stream: bytes,
    start_bit_offset: int = 0,
    config: PackletConfig = PackletConfig(),
) -> tuple[Packlet, int] | None:
    """Find the first decodable packlet whose sync header starts at or after the offset.

    A receiver needs at least one whole preamble byte followed by the SFD. The
    candidate must also carry a packlet-sized length field and a valid FCS;
    anything else is skipped (that packlet is dropped) and scanning resumes.
    Returns the packlet and the bit offset just past it.
    """
    if start_bit_offset < 0:
        raise ValueError("start_bit_offset must be >= 0")
    # First byte index whose whole 8 bits lie at or after the offset.
    first_preamble = -(-start_bit_offset // 8)
    sfd = config.sfd
    want_len = config.length_field
    pl = config.payload_len
    i = first_preamble + 1
    end = len(stream)
    while i < end:
        i = stream.find(bytes([sfd]), i)
        if i < 0:
            return None
        if stream[i - 1] == PREAMBLE_BYTE and i + 2 + want_len <= end and stream[i + 1] == want_len:
            payload = stream[i + 2 : i + 2 + pl]
            fcs = stream[i + 2 + pl : i + 2 + want_len]
            if compute_fcs(payload) == fcs:
                packlet = Packlet(counter=payload[0], length_field=want_len, fcs=bytes(fcs), data=bytes(payload[1:]))
                return packlet, (i + 2 + want_len) * 8
        i += 1
    return None


@lru_cache(maxsize=4096)
def decode_frame(frame: bytes, config: PackletConfig) -> Packlet | None:
    """Decode a single on-air frame segment, or None if a receiver would drop it."""
    found = scan_for_packlet(frame, 0, config)
    if found is None or found[1] != len(frame) * 8:
        return None
    return found[0]


def hexdump(stream: bytes, config: PackletConfig = PackletConfig()) -> str:
    """Lowercase, space-separated hex with one packlet per line.

    Anything past the last whole packlet (the buffered-mode footer) goes on a
    final line of its own.
    """
    size = config.size_bytes
    lines = []
    for k in range(0, len(stream), size):
        chunk = stream[k : k + size]
        lines.append(" ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines)
