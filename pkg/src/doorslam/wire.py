"""16-byte event frame sent as a BLE notification payload, and a resynchronizing stream decoder.

Layout (little-endian):

    offset  size  field
    0       1     magic 0xD5
    1       1     version 0x01
    2       2     device_id
    4       2     seq (wraps at 65536)
    6       4     timestamp_ms
    10      1     label (0 = normal, 1 = slam)
    11      1     confidence_q8 = round(confidence * 255)
    12      2     peak_accel_milli_g (saturates at 65535)
    14      2     CRC-16/CCITT-FALSE over bytes 0..13
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass, field

MAGIC = 0xD5
VERSION = 0x01
FRAME_SIZE = 16
BLE_NOTIFY_MAX = 20  # ATT payload without MTU negotiation on BLE 4.x

_BODY = struct.Struct("<BBHHIBBH")
_CRC = struct.Struct("<H")


class FrameError(ValueError):
    pass


class FrameLengthError(FrameError):
    pass


class UnsupportedFrameError(FrameError):
    pass


class FrameCorruptionError(FrameError):
    pass


def crc16_ccitt_false(data: bytes) -> int:
    # crc_hqx is poly 0x1021, unreflected, no xor-out; the init value makes it CCITT-FALSE
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class EventFrame:
    device_id: int
    seq: int
    timestamp_ms: int
    label: int
    confidence_q8: int
    peak_accel_milli_g: int

    @property
    def confidence(self) -> float:
        return self.confidence_q8 / 255.0

    @property
    def peak_accel_g(self) -> float:
        return self.peak_accel_milli_g / 1000.0


def quantize_confidence(confidence: float) -> int:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must be in [0, 1], got {confidence}")
    return int(confidence * 255.0 + 0.5)


def quantize_peak(peak_g: float) -> int:
    if not peak_g >= 0:
        raise ValueError(f"peak acceleration must be non-negative, got {peak_g}")
    return min(65535, int(peak_g * 1000.0 + 0.5))


def make_frame(device_id: int, seq: int, trigger_t_s: float, label: int, confidence: float, peak_accel_g: float) -> EventFrame:
    """Quantize a detection into a frame; seq wraps modulo 2**16."""
    return EventFrame(
        device_id,
        seq % 65536,
        int(round(trigger_t_s * 1000.0)),
        label,
        quantize_confidence(confidence),
        quantize_peak(peak_accel_g),
    )


def _check(frame: EventFrame) -> None:
    if frame.label not in (0, 1):
        raise ValueError(f"label must be 0 (normal) or 1 (slam), got {frame.label}")
    limits = {
        "device_id": 0xFFFF,
        "seq": 0xFFFF,
        "timestamp_ms": 0xFFFFFFFF,
        "confidence_q8": 0xFF,
        "peak_accel_milli_g": 0xFFFF,
    }
    for name, hi in limits.items():
        value = getattr(frame, name)
        if not 0 <= value <= hi:
            raise ValueError(f"{name}={value} outside [0, {hi}]")


def encode(frame: EventFrame) -> bytes:
    _check(frame)
    body = _BODY.pack(
        MAGIC,
        VERSION,
        frame.device_id,
        frame.seq,
        frame.timestamp_ms,
        frame.label,
        frame.confidence_q8,
        frame.peak_accel_milli_g,
    )
    return body + _CRC.pack(crc16_ccitt_false(body))


def decode(data: bytes) -> EventFrame:
    if len(data) != FRAME_SIZE:
        raise FrameLengthError(f"frame must be {FRAME_SIZE} bytes, got {len(data)}")
    magic, version, device_id, seq, ts, label, conf, peak = _BODY.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise UnsupportedFrameError(f"unsupported frame magic/version {magic:#04x}/{version:#04x}")
    (crc,) = _CRC.unpack_from(data, _BODY.size)
    if crc != crc16_ccitt_false(bytes(data[: _BODY.size])):
        raise FrameCorruptionError("CRC mismatch")
    if label not in (0, 1):
        raise FrameCorruptionError(f"label byte {label} out of range")
    return EventFrame(device_id, seq, ts, label, conf, peak)


@dataclass
class StreamDiagnostics:
    skipped_bytes: int = 0
    corrupt_frames: int = 0
    unsupported_frames: int = 0
    messages: list = field(default_factory=list)


class FrameStreamDecoder:
    """Incremental decoder for a byte stream of concatenated frames.

    On a bad frame the cursor advances by one byte and scanning resumes at the
    next magic byte; every byte not consumed by a valid frame counts as skipped.
    """

    def __init__(self):
        self._buf = bytearray()
        self._offset = 0  # absolute stream position of _buf[0]
        self.diagnostics = StreamDiagnostics()

    def feed(self, data: bytes) -> list[EventFrame]:
        self._buf.extend(data)
        frames = []
        i = 0
        buf = self._buf
        diag = self.diagnostics
        while i < len(buf):
            if buf[i] != MAGIC:
                diag.skipped_bytes += 1
                i += 1
                continue
            if len(buf) - i < FRAME_SIZE:
                break  # wait for the rest of a possible frame
            try:
                frames.append(decode(bytes(buf[i : i + FRAME_SIZE])))
                i += FRAME_SIZE
            except FrameError as exc:
                if isinstance(exc, UnsupportedFrameError):
                    diag.unsupported_frames += 1
                else:
                    diag.corrupt_frames += 1
                diag.messages.append(f"offset {self._offset + i}: {exc}")
                diag.skipped_bytes += 1
                i += 1
        del buf[:i]
        self._offset += i
        return frames

    def close(self) -> None:
        """End of stream: a trailing partial frame is counted as skipped."""
        if self._buf:
            self.diagnostics.skipped_bytes += len(self._buf)
            self.diagnostics.messages.append(
                f"offset {self._offset}: {len(self._buf)} trailing byte(s) do not form a frame"
            )
            self._offset += len(self._buf)
            self._buf.clear()


def frame_stream_decode(data: bytes) -> tuple[list[EventFrame], StreamDiagnostics]:
    decoder = FrameStreamDecoder()
    frames = decoder.feed(data)
    decoder.close()
    return frames, decoder.diagnostics
