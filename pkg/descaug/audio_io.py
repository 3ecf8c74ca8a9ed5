"""
WAV decoding/encoding and canonicalization.

Everything downstream works on mono float64 samples at one canonical rate;
`canonicalize` is the single entry point that gets a decoded file there.
"""

import io
import logging
import struct
from dataclasses import dataclass
from fractions import Fraction
from math import floor, gcd
from pathlib import Path
from typing import NamedTuple, Tuple

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

from .errors import (
    AppError,
    ErrorContext,
    ErrorType,
    decode_error,
    ensure,
    io_error,
    unsupported_format_error,
)

logger = logging.getLogger(__name__)

CANONICAL_RATE = 48000

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

BIT_DEPTHS = ("pcm16", "float32")

# Minimum half-length of the resampling kernel; 2*32+1 = 65 taps.
MIN_HALF_TAPS = 32


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Samples plus sample rate.

    `samples` is 1-D for mono audio or (frames, channels) for the
    multi-channel intermediate produced by decode_wav.
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim not in (1, 2):
            raise AppError(f"samples must be 1-D or 2-D, got {samples.ndim}-D", ErrorType.INVALID_INPUT)
        if not np.all(np.isfinite(samples)):
            raise AppError("samples contain NaN or Inf", ErrorType.INVALID_INPUT)
        if int(self.sample_rate) <= 0 or int(self.sample_rate) != self.sample_rate:
            raise AppError(f"sample_rate must be a positive integer, got {self.sample_rate}",
                           ErrorType.INVALID_INPUT)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else int(self.samples.shape[1])

    @property
    def is_mono(self) -> bool:
        return self.samples.ndim == 1

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


class EncodedWav(NamedTuple):
    data: bytes
    clipped: int


def _read_fmt(chunk: bytes, offset: int) -> Tuple[int, int, int, int, int]:
    if len(chunk) < 16:
        raise decode_error("fmt chunk shorter than 16 bytes", offset)
    fmt_tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", chunk, 0)
    if fmt_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(chunk) < 40:
            raise decode_error("extensible fmt chunk shorter than 40 bytes", offset)
        # first two bytes of the sub-format GUID carry the real format tag
        fmt_tag = struct.unpack_from("<H", chunk, 24)[0]
    return fmt_tag, channels, rate, block_align, bits


def _pcm24_to_float(raw: bytes) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    values = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    values = np.where(values & 0x800000, values - 0x1000000, values)
    return values / float(1 << 23)


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE byte string (PCM16, PCM24 or float32).

    Returns a mono buffer for one channel, (frames, channels) otherwise.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise decode_error("missing RIFF/WAVE header", 0)

    fmt = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4]
        size = struct.unpack_from("<I", data, offset + 4)[0]
        body_start = offset + 8
        body_end = body_start + size
        if chunk_id == b"fmt ":
            if body_end > len(data):
                raise decode_error("fmt chunk truncated", offset)
            fmt = _read_fmt(data[body_start:body_end], offset)
        elif chunk_id == b"data":
            if fmt is None:
                raise decode_error("data chunk before fmt chunk", offset)
            if body_end > len(data):
                raise decode_error(f"data chunk truncated ({len(data) - body_start} of {size} bytes)",
                                   offset)
            return _decode_samples(data[body_start:body_end], fmt, offset)
        # chunks are word aligned
        offset = body_end + (size & 1)

    if fmt is None:
        raise decode_error("no fmt chunk", offset)
    raise decode_error("no data chunk", offset)


def _decode_samples(raw: bytes, fmt: Tuple[int, int, int, int, int], offset: int) -> AudioBuffer:
    fmt_tag, channels, rate, block_align, bits = fmt
    if channels == 0:
        raise decode_error("zero channels", offset)
    if rate == 0:
        raise decode_error("zero sample rate", offset)

    if fmt_tag == WAVE_FORMAT_PCM and bits == 16:
        width, convert = 2, lambda r: np.frombuffer(r, dtype="<i2") / 32768.0
    elif fmt_tag == WAVE_FORMAT_PCM and bits == 24:
        width, convert = 3, _pcm24_to_float
    elif fmt_tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        width, convert = 4, lambda r: np.frombuffer(r, dtype="<f4").astype(np.float64)
    else:
        kind = {WAVE_FORMAT_PCM: "PCM", WAVE_FORMAT_IEEE_FLOAT: "float"}.get(fmt_tag, f"format 0x{fmt_tag:04x}")
        raise unsupported_format_error(f"{kind} {bits}-bit")

    frame_bytes = width * channels
    if block_align and block_align != frame_bytes:
        raise decode_error(f"block_align {block_align} does not match {channels}x{bits}-bit frames", offset)
    if len(raw) % frame_bytes:
        raise decode_error(f"data size {len(raw)} is not a whole number of frames", offset)

    samples = convert(raw)
    if not np.all(np.isfinite(samples)):
        raise decode_error("non-finite float samples", offset)
    if channels > 1:
        samples = samples.reshape(-1, channels)
    return AudioBuffer(samples, rate)


def to_mono(buf: AudioBuffer) -> AudioBuffer:
    """Unweighted mean across channels; mono input is returned as is."""
    if buf.is_mono:
        return buf
    ensure(buf.samples.shape[1] > 0, "cannot downmix a buffer with zero channels")
    return buf.with_samples(buf.samples.mean(axis=1))


def _round_half_up(value: Fraction) -> int:
    return floor(value + Fraction(1, 2))


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited polyphase resampling with a Kaiser-windowed sinc kernel."""
    ensure(target_rate > 0, f"target_rate must be positive, got {target_rate}", ErrorType.INVALID_PARAMETER)
    if target_rate == buf.sample_rate:
        return buf

    g = gcd(int(target_rate), buf.sample_rate)
    up, down = int(target_rate) // g, buf.sample_rate // g
    max_rate = max(up, down)
    half_len = max(10 * max_rate, MIN_HALF_TAPS)
    kernel = firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", 5.0))

    out_len = _round_half_up(Fraction(len(buf) * int(target_rate), buf.sample_rate))
    if len(buf) == 0:
        return AudioBuffer(buf.samples[:0], int(target_rate))

    out = resample_poly(buf.samples, up, down, axis=0, window=kernel)
    if out.shape[0] >= out_len:
        out = out[:out_len]
    else:
        pad = [(0, out_len - out.shape[0])] + [(0, 0)] * (out.ndim - 1)
        out = np.pad(out, pad)
    return AudioBuffer(out, int(target_rate))


def canonicalize(buf: AudioBuffer, rate: int = CANONICAL_RATE) -> AudioBuffer:
    """Mono at the canonical rate."""
    return resample(to_mono(buf), rate)


def write_wav(buf: AudioBuffer, bit_depth: str = "float32") -> EncodedWav:
    """Encode to RIFF/WAVE bytes; out-of-range samples are clipped and counted."""
    if bit_depth not in BIT_DEPTHS:
        raise AppError(f"bit_depth must be one of {BIT_DEPTHS}, got {bit_depth!r}",
                       ErrorType.INVALID_PARAMETER, ErrorContext(operation="write_wav"))

    clipped = int(np.count_nonzero(np.abs(buf.samples) > 1.0))
    samples = np.clip(buf.samples, -1.0, 1.0)
    if clipped:
        logger.warning("Clipped %d samples while encoding WAV", clipped)

    if bit_depth == "pcm16":
        encoded = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    else:
        encoded = samples.astype("<f4")

    out = io.BytesIO()
    wavfile.write(out, buf.sample_rate, encoded)
    return EncodedWav(out.getvalue(), clipped)


def load_audio(path: Path) -> AudioBuffer:
    """Read and decode a WAV file from disk."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise io_error(str(path), "read_audio", e)
    try:
        return decode_wav(data)
    except AppError as e:
        raise e.with_context(file_path=str(path))


def save_audio(path: Path, buf: AudioBuffer, bit_depth: str = "float32") -> int:
    """Write a WAV file and return the number of clipped samples."""
    path = Path(path)
    encoded = write_wav(buf, bit_depth)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encoded.data)
    except OSError as e:
        raise io_error(str(path), "write_audio", e)
    return encoded.clipped
