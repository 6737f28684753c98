"""Audio decoding, resampling, and level normalization.

Decodes RIFF/WAVE files (PCM 16-bit or IEEE float 32-bit, mono/stereo) into
an immutable mono float buffer, resamples with a Kaiser-windowed sinc
filter, and normalizes RMS level so clip volume does not leak into
level-sensitive features unless explicitly wanted.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import AudioError

CANONICAL_RATE_HZ = 16000
DEFAULT_TARGET_RMS = 0.05
MIN_TARGET_RATE_HZ = 8000

# Kaiser-windowed sinc resampler: 64 taps per phase, cutoff at 0.45 of the
# lower Nyquist, beta 8.6 (~90 dB stopband).
_TAPS_PER_PHASE = 64
_HALF_WIDTH = _TAPS_PER_PHASE // 2
_CUTOFF_FRACTION = 0.45
_KAISER_BETA = 8.6

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE

PathLike = Union[str, Path]


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample buffer with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    clip_id: str = ""

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise AudioError("buffer needs at least one sample")
        if self.sample_rate_hz <= 0:
            raise AudioError(f"bad sample rate {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise AudioError("buffer contains NaN/Inf samples")
        peak = float(np.max(np.abs(samples)))
        if peak > 1.0:
            raise AudioError(f"samples exceed [-1, 1] (peak {peak:.6g})")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))


def _read_exact(data: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(data):
        raise AudioError(f"truncated file: {what} extends past end of file")
    return data[offset:offset + count]


def load_wav(path: PathLike, clip_id: str = "") -> AudioBuffer:
    """Decode a RIFF/WAVE file to a mono buffer at its original rate.

    Supports PCM 16-bit and IEEE float 32-bit, 1-2 channels. Stereo is
    averaged to mono; int samples are scaled by 1/32768; float samples with
    peaks above 1.0 are scaled down to peak 1.0.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioError(f"file not found: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_offset = offset + 8
        if chunk_id == b"fmt ":
            body = _read_exact(data, body_offset, min(chunk_size, 16), "fmt chunk")
            if len(body) < 16:
                raise AudioError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE and chunk_size >= 40:
                ext = _read_exact(data, body_offset, 26, "fmt extension")
                (sub_format,) = struct.unpack_from("<H", ext, 24)
                fmt = (sub_format,) + fmt[1:]
        elif chunk_id == b"data":
            payload = _read_exact(data, body_offset, chunk_size, "data chunk")
        offset = body_offset + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise AudioError(f"{path}: missing fmt chunk")
    if payload is None:
        raise AudioError(f"{path}: missing data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise AudioError(f"{path}: unsupported channel count {channels}")
    if len(payload) == 0:
        raise AudioError(f"{path}: empty audio (zero-length data chunk)")

    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        frame_bytes = 2 * channels
        usable = len(payload) - len(payload) % frame_bytes
        if usable == 0:
            raise AudioError(f"{path}: data chunk shorter than one frame")
        raw = np.frombuffer(payload[:usable], dtype="<i2").astype(np.float64)
        samples = raw / 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        frame_bytes = 4 * channels
        usable = len(payload) - len(payload) % frame_bytes
        if usable == 0:
            raise AudioError(f"{path}: data chunk shorter than one frame")
        samples = np.frombuffer(payload[:usable], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise AudioError(f"{path}: non-finite float samples")
    else:
        raise AudioError(
            f"{path}: unsupported encoding (format 0x{audio_format:04x}, "
            f"{bits}-bit); need PCM16 or float32"
        )

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak > 1.0:
        samples = samples / peak
    return AudioBuffer(samples=samples, sample_rate_hz=sample_rate,
                       clip_id=clip_id or path.stem)


def save_wav(buf: AudioBuffer, path: PathLike) -> None:
    """Write a buffer as mono 16-bit PCM."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1, buf.sample_rate_hz,
        buf.sample_rate_hz * 2, 2, 16,
    )
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def _phase_filters(n_phases: int, cutoff_norm: float) -> np.ndarray:
    """(n_phases, taps) filter bank; row r interpolates at fraction r/L."""
    offsets = np.arange(-(_HALF_WIDTH - 1), _HALF_WIDTH + 1, dtype=np.float64)
    fracs = np.arange(n_phases, dtype=np.float64)[:, None] / n_phases
    t = fracs - offsets[None, :]
    kernel = 2.0 * cutoff_norm * np.sinc(2.0 * cutoff_norm * t)
    inside = np.abs(t) <= _HALF_WIDTH
    arg = np.zeros_like(t)
    arg[inside] = 1.0 - (t[inside] / _HALF_WIDTH) ** 2
    window = np.where(inside, np.i0(_KAISER_BETA * np.sqrt(arg)) / np.i0(_KAISER_BETA), 0.0)
    filters = kernel * window
    return filters / filters.sum(axis=1, keepdims=True)


def resample(buf: AudioBuffer, target_hz: int) -> AudioBuffer:
    """Band-limited resampling to ``target_hz`` (identity if already there).

    Output length is round(n * target / source), so duration is preserved
    within one output sample period. Values are hard-clipped to [-1, 1]
    against sinc overshoot.
    """
    if target_hz < MIN_TARGET_RATE_HZ:
        raise AudioError(f"target rate {target_hz} below minimum {MIN_TARGET_RATE_HZ}")
    source_hz = buf.sample_rate_hz
    if target_hz == source_hz:
        return buf

    g = math.gcd(source_hz, target_hz)
    up, down = target_hz // g, source_hz // g
    cutoff_norm = _CUTOFF_FRACTION * min(source_hz, target_hz) / source_hz
    filters = _phase_filters(up, cutoff_norm)

    n_in = buf.samples.size
    n_out = int(round(n_in * target_hz / source_hz))
    n_out = max(n_out, 1)
    positions = np.arange(n_out, dtype=np.int64) * down
    base = positions // up
    phase = positions % up

    padded = np.concatenate([
        np.zeros(_HALF_WIDTH - 1), buf.samples, np.zeros(_HALF_WIDTH + 1),
    ])
    out = np.zeros(n_out, dtype=np.float64)
    for tap in range(_TAPS_PER_PHASE):
        out += padded[base + tap] * filters[phase, tap]
    np.clip(out, -1.0, 1.0, out=out)
    return AudioBuffer(samples=out, sample_rate_hz=target_hz, clip_id=buf.clip_id)


def normalize_rms(buf: AudioBuffer, target_rms: float = DEFAULT_TARGET_RMS) -> AudioBuffer:
    """Scale to the target RMS, peak-limiting to 0.99 if scaling would clip."""
    if target_rms <= 0:
        raise AudioError(f"target RMS must be > 0, got {target_rms}")
    rms = buf.rms()
    if rms == 0.0:
        raise AudioError("silent clip: RMS is zero")
    scale = target_rms / rms
    peak = float(np.max(np.abs(buf.samples)))
    if peak * scale > 1.0:
        scale = 0.99 / peak
    if scale == 1.0:
        return buf
    return AudioBuffer(samples=buf.samples * scale,
                       sample_rate_hz=buf.sample_rate_hz, clip_id=buf.clip_id)
