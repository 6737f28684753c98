"""Frame-level low-level descriptors (LLDs) for 16 kHz mono speech.

One row per 25 ms frame at a 10 ms hop. Columns cover prosody (F0, voicing),
energy, spectral shape, sound-quality measures (HNR, jitter, shimmer), and
13 MFCCs, plus first-order deltas of every non-flag column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio import AudioBuffer
from .errors import FeatureError

SAMPLE_RATE_HZ = 16000
FRAME_LEN = 400          # 25 ms
HOP_LEN = 160            # 10 ms
FFT_SIZE = 512
N_MELS = 26
N_MFCC = 13

# F0 tracker: 40 ms analysis window centered on each frame, autocorrelation
# peak in the 50-500 Hz lag range, parabolic refinement of the peak.
F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
F0_WINDOW = 640
VOICING_ACF_THRESHOLD = 0.45
VOICING_RMS_THRESHOLD = 0.01
F0_MEDIAN_WIDTH = 5

BASE_COLUMNS = (
    "F0_hz", "voicing_flag", "rms_energy", "zcr",
    "spectral_centroid_hz", "spectral_rolloff85_hz", "spectral_flux",
    "spectral_slope", "hnr_db", "jitter_local", "shimmer_local",
) + tuple(f"mfcc_{i}" for i in range(1, N_MFCC + 1))

DELTA_COLUMNS = tuple(f"{c}_delta" for c in BASE_COLUMNS if c != "voicing_flag")

LLD_COLUMNS = BASE_COLUMNS + DELTA_COLUMNS

# Functionals over voiced frames only; everything else pools all frames.
VOICED_ONLY_COLUMNS = frozenset(
    c for c in LLD_COLUMNS
    if c.split("_delta")[0] in ("F0_hz", "hnr_db", "jitter_local", "shimmer_local")
)


@dataclass(frozen=True)
class LLDMatrix:
    """Frame-by-descriptor matrix with a fixed column inventory."""

    values: np.ndarray
    columns: tuple = LLD_COLUMNS

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise FeatureError(
                f"LLD matrix must be frames x {len(self.columns)}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise FeatureError("LLD matrix contains NaN/Inf")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def frame_count(num_samples: int) -> int:
    if num_samples < FRAME_LEN:
        return 0
    return (num_samples - FRAME_LEN) // HOP_LEN + 1


def _frames(x: np.ndarray, n_frames: int) -> np.ndarray:
    idx = np.arange(n_frames)[:, None] * HOP_LEN + np.arange(FRAME_LEN)[None, :]
    return x[idx]


def _mel_filterbank() -> np.ndarray:
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges_hz = from_mel(np.linspace(0.0, to_mel(SAMPLE_RATE_HZ / 2), N_MELS + 2))
    bin_hz = np.arange(FFT_SIZE // 2 + 1) * SAMPLE_RATE_HZ / FFT_SIZE
    bank = np.zeros((N_MELS, FFT_SIZE // 2 + 1))
    for m in range(N_MELS):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


_MEL_BANK = _mel_filterbank()


def _median_filter_track(track: np.ndarray, width: int) -> np.ndarray:
    # Shrinking windows at the edges, so short voiced runs are not padded
    # with artificial values.
    half = width // 2
    out = np.empty_like(track)
    for i in range(track.size):
        lo = max(0, i - half)
        hi = min(track.size, i + half + 1)
        out[i] = np.median(track[lo:hi])
    return out


def _f0_hnr(x: np.ndarray, n_frames: int, frame_rms: np.ndarray):
    """Autocorrelation pitch track with voicing decision and HNR."""
    lag_min = int(np.floor(SAMPLE_RATE_HZ / F0_MAX_HZ))
    lag_max = int(np.ceil(SAMPLE_RATE_HZ / F0_MIN_HZ))
    half = F0_WINDOW // 2

    centers = np.arange(n_frames) * HOP_LEN + FRAME_LEN // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half)])
    idx = (centers[:, None] + np.arange(-half, half)[None, :]) + half
    windows = padded[idx]
    windows = windows - windows.mean(axis=1, keepdims=True)

    fft_n = 1
    while fft_n < F0_WINDOW + lag_max + 1:
        fft_n *= 2
    spec = np.fft.rfft(windows, n=fft_n, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=fft_n, axis=1)[:, :lag_max + 2]

    r0 = acf[:, 0].copy()
    dead = r0 <= 0.0
    r0[dead] = 1.0
    norm = acf / r0[:, None]

    search = norm[:, lag_min:lag_max + 1]
    best = np.argmax(search, axis=1) + lag_min
    peak = norm[np.arange(n_frames), best]

    voiced = (peak > VOICING_ACF_THRESHOLD) & (frame_rms > VOICING_RMS_THRESHOLD) & ~dead

    # Parabolic refinement: an integer-lag peak alone is too coarse for
    # tone-accuracy at the upper end of the search range.
    lag = best.astype(np.float64)
    can_interp = (best > lag_min) & (best < lag_max)
    b = best[can_interp]
    rows = np.arange(n_frames)[can_interp]
    y0 = norm[rows, b - 1]
    y1 = norm[rows, b]
    y2 = norm[rows, b + 1]
    denom = y0 - 2.0 * y1 + y2
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (y0 - y2) / denom, 0.0)
    lag[can_interp] = b + np.clip(shift, -0.5, 0.5)

    f0 = np.zeros(n_frames)
    f0[voiced] = np.clip(SAMPLE_RATE_HZ / lag[voiced], F0_MIN_HZ, F0_MAX_HZ)
    if np.count_nonzero(voiced) > 0:
        f0[voiced] = _median_filter_track(f0[voiced], F0_MEDIAN_WIDTH)

    rho = np.clip(peak, 1e-6, 1.0 - 1e-6)
    hnr = np.zeros(n_frames)
    hnr[voiced] = 10.0 * np.log10(rho[voiced] / (1.0 - rho[voiced]))
    return f0, voiced.astype(np.float64), hnr


def _perturbation(series: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Relative change between consecutive voiced frames, 0 elsewhere."""
    out = np.zeros_like(series)
    pair = (voiced[1:] > 0) & (voiced[:-1] > 0)
    a, b = series[:-1][pair], series[1:][pair]
    mean = (a + b) / 2.0
    safe = mean > 0
    rel = np.zeros(pair.sum())
    rel[safe] = np.abs(b[safe] - a[safe]) / mean[safe]
    out[1:][pair] = rel
    return out


def _deltas(values: np.ndarray) -> np.ndarray:
    """Symmetric first difference, one-sided at the edges."""
    d = np.empty_like(values)
    if values.shape[0] == 1:
        d[:] = 0.0
        return d
    d[1:-1] = (values[2:] - values[:-2]) / 2.0
    d[0] = values[1] - values[0]
    d[-1] = values[-1] - values[-2]
    return d


def extract_llds(buf: AudioBuffer) -> LLDMatrix:
    """Compute the full per-frame descriptor matrix for a 16 kHz buffer."""
    if buf.sample_rate_hz != SAMPLE_RATE_HZ:
        raise FeatureError(
            f"expected {SAMPLE_RATE_HZ} Hz input, got {buf.sample_rate_hz}; resample first"
        )
    x = buf.samples
    n_frames = frame_count(x.size)
    if n_frames == 0:
        raise FeatureError(f"too short: {x.size} samples, need at least {FRAME_LEN}")

    frames = _frames(x, n_frames)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    signs = frames >= 0.0
    zcr = np.mean(signs[:, 1:] != signs[:, :-1], axis=1)

    window = np.hanning(FRAME_LEN)
    spec = np.abs(np.fft.rfft(frames * window, n=FFT_SIZE, axis=1))
    freqs = np.arange(FFT_SIZE // 2 + 1) * SAMPLE_RATE_HZ / FFT_SIZE

    mag_total = spec.sum(axis=1)
    live = mag_total > 0
    centroid = np.zeros(n_frames)
    centroid[live] = (spec[live] * freqs[None, :]).sum(axis=1) / mag_total[live]

    cum = np.cumsum(spec, axis=1)
    rolloff = np.zeros(n_frames)
    if live.any():
        target = 0.85 * mag_total[live]
        hit = np.argmax(cum[live] >= target[:, None], axis=1)
        rolloff[live] = freqs[hit]

    unit = spec / np.maximum(mag_total, 1e-12)[:, None]
    flux = np.zeros(n_frames)
    if n_frames > 1:
        flux[1:] = np.sqrt(((unit[1:] - unit[:-1]) ** 2).sum(axis=1))

    # Spectral slope as dB-per-Hz tilt of the log-magnitude spectrum.
    log_spec = 20.0 * np.log10(spec + 1e-10)
    fc = freqs - freqs.mean()
    slope = (log_spec * fc[None, :]).sum(axis=1) / (fc ** 2).sum()

    mel_energy = spec ** 2 @ _MEL_BANK.T
    log_mel = np.log(mel_energy + 1e-10)
    mfcc = dct(log_mel, type=2, norm="ortho", axis=1)[:, 1:N_MFCC + 1]

    f0, voicing, hnr = _f0_hnr(x, n_frames, rms)
    periods = np.zeros(n_frames)
    periods[voicing > 0] = 1.0 / f0[voicing > 0]
    jitter = _perturbation(periods, voicing)
    shimmer = _perturbation(rms, voicing)

    base = np.column_stack([
        f0, voicing, rms, zcr, centroid, rolloff, flux, slope,
        hnr, jitter, shimmer, mfcc,
    ])
    keep = [i for i, c in enumerate(BASE_COLUMNS) if c != "voicing_flag"]
    return LLDMatrix(values=np.hstack([base, _deltas(base[:, keep])]))
