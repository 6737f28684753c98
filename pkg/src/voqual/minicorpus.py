"""Bundled 12-clip synthetic corpus for end-to-end runs and demos.

Each clip is a harmonic tone with five independent acoustic drivers (pitch,
level, noise mix, frequency tremor, spectral tilt, amplitude tremor); the
seven quality labels are deterministic functions of those drivers, so a
feature-based regressor genuinely has something to learn. Simulated raters
add small biases and noise on top.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from .audio import AudioBuffer, save_wav
from .pq import ALL_PQS, PerceptualQuality

PathLike = Union[str, Path]

N_CLIPS = 12
DURATION_S = 3.0
SAMPLE_RATE_HZ = 16000
DEFAULT_SEED = 20260301

EXPERT_BIAS = {"exp_a": -2.0, "exp_b": 0.0, "exp_c": 2.0}
NONEXPERT_BIAS = {
    "crowd_01": 12.0, "crowd_02": 9.0, "crowd_03": 14.0,
    "crowd_04": 7.0, "crowd_05": 11.0, "crowd_06": 10.0,
}
EXPERT_NOISE_SD = 1.2
NONEXPERT_NOISE_SD = 5.0

# Per-driver clip orderings. Each driver walks its range in a different
# clip order so the drivers stay decorrelated across the 12 clips.
DRIVER_ORDER = {
    "f0": (0, 7, 2, 9, 4, 11, 6, 1, 8, 3, 10, 5),
    "level": (5, 0, 10, 3, 8, 1, 11, 6, 2, 9, 4, 7),
    "noise": (3, 8, 1, 11, 6, 0, 9, 4, 10, 2, 7, 5),
    "tremor": (9, 2, 6, 0, 11, 4, 1, 10, 5, 8, 3, 7),
    "tilt": (6, 11, 4, 8, 0, 10, 2, 7, 3, 5, 9, 1),
    "shimmer": (1, 5, 9, 2, 7, 11, 0, 4, 8, 10, 3, 6),
}

DRIVER_RANGE = {
    "f0": (110.0, 330.0),
    "level": (0.015, 0.12),       # target RMS of the rendered clip
    "noise": (0.03, 0.55),        # noise-to-harmonic amplitude ratio
    "tremor": (0.0, 0.10),        # relative F0 modulation depth at 5.5 Hz
    "tilt": (0.7, 2.2),           # harmonic amplitude falls as k^-tilt
    "shimmer": (0.0, 0.35),       # amplitude modulation depth at 3.7 Hz
}


def clip_drivers(index: int) -> Dict[str, float]:
    out = {}
    for name, order in DRIVER_ORDER.items():
        lo, hi = DRIVER_RANGE[name]
        rank = order.index(index)
        out[name] = lo + (hi - lo) * rank / (N_CLIPS - 1)
    return out


def _unit(value: float, name: str) -> float:
    lo, hi = DRIVER_RANGE[name]
    return (value - lo) / (hi - lo)


def true_labels(drivers: Dict[str, float]) -> Dict[PerceptualQuality, float]:
    """Map drivers to 0-100 labels; each PQ depends mostly on one driver."""
    pitch = _unit(drivers["f0"], "f0")
    level = _unit(drivers["level"], "level")
    noise = _unit(drivers["noise"], "noise")
    tremor = _unit(drivers["tremor"], "tremor")
    tilt = _unit(drivers["tilt"], "tilt")
    shimmer = _unit(drivers["shimmer"], "shimmer")

    def scale(u: float) -> float:
        return 5.0 + 90.0 * u

    return {
        PerceptualQuality.PITCH: scale(pitch),
        PerceptualQuality.LOUDNESS: scale(level),
        PerceptualQuality.BREATHINESS: scale(noise),
        PerceptualQuality.ROUGHNESS: scale(tremor),
        PerceptualQuality.STRAIN: scale(shimmer),
        PerceptualQuality.RESONANCE: scale(1.0 - tilt),
        PerceptualQuality.WEIGHT: scale(0.6 * tilt + 0.4 * (1.0 - pitch)),
    }


def render_clip(index: int, seed: int = DEFAULT_SEED) -> AudioBuffer:
    drivers = clip_drivers(index)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(index,))
    ))
    n = int(DURATION_S * SAMPLE_RATE_HZ)
    t = np.arange(n) / SAMPLE_RATE_HZ

    f_inst = drivers["f0"] * (1.0 + drivers["tremor"] * np.cos(2 * np.pi * 5.5 * t))
    phase = 2 * np.pi * np.cumsum(f_inst) / SAMPLE_RATE_HZ
    harmonic = np.zeros(n)
    for k in range(1, 11):
        if k * drivers["f0"] >= SAMPLE_RATE_HZ / 2:
            break
        harmonic += k ** (-drivers["tilt"]) * np.sin(k * phase)
    harmonic *= 1.0 - drivers["shimmer"] * 0.5 * (1.0 + np.sin(2 * np.pi * 3.7 * t))

    harmonic_rms = np.sqrt(np.mean(harmonic ** 2))
    noise = rng.standard_normal(n) * drivers["noise"] * harmonic_rms
    x = harmonic + noise
    x *= drivers["level"] / np.sqrt(np.mean(x ** 2))
    peak = np.max(np.abs(x))
    if peak > 0.95:
        x *= 0.95 / peak
    return AudioBuffer(samples=x, sample_rate_hz=SAMPLE_RATE_HZ,
                       clip_id=f"mini_{index:02d}")


def _rating_rows(seed: int) -> List[List[str]]:
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(999,))
    ))
    rows: List[List[str]] = []
    minute = 0
    for index in range(N_CLIPS):
        clip_id = f"mini_{index:02d}"
        truth = true_labels(clip_drivers(index))
        for rater, bias in EXPERT_BIAS.items():
            for trial in (1, 2):
                cells = [clip_id, rater, "expert", str(trial)]
                for pq in ALL_PQS:
                    value = truth[pq] + bias + rng.normal(0.0, EXPERT_NOISE_SD)
                    cells.append(repr(float(np.clip(value, 0.0, 100.0))))
                cells.append(f"2026-01-05T{minute // 60:02d}:{minute % 60:02d}:00Z")
                minute += 1
                rows.append(cells)
        for rater, bias in NONEXPERT_BIAS.items():
            cells = [clip_id, rater, "nonexpert", "1"]
            for pq in ALL_PQS:
                value = truth[pq] + bias + rng.normal(0.0, NONEXPERT_NOISE_SD)
                cells.append(repr(float(np.clip(value, 0.0, 100.0))))
            cells.append(f"2026-01-06T{minute // 60:02d}:{minute % 60:02d}:00Z")
            minute += 1
            rows.append(cells)
    return rows


CONFIG_TOML = """\
[labels]
clips = "clips.csv"
ratings = ["ratings.csv"]

[experiment]
feature_sets = ["compare-lite"]
pqs = ["resonance", "weight", "strain", "loudness", "roughness", "breathiness", "pitch"]
# loudness is a label here, so keep absolute level in the features
rms_normalize = false

[split]
seed = 7
ratios = [0.6, 0.2, 0.2]

[grid]
n_trees = [50, 100]
max_depth = [6, 12]
min_samples_leaf = [1, 2]
mtry = ["sqrt", "third"]

[output]
dir = "out"
"""


def build_minicorpus(out_dir: PathLike, seed: int = DEFAULT_SEED) -> Path:
    """Write audio, manifests, ratings, and a ready-to-run config.

    Returns the path of the experiment config file.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)

    clip_rows = []
    for index in range(N_CLIPS):
        buf = render_clip(index, seed)
        save_wav(buf, audio_dir / f"{buf.clip_id}.wav")
        clip_rows.append(
            f"{buf.clip_id},audio/{buf.clip_id}.wav,{DURATION_S},{SAMPLE_RATE_HZ},synthetic"
        )

    header = "clip_id,audio_path,duration_s,sample_rate_hz,tags"
    (out_dir / "clips.csv").write_text(header + "\n" + "\n".join(clip_rows) + "\n")

    ratings_header = ("clip_id,rater_id,rater_class,trial,"
                      + ",".join(pq.value for pq in ALL_PQS) + ",timestamp")
    lines = [ratings_header] + [",".join(r) for r in _rating_rows(seed)]
    (out_dir / "ratings.csv").write_text("\n".join(lines) + "\n")

    config_path = out_dir / "config.toml"
    config_path.write_text(CONFIG_TOML)
    return config_path
