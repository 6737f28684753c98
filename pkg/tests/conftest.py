"""Shared fixtures: synthetic audio and a small hand-built label set."""

from datetime import datetime, timezone

import numpy as np
import pytest

from voqual.audio import AudioBuffer
from voqual.pq import (
    ClipRecord,
    LabelSet,
    PerceptualQuality,
    PQVector,
    RaterClass,
    RatingRecord,
)

PQ_NAMES = [pq.value for pq in PerceptualQuality]


def sine(freq_hz, duration_s=1.0, rate=16000, amplitude=0.3, phase=0.0):
    t = np.arange(int(round(duration_s * rate))) / rate
    return AudioBuffer(
        samples=amplitude * np.sin(2 * np.pi * freq_hz * t + phase),
        sample_rate_hz=rate,
    )


def white_noise(duration_s=1.0, rate=16000, amplitude=0.1, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, amplitude, int(round(duration_s * rate)))
    return AudioBuffer(samples=np.clip(x, -1.0, 1.0), sample_rate_hz=rate)


def full_vector(value=50.0, **overrides):
    values = {name: value for name in PQ_NAMES}
    values.update(overrides)
    return PQVector(**values)


def rating(clip_id, rater_id, rater_class, vector, trial=1, minute=0):
    return RatingRecord(
        clip_id=clip_id,
        rater_id=rater_id,
        rater_class=rater_class,
        trial=trial,
        values=vector,
        timestamp=datetime(2026, 1, 5, 10, minute % 60, tzinfo=timezone.utc),
    )


def clip(clip_id, audio_path=""):
    return ClipRecord(clip_id=clip_id, audio_path=audio_path,
                      duration_s=1.0, sample_rate_hz=16000)


@pytest.fixture
def small_labels():
    """4 clips, 2 experts x 2 trials, 2 non-experts x 1 trial."""
    clips = [clip(f"c{i:02d}") for i in range(4)]
    base = {"c00": 10.0, "c01": 35.0, "c02": 60.0, "c03": 85.0}
    ratings = []
    minute = 0
    for rater, offset in (("exp_a", -2.0), ("exp_b", 2.0)):
        for trial in (1, 2):
            for cid, value in base.items():
                v = min(max(value + offset + 0.5 * trial, 0.0), 100.0)
                ratings.append(rating(cid, rater, RaterClass.EXPERT,
                                      full_vector(v), trial, minute))
                minute += 1
    for rater, offset in (("crowd_1", 8.0), ("crowd_2", -5.0)):
        for cid, value in base.items():
            v = min(max(value + offset, 0.0), 100.0)
            ratings.append(rating(cid, rater, RaterClass.NONEXPERT,
                                  full_vector(v), 1, minute))
            minute += 1
    return LabelSet(clips=tuple(clips), ratings=tuple(ratings))
