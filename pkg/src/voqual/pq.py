"""Domain types for perceptual-voice-quality label sets.

Seven perceptual qualities (PQs) on a 0-100 continuous scale: the five
CAPE-V deviance qualities (strain, loudness, roughness, breathiness, pitch)
plus the two gendered qualities (resonance, weight). Severity is deliberately
not part of the model.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator, Mapping, Optional

from .errors import LabelError


class PerceptualQuality(enum.Enum):
    """The seven rated voice qualities. Values double as CSV column names."""

    RESONANCE = "resonance"
    WEIGHT = "weight"
    STRAIN = "strain"
    LOUDNESS = "loudness"
    ROUGHNESS = "roughness"
    BREATHINESS = "breathiness"
    PITCH = "pitch"

    @property
    def gendered(self) -> bool:
        """True for the voice-gender qualities (resonance, weight)."""
        return self in (PerceptualQuality.RESONANCE, PerceptualQuality.WEIGHT)

    def __str__(self) -> str:
        return self.value


ALL_PQS = tuple(PerceptualQuality)
GENDERED_PQS = tuple(pq for pq in ALL_PQS if pq.gendered)
CAPEV_PQS = tuple(pq for pq in ALL_PQS if not pq.gendered)


class RaterClass(enum.Enum):
    EXPERT = "expert"
    NONEXPERT = "nonexpert"

    def __str__(self) -> str:
        return self.value


def _check_range(pq_name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 100.0):
        raise LabelError(f"{pq_name} value {value} outside [0, 100]")
    return value


@dataclass(frozen=True)
class PQVector:
    """Ratings for any subset of the seven qualities, each in [0, 100]."""

    resonance: Optional[float] = None
    weight: Optional[float] = None
    strain: Optional[float] = None
    loudness: Optional[float] = None
    roughness: Optional[float] = None
    breathiness: Optional[float] = None
    pitch: Optional[float] = None

    def __post_init__(self) -> None:
        present = 0
        for pq in ALL_PQS:
            value = getattr(self, pq.value)
            if value is None:
                continue
            object.__setattr__(self, pq.value, _check_range(pq.value, value))
            present += 1
        if present == 0:
            raise LabelError("a PQ vector needs at least one rated quality")

    @classmethod
    def from_mapping(cls, values: Mapping[PerceptualQuality, float]) -> "PQVector":
        return cls(**{pq.value: v for pq, v in values.items()})

    def value(self, pq: PerceptualQuality) -> Optional[float]:
        return getattr(self, pq.value)

    def items(self) -> Iterator[tuple[PerceptualQuality, float]]:
        """Present (quality, value) pairs in canonical order."""
        for pq in ALL_PQS:
            value = getattr(self, pq.value)
            if value is not None:
                yield pq, value

    def is_complete(self) -> bool:
        return all(getattr(self, pq.value) is not None for pq in ALL_PQS)


@dataclass(frozen=True)
class RatingRecord:
    """One rater's PQ vector for one clip in one trial."""

    clip_id: str
    rater_id: str
    rater_class: RaterClass
    trial: int
    values: PQVector
    timestamp: datetime

    def __post_init__(self) -> None:
        if not self.clip_id:
            raise LabelError("clip_id must be non-empty")
        if not self.rater_id:
            raise LabelError("rater_id must be non-empty")
        if self.trial < 1:
            raise LabelError(f"trial must be >= 1, got {self.trial}")
        ts = self.timestamp
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "timestamp", ts.astimezone(timezone.utc))

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.clip_id, self.rater_id, self.trial)


@dataclass(frozen=True)
class ClipRecord:
    """One audio clip in the corpus."""

    clip_id: str
    audio_path: str
    duration_s: float
    sample_rate_hz: int
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.clip_id:
            raise LabelError("clip_id must be non-empty")
        if self.duration_s <= 0:
            raise LabelError(f"duration_s must be > 0, got {self.duration_s}")
        if self.sample_rate_hz <= 0:
            raise LabelError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        object.__setattr__(self, "tags", tuple(self.tags))


@dataclass(frozen=True)
class RowDiagnostic:
    """Why one input row was rejected during ingestion."""

    source: str
    row: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.source}:{self.row} [{self.field}] {self.message}"


@dataclass(frozen=True)
class LabelSet:
    """A validated collection of clips and the ratings made on them."""

    clips: tuple[ClipRecord, ...]
    ratings: tuple[RatingRecord, ...]
    diagnostics: tuple[RowDiagnostic, ...] = field(
        default=(), compare=False, repr=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "clips", tuple(self.clips))
        object.__setattr__(self, "ratings", tuple(self.ratings))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        by_id: dict[str, ClipRecord] = {}
        for clip in self.clips:
            if clip.clip_id in by_id:
                raise LabelError(f"duplicate clip_id {clip.clip_id!r}")
            by_id[clip.clip_id] = clip
        seen: set[tuple[str, str, int]] = set()
        for rating in self.ratings:
            if rating.clip_id not in by_id:
                raise LabelError(
                    f"rating references unknown clip {rating.clip_id!r}"
                )
            if rating.key in seen:
                raise LabelError(
                    "duplicate rating for "
                    f"(clip={rating.clip_id}, rater={rating.rater_id}, "
                    f"trial={rating.trial})"
                )
            seen.add(rating.key)
        object.__setattr__(self, "_clips_by_id", by_id)

    @property
    def clip_ids(self) -> tuple[str, ...]:
        return tuple(clip.clip_id for clip in self.clips)

    def clip(self, clip_id: str) -> ClipRecord:
        try:
            return self._clips_by_id[clip_id]
        except KeyError:
            raise LabelError(f"unknown clip_id {clip_id!r}") from None

    def has_clip(self, clip_id: str) -> bool:
        return clip_id in self._clips_by_id


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test partition of a set of clip ids."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "val", tuple(self.val))
        object.__setattr__(self, "test", tuple(self.test))
        everything = self.train + self.val + self.test
        if len(set(everything)) != len(everything):
            raise LabelError("split partitions overlap")

    @property
    def all_ids(self) -> frozenset[str]:
        return frozenset(self.train + self.val + self.test)
