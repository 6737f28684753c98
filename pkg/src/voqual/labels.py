"""Label-set ingestion, aggregation, and dataset splitting.

File formats:

* clips manifest: CSV ``clip_id,audio_path,duration_s,sample_rate_hz,tags``
  (tags ``;``-separated, may be empty);
* ratings table: CSV ``clip_id,rater_id,rater_class,trial,resonance,weight,
  strain,loudness,roughness,breathiness,pitch,timestamp`` where an empty PQ
  cell means "not rated" and timestamps are RFC 3339;
* split file: CSV ``clip_id,partition`` preceded by a ``# seed=<u64>``
  comment line.

Malformed rows are rejected individually and reported as row-level
diagnostics; structural problems (missing file, no usable ratings) raise.
"""

from __future__ import annotations

import csv
import math
import statistics
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import LabelError
from .pq import (
    ALL_PQS,
    ClipRecord,
    DatasetSplit,
    LabelSet,
    PerceptualQuality,
    PQVector,
    RaterClass,
    RatingRecord,
    RowDiagnostic,
)

CLIPS_HEADER = ["clip_id", "audio_path", "duration_s", "sample_rate_hz", "tags"]
RATINGS_HEADER = (
    ["clip_id", "rater_id", "rater_class", "trial"]
    + [pq.value for pq in ALL_PQS]
    + ["timestamp"]
)

PathLike = Union[str, Path]


def _open_csv(path: PathLike, expected_header: list[str]):
    path = Path(path)
    if not path.is_file():
        raise LabelError(f"file not found: {path}")
    handle = path.open(newline="", encoding="utf-8")
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise LabelError(f"{path}: empty file, expected header row") from None
    if [h.strip() for h in header] != expected_header:
        handle.close()
        raise LabelError(
            f"{path}: bad header {header!r}, expected {expected_header!r}"
        )
    return handle, reader


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp ('Z' suffix accepted)."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise LabelError(f"bad RFC 3339 timestamp {text!r}") from None


def read_clips_manifest(path: PathLike) -> tuple[list[ClipRecord], list[RowDiagnostic]]:
    clips: list[ClipRecord] = []
    diagnostics: list[RowDiagnostic] = []
    seen: set[str] = set()
    source = str(path)
    handle, reader = _open_csv(path, CLIPS_HEADER)
    with handle:
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CLIPS_HEADER):
                diagnostics.append(
                    RowDiagnostic(source, row_no, "*", f"expected {len(CLIPS_HEADER)} fields, got {len(row)}")
                )
                continue
            clip_id, audio_path, duration_s, rate, tags = (c.strip() for c in row)
            try:
                if clip_id in seen:
                    raise LabelError(f"duplicate clip_id {clip_id!r}")
                clip = ClipRecord(
                    clip_id=clip_id,
                    audio_path=audio_path,
                    duration_s=float(duration_s),
                    sample_rate_hz=int(rate),
                    tags=tuple(t for t in tags.split(";") if t),
                )
            except (LabelError, ValueError) as exc:
                diagnostics.append(RowDiagnostic(source, row_no, "clip", str(exc)))
                continue
            seen.add(clip_id)
            clips.append(clip)
    return clips, diagnostics


def _parse_rating_row(row: list[str], known_clips: "set[str] | None") -> RatingRecord:
    clip_id, rater_id, rater_class, trial = (c.strip() for c in row[:4])
    if known_clips is not None and clip_id not in known_clips:
        raise LabelError(f"unknown clip_id {clip_id!r}")
    try:
        klass = RaterClass(rater_class)
    except ValueError:
        raise LabelError(
            f"rater_class must be 'expert' or 'nonexpert', got {rater_class!r}"
        ) from None
    values: dict[PerceptualQuality, float] = {}
    for pq, cell in zip(ALL_PQS, row[4:11]):
        cell = cell.strip()
        if not cell:
            continue
        try:
            values[pq] = float(cell)
        except ValueError:
            raise LabelError(f"{pq.value}: not a number: {cell!r}") from None
    if not values:
        raise LabelError("row rates no PQ at all")
    return RatingRecord(
        clip_id=clip_id,
        rater_id=rater_id,
        rater_class=klass,
        trial=int(trial),
        values=PQVector.from_mapping(values),
        timestamp=parse_timestamp(row[11]),
    )


def read_ratings_table(
    path: PathLike, known_clips: "set[str] | None"
) -> tuple[list[RatingRecord], list[RowDiagnostic]]:
    ratings: list[RatingRecord] = []
    diagnostics: list[RowDiagnostic] = []
    seen: set[tuple[str, str, int]] = set()
    source = str(path)
    handle, reader = _open_csv(path, RATINGS_HEADER)
    with handle:
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(RATINGS_HEADER):
                diagnostics.append(
                    RowDiagnostic(source, row_no, "*", f"expected {len(RATINGS_HEADER)} fields, got {len(row)}")
                )
                continue
            try:
                rating = _parse_rating_row(row, known_clips)
            except (LabelError, ValueError) as exc:
                diagnostics.append(RowDiagnostic(source, row_no, "rating", str(exc)))
                continue
            if rating.key in seen:
                diagnostics.append(
                    RowDiagnostic(
                        source, row_no, "rating",
                        f"duplicate (clip_id, rater_id, trial) = {rating.key}",
                    )
                )
                continue
            seen.add(rating.key)
            ratings.append(rating)
    return ratings, diagnostics


def ingest_labels(
    clips_manifest: PathLike,
    ratings_table: Union[PathLike, Sequence[PathLike]],
) -> LabelSet:
    """Load and validate a label set from CSV files.

    ``ratings_table`` may be a single path or a sequence of paths whose rows
    are pooled (e.g. expert and non-expert tables kept in separate files).
    Invalid rows are dropped and reported in ``LabelSet.diagnostics``.
    """
    clips, diagnostics = read_clips_manifest(clips_manifest)
    if not clips:
        raise LabelError(f"{clips_manifest}: no valid clips")
    known = {clip.clip_id for clip in clips}

    if isinstance(ratings_table, (str, Path)):
        tables: Sequence[PathLike] = [ratings_table]
    else:
        tables = list(ratings_table)
    ratings: list[RatingRecord] = []
    seen: set[tuple[str, str, int]] = set()
    for table in tables:
        table_ratings, table_diags = read_ratings_table(table, known)
        diagnostics.extend(table_diags)
        for rating in table_ratings:
            if rating.key in seen:
                diagnostics.append(
                    RowDiagnostic(
                        str(table), 0, "rating",
                        f"duplicate across tables: {rating.key}",
                    )
                )
                continue
            seen.add(rating.key)
            ratings.append(rating)
    if not ratings:
        raise LabelError("no ratings")
    return LabelSet(clips=tuple(clips), ratings=tuple(ratings),
                    diagnostics=tuple(diagnostics))


def ingest_ratings_only(
    ratings_table: Union[PathLike, Sequence[PathLike]],
) -> LabelSet:
    """Label set from ratings files alone, for agreement statistics.

    Clip records are synthesized stubs (no audio path, nominal duration),
    enough to satisfy LabelSet's referential checks.
    """
    if isinstance(ratings_table, (str, Path)):
        tables: Sequence[PathLike] = [ratings_table]
    else:
        tables = list(ratings_table)
    ratings: list[RatingRecord] = []
    diagnostics: list[RowDiagnostic] = []
    seen: set[tuple[str, str, int]] = set()
    for table in tables:
        table_ratings, table_diags = read_ratings_table(table, None)
        diagnostics.extend(table_diags)
        for rating in table_ratings:
            if rating.key in seen:
                diagnostics.append(
                    RowDiagnostic(
                        str(table), 0, "rating",
                        f"duplicate across tables: {rating.key}",
                    )
                )
                continue
            seen.add(rating.key)
            ratings.append(rating)
    if not ratings:
        raise LabelError("no ratings")
    clips = tuple(
        ClipRecord(clip_id=clip_id, audio_path="", duration_s=1.0,
                   sample_rate_hz=16000, tags=())
        for clip_id in sorted({r.clip_id for r in ratings})
    )
    return LabelSet(clips=clips, ratings=tuple(ratings),
                    diagnostics=tuple(diagnostics))


def _format_float(value: float) -> str:
    # repr round-trips exactly; integers print without trailing zeros
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def export_labels(
    labels: LabelSet, clips_manifest: PathLike, ratings_table: PathLike
) -> None:
    """Write a label set back to the two-CSV form ``ingest_labels`` reads."""
    with Path(clips_manifest).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CLIPS_HEADER)
        for clip in labels.clips:
            writer.writerow([
                clip.clip_id,
                clip.audio_path,
                _format_float(clip.duration_s),
                clip.sample_rate_hz,
                ";".join(clip.tags),
            ])
    with Path(ratings_table).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RATINGS_HEADER)
        for rating in labels.ratings:
            cells = [
                rating.clip_id,
                rating.rater_id,
                rating.rater_class.value,
                rating.trial,
            ]
            for pq in ALL_PQS:
                value = rating.values.value(pq)
                cells.append("" if value is None else _format_float(value))
            cells.append(rating.timestamp.isoformat())
            writer.writerow(cells)


def aggregate_ratings(
    labels: LabelSet, rater_class: RaterClass, pq: PerceptualQuality
) -> dict[str, float]:
    """Per-clip mean of ``pq`` over all (rater, trial) values of one class."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for rating in labels.ratings:
        if rating.rater_class is not rater_class:
            continue
        value = rating.values.value(pq)
        if value is None:
            continue
        sums[rating.clip_id] = sums.get(rating.clip_id, 0.0) + value
        counts[rating.clip_id] = counts.get(rating.clip_id, 0) + 1
    return {clip_id: sums[clip_id] / counts[clip_id] for clip_id in sums}


def rater_clip_means(
    labels: LabelSet, rater_class: RaterClass, pq: PerceptualQuality
) -> dict[str, dict[str, float]]:
    """clip_id -> rater_id -> that rater's mean over trials for ``pq``."""
    sums: dict[str, dict[str, float]] = {}
    counts: dict[str, dict[str, int]] = {}
    for rating in labels.ratings:
        if rating.rater_class is not rater_class:
            continue
        value = rating.values.value(pq)
        if value is None:
            continue
        clip = sums.setdefault(rating.clip_id, {})
        clip[rating.rater_id] = clip.get(rating.rater_id, 0.0) + value
        cnt = counts.setdefault(rating.clip_id, {})
        cnt[rating.rater_id] = cnt.get(rating.rater_id, 0) + 1
    return {
        clip_id: {
            rater: total / counts[clip_id][rater]
            for rater, total in raters.items()
        }
        for clip_id, raters in sums.items()
    }


def per_clip_rater_std(labels: LabelSet, rater_class: RaterClass) -> float:
    """Average over (clip, PQ) pairs of the sample std across rater means.

    A rater's mean pools their trials first; pairs with fewer than two
    distinct raters are skipped.
    """
    stds: list[float] = []
    for pq in ALL_PQS:
        for clip_id, raters in rater_clip_means(labels, rater_class, pq).items():
            if len(raters) < 2:
                continue
            stds.append(statistics.stdev(raters.values()))
    if not stds:
        raise LabelError("insufficient raters: no (clip, PQ) pair has >= 2 raters")
    return sum(stds) / len(stds)


def make_split(
    clip_ids: Sequence[str],
    seed: int,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> DatasetSplit:
    """Seeded shuffle, then floor(r0*n) train, floor(r1*n) val, rest test."""
    clip_ids = list(clip_ids)
    n = len(clip_ids)
    if n < 3:
        raise LabelError(f"split too small: need >= 3 clips, got {n}")
    if len(set(clip_ids)) != n:
        raise LabelError("clip_ids contain duplicates")
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise LabelError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    order = rng.permutation(n)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    shuffled = [clip_ids[i] for i in order]
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )


def write_split(split: DatasetSplit, path: PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# seed={split.seed}\n")
        writer = csv.writer(handle)
        writer.writerow(["clip_id", "partition"])
        for partition, ids in (("train", split.train), ("val", split.val),
                               ("test", split.test)):
            for clip_id in ids:
                writer.writerow([clip_id, partition])


def read_split(path: PathLike) -> DatasetSplit:
    path = Path(path)
    if not path.is_file():
        raise LabelError(f"file not found: {path}")
    seed = 0
    parts: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    with path.open(newline="", encoding="utf-8") as handle:
        rows = [line for line in handle]
    data_rows: list[str] = []
    for line in rows:
        stripped = line.strip()
        if stripped.startswith("#"):
            if stripped.startswith("# seed="):
                seed = int(stripped.split("=", 1)[1])
            continue
        if stripped:
            data_rows.append(line)
    reader = csv.reader(data_rows)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["clip_id", "partition"]:
        raise LabelError(f"{path}: bad split header {header!r}")
    for row in reader:
        if len(row) != 2:
            raise LabelError(f"{path}: bad split row {row!r}")
        clip_id, partition = row[0].strip(), row[1].strip()
        if partition not in parts:
            raise LabelError(f"{path}: unknown partition {partition!r}")
        parts[partition].append(clip_id)
    return DatasetSplit(
        train=tuple(parts["train"]),
        val=tuple(parts["val"]),
        test=tuple(parts["test"]),
        seed=seed,
    )


def merge_label_sets(sets: Iterable[LabelSet]) -> LabelSet:
    """Union of clips and ratings; duplicate clips must agree exactly."""
    clips: dict[str, ClipRecord] = {}
    ratings: list[RatingRecord] = []
    diagnostics: list[RowDiagnostic] = []
    for labels in sets:
        for clip in labels.clips:
            existing = clips.get(clip.clip_id)
            if existing is None:
                clips[clip.clip_id] = clip
            elif existing != clip:
                raise LabelError(f"conflicting clip records for {clip.clip_id!r}")
        ratings.extend(labels.ratings)
        diagnostics.extend(labels.diagnostics)
    return LabelSet(
        clips=tuple(clips.values()),
        ratings=tuple(ratings),
        diagnostics=tuple(diagnostics),
    )
