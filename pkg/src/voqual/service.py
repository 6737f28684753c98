"""Stateful annotation backend for the non-expert rating experiment.

Assigns clips to raters (lowest completed count first), persists complete
seven-quality ratings in an append-only JSON-lines log, and reports live
agreement against expert means. All mutations pass through one lock; an
acknowledgment is only sent after the log line has been fsynced.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import ServiceError, StatsError
from .labels import RATINGS_HEADER, aggregate_ratings
from .pq import ALL_PQS, LabelSet, PerceptualQuality, RaterClass

PathLike = Union[str, Path]

DEFAULT_REDUNDANCY = 6
DEFAULT_EXPIRY_S = 30 * 60

ANCHOR_POLES = ("low", "high")
ANCHORS_HEADER = ["pq", "pole", "clip_id", "caption"]


@dataclass(frozen=True)
class AnchorExample:
    pq: PerceptualQuality
    pole: str
    clip_id: str
    caption: str

    def __post_init__(self) -> None:
        if self.pole not in ANCHOR_POLES:
            raise ServiceError(f"anchor pole must be low or high, got {self.pole!r}")
        if not self.caption:
            raise ServiceError(f"anchor {self.pq}/{self.pole} needs a caption")


def load_anchors(path: PathLike) -> Tuple[AnchorExample, ...]:
    """Read the anchor manifest; a valid set has one low and one high
    example per quality, 14 rows total."""
    path = Path(path)
    if not path.is_file():
        raise ServiceError(f"anchor file not found: {path}", status=404)
    anchors: List[AnchorExample] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ANCHORS_HEADER:
            raise ServiceError(f"{path}: bad anchor header {header!r}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ServiceError(f"{path}: bad anchor row {row!r}")
            try:
                pq = PerceptualQuality(row[0].strip())
            except ValueError:
                raise ServiceError(f"{path}: unknown PQ {row[0]!r}") from None
            anchors.append(AnchorExample(pq, row[1].strip(), row[2].strip(),
                                         row[3].strip()))
    seen = {(a.pq, a.pole) for a in anchors}
    expected = {(pq, pole) for pq in ALL_PQS for pole in ANCHOR_POLES}
    if seen != expected or len(anchors) != len(expected):
        raise ServiceError(
            f"{path}: anchor set must cover every (PQ, pole) exactly once "
            f"(14 rows), got {len(anchors)}"
        )
    return tuple(anchors)


class RatingsLog:
    """Append-only JSON-lines file; one fsync per acknowledged append."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("a", encoding="utf-8")

    def append(self, record: dict) -> None:
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._handle.flush()
        os.fsync(self._handle.fileno())

    def close(self) -> None:
        self._handle.close()

    @staticmethod
    def replay(path: PathLike) -> List[dict]:
        """Parse existing log records; a torn trailing line (crash during an
        unacknowledged append) is dropped, anything else must parse."""
        path = Path(path)
        if not path.is_file():
            return []
        records: List[dict] = []
        lines = path.read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
            complete = len(lines)
        else:
            complete = len(lines) - 1
        for i, line in enumerate(lines):
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                if i >= complete:
                    break
                raise ServiceError(
                    f"{path}:{i + 1}: corrupt log line", status=500
                ) from None
        return records


def _submission_id(clip_id: str, rater_id: str) -> str:
    digest = hashlib.sha256(f"{clip_id}\n{rater_id}".encode()).hexdigest()
    return digest[:16]


class AnnotationService:
    """Assignment state + ratings log + live agreement, for one corpus."""

    def __init__(
        self,
        clips: Mapping[str, PathLike],
        log_path: PathLike,
        expert_labels: Optional[LabelSet] = None,
        redundancy: int = DEFAULT_REDUNDANCY,
        expiry_s: float = DEFAULT_EXPIRY_S,
        anchors: Sequence[AnchorExample] = (),
        now_fn: Callable[[], float] = time.time,
    ):
        if not clips:
            raise ServiceError("service needs at least one clip")
        if redundancy < 1:
            raise ServiceError(f"redundancy must be >= 1, got {redundancy}")
        self.clips = {cid: Path(p) for cid, p in clips.items()}
        self.expert_labels = expert_labels
        self.redundancy = redundancy
        self.expiry_s = expiry_s
        self.anchors = tuple(anchors)
        self._anchor_map = {(a.pq, a.pole): a for a in self.anchors}
        self._now = now_fn
        self._lock = threading.Lock()

        self._records: List[dict] = []
        self._completed: Dict[str, set] = {cid: set() for cid in self.clips}
        self._by_pair: Dict[Tuple[str, str], dict] = {}
        for record in RatingsLog.replay(log_path):
            self._absorb(record)
        self._log = RatingsLog(log_path)
        # rater_id -> (clip_id, expires_at); at most one per rater
        self._inflight: Dict[str, Tuple[str, float]] = {}

    def _absorb(self, record: dict) -> None:
        clip_id, rater_id = record["clip_id"], record["rater_id"]
        self._records.append(record)
        self._completed.setdefault(clip_id, set()).add(rater_id)
        self._by_pair[(rater_id, clip_id)] = record

    def _prune_expired(self, now: float) -> None:
        stale = [r for r, (_, exp) in self._inflight.items() if now >= exp]
        for rater in stale:
            del self._inflight[rater]

    def next_clip(self, rater_id: str) -> Optional[dict]:
        """Assignment dict, or None when nothing is currently available."""
        if not rater_id:
            raise ServiceError("rater id must be non-empty", code="bad-request")
        with self._lock:
            now = self._now()
            self._prune_expired(now)
            held = self._inflight.get(rater_id)
            if held is not None:
                return self._assignment(rater_id, held[0], held[1])

            in_flight_clips = {clip for clip, _ in self._inflight.values()}
            candidates = [
                (len(self._completed[cid]), cid)
                for cid in self.clips
                if rater_id not in self._completed[cid]
                and len(self._completed[cid]) < self.redundancy
                and cid not in in_flight_clips
            ]
            if not candidates:
                return None
            _, clip_id = min(candidates)
            expires_at = now + self.expiry_s
            self._inflight[rater_id] = (clip_id, expires_at)
            return self._assignment(rater_id, clip_id, expires_at)

    def _assignment(self, rater_id: str, clip_id: str, expires_at: float) -> dict:
        return {
            "status": "assigned",
            "clip_id": clip_id,
            "rater_id": rater_id,
            "audio_url": f"/api/clips/{clip_id}/audio",
            "expires_at": expires_at,
        }

    def _validate_values(self, values) -> Dict[str, float]:
        if not isinstance(values, dict):
            raise ServiceError("values must be an object of the 7 qualities",
                               code="bad-request")
        names = [pq.value for pq in ALL_PQS]
        missing = [n for n in names if n not in values]
        if missing:
            raise ServiceError(f"missing qualities: {', '.join(missing)}",
                               code="incomplete-rating")
        extra = [k for k in values if k not in names]
        if extra:
            raise ServiceError(f"unknown qualities: {', '.join(extra)}",
                               code="bad-request")
        out: Dict[str, float] = {}
        for name in names:
            try:
                v = float(values[name])
            except (TypeError, ValueError):
                raise ServiceError(f"{name}: not a number",
                                   code="bad-request") from None
            if not 0.0 <= v <= 100.0:
                raise ServiceError(f"{name} value {v} outside [0, 100]",
                                   code="out-of-range")
            out[name] = v
        return out

    def submit_rating(self, submission: dict) -> dict:
        """Validate, durably append, clear the assignment, acknowledge."""
        clip_id = submission.get("clip_id")
        rater_id = submission.get("rater_id")
        if not clip_id or not rater_id:
            raise ServiceError("submission needs clip_id and rater_id",
                               code="bad-request")
        if clip_id not in self.clips:
            raise ServiceError(f"unknown clip {clip_id!r}", code="unknown-clip",
                               status=404)
        values = self._validate_values(submission.get("values"))
        duration = submission.get("client_duration_ms", 0)
        try:
            duration = max(0, int(duration))
        except (TypeError, ValueError):
            raise ServiceError("client_duration_ms must be an integer",
                               code="bad-request") from None

        with self._lock:
            now = self._now()
            self._prune_expired(now)
            previous = self._by_pair.get((rater_id, clip_id))
            if previous is not None:
                if previous["values"] == values:
                    return self._ack(previous)
                raise ServiceError(
                    f"rater {rater_id!r} already rated clip {clip_id!r} "
                    "with different values",
                    code="duplicate-submission", status=409,
                )
            held = self._inflight.get(rater_id)
            if held is None or held[0] != clip_id:
                raise ServiceError(
                    f"no live assignment of clip {clip_id!r} to rater "
                    f"{rater_id!r} (expired or never assigned)",
                    code="expired-assignment", status=409,
                )
            record = {
                "submission_id": _submission_id(clip_id, rater_id),
                "clip_id": clip_id,
                "rater_id": rater_id,
                "rater_class": RaterClass.NONEXPERT.value,
                "trial": 1,
                "values": values,
                "client_duration_ms": duration,
                "timestamp": datetime.fromtimestamp(
                    now, tz=timezone.utc
                ).isoformat(),
            }
            self._log.append(record)      # durable before the ack
            self._absorb(record)
            del self._inflight[rater_id]
            return self._ack(record)

    @staticmethod
    def _ack(record: dict) -> dict:
        return {"status": "ok", "submission_id": record["submission_id"],
                "clip_id": record["clip_id"]}

    def _snapshot_records(self) -> List[dict]:
        with self._lock:
            return list(self._records)

    def live_agreement(self) -> dict:
        """Per-PQ agreement of logged non-expert means vs expert means."""
        records = self._snapshot_records()
        per_pq: Dict[str, dict] = {}
        expert_means: Dict[str, Dict[str, float]] = {}
        if self.expert_labels is not None:
            for pq in ALL_PQS:
                expert_means[pq.value] = aggregate_ratings(
                    self.expert_labels, RaterClass.EXPERT, pq
                )

        sums: Dict[str, Dict[str, float]] = {pq.value: {} for pq in ALL_PQS}
        counts: Dict[str, Dict[str, int]] = {pq.value: {} for pq in ALL_PQS}
        for record in records:
            for name, value in record["values"].items():
                sums[name][record["clip_id"]] = (
                    sums[name].get(record["clip_id"], 0.0) + value
                )
                counts[name][record["clip_id"]] = (
                    counts[name].get(record["clip_id"], 0) + 1
                )

        from .agreement import pearson, rmse
        for pq in ALL_PQS:
            name = pq.value
            nonexpert = {
                cid: sums[name][cid] / counts[name][cid] for cid in sums[name]
            }
            experts = expert_means.get(name, {})
            shared = sorted(set(nonexpert) & set(experts))
            points = [
                {"clip_id": cid, "expert_mean": experts[cid],
                 "nonexpert_mean": nonexpert[cid]}
                for cid in shared
            ]
            entry: dict = {"count": len(shared), "points": points,
                           "r": None, "rmse": None}
            if shared:
                e = [experts[c] for c in shared]
                ne = [nonexpert[c] for c in shared]
                entry["rmse"] = rmse(ne, e)
                if len(shared) >= 2:
                    try:
                        entry["r"] = pearson(e, ne)
                    except StatsError:
                        entry["r"] = None
            per_pq[name] = entry
        return {
            "per_pq": per_pq,
            "total_ratings": len(records),
            "clips_rated": len({r["clip_id"] for r in records}),
        }

    def export_csv(self) -> str:
        """Standard ratings CSV of the log; re-ingestable as a label table."""
        records = self._snapshot_records()
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(RATINGS_HEADER)
        for record in records:
            row = [record["clip_id"], record["rater_id"],
                   record["rater_class"], record["trial"]]
            for pq in ALL_PQS:
                row.append(repr(float(record["values"][pq.value])))
            row.append(record["timestamp"])
            writer.writerow(row)
        return buffer.getvalue()

    def progress(self, rater_id: str) -> dict:
        """Completed/remaining counts for one rater (drives the UI counter)."""
        with self._lock:
            done = sum(1 for raters in self._completed.values()
                       if rater_id in raters)
            open_clips = sum(
                1 for cid in self.clips
                if rater_id not in self._completed[cid]
                and len(self._completed[cid]) < self.redundancy
            )
        return {"rater_id": rater_id, "completed": done, "remaining": open_clips}

    def anchor(self, pq: PerceptualQuality, pole: str) -> AnchorExample:
        try:
            return self._anchor_map[(pq, pole)]
        except KeyError:
            raise ServiceError(f"no anchor for {pq}/{pole}",
                               code="unknown-anchor", status=404) from None

    def audio_path(self, clip_id: str) -> Path:
        try:
            return self.clips[clip_id]
        except KeyError:
            raise ServiceError(f"unknown clip {clip_id!r}",
                               code="unknown-clip", status=404) from None

    def close(self) -> None:
        self._log.close()
