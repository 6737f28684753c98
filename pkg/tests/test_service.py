"""Annotation service: assignment, durability, concurrency, agreement."""

import json
import threading

import pytest

from voqual.errors import ServiceError
from voqual.labels import ingest_ratings_only
from voqual.pq import LabelSet, PerceptualQuality, RaterClass
from voqual.service import (
    AnchorExample,
    AnnotationService,
    RatingsLog,
    load_anchors,
)

from conftest import PQ_NAMES, clip, full_vector, rating


class Clock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


def make_service(tmp_path, n_clips=4, redundancy=2, expert_labels=None,
                 clock=None, anchors=(), expiry_s=1800.0):
    clips = {f"c{i:02d}": tmp_path / f"c{i:02d}.wav" for i in range(n_clips)}
    return AnnotationService(
        clips=clips,
        log_path=tmp_path / "ratings.log",
        expert_labels=expert_labels,
        redundancy=redundancy,
        expiry_s=expiry_s,
        anchors=anchors,
        now_fn=clock or Clock(),
    )


def values(x=50.0):
    return {name: x for name in PQ_NAMES}


def submit(service, rater, clip_id, x=50.0):
    return service.submit_rating(
        {"clip_id": clip_id, "rater_id": rater, "values": values(x)}
    )


def rate_assigned(service, rater, x=50.0):
    assignment = service.next_clip(rater)
    assert assignment is not None
    submit(service, rater, assignment["clip_id"], x)
    return assignment["clip_id"]


def test_first_assignment_is_lexicographically_first(tmp_path):
    service = make_service(tmp_path)
    a = service.next_clip("r1")
    assert a["status"] == "assigned"
    assert a["clip_id"] == "c00"
    assert a["audio_url"] == "/api/clips/c00/audio"


def test_assignment_idempotent_while_held(tmp_path):
    service = make_service(tmp_path)
    a = service.next_clip("r1")
    b = service.next_clip("r1")
    assert a["clip_id"] == b["clip_id"]


def test_concurrent_raters_get_distinct_clips(tmp_path):
    service = make_service(tmp_path, n_clips=4)
    held = {service.next_clip(f"r{i}")["clip_id"] for i in range(4)}
    assert held == {"c00", "c01", "c02", "c03"}
    # Everything is checked out: the fifth rater waits.
    assert service.next_clip("r5") is None


def test_fewest_completed_first(tmp_path):
    service = make_service(tmp_path, n_clips=3, redundancy=3)
    rate_assigned(service, "r1")          # completes c00
    a = service.next_clip("r2")
    assert a["clip_id"] == "c01"          # c01/c02 have 0 < 1 completions


def test_rater_never_reassigned_completed_clip(tmp_path):
    service = make_service(tmp_path, n_clips=2, redundancy=5)
    done = {rate_assigned(service, "r1"), rate_assigned(service, "r1")}
    assert done == {"c00", "c01"}
    assert service.next_clip("r1") is None


def test_redundancy_cap(tmp_path):
    service = make_service(tmp_path, n_clips=1, redundancy=2)
    rate_assigned(service, "r1")
    rate_assigned(service, "r2")
    assert service.next_clip("r3") is None


def test_submission_validation(tmp_path):
    service = make_service(tmp_path)
    service.next_clip("r1")
    with pytest.raises(ServiceError, match="unknown clip"):
        submit(service, "r1", "zz")
    incomplete = values()
    del incomplete["strain"]
    with pytest.raises(ServiceError, match="missing qualities: strain"):
        service.submit_rating({"clip_id": "c00", "rater_id": "r1",
                               "values": incomplete})
    out_of_range = values()
    out_of_range["strain"] = 101.0
    with pytest.raises(ServiceError, match="outside"):
        service.submit_rating({"clip_id": "c00", "rater_id": "r1",
                               "values": out_of_range})
    # Nothing was persisted by the rejects.
    assert service.progress("r1")["completed"] == 0


def test_submit_without_assignment_conflicts(tmp_path):
    service = make_service(tmp_path)
    with pytest.raises(ServiceError, match="expired-assignment|no live assignment"):
        submit(service, "r1", "c00")


def test_idempotent_replay_same_values(tmp_path):
    service = make_service(tmp_path)
    cid = service.next_clip("r1")["clip_id"]
    ack1 = submit(service, "r1", cid, 42.0)
    ack2 = submit(service, "r1", cid, 42.0)
    assert ack1 == ack2
    log_lines = (tmp_path / "ratings.log").read_text().strip().splitlines()
    assert len(log_lines) == 1


def test_conflicting_resubmission_rejected(tmp_path):
    service = make_service(tmp_path)
    cid = service.next_clip("r1")["clip_id"]
    submit(service, "r1", cid, 42.0)
    with pytest.raises(ServiceError, match="different values") as err:
        submit(service, "r1", cid, 43.0)
    assert err.value.status == 409


def test_expiry_frees_the_clip(tmp_path):
    clock = Clock()
    service = make_service(tmp_path, n_clips=1, clock=clock, expiry_s=1800.0)
    service.next_clip("r1")
    assert service.next_clip("r2") is None
    clock.advance(1801.0)
    assert service.next_clip("r2")["clip_id"] == "c00"
    # r1's assignment lapsed; submitting now conflicts.
    with pytest.raises(ServiceError, match="expired"):
        submit(service, "r1", "c00")


def test_crash_restart_preserves_acknowledged(tmp_path):
    service = make_service(tmp_path, n_clips=3, redundancy=2)
    rate_assigned(service, "r1", 10.0)
    rate_assigned(service, "r1", 20.0)
    # No close(): simulate a crash by abandoning the instance.
    revived = make_service(tmp_path, n_clips=3, redundancy=2)
    assert revived.progress("r1")["completed"] == 2
    # In-flight state resets, completed state survives.
    assignment = revived.next_clip("r1")
    assert assignment["clip_id"] == "c02"


def test_torn_log_tail_dropped_interior_corruption_raises(tmp_path):
    service = make_service(tmp_path)
    cid = service.next_clip("r1")["clip_id"]
    submit(service, "r1", cid)
    log_path = tmp_path / "ratings.log"
    intact = log_path.read_text()

    log_path.write_text(intact + '{"torn": ')
    revived = make_service(tmp_path)
    assert revived.progress("r1")["completed"] == 1

    log_path.write_text('{"broken": \n' + intact)
    with pytest.raises(ServiceError, match="log"):
        make_service(tmp_path)


def test_export_reingests_cleanly(tmp_path):
    service = make_service(tmp_path, n_clips=2, redundancy=1)
    rate_assigned(service, "r1", 33.0)
    rate_assigned(service, "r2", 66.0)
    csv_text = service.export_csv()
    path = tmp_path / "export.csv"
    path.write_text(csv_text)
    labels = ingest_ratings_only(path)
    assert len(labels.ratings) == 2
    assert not labels.diagnostics
    assert all(r.rater_class is RaterClass.NONEXPERT for r in labels.ratings)


def test_progress_counts(tmp_path):
    service = make_service(tmp_path, n_clips=3, redundancy=1)
    assert service.progress("r1") == {"rater_id": "r1", "completed": 0,
                                      "remaining": 3}
    rate_assigned(service, "r1")
    progress = service.progress("r1")
    assert progress["completed"] == 1 and progress["remaining"] == 2


def test_live_agreement_perfect_copy(tmp_path):
    expert_ratings = tuple(
        rating(f"c{i:02d}", "exp_a", RaterClass.EXPERT,
               full_vector(10.0 * i + 5.0), 1, i)
        for i in range(4)
    )
    experts = LabelSet(clips=tuple(clip(f"c{i:02d}") for i in range(4)),
                       ratings=expert_ratings)
    service = make_service(tmp_path, n_clips=4, expert_labels=experts)
    for i in range(4):
        cid = service.next_clip("crowd_1")["clip_id"]
        submit(service, "crowd_1", cid, 10.0 * i + 5.0)
    report = service.live_agreement()
    assert report["total_ratings"] == 4
    assert report["clips_rated"] == 4
    for name in PQ_NAMES:
        entry = report["per_pq"][name]
        assert entry["count"] == 4
        assert entry["r"] == pytest.approx(1.0, abs=1e-12)
        assert entry["rmse"] == pytest.approx(0.0, abs=1e-12)


def test_live_agreement_single_point_r_is_null(tmp_path):
    experts = LabelSet(
        clips=(clip("c00"),),
        ratings=(rating("c00", "exp_a", RaterClass.EXPERT, full_vector(40.0)),),
    )
    service = make_service(tmp_path, n_clips=1, expert_labels=experts)
    cid = service.next_clip("r1")["clip_id"]
    submit(service, "r1", cid, 42.0)
    entry = service.live_agreement()["per_pq"]["strain"]
    assert entry["count"] == 1
    assert entry["r"] is None
    assert entry["rmse"] == pytest.approx(2.0)


def test_concurrency_no_duplicate_assignments_no_lost_acks(tmp_path):
    n_clips, redundancy, n_raters = 40, 6, 24
    service = make_service(tmp_path, n_clips=n_clips, redundancy=redundancy)
    acks = {}
    errors = []

    def worker(rater):
        mine = {}
        while True:
            assignment = service.next_clip(rater)
            if assignment is None:
                break
            cid = assignment["clip_id"]
            try:
                ack = submit(service, rater, cid, 50.0)
            except ServiceError as exc:
                errors.append((rater, cid, str(exc)))
                continue
            mine[cid] = ack
        acks[rater] = mine

    threads = [threading.Thread(target=worker, args=(f"r{i:02d}",))
               for i in range(n_raters)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert not errors
    # Log has exactly one line per acked (rater, clip), none lost.
    lines = (tmp_path / "ratings.log").read_text().strip().splitlines()
    records = [json.loads(line) for line in lines]
    pairs = [(r["rater_id"], r["clip_id"]) for r in records]
    assert len(pairs) == len(set(pairs))
    acked_pairs = {(rater, cid) for rater, mine in acks.items() for cid in mine}
    assert set(pairs) == acked_pairs
    # No clip exceeded redundancy; no rater rated a clip twice.
    per_clip = {}
    for rater, cid in pairs:
        per_clip.setdefault(cid, []).append(rater)
    for cid, raters in per_clip.items():
        assert len(raters) <= redundancy
        assert len(set(raters)) == len(raters)


def test_anchor_lookup_and_errors(tmp_path):
    anchors = tuple(
        AnchorExample(pq=pq, pole=pole, clip_id=f"a_{pq.value}_{pole}",
                      caption=f"{pole} {pq.value}")
        for pq in PerceptualQuality for pole in ("low", "high")
    )
    service = make_service(tmp_path, anchors=anchors)
    found = service.anchor(PerceptualQuality.STRAIN, "high")
    assert found.clip_id == "a_strain_high"
    with pytest.raises(ServiceError, match="no anchor"):
        service.anchor(PerceptualQuality.STRAIN, "sideways")


def test_load_anchors_requires_complete_set(tmp_path):
    path = tmp_path / "anchors.csv"
    rows = ["pq,pole,clip_id,caption"]
    for pq in PerceptualQuality:
        for pole in ("low", "high"):
            rows.append(f"{pq.value},{pole},a_{pq.value}_{pole},{pole} {pq.value}")
    path.write_text("\n".join(rows) + "\n")
    anchors = load_anchors(path)
    assert len(anchors) == 14

    path.write_text("\n".join(rows[:-1]) + "\n")
    with pytest.raises(ServiceError, match="anchor"):
        load_anchors(path)


def test_service_constructor_validation(tmp_path):
    with pytest.raises(ServiceError, match="at least one clip"):
        AnnotationService(clips={}, log_path=tmp_path / "log")
    with pytest.raises(ServiceError, match="redundancy"):
        make_service(tmp_path, redundancy=0)
    with pytest.raises(ServiceError, match="non-empty"):
        make_service(tmp_path).next_clip("")
