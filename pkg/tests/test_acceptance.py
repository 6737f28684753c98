"""Release gate: one test per headline guarantee of the package.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line
per guarantee. Every numeric check here uses the tolerance the package
promises, and the timed suites assert their runtime budget.
"""

import hashlib
import json
import math
import os
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from voqual.agreement import (
    RatingMatrix,
    agreement_report,
    anova_two_way,
    icc21,
    icc2k,
    pearson,
    rmse,
)
from voqual.experiment import load_config, run_experiment, sha256_file
from voqual.features import _column_functionals, FUNCTIONAL_NAMES
from voqual.forest import Hyperparams, _best_split, fit_forest, save_forest
from voqual.labels import (
    RaterClass,
    ingest_ratings_only,
    make_split,
    per_clip_rater_std,
)
from voqual.linear import MeanBaseline
from voqual.llds import extract_llds
from voqual.minicorpus import build_minicorpus
from voqual.pq import ALL_PQS
from voqual.service import AnnotationService, RatingsLog

from conftest import sine, white_noise

PQ_NAMES = tuple(pq.value for pq in ALL_PQS)


def _matrix(values):
    values = np.asarray(values, dtype=np.float64)
    n, k = values.shape
    return RatingMatrix(values=values,
                        subject_ids=tuple(f"s{i}" for i in range(n)),
                        rater_ids=tuple(f"r{j}" for j in range(k)))


def _anova_oracle(x):
    """Independent route: mean squares from SSE = SST - SSR - SSC."""
    n, k = x.shape
    grand = x.mean()
    sst = np.sum((x - grand) ** 2)
    ssr = k * np.sum((x.mean(axis=1) - grand) ** 2)
    ssc = n * np.sum((x.mean(axis=0) - grand) ** 2)
    sse = sst - ssr - ssc
    return ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1))


def test_statistics_oracle_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(20260814)
    checked = 0
    while checked < 100:
        n = int(rng.integers(2, 21))
        k = int(rng.integers(2, 7))
        x = rng.uniform(0.0, 100.0, size=(n, k))
        m = _matrix(x)
        msr, msc, mse = _anova_oracle(x)
        a = anova_two_way(m)
        assert abs(a.msr - msr) <= 1e-9
        assert abs(a.msc - msc) <= 1e-9
        assert abs(a.mse - mse) <= 1e-9
        denom_2k = msr + (msc - mse) / n
        denom_21 = msr + (k - 1) * mse + k * (msc - mse) / n
        if denom_2k <= 0 or denom_21 <= 0:
            continue        # degenerate variance structure, icc* raises
        assert abs(icc2k(m) - (msr - mse) / denom_2k) <= 1e-9
        assert abs(icc21(m) - (msr - mse) / denom_21) <= 1e-9
        checked += 1
    assert icc2k(_matrix([[1, 2], [2, 3], [3, 4]])) == 0.8
    assert time.perf_counter() - started < 1.0


def test_metric_identities():
    x = np.arange(12, dtype=np.float64)
    assert pearson(x, 2.0 * x - 8.0) == 1.0
    assert pearson(x, -2.0 * x + 40.0) == -1.0
    assert abs(rmse([0.0, 0.0], [3.0, 4.0]) - math.sqrt(12.5)) <= 1e-12


def test_dsp_synthetic_signal_suite():
    started = time.perf_counter()

    for freq, tol in ((220.0, 2.0), (440.0, 4.0)):
        llds = extract_llds(sine(freq))
        voiced = llds.column("voicing_flag") > 0
        assert voiced.any()
        mean_f0 = llds.column("F0_hz")[voiced].mean()
        assert abs(mean_f0 - freq) <= tol

    noise = extract_llds(white_noise(1.0))
    assert noise.column("voicing_flag").mean() <= 0.10

    constant = dict(zip(FUNCTIONAL_NAMES,
                        _column_functionals(np.full(200, 3.75))))
    assert constant["std"] == 0.0
    assert constant["slope"] == 0.0
    assert constant["range"] == 0.0
    assert constant["iqr"] == 0.0

    assert time.perf_counter() - started < 10.0


def _exhaustive_split(X, y, min_leaf):
    """Brute force over every (feature, midpoint), lexicographic ties."""
    n, d = X.shape
    best = None
    for j in range(d):
        xs = np.sort(np.unique(X[:, j]))
        for threshold in (xs[:-1] + xs[1:]) / 2.0:
            left = X[:, j] <= threshold
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            sse = (np.sum((y[left] - y[left].mean()) ** 2)
                   + np.sum((y[~left] - y[~left].mean()) ** 2))
            key = (sse, j, threshold)
            if best is None or key < best:
                best = key
    return best


def test_forest_correctness():
    started = time.perf_counter()

    # Step function: one split at the midpoint of the jump.
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    feature, threshold, left_mask = _best_split(X, y, np.array([0]), 1)
    oracle_sse, oracle_feature, oracle_threshold = _exhaustive_split(X, y, 1)
    assert (feature, threshold) == (oracle_feature, oracle_threshold) == (0, 1.5)
    assert list(left_mask) == [True, True, False, False]
    achieved = (np.sum((y[left_mask] - y[left_mask].mean()) ** 2)
                + np.sum((y[~left_mask] - y[~left_mask].mean()) ** 2))
    assert abs(achieved - oracle_sse) <= 1e-9

    # Bit-identical refits under a fixed seed.
    rng = np.random.default_rng(7)
    Xr = rng.normal(size=(80, 6))
    yr = rng.uniform(0.0, 100.0, size=80)
    params = Hyperparams(n_trees=30, max_depth=8, seed=5)
    first = fit_forest(Xr, yr, params)
    second = fit_forest(Xr, yr, params)
    probe = rng.normal(size=(40, 6))
    assert np.array_equal(first.predict_matrix(probe),
                          second.predict_matrix(probe))

    # Linear benchmark: the forest must at least halve the mean baseline.
    rng = np.random.default_rng(1)
    Xb = rng.normal(size=(240, 10))
    yb = 3.0 * Xb[:, 0] + rng.normal(scale=1.0, size=240)
    model = fit_forest(Xb[:200], yb[:200],
                       Hyperparams(n_trees=100, max_depth=20, seed=11))
    forest_rmse = rmse(model.predict_matrix(Xb[200:]), yb[200:])
    baseline = MeanBaseline().fit(Xb[:200], yb[:200])
    baseline_rmse = rmse(baseline.predict(Xb[200:]), yb[200:])
    assert forest_rmse <= 0.5 * baseline_rmse

    assert time.perf_counter() - started < 30.0


def test_end_to_end_mini_corpus(tmp_path):
    started = time.perf_counter()
    config_path = build_minicorpus(tmp_path / "corpus")

    tables = []
    digests = []
    for tag in ("a", "b"):
        out = tmp_path / f"out_{tag}"
        cfg = load_config(config_path, out_override=out)
        tables.append(run_experiment(cfg))
        digests.append({p.name: sha256_file(p)
                        for p in sorted(out.iterdir()) if p.is_file()})

    assert digests[0] == digests[1]

    rows = [r for r in tables[0].rows if r.test_rmse is not None]
    assert len(rows) == len(ALL_PQS)
    wins = sum(1 for r in rows if r.test_rmse < r.baseline_rmse)
    assert wins >= 6

    assert time.perf_counter() - started < 120.0


def test_split_contract():
    split = make_split([f"c{i:04d}" for i in range(296)], seed=3)
    assert (len(split.train), len(split.val), len(split.test)) == (177, 59, 60)

    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(3, 1200))
        seed = int(rng.integers(0, 2 ** 31))
        ids = [f"c{i}" for i in range(n)]
        s = make_split(ids, seed)
        train, val, test = set(s.train), set(s.val), set(s.test)
        assert len(s.train) == int(0.6 * n)
        assert len(s.val) == int(0.2 * n)
        assert len(s.train) + len(s.val) + len(s.test) == n
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == set(ids)


def _pair_value(clip_id, rater_id):
    """Deterministic per-pair rating so replay and audit can recompute it."""
    return float((int(clip_id.split("_")[1]) * 7 + int(rater_id[1:]) * 13) % 101)


def _drive_raters(service, n_raters, target, acked, errors):
    counter = [0]
    gate = threading.Lock()

    def worker(rater_id):
        misses = 0
        while True:
            with gate:
                if counter[0] >= target:
                    return
                counter[0] += 1
            assignment = service.next_clip(rater_id)
            if assignment is None:
                with gate:
                    counter[0] -= 1
                misses += 1
                if misses > 500:
                    errors.append(f"{rater_id}: starved")
                    return
                time.sleep(0.001)
                continue
            clip_id = assignment["clip_id"]
            value = _pair_value(clip_id, rater_id)
            try:
                ack = service.submit_rating({
                    "clip_id": clip_id,
                    "rater_id": rater_id,
                    "values": {name: value for name in PQ_NAMES},
                })
            except Exception as exc:  # noqa: BLE001 - collected for the assert
                errors.append(f"{rater_id}: {exc}")
                return
            acked.append((clip_id, rater_id, ack["submission_id"]))

    threads = [threading.Thread(target=worker, args=(f"r{i:02d}",))
               for i in range(n_raters)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def test_service_durability(tmp_path):
    clips = {f"clip_{i:03d}": tmp_path / "unused.wav" for i in range(100)}
    log_path = tmp_path / "ratings.log"
    acked = []
    errors = []

    service = AnnotationService(clips=clips, log_path=log_path, redundancy=6)
    _drive_raters(service, 50, 250, acked, errors)
    assert errors == []
    assert len(acked) == 250

    # Crash: drop the service without any shutdown. Every acknowledged
    # rating must survive the restart (idempotent replay returns the
    # original submission id instead of a new record).
    del service
    restarted = AnnotationService(clips=clips, log_path=log_path, redundancy=6)
    assert restarted.live_agreement()["total_ratings"] == 250
    for clip_id, rater_id, submission_id in acked:
        value = _pair_value(clip_id, rater_id)
        again = restarted.submit_rating({
            "clip_id": clip_id,
            "rater_id": rater_id,
            "values": {name: value for name in PQ_NAMES},
        })
        assert again["status"] == "ok"
        assert again["submission_id"] == submission_id
    assert restarted.live_agreement()["total_ratings"] == 250

    _drive_raters(restarted, 50, 250, acked, errors)
    assert errors == []
    assert len(acked) == 500

    pairs = [(c, r) for c, r, _ in acked]
    assert len(set(pairs)) == 500
    per_clip = {}
    for clip_id, rater_id in pairs:
        per_clip.setdefault(clip_id, []).append(rater_id)
    for raters in per_clip.values():
        assert len(raters) <= 6
        assert len(set(raters)) == len(raters)

    records = RatingsLog.replay(log_path)
    assert len(records) == 500
    logged = {(rec["clip_id"], rec["rater_id"]) for rec in records}
    assert logged == set(pairs)
    for rec in records:
        want = _pair_value(rec["clip_id"], rec["rater_id"])
        assert all(v == want for v in rec["values"].values())

    exported = tmp_path / "export.csv"
    exported.write_text(restarted.export_csv())
    labels = ingest_ratings_only(exported)
    assert len(labels.ratings) == 500


def test_pvqd_reliability():
    """Data-dependent: needs the public PVQD rating tables on disk.

    Point VOQUAL_PVQD at a directory of ratings CSVs (standard columns:
    clip_id, rater_id, rater_class, trial, the seven quality columns,
    timestamp) to enable it.
    """
    data_dir = os.environ.get("VOQUAL_PVQD")
    if not data_dir or not Path(data_dir).is_dir():
        pytest.skip("set VOQUAL_PVQD to a directory of PVQD ratings CSVs")
    tables = sorted(Path(data_dir).glob("*.csv"))
    if not tables:
        pytest.skip(f"no ratings CSVs under {data_dir}")

    labels = ingest_ratings_only(tables)
    report = agreement_report(labels)
    published = {"strain": 0.83, "loudness": 0.87, "roughness": 0.79,
                 "breathiness": 0.83, "pitch": 0.86}
    for name, want in published.items():
        got = report.expert_icc[name]
        assert got is not None
        assert abs(got - want) <= 0.05
    assert abs(report.expert_icc_average - 0.84) <= 0.05
    assert abs(per_clip_rater_std(labels, RaterClass.EXPERT) - 10.47) <= 1.5
