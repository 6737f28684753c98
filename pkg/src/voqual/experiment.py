"""Experiment orchestration: config, per-(feature set, PQ) runs, reports.

A run joins labels with features, splits by clip, tunes on the validation
partition, refits, and writes results/agreement/scatter files plus a
manifest of seeds and input digests. Outputs are deterministic: fixed
config + fixed inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__ as package_version
from .agreement import agreement_report, pearson, rmse
from .errors import ConfigError, FeatureError, LabelError, StatsError, VoqualError
from .features import (
    FeatureVector,
    extract_compare_lite,
    feature_matrix,
    load_embedding_table,
)
from .forest import Hyperparams, fit_forest, save_forest
from .labels import aggregate_ratings, ingest_labels, make_split, per_clip_rater_std, rater_clip_means
from .linear import MeanBaseline, RidgeRegressor
from .pq import ALL_PQS, LabelSet, PerceptualQuality, RaterClass
from .audio import load_wav
from .tuning import GridSpec, tune

PathLike = Union[str, Path]

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class ExperimentConfig:
    clips_path: Path
    ratings_paths: Tuple[Path, ...]
    feature_sets: Tuple[str, ...]
    pqs: Tuple[PerceptualQuality, ...]
    out_dir: Path
    split_seed: int = 0
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS
    rms_normalize: bool = True
    grid: GridSpec = field(default_factory=GridSpec)
    embedding_tables: Tuple[Tuple[str, Path], ...] = ()

    def __post_init__(self) -> None:
        if not self.feature_sets:
            raise ConfigError("config selects no feature sets")
        if not self.pqs:
            raise ConfigError("config selects no PQs")
        for fs in self.feature_sets:
            if fs not in ("compare-lite", "ema", "hubert-l7"):
                raise ConfigError(f"unknown feature set {fs!r}")
            if fs != "compare-lite" and fs not in dict(self.embedding_tables):
                raise ConfigError(f"feature set {fs!r} needs a [features.{fs}] table")


def _as_path_list(value, base: Path) -> List[Path]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError("expected a path or list of paths")
    return [(base / v).resolve() for v in value]


def load_config(path: PathLike, seed_override: Optional[int] = None,
                out_override: Optional[PathLike] = None) -> ExperimentConfig:
    """Parse the TOML experiment config; relative paths resolve against the
    config file's directory. CLI overrides win over config keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: bad TOML: {exc}") from exc
    base = path.parent

    labels = doc.get("labels", {})
    if "clips" not in labels or "ratings" not in labels:
        raise ConfigError(f"{path}: [labels] needs 'clips' and 'ratings'")
    clips_path = _as_path_list(labels["clips"], base)[0]
    ratings_paths = tuple(_as_path_list(labels["ratings"], base))

    exp = doc.get("experiment", {})
    feature_sets = tuple(exp.get("feature_sets", ["compare-lite"]))
    pq_names = exp.get("pqs", [pq.value for pq in ALL_PQS])
    try:
        pqs = tuple(PerceptualQuality(name) for name in pq_names)
    except ValueError as exc:
        raise ConfigError(f"{path}: unknown PQ in {pq_names}") from exc
    rms_normalize = bool(exp.get("rms_normalize", True))

    split = doc.get("split", {})
    split_seed = int(split.get("seed", 0))
    ratios = tuple(float(r) for r in split.get("ratios", DEFAULT_RATIOS))
    if len(ratios) != 3:
        raise ConfigError(f"{path}: split.ratios needs exactly 3 entries")

    grid_doc = doc.get("grid", {})

    def _mtry_rule(entry):
        if entry == "sqrt":
            return "sqrt"
        if entry == "third":
            return 1 / 3
        return float(entry)

    grid = GridSpec(
        n_trees=tuple(int(v) for v in grid_doc.get("n_trees", GridSpec.n_trees)),
        max_depth=tuple(int(v) for v in grid_doc.get("max_depth", GridSpec.max_depth)),
        min_samples_leaf=tuple(
            int(v) for v in grid_doc.get("min_samples_leaf", GridSpec.min_samples_leaf)
        ),
        mtry=tuple(_mtry_rule(v) for v in grid_doc.get("mtry", ("sqrt", "third"))),
    )

    tables = []
    for fs, section in doc.get("features", {}).items():
        if "table" not in section:
            raise ConfigError(f"{path}: [features.{fs}] needs 'table'")
        tables.append((fs, _as_path_list(section["table"], base)[0]))

    out_dir = doc.get("output", {}).get("dir", "out")
    if out_override is not None:
        out_dir_path = Path(out_override).resolve()
    else:
        out_dir_path = (base / out_dir).resolve()
    if seed_override is not None:
        split_seed = seed_override

    return ExperimentConfig(
        clips_path=clips_path,
        ratings_paths=ratings_paths,
        feature_sets=feature_sets,
        pqs=pqs,
        out_dir=out_dir_path,
        split_seed=split_seed,
        ratios=ratios,  # type: ignore[arg-type]
        rms_normalize=rms_normalize,
        grid=grid,
        embedding_tables=tuple(tables),
    )


@dataclass(frozen=True)
class ResultRow:
    feature_set: str
    pq: str
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0
    params: Optional[Hyperparams] = None
    val_rmse: Optional[float] = None
    test_rmse: Optional[float] = None
    baseline_rmse: Optional[float] = None
    ridge_rmse: Optional[float] = None
    note: str = ""


@dataclass(frozen=True)
class ResultTable:
    rows: Tuple[ResultRow, ...]
    expert_std: Optional[float]
    nonexpert_rmse: Optional[float]
    rms_normalize: bool
    split_seed: int

    CSV_HEADER = ("feature_set,pq,n_train,n_val,n_test,n_trees,max_depth,"
                  "min_samples_leaf,mtry,val_rmse,test_rmse,baseline_rmse,"
                  "ridge_rmse,note")

    def to_csv(self) -> str:
        def num(v) -> str:
            return "" if v is None else repr(v)

        lines = [self.CSV_HEADER]
        for r in self.rows:
            p = r.params
            lines.append(",".join([
                r.feature_set, r.pq,
                str(r.n_train), str(r.n_val), str(r.n_test),
                str(p.n_trees) if p else "", str(p.max_depth) if p else "",
                str(p.min_samples_leaf) if p else "", str(p.mtry) if p else "",
                num(r.val_rmse), num(r.test_rmse), num(r.baseline_rmse),
                num(r.ridge_rmse), r.note,
            ]))
        lines.append(",".join([
            "reference", "expert_std", "", "", "", "", "", "", "", "",
            num(self.expert_std), "", "",
            "per-clip std across expert raters; labels only",
        ]))
        lines.append(",".join([
            "reference", "nonexpert_rmse", "", "", "", "", "", "", "", "",
            num(self.nonexpert_rmse), "", "",
            "non-expert vs expert clip-mean RMSE pooled over PQs; labels only",
        ]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "feature_set": r.feature_set,
                    "pq": r.pq,
                    "n_train": r.n_train,
                    "n_val": r.n_val,
                    "n_test": r.n_test,
                    "params": None if r.params is None else {
                        "n_trees": r.params.n_trees,
                        "max_depth": r.params.max_depth,
                        "min_samples_leaf": r.params.min_samples_leaf,
                        "mtry": r.params.mtry,
                        "seed": r.params.seed,
                    },
                    "val_rmse": r.val_rmse,
                    "test_rmse": r.test_rmse,
                    "baseline_rmse": r.baseline_rmse,
                    "ridge_rmse": r.ridge_rmse,
                    "note": r.note,
                }
                for r in self.rows
            ],
            "reference": {
                "expert_std": self.expert_std,
                "nonexpert_rmse": self.nonexpert_rmse,
            },
            "split_seed": self.split_seed,
            "rms_normalize": self.rms_normalize,
            "notes": [
                "targets are expert mean ratings; gendered PQs use the "
                "highest-coverage single expert rater",
                "linear reference is ridge (L2): closed form, same "
                "linear-vs-forest comparison",
                f"rms normalization {'on' if self.rms_normalize else 'off'} "
                "during feature extraction",
            ],
        }


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write via temp file + rename so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: PathLike, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def expert_targets(labels: LabelSet, pq: PerceptualQuality) -> Dict[str, float]:
    """Per-clip regression targets.

    CAPE-V qualities: mean over all expert raters and trials. Gendered
    qualities: the single expert rater covering the most clips (ties broken
    by rater id), since gendered labels come from raters with very unequal
    coverage and pooling would mix scales.
    """
    if not pq.gendered:
        return aggregate_ratings(labels, RaterClass.EXPERT, pq)
    by_clip = rater_clip_means(labels, RaterClass.EXPERT, pq)
    coverage: Dict[str, int] = {}
    for means in by_clip.values():
        for rater in means:
            coverage[rater] = coverage.get(rater, 0) + 1
    if not coverage:
        return {}
    best_rater = min(coverage, key=lambda r: (-coverage[r], r))
    return {
        clip_id: means[best_rater]
        for clip_id, means in by_clip.items()
        if best_rater in means
    }


def pooled_nonexpert_rmse(labels: LabelSet) -> Optional[float]:
    """RMSE between non-expert and expert clip means, pooled over all PQs."""
    diffs: List[float] = []
    for pq in ALL_PQS:
        expert = aggregate_ratings(labels, RaterClass.EXPERT, pq)
        nonexpert = aggregate_ratings(labels, RaterClass.NONEXPERT, pq)
        for clip_id in set(expert) & set(nonexpert):
            diffs.append(nonexpert[clip_id] - expert[clip_id])
    if not diffs:
        return None
    return float(np.sqrt(np.mean(np.square(diffs))))


def report_scatter(labels: LabelSet, pq: PerceptualQuality) -> str:
    """CSV of per-clip expert vs non-expert means with r in a footer."""
    expert = aggregate_ratings(labels, RaterClass.EXPERT, pq)
    nonexpert = aggregate_ratings(labels, RaterClass.NONEXPERT, pq)
    shared = sorted(set(expert) & set(nonexpert))
    if not shared:
        raise StatsError(f"{pq}: no overlapping clips")
    lines = ["clip_id,expert_mean,nonexpert_mean"]
    for clip_id in shared:
        lines.append(f"{clip_id},{expert[clip_id]!r},{nonexpert[clip_id]!r}")
    e = [expert[c] for c in shared]
    ne = [nonexpert[c] for c in shared]
    try:
        r_text = repr(pearson(e, ne))
    except StatsError:
        r_text = ""
    offset = float(np.mean(ne) - np.mean(e))
    lines.append(f"# pearson_r={r_text} n={len(shared)} mean_offset={offset!r}")
    return "\n".join(lines) + "\n"


def _load_feature_tables(cfg: ExperimentConfig,
                         labels: LabelSet) -> Dict[str, Dict[str, FeatureVector]]:
    tables: Dict[str, Dict[str, FeatureVector]] = {}
    embedding = dict(cfg.embedding_tables)
    for fs in cfg.feature_sets:
        if fs == "compare-lite":
            base = cfg.clips_path.parent
            per_clip: Dict[str, FeatureVector] = {}
            for clip in labels.clips:
                if not clip.audio_path:
                    continue
                audio_path = Path(clip.audio_path)
                if not audio_path.is_absolute():
                    audio_path = base / audio_path
                buf = load_wav(audio_path, clip_id=clip.clip_id)
                per_clip[clip.clip_id] = extract_compare_lite(
                    buf, rms_normalize=cfg.rms_normalize
                )
            tables[fs] = per_clip
        else:
            tables[fs] = load_embedding_table(embedding[fs], fs)
    return tables


def _input_digests(cfg: ExperimentConfig, labels: LabelSet) -> Dict[str, str]:
    digests: Dict[str, str] = {str(cfg.clips_path): sha256_file(cfg.clips_path)}
    for p in cfg.ratings_paths:
        digests[str(p)] = sha256_file(p)
    for _, table in cfg.embedding_tables:
        digests[str(table)] = sha256_file(table)
    if "compare-lite" in cfg.feature_sets:
        base = cfg.clips_path.parent
        for clip in labels.clips:
            if not clip.audio_path:
                continue
            p = Path(clip.audio_path)
            if not p.is_absolute():
                p = base / p
            digests[str(p)] = sha256_file(p)
    return digests


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Tune, train, and evaluate one forest per (feature set, PQ), writing
    all report files under cfg.out_dir."""
    labels = ingest_labels(cfg.clips_path, cfg.ratings_paths)
    tables = _load_feature_tables(cfg, labels)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    try:
        expert_std = per_clip_rater_std(labels, RaterClass.EXPERT)
    except LabelError:
        expert_std = None
    nonexpert_ref = pooled_nonexpert_rmse(labels)

    rows: List[ResultRow] = []
    for fs in cfg.feature_sets:
        features = tables[fs]
        for pq in cfg.pqs:
            targets = expert_targets(labels, pq)
            ids = sorted(set(features) & set(targets))
            if len(ids) < 5:
                rows.append(ResultRow(
                    feature_set=fs, pq=pq.value, n_train=len(ids),
                    note=f"only {len(ids)} clips with both features and labels",
                ))
                continue
            split = make_split(ids, cfg.split_seed, cfg.ratios)
            if not split.train or not split.val or not split.test:
                rows.append(ResultRow(
                    feature_set=fs, pq=pq.value, n_train=len(split.train),
                    n_val=len(split.val), n_test=len(split.test),
                    note="empty partition at these ratios",
                ))
                continue
            X_train = feature_matrix(features, split.train)
            X_val = feature_matrix(features, split.val)
            X_test = feature_matrix(features, split.test)
            y_train = np.array([targets[c] for c in split.train])
            y_val = np.array([targets[c] for c in split.val])
            y_test = np.array([targets[c] for c in split.test])

            grid = cfg.grid.resolve(X_train.shape[1], seed=cfg.split_seed)
            best, val_rmse = tune(X_train, y_train, X_val, y_val, grid)
            names = features[split.train[0]].names
            model = fit_forest(X_train, y_train, best, feature_set_id=fs,
                               target_pq=pq.value, feature_names=names)
            test_rmse = rmse(model.predict_matrix(X_test), y_test)

            baseline = MeanBaseline().fit(X_train, y_train)
            baseline_rmse = rmse(baseline.predict(X_test), y_test)
            ridge = RidgeRegressor(l2_weight=1.0).fit(X_train, y_train)
            ridge_rmse = rmse(ridge.predict(X_test), y_test)

            save_forest(model, out / f"forest_{fs}_{pq.value}.json")
            rows.append(ResultRow(
                feature_set=fs, pq=pq.value,
                n_train=len(split.train), n_val=len(split.val),
                n_test=len(split.test), params=best,
                val_rmse=val_rmse, test_rmse=test_rmse,
                baseline_rmse=baseline_rmse, ridge_rmse=ridge_rmse,
            ))

    table = ResultTable(rows=tuple(rows), expert_std=expert_std,
                        nonexpert_rmse=nonexpert_ref,
                        rms_normalize=cfg.rms_normalize,
                        split_seed=cfg.split_seed)

    atomic_write_text(out / "results.csv", table.to_csv())
    report = agreement_report(labels)
    doc = table.to_dict()
    doc["agreement"] = report.to_dict()
    atomic_write_json(out / "results.json", doc)
    atomic_write_text(out / "agreement.csv", report.to_csv())

    scatter_files = []
    for pq in cfg.pqs:
        try:
            text = report_scatter(labels, pq)
        except StatsError:
            continue
        name = f"scatter_{pq.value}.csv"
        atomic_write_text(out / name, text)
        scatter_files.append(name)

    manifest = {
        "package": {"name": "voqual", "version": package_version},
        "python": f"{sys.version_info[0]}.{sys.version_info[1]}",
        "library_versions": _library_versions(),
        "split_seed": cfg.split_seed,
        "ratios": list(cfg.ratios),
        "rms_normalize": cfg.rms_normalize,
        "feature_sets": list(cfg.feature_sets),
        "pqs": [pq.value for pq in cfg.pqs],
        "grid": {
            "n_trees": list(cfg.grid.n_trees),
            "max_depth": list(cfg.grid.max_depth),
            "min_samples_leaf": list(cfg.grid.min_samples_leaf),
            "mtry": [str(m) for m in cfg.grid.mtry],
        },
        "inputs": _input_digests(cfg, labels),
        "outputs": {
            name: sha256_file(out / name)
            for name in sorted(
                ["results.csv", "results.json", "agreement.csv"]
                + scatter_files
                + [f"forest_{r.feature_set}_{r.pq}.json"
                   for r in rows if r.params is not None]
            )
        },
    }
    atomic_write_json(out / "run_manifest.json", manifest)
    return table


def _library_versions() -> Dict[str, str]:
    import scipy
    import sklearn
    return {
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }
