"""Command-line interface.

Exit codes: 0 success, 1 toolkit error (one line ``error <code>: <msg>`` on
stderr), 2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .agreement import agreement_report
from .errors import VoqualError
from .experiment import (
    atomic_write_text,
    expert_targets,
    load_config,
    report_scatter,
    run_experiment,
)
from .features import (
    extract_compare_lite,
    feature_matrix,
    load_embedding_table,
    read_feature_table,
    write_feature_table,
)
from .forest import Hyperparams, fit_forest, save_forest
from .labels import (
    ingest_labels,
    ingest_ratings_only,
    make_split,
    read_clips_manifest,
    read_split,
    write_split,
)
from .audio import load_wav
from .pq import ALL_PQS, PerceptualQuality
from .tuning import GridSpec, tune


def _pq_arg(name: str) -> PerceptualQuality:
    try:
        return PerceptualQuality(name)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown PQ {name!r}; choose from "
            + ", ".join(pq.value for pq in ALL_PQS)
        ) from None


def _resolve_audio(manifest_path: Path, audio_path: str) -> Path:
    p = Path(audio_path)
    return p if p.is_absolute() else manifest_path.parent / p


def cmd_ingest(args) -> int:
    labels = ingest_labels(args.clips, args.ratings)
    print(f"clips: {len(labels.clips)}")
    print(f"ratings: {len(labels.ratings)}")
    print(f"rejected rows: {len(labels.diagnostics)}")
    for diag in labels.diagnostics:
        print(f"  {diag}", file=sys.stderr)
    return 0


def cmd_extract(args) -> int:
    if args.set == "compare-lite":
        if not args.clips:
            raise VoqualError("--clips is required for compare-lite")
        manifest = Path(args.clips)
        clips, diags = read_clips_manifest(manifest)
        for diag in diags:
            print(f"  {diag}", file=sys.stderr)
        table = {}
        for clip in clips:
            buf = load_wav(_resolve_audio(manifest, clip.audio_path),
                           clip_id=clip.clip_id)
            table[clip.clip_id] = extract_compare_lite(
                buf, rms_normalize=not args.no_rms_normalize
            )
    else:
        if not args.table:
            raise VoqualError(f"--table is required for {args.set}")
        table = load_embedding_table(args.table, args.set)
    write_feature_table(args.out, table)
    print(f"wrote {len(table)} feature vectors to {args.out}")
    return 0


def cmd_split(args) -> int:
    clips, _ = read_clips_manifest(args.clips)
    split = make_split([c.clip_id for c in clips], args.seed,
                       tuple(args.ratios))
    write_split(split, args.out)
    print(f"train={len(split.train)} val={len(split.val)} test={len(split.test)}"
          f" seed={split.seed} -> {args.out}")
    return 0


def _training_arrays(args):
    feature_set = args.set
    table = read_feature_table(args.features, feature_set)
    labels = ingest_ratings_only(args.ratings)
    targets = expert_targets(labels, args.pq)
    ids = sorted(set(table) & set(targets))
    if not ids:
        raise VoqualError("no clips with both features and expert labels")
    names = table[ids[0]].names
    return table, targets, ids, names


def cmd_train(args) -> int:
    table, targets, ids, names = _training_arrays(args)
    if args.split:
        split = read_split(args.split)
        train_ids = [c for c in split.train if c in set(ids)]
    else:
        train_ids = ids
    if not train_ids:
        raise VoqualError("empty training partition")
    X = feature_matrix(table, train_ids)
    y = np.array([targets[c] for c in train_ids])
    params = Hyperparams(n_trees=args.n_trees, max_depth=args.max_depth,
                         min_samples_leaf=args.min_samples_leaf,
                         mtry=args.mtry, seed=args.seed)
    model = fit_forest(X, y, params, feature_set_id=args.set,
                       target_pq=args.pq.value, feature_names=names)
    save_forest(model, args.out)
    print(f"trained {args.set}/{args.pq} on {len(train_ids)} clips -> {args.out}")
    return 0


def cmd_tune(args) -> int:
    table, targets, ids, _ = _training_arrays(args)
    split = read_split(args.split)
    known = set(ids)
    train_ids = [c for c in split.train if c in known]
    val_ids = [c for c in split.val if c in known]
    if not train_ids or not val_ids:
        raise VoqualError("tuning needs non-empty train and val partitions")
    X_train = feature_matrix(table, train_ids)
    y_train = np.array([targets[c] for c in train_ids])
    X_val = feature_matrix(table, val_ids)
    y_val = np.array([targets[c] for c in val_ids])
    grid = GridSpec().resolve(X_train.shape[1], seed=args.seed)
    best, val_rmse = tune(X_train, y_train, X_val, y_val, grid)
    doc = {
        "n_trees": best.n_trees, "max_depth": best.max_depth,
        "min_samples_leaf": best.min_samples_leaf, "mtry": best.mtry,
        "seed": best.seed, "val_rmse": val_rmse,
    }
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    print(text)
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed,
                      out_override=args.out)
    table = run_experiment(cfg)
    for row in table.rows:
        if row.note:
            print(f"{row.feature_set}/{row.pq}: skipped ({row.note})")
        else:
            print(f"{row.feature_set}/{row.pq}: test_rmse={row.test_rmse:.3f} "
                  f"baseline={row.baseline_rmse:.3f} (n={row.n_train}/"
                  f"{row.n_val}/{row.n_test})")
    print(f"outputs in {cfg.out_dir}")
    return 0


def cmd_agreement(args) -> int:
    labels = ingest_ratings_only(args.labels)
    report = agreement_report(labels)
    if args.json:
        text = json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"
    else:
        lines = report.to_csv().splitlines()
        if args.rater_class == "expert":
            lines = [lines[0], lines[2]]
        elif args.rater_class == "nonexpert":
            lines = [lines[0], lines[1]]
        text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_scatter(args) -> int:
    labels = ingest_ratings_only(args.labels)
    pqs = ALL_PQS if args.pq == "all" else (PerceptualQuality(args.pq),)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for pq in pqs:
        text = report_scatter(labels, pq)
        atomic_write_text(out_dir / f"scatter_{pq.value}.csv", text)
    print(f"wrote {len(pqs)} scatter file(s) to {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationService, load_anchors
    from .webapp import create_app

    manifest = Path(args.clips)
    clips, _ = read_clips_manifest(manifest)
    clip_paths = {
        c.clip_id: _resolve_audio(manifest, c.audio_path) for c in clips
    }
    expert_labels = None
    if args.expert_ratings:
        expert_labels = ingest_labels(args.clips, args.expert_ratings)
    anchors = ()
    if args.anchors:
        try:
            anchors = load_anchors(args.anchors)
        except VoqualError as exc:
            print(f"warning: serving without anchors: {exc}", file=sys.stderr)
    service = AnnotationService(
        clips=clip_paths, log_path=args.log, expert_labels=expert_labels,
        redundancy=args.redundancy, anchors=anchors,
    )
    app = create_app(service, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_minicorpus(args) -> int:
    from .minicorpus import build_minicorpus

    config_path = build_minicorpus(args.out, seed=args.seed)
    print(f"mini-corpus ready; config at {config_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voqual",
        description="Perceptual voice-quality toolkit: labels, features, "
                    "forests, agreement statistics, annotation service.",
    )
    parser.add_argument("--version", action="version",
                        version=f"voqual {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate label files")
    p.add_argument("--clips", required=True)
    p.add_argument("--ratings", required=True, nargs="+")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="write a per-clip feature table")
    p.add_argument("--set", required=True,
                   choices=["compare-lite", "ema", "hubert-l7"])
    p.add_argument("--clips", help="clips manifest (compare-lite)")
    p.add_argument("--table", help="embedding table (ema / hubert-l7)")
    p.add_argument("--no-rms-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="seeded train/val/test split")
    p.add_argument("--clips", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.6, 0.2, 0.2])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit one forest")
    p.add_argument("--set", required=True,
                   choices=["compare-lite", "ema", "hubert-l7"])
    p.add_argument("--features", required=True)
    p.add_argument("--ratings", required=True, nargs="+")
    p.add_argument("--pq", required=True, type=_pq_arg)
    p.add_argument("--split", help="restrict to the split's train partition")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=300)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid-search on the validation partition")
    p.add_argument("--set", required=True,
                   choices=["compare-lite", "ema", "hubert-l7"])
    p.add_argument("--features", required=True)
    p.add_argument("--ratings", required=True, nargs="+")
    p.add_argument("--pq", required=True, type=_pq_arg)
    p.add_argument("--split", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="run the full experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's split seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agreement", help="Table-style agreement report")
    p.add_argument("--labels", required=True, nargs="+",
                   help="ratings CSV file(s)")
    p.add_argument("--class", dest="rater_class", default="both",
                   choices=["expert", "nonexpert", "both"])
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("scatter", help="expert-vs-nonexpert clip-mean scatter")
    p.add_argument("--labels", required=True, nargs="+")
    p.add_argument("--pq", default="all")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--clips", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--expert-ratings", nargs="+")
    p.add_argument("--anchors")
    p.add_argument("--redundancy", type=int, default=6)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", help="directory of built UI assets")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("minicorpus", help="write the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_minicorpus)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "minicorpus" and args.seed is None:
        from .minicorpus import DEFAULT_SEED
        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except VoqualError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
