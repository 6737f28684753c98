"""Fixed-length per-clip feature vectors.

Three feature sets share one vector container: "compare-lite" (natively
computed functionals over the LLD matrix), and two ingested embedding
tables, "ema" and "hubert-l7". Vector length and name order are fixed per
set so models and feature files stay interchangeable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import AudioBuffer, CANONICAL_RATE_HZ, normalize_rms, resample
from .errors import FeatureError
from .llds import LLD_COLUMNS, VOICED_ONLY_COLUMNS, LLDMatrix, extract_llds

FEATURE_SET_IDS = ("compare-lite", "ema", "hubert-l7")
EMBEDDING_SET_IDS = ("ema", "hubert-l7")

FUNCTIONAL_NAMES = (
    "mean", "std", "min", "max", "range", "median", "q1", "q3", "iqr",
    "skewness", "kurtosis", "slope",
)

IMPUTED_FLAG_NAME = "f0__imputed"

PathLike = Union[str, Path]


def compare_lite_feature_names() -> Tuple[str, ...]:
    names = [f"{col}__{fn}" for col in LLD_COLUMNS for fn in FUNCTIONAL_NAMES]
    names.append(IMPUTED_FLAG_NAME)
    return tuple(names)


COMPARE_LITE_NAMES = compare_lite_feature_names()
COMPARE_LITE_DIM = len(COMPARE_LITE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    feature_set_id: str
    values: np.ndarray
    names: Tuple[str, ...]

    def __post_init__(self) -> None:
        if self.feature_set_id not in FEATURE_SET_IDS:
            raise FeatureError(f"unknown feature set {self.feature_set_id!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise FeatureError("feature vector must be 1-D")
        if values.size != len(self.names):
            raise FeatureError(
                f"{values.size} values but {len(self.names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise FeatureError("feature vector contains NaN/Inf")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return self.values.size


def _column_functionals(series: np.ndarray) -> List[float]:
    """The 12 functionals of one frame series, in FUNCTIONAL_NAMES order."""
    n = series.size
    mean = float(np.mean(series))
    std = float(np.std(series))
    lo = float(np.min(series))
    hi = float(np.max(series))
    q1, median, q3 = (float(v) for v in np.percentile(series, [25.0, 50.0, 75.0]))

    centered = series - mean
    m2 = float(np.mean(centered ** 2))
    if m2 < 1e-30:
        skewness = 0.0
        kurtosis = 0.0
    else:
        skewness = float(np.mean(centered ** 3)) / m2 ** 1.5
        kurtosis = float(np.mean(centered ** 4)) / m2 ** 2 - 3.0

    if n < 2:
        slope = 0.0
    else:
        t = np.arange(n, dtype=np.float64)
        t -= t.mean()
        slope = float(np.dot(t, centered) / np.dot(t, t))

    return [mean, std, lo, hi, hi - lo, median, q1, q3, q3 - q1,
            skewness, kurtosis, slope]


def apply_functionals(llds: LLDMatrix) -> FeatureVector:
    """Collapse the frame matrix to the fixed compare-lite vector.

    F0-derived columns are summarized over voiced frames only. Clips with
    fewer than two voiced frames get zeros there plus the imputation flag.
    """
    if llds.n_frames < 2:
        raise FeatureError("need at least 2 frames of LLDs")
    voiced = llds.column("voicing_flag") > 0
    imputed = int(np.count_nonzero(voiced)) < 2

    values: List[float] = []
    for col in llds.columns:
        series = llds.column(col)
        if col in VOICED_ONLY_COLUMNS:
            if imputed:
                values.extend([0.0] * len(FUNCTIONAL_NAMES))
                continue
            series = series[voiced]
        values.extend(_column_functionals(series))
    values.append(1.0 if imputed else 0.0)
    return FeatureVector("compare-lite", np.array(values), COMPARE_LITE_NAMES)


def extract_compare_lite(buf: AudioBuffer, rms_normalize: bool = True) -> FeatureVector:
    """Full per-clip pipeline: resample to 16 kHz, optional RMS leveling,
    LLD extraction, functionals."""
    if buf.sample_rate_hz != CANONICAL_RATE_HZ:
        buf = resample(buf, CANONICAL_RATE_HZ)
    if rms_normalize:
        buf = normalize_rms(buf)
    return apply_functionals(extract_llds(buf))


class CompareLiteExtractor(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper: AudioBuffer sequence in, feature matrix out."""

    def __init__(self, rms_normalize: bool = True):
        self.rms_normalize = rms_normalize

    def fit(self, X, y=None):
        return self

    def transform(self, X: Sequence[AudioBuffer]) -> np.ndarray:
        rows = [extract_compare_lite(buf, rms_normalize=self.rms_normalize).values
                for buf in X]
        return np.vstack(rows) if rows else np.empty((0, COMPARE_LITE_DIM))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(COMPARE_LITE_NAMES, dtype=object)


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise FeatureError(f"{where}: bad number {text!r}") from exc
    if not np.isfinite(value):
        raise FeatureError(f"{where}: NaN/Inf value")
    return value


def load_embedding_table(path: PathLike, expected_set: str) -> Dict[str, FeatureVector]:
    """Read a precomputed embedding table and pool to per-clip vectors.

    Frame-level tables (clip_id, frame_index, v_0..) are pooled by mean and
    std over frames (std over a single frame is 0). Pooled tables
    (clip_id, v_0..) pass through unchanged.
    """
    if expected_set not in EMBEDDING_SET_IDS:
        raise FeatureError(f"unknown feature set {expected_set!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureError(f"{path}: empty table") from None
        if not header or header[0] != "clip_id":
            raise FeatureError(f"{path}: first column must be clip_id")
        frame_level = len(header) > 1 and header[1] == "frame_index"
        dim_names = header[2:] if frame_level else header[1:]
        dim = len(dim_names)
        if dim == 0:
            raise FeatureError(f"{path}: no value columns")

        frames: Dict[str, List[Tuple[int, np.ndarray]]] = {}
        pooled: Dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            expected_len = dim + (2 if frame_level else 1)
            if len(row) != expected_len:
                raise FeatureError(
                    f"{path}:{lineno}: dimension mismatch, expected "
                    f"{expected_len} fields, got {len(row)}"
                )
            where = f"{path}:{lineno}"
            clip_id = row[0]
            if frame_level:
                frame_index = int(_parse_float(row[1], where))
                vec = np.array([_parse_float(v, where) for v in row[2:]])
                frames.setdefault(clip_id, []).append((frame_index, vec))
            else:
                if clip_id in pooled:
                    raise FeatureError(f"{where}: duplicate clip {clip_id!r}")
                pooled[clip_id] = np.array([_parse_float(v, where) for v in row[1:]])

    out: Dict[str, FeatureVector] = {}
    if frame_level:
        names = tuple(f"{n}__mean" for n in dim_names) + \
            tuple(f"{n}__std" for n in dim_names)
        for clip_id, rows in frames.items():
            matrix = np.vstack([vec for _, vec in sorted(rows, key=lambda r: r[0])])
            vec = np.concatenate([matrix.mean(axis=0), matrix.std(axis=0)])
            out[clip_id] = FeatureVector(expected_set, vec, names)
    else:
        names = tuple(dim_names)
        for clip_id, vec in pooled.items():
            out[clip_id] = FeatureVector(expected_set, vec, names)
    if not out:
        raise FeatureError(f"{path}: no data rows")
    return out


def write_feature_table(path: PathLike, table: Dict[str, FeatureVector]) -> None:
    """CSV with clip_id first, then the named feature columns."""
    if not table:
        raise FeatureError("empty feature table")
    items = sorted(table.items())
    names = items[0][1].names
    for clip_id, vec in items:
        if vec.names != names:
            raise FeatureError(f"clip {clip_id!r} has mismatched feature names")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("clip_id",) + names)
        for clip_id, vec in items:
            writer.writerow([clip_id] + [repr(v) for v in vec.values.tolist()])


def read_feature_table(path: PathLike, feature_set_id: str) -> Dict[str, FeatureVector]:
    """Inverse of write_feature_table."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureError(f"{path}: empty table") from None
        if not header or header[0] != "clip_id":
            raise FeatureError(f"{path}: first column must be clip_id")
        names = tuple(header[1:])
        out: Dict[str, FeatureVector] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise FeatureError(f"{path}:{lineno}: wrong field count")
            where = f"{path}:{lineno}"
            values = np.array([_parse_float(v, where) for v in row[1:]])
            if row[0] in out:
                raise FeatureError(f"{where}: duplicate clip {row[0]!r}")
            out[row[0]] = FeatureVector(feature_set_id, values, names)
    if not out:
        raise FeatureError(f"{path}: no data rows")
    return out


def feature_matrix(table: Dict[str, FeatureVector],
                   clip_ids: Iterable[str]) -> np.ndarray:
    """Stack per-clip vectors into a design matrix in the given clip order."""
    rows = []
    for clip_id in clip_ids:
        if clip_id not in table:
            raise FeatureError(f"no features for clip {clip_id!r}")
        rows.append(table[clip_id].values)
    if not rows:
        raise FeatureError("no clips requested")
    return np.vstack(rows)
