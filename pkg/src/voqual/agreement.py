"""Agreement and error metrics: two-way ANOVA, ICC(2,1)/ICC(2,k), Pearson, RMSE.

ICC follows the Shrout & Fleiss two-way random-effects, absolute-agreement
definitions. ICC(2,k) (reliability of the mean of k raters) is the headline
statistic because published clinician ratings are averaged; ICC(2,1) is
exposed alongside.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import StatsError
from .labels import aggregate_ratings, rater_clip_means
from .pq import ALL_PQS, LabelSet, PerceptualQuality, RaterClass

ICC_FORM = "ICC(2,k): two-way random effects, absolute agreement, average of k raters"


@dataclass(frozen=True)
class RatingMatrix:
    """Complete n_subjects x k_raters matrix (no missing cells)."""

    values: np.ndarray
    subject_ids: tuple[str, ...]
    rater_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise StatsError(f"rating matrix must be 2-D, got shape {values.shape}")
        n, k = values.shape
        if n < 2 or k < 2:
            raise StatsError(f"need >= 2 subjects and >= 2 raters, got {n}x{k}")
        if not np.all(np.isfinite(values)):
            raise StatsError("rating matrix contains NaN/Inf")
        if len(self.subject_ids) != n or len(self.rater_ids) != k:
            raise StatsError("id lists do not match matrix shape")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AnovaComponents:
    """Mean squares of the two-way (subjects x raters) decomposition."""

    msr: float
    msc: float
    mse: float
    n: int
    k: int


def anova_two_way(m: RatingMatrix) -> AnovaComponents:
    x = m.values
    n, k = x.shape
    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    msr = k * np.sum((row_means - grand) ** 2) / (n - 1)
    msc = n * np.sum((col_means - grand) ** 2) / (k - 1)
    resid = x - row_means[:, None] - col_means[None, :] + grand
    mse = np.sum(resid ** 2) / ((n - 1) * (k - 1))
    return AnovaComponents(msr=float(msr), msc=float(msc), mse=float(mse), n=n, k=k)


def icc2k(m: RatingMatrix) -> float:
    """ICC(2,k) = (MSR - MSE) / (MSR + (MSC - MSE) / n)."""
    a = anova_two_way(m)
    denom = a.msr + (a.msc - a.mse) / a.n
    if denom <= 0:
        raise StatsError("degenerate variance structure: ICC denominator <= 0")
    return (a.msr - a.mse) / denom


def icc21(m: RatingMatrix) -> float:
    """ICC(2,1) = (MSR - MSE) / (MSR + (k-1) MSE + k (MSC - MSE) / n)."""
    a = anova_two_way(m)
    denom = a.msr + (a.k - 1) * a.mse + a.k * (a.msc - a.mse) / a.n
    if denom <= 0:
        raise StatsError("degenerate variance structure: ICC denominator <= 0")
    return (a.msr - a.mse) / denom


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError(f"pearson needs two equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise StatsError("pearson needs length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da ** 2) * np.sum(db ** 2))
    if denom == 0:
        raise StatsError("zero variance input to pearson")
    return float(np.sum(da * db) / denom)


def rmse(pred: Sequence[float], target: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1 or pred.size == 0:
        raise StatsError(
            f"rmse needs two equal-length nonempty vectors, got {pred.shape} and {target.shape}"
        )
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def build_rating_matrix(
    labels: LabelSet, rater_class: RaterClass, pq: PerceptualQuality
) -> tuple[RatingMatrix, int]:
    """Complete clips x raters matrix of per-rater trial means.

    Raters = everyone of ``rater_class`` who rated ``pq`` at least once.
    Clips missing any of those raters are dropped listwise; the dropped
    count is returned so reports can disclose it.
    """
    by_clip = rater_clip_means(labels, rater_class, pq)
    raters = sorted({r for clip in by_clip.values() for r in clip})
    if len(raters) < 2:
        raise StatsError(f"{pq}: fewer than 2 raters rated it")
    complete = sorted(
        clip_id for clip_id, means in by_clip.items()
        if all(r in means for r in raters)
    )
    dropped = len(by_clip) - len(complete)
    if len(complete) < 2:
        raise StatsError(f"{pq}: fewer than 2 clips rated by all raters")
    values = np.array(
        [[by_clip[c][r] for r in raters] for c in complete], dtype=np.float64
    )
    matrix = RatingMatrix(
        values=values, subject_ids=tuple(complete), rater_ids=tuple(raters)
    )
    return matrix, dropped


@dataclass(frozen=True)
class AgreementReport:
    """Per-PQ agreement statistics in the layout of the published table.

    ``expert_icc`` holds ICC(2,k) per PQ; ``nonexpert_r`` holds the Pearson
    correlation of non-expert clip means with expert clip means. ``average``
    entries are arithmetic means of the per-PQ statistics that exist.
    """

    expert_icc: dict[str, Optional[float]]
    expert_icc_single: dict[str, Optional[float]]
    nonexpert_r: dict[str, Optional[float]]
    nonexpert_rmse: dict[str, Optional[float]]
    dropped_clips: dict[str, int]
    overlap_counts: dict[str, int]

    def _avg(self, stats: dict[str, Optional[float]]) -> Optional[float]:
        present = [v for v in stats.values() if v is not None]
        if not present:
            return None
        return sum(present) / len(present)

    @property
    def expert_icc_average(self) -> Optional[float]:
        return self._avg(self.expert_icc)

    @property
    def nonexpert_r_average(self) -> Optional[float]:
        return self._avg(self.nonexpert_r)

    @property
    def nonexpert_rmse_average(self) -> Optional[float]:
        return self._avg(self.nonexpert_rmse)

    def to_csv(self) -> str:
        cols = [pq.value for pq in ALL_PQS]
        fmt = lambda v: "" if v is None else f"{v:.4f}"  # noqa: E731
        lines = ["rater," + ",".join(cols) + ",average"]
        lines.append(
            "nonexperts,"
            + ",".join(fmt(self.nonexpert_r[c]) for c in cols)
            + f",{fmt(self.nonexpert_r_average)}"
        )
        lines.append(
            "experts,"
            + ",".join(fmt(self.expert_icc[c]) for c in cols)
            + f",{fmt(self.expert_icc_average)}"
        )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "icc_form": ICC_FORM,
            "expert_icc2k": self.expert_icc,
            "expert_icc21": self.expert_icc_single,
            "expert_icc2k_average": self.expert_icc_average,
            "nonexpert_pearson_r": self.nonexpert_r,
            "nonexpert_pearson_r_average": self.nonexpert_r_average,
            "nonexpert_rmse": self.nonexpert_rmse,
            "nonexpert_rmse_average": self.nonexpert_rmse_average,
            "dropped_clips": self.dropped_clips,
            "overlap_counts": self.overlap_counts,
        }


def agreement_report(labels: LabelSet) -> AgreementReport:
    """Expert ICC and non-expert-vs-expert correlation/RMSE for every PQ."""
    expert_icc: dict[str, Optional[float]] = {}
    expert_icc_single: dict[str, Optional[float]] = {}
    nonexpert_r: dict[str, Optional[float]] = {}
    nonexpert_rmse: dict[str, Optional[float]] = {}
    dropped: dict[str, int] = {}
    overlap: dict[str, int] = {}
    for pq in ALL_PQS:
        name = pq.value
        try:
            matrix, dropped_count = build_rating_matrix(labels, RaterClass.EXPERT, pq)
            expert_icc[name] = icc2k(matrix)
            expert_icc_single[name] = icc21(matrix)
            dropped[name] = dropped_count
        except StatsError:
            expert_icc[name] = None
            expert_icc_single[name] = None
            dropped[name] = 0
        expert_means = aggregate_ratings(labels, RaterClass.EXPERT, pq)
        nonexpert_means = aggregate_ratings(labels, RaterClass.NONEXPERT, pq)
        shared = sorted(set(expert_means) & set(nonexpert_means))
        overlap[name] = len(shared)
        if not shared:
            nonexpert_r[name] = None
            nonexpert_rmse[name] = None
            continue
        e = [expert_means[c] for c in shared]
        ne = [nonexpert_means[c] for c in shared]
        nonexpert_rmse[name] = rmse(ne, e)
        try:
            nonexpert_r[name] = pearson(e, ne)
        except StatsError:
            nonexpert_r[name] = None
    return AgreementReport(
        expert_icc=expert_icc,
        expert_icc_single=expert_icc_single,
        nonexpert_r=nonexpert_r,
        nonexpert_rmse=nonexpert_rmse,
        dropped_clips=dropped,
        overlap_counts=overlap,
    )
