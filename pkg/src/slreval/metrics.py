"""Benchmark harness: MAE, agreement transform, ICC, Krippendorff's alpha, Pearson."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checklist import ChecklistRegistry, Society

SCORE_MIN, SCORE_MAX = 0.0, 5.0


class MetricError(Exception):
    pass


class UndefinedMetricError(MetricError):
    """The metric has no defined value for this input (e.g. zero variance)."""


@dataclass(frozen=True)
class ScoreMatrix:
    """Partial (paper, rater, item) -> score map on a 0-5 scale."""

    papers: tuple[str, ...]
    raters: tuple[str, ...]
    items: tuple[int, ...]
    scores: dict[tuple[str, str, int], float]

    def get(self, paper: str, rater: str, item: int) -> float | None:
        return self.scores.get((paper, rater, item))

    def rater_vector(self, rater: str, units: list[tuple[str, int]]) -> list[float | None]:
        return [self.scores.get((p, rater, i)) for p, i in units]

    @property
    def units(self) -> list[tuple[str, int]]:
        """All (paper, item) pairs, the pooled reliability units."""
        return [(p, i) for p in self.papers for i in self.items]


def load_scores(path: str | Path) -> ScoreMatrix:
    """Read a paper_id,rater_id,item_id,score CSV into a ScoreMatrix."""
    path = Path(path)
    scores: dict[tuple[str, str, int], float] = {}
    papers: list[str] = []
    raters: list[str] = []
    items: list[int] = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        required = {"paper_id", "rater_id", "item_id", "score"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise MetricError(
                f"CSV header must contain {sorted(required)}, got {reader.fieldnames}"
            )
        for row_num, row in enumerate(reader, start=2):
            paper = row["paper_id"].strip()
            rater = row["rater_id"].strip()
            try:
                item = int(row["item_id"])
                score = float(row["score"])
            except ValueError as exc:
                raise MetricError(f"row {row_num}: {exc}") from exc
            if not SCORE_MIN <= score <= SCORE_MAX:
                raise MetricError(
                    f"row {row_num}: score {score} outside [{SCORE_MIN}, {SCORE_MAX}]"
                )
            key = (paper, rater, item)
            if key in scores:
                raise MetricError(f"row {row_num}: duplicate entry {key}")
            scores[key] = score
            if paper not in papers:
                papers.append(paper)
            if rater not in raters:
                raters.append(rater)
            if item not in items:
                items.append(item)
    return ScoreMatrix(
        papers=tuple(papers),
        raters=tuple(raters),
        items=tuple(sorted(items)),
        scores=scores,
    )


def mae(a, b) -> float:
    """Mean absolute error between two aligned score vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"vectors must share one length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise MetricError("vectors must be nonempty")
    return float(np.mean(np.abs(a - b)))


def agreement_pct(mae_value: float) -> float:
    """The agreement transform: 100 - (MAE / 5 * 100)."""
    if not SCORE_MIN <= mae_value <= SCORE_MAX:
        raise MetricError(f"MAE {mae_value} outside [{SCORE_MIN}, {SCORE_MAX}]")
    return 100.0 - (mae_value / 5.0 * 100.0)


@dataclass(frozen=True)
class GroupResult:
    mae: float
    agreement_pct: float
    n_items: int
    excluded: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "agreement_pct": self.agreement_pct,
            "n_items": self.n_items,
            "excluded": self.excluded,
        }


def _aggregate_humans(values: list[float], rule: str) -> float:
    if rule == "mean":
        return float(np.mean(values))
    if rule == "median":
        return float(np.median(values))
    raise MetricError(f"unknown aggregation rule {rule!r}")


def agent_vs_humans(matrix: ScoreMatrix, agent_rater_id: str,
                    human_aggregation: str = "mean", grouping: str = "overall",
                    registry: ChecklistRegistry | None = None) -> dict[str, GroupResult]:
    """MAE/agreement of the agent against aggregated human scores, per group."""
    if agent_rater_id not in matrix.raters:
        raise MetricError(f"agent rater {agent_rater_id!r} not in matrix")
    humans = [r for r in matrix.raters if r != agent_rater_id]
    if not humans:
        raise MetricError("at least one human rater required")

    def group_key(paper: str, item: int) -> str | None:
        if grouping == "overall":
            return "overall"
        if grouping == "per_paper":
            return paper
        if grouping == "per_society":
            if registry is None:
                raise MetricError("per_society grouping requires a registry")
            try:
                return registry.item(item).society.value
            except KeyError:
                return None
        raise MetricError(f"unknown grouping {grouping!r}")

    pairs: dict[str, list[tuple[float, float]]] = {}
    excluded: dict[str, int] = {}
    for paper in matrix.papers:
        for item in matrix.items:
            key = group_key(paper, item)
            if key is None:
                continue
            agent_score = matrix.get(paper, agent_rater_id, item)
            human_scores = [
                s for r in humans if (s := matrix.get(paper, r, item)) is not None
            ]
            if agent_score is None or not human_scores:
                excluded[key] = excluded.get(key, 0) + 1
                continue
            pairs.setdefault(key, []).append(
                (agent_score, _aggregate_humans(human_scores, human_aggregation))
            )

    results: dict[str, GroupResult] = {}
    for key, pts in pairs.items():
        agent_vec = [a for a, _ in pts]
        human_vec = [h for _, h in pts]
        m = mae(agent_vec, human_vec)
        results[key] = GroupResult(
            mae=m,
            agreement_pct=agreement_pct(m),
            n_items=len(pts),
            excluded=excluded.get(key, 0),
        )
    return results


@dataclass(frozen=True)
class ICCResult:
    icc_single: float
    icc_average: float
    dropped_targets: int

    def to_dict(self) -> dict:
        return {
            "icc_single": self.icc_single,
            "icc_average": self.icc_average,
            "dropped_targets": self.dropped_targets,
        }


def icc_two_way(data) -> ICCResult:
    """Two-way random-effects, absolute-agreement ICC from a targets x raters table.

    Rows containing missing cells (NaN) are dropped and counted.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise MetricError("expected a 2-D targets x raters table")
    complete = ~np.isnan(arr).any(axis=1)
    dropped = int((~complete).sum())
    arr = arr[complete]
    n, k = arr.shape
    if n < 2 or k < 2:
        raise MetricError(f"need >=2 usable targets and >=2 raters, got {n}x{k}")

    grand = arr.mean()
    row_means = arr.mean(axis=1)
    col_means = arr.mean(axis=0)
    ss_total = float(((arr - grand) ** 2).sum())
    ss_rows = float(k * ((row_means - grand) ** 2).sum())
    ss_cols = float(n * ((col_means - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    if ss_total <= 1e-14:
        raise UndefinedMetricError("zero total variance: ICC undefined")

    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))

    denom_single = msr + (k - 1) * mse + (k / n) * (msc - mse)
    denom_average = msr + (msc - mse) / n
    if abs(denom_single) <= 1e-14 or abs(denom_average) <= 1e-14:
        raise UndefinedMetricError("degenerate variance decomposition: ICC undefined")
    return ICCResult(
        icc_single=(msr - mse) / denom_single,
        icc_average=(msr - mse) / denom_average,
        dropped_targets=dropped,
    )


def krippendorff_alpha(data) -> float:
    """Krippendorff's alpha with the interval difference function.

    `data` is a raters x units table; missing entries are NaN/None and simply
    contribute no pairable values. Uses the coincidence-matrix formulation.
    """
    arr = np.asarray(
        [[np.nan if v is None else float(v) for v in row] for row in data], dtype=float
    )
    if arr.ndim != 2:
        raise MetricError("expected a 2-D raters x units table")

    unit_values: list[np.ndarray] = []
    for u in range(arr.shape[1]):
        col = arr[:, u]
        vals = col[~np.isnan(col)]
        if len(vals) >= 2:
            unit_values.append(vals)
    if not unit_values:
        raise MetricError("need at least one unit with two or more ratings")

    values = np.unique(np.concatenate(unit_values))
    index = {v: i for i, v in enumerate(values)}
    v_count = len(values)

    coincidence = np.zeros((v_count, v_count))
    for vals in unit_values:
        m_u = len(vals)
        for a in vals:
            for b in vals:
                coincidence[index[a], index[b]] += 1.0 / (m_u - 1)
        for a in vals:
            coincidence[index[a], index[a]] -= 1.0 / (m_u - 1)

    n_c = coincidence.sum(axis=1)
    n_total = n_c.sum()
    delta = (values[:, None] - values[None, :]) ** 2

    observed = float((coincidence * delta).sum()) / n_total
    expected = float((np.outer(n_c, n_c) * delta).sum()) / (n_total * (n_total - 1))
    if expected <= 1e-14:
        raise UndefinedMetricError("zero expected disagreement: alpha undefined")
    return 1.0 - observed / expected


@dataclass(frozen=True)
class PearsonResult:
    value: float
    pairs_used: int
    pairs_excluded: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "pairs_used": self.pairs_used,
            "pairs_excluded": self.pairs_excluded,
        }


def avg_pairwise_pearson(data) -> PearsonResult:
    """Mean Pearson correlation over all rater pairs (raters x units, NaN missing)."""
    arr = np.asarray(
        [[np.nan if v is None else float(v) for v in row] for row in data], dtype=float
    )
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise MetricError("need a 2-D table with >=2 raters")
    correlations: list[float] = []
    excluded = 0
    n_raters = arr.shape[0]
    for i in range(n_raters):
        for j in range(i + 1, n_raters):
            both = ~np.isnan(arr[i]) & ~np.isnan(arr[j])
            x, y = arr[i][both], arr[j][both]
            if len(x) < 2 or np.std(x) == 0 or np.std(y) == 0:
                excluded += 1
                continue
            cov = float(np.mean((x - x.mean()) * (y - y.mean())))
            correlations.append(cov / (float(np.std(x)) * float(np.std(y))))
    if not correlations:
        raise MetricError("no rater pair with enough shared, varying data")
    return PearsonResult(
        value=float(np.mean(correlations)),
        pairs_used=len(correlations),
        pairs_excluded=excluded,
    )


@dataclass(frozen=True)
class BenchmarkReport:
    overall_mae: float
    overall_agreement_pct: float
    per_society: dict[str, GroupResult]
    per_paper: dict[str, GroupResult]
    reliability: dict
    human_raters: tuple[str, ...]
    agent_rater: str

    def to_dict(self) -> dict:
        return {
            "overall_mae": self.overall_mae,
            "overall_agreement_pct": self.overall_agreement_pct,
            "per_society": {k: v.to_dict() for k, v in self.per_society.items()},
            "per_paper": {k: v.to_dict() for k, v in self.per_paper.items()},
            "reliability": self.reliability,
            "human_raters": list(self.human_raters),
            "agent_rater": self.agent_rater,
        }

    def plot_series(self) -> dict[str, list[tuple[str, float]]]:
        """Plot-ready bar series for the per-paper and per-society views."""
        return {
            "per_paper_mae": [(k, v.mae) for k, v in sorted(self.per_paper.items())],
            "per_society_agreement": [
                (k, v.agreement_pct) for k, v in self.per_society.items()
            ],
        }


def benchmark(matrix: ScoreMatrix, registry: ChecklistRegistry,
              agent_rater_id: str, human_aggregation: str = "mean") -> BenchmarkReport:
    """Full benchmark: agent-vs-human slices plus human-only reliability."""
    overall = agent_vs_humans(matrix, agent_rater_id, human_aggregation, "overall")["overall"]
    per_society = agent_vs_humans(matrix, agent_rater_id, human_aggregation,
                                  "per_society", registry)
    per_paper = agent_vs_humans(matrix, agent_rater_id, human_aggregation, "per_paper")

    humans = tuple(r for r in matrix.raters if r != agent_rater_id)
    units = matrix.units
    raters_by_units = [matrix.rater_vector(r, units) for r in humans]
    # targets x raters for ICC
    targets_by_raters = [
        [matrix.get(p, r, i) for r in humans] for p, i in units
    ]
    targets_arr = np.asarray(
        [[np.nan if v is None else v for v in row] for row in targets_by_raters],
        dtype=float,
    )

    reliability: dict = {}
    try:
        reliability["icc"] = icc_two_way(targets_arr).to_dict()
    except MetricError as exc:
        reliability["icc"] = {"undefined": str(exc)}
    try:
        reliability["krippendorff_alpha"] = krippendorff_alpha(raters_by_units)
    except MetricError as exc:
        reliability["krippendorff_alpha"] = {"undefined": str(exc)}
    try:
        reliability["avg_pairwise_pearson"] = avg_pairwise_pearson(raters_by_units).to_dict()
    except MetricError as exc:
        reliability["avg_pairwise_pearson"] = {"undefined": str(exc)}

    return BenchmarkReport(
        overall_mae=overall.mae,
        overall_agreement_pct=overall.agreement_pct,
        per_society=per_society,
        per_paper=per_paper,
        reliability=reliability,
        human_raters=humans,
        agent_rater=agent_rater_id,
    )


def write_plot_data(report: BenchmarkReport, out_dir: str | Path) -> list[Path]:
    """Emit per-paper and per-society series as CSV files; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    series = report.plot_series()
    for name, rows in series.items():
        path = out_dir / f"{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["label", "value"])
            writer.writerows(rows)
        written.append(path)
    return written
