"""Baseline BIRCH versus key-path-filtered BIRCH, run side by side."""
from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .birch import Assignment, BirchConfig, ClusterModel, fit_predict
from .dataset import FeatureMatrix, SubsetId
from .metrics import METRIC_NAMES, ScoreBundle, benchmark, score
from .random_walk import KeyPath, WalkConfig, extract_key_path, project_features


class Variant(str, Enum):
    BASELINE = "baseline"
    IMPROVED = "improved"


@dataclass
class RunResult:
    subset: SubsetId
    variant: Variant
    model: ClusterModel
    assignment: Assignment
    wall_time: float
    key_path: Optional[KeyPath] = None
    scores: Optional[ScoreBundle] = None

    @property
    def n_clusters(self) -> int:
        return self.model.n_clusters


def _scored(matrix: FeatureMatrix, assignment: Assignment) -> Optional[ScoreBundle]:
    if matrix.labels is None:
        return None
    return score(matrix.labels, assignment.labels)


def run_baseline(matrix: FeatureMatrix, config: BirchConfig) -> RunResult:
    (model, assignment), elapsed = benchmark(lambda: fit_predict(matrix, config))
    return RunResult(matrix.subset, Variant.BASELINE, model, assignment, elapsed,
                     scores=_scored(matrix, assignment))


def run_improved(matrix: FeatureMatrix, birch_config: BirchConfig, walk_config: WalkConfig,
                 top_fraction: float = 0.6) -> RunResult:
    def run():
        path = extract_key_path(matrix, walk_config, top_fraction)
        return path, fit_predict(project_features(matrix, path), birch_config)

    (path, (model, assignment)), elapsed = benchmark(run)
    return RunResult(matrix.subset, Variant.IMPROVED, model, assignment, elapsed,
                     key_path=path, scores=_scored(matrix, assignment))


@dataclass
class ComparisonRow:
    id: str
    baseline: Optional[RunResult] = None
    improved: Optional[RunResult] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def deltas(self) -> Dict[str, float]:
        """Improved minus baseline per metric (labelled data only)."""
        if not self.ok or self.baseline.scores is None:
            return {}
        b, i = self.baseline.scores.as_dict(), self.improved.scores.as_dict()
        return {m: i[m] - b[m] for m in METRIC_NAMES}

    @property
    def time_ratio(self) -> Optional[float]:
        if not self.ok:
            return None
        return self.improved.wall_time / self.baseline.wall_time


CSV_HEADER = ("id", "variant", "clusters", "precise", "accuracy", "recall", "f_score", "time_s", "key_path")


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.6f}"


@dataclass
class Comparison:
    rows: List[ComparisonRow] = field(default_factory=list)

    @property
    def failed(self) -> List[ComparisonRow]:
        return [r for r in self.rows if not r.ok]

    def to_csv(self, include_times: bool = True) -> str:
        """The comparison report. Failed subsets get one ``variant=failed``
        row whose key_path column carries the error message."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows:
            if not row.ok:
                w.writerow([row.id, "failed", "", "", "", "", "", "", row.error])
                continue
            for res in (row.baseline, row.improved):
                s = res.scores.as_dict() if res.scores else {}
                w.writerow([row.id, res.variant.value, res.n_clusters,
                            *(_fmt(s.get(m)) for m in METRIC_NAMES),
                            _fmt(res.wall_time) if include_times else "",
                            res.key_path.inline() if res.key_path else ""])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id", "baseline_s", "improved_s", "ratio"))
        for row in self.rows:
            if row.ok:
                w.writerow([row.id, _fmt(row.baseline.wall_time), _fmt(row.improved.wall_time),
                            _fmt(row.time_ratio)])
        return buf.getvalue()

    def summary(self) -> List[Tuple[str, float, int, int]]:
        """Per metric: (name, median improved-minus-baseline delta, improved wins, subsets).

        A win is a strictly higher improved score; ties count toward neither side.
        """
        scored = [r for r in self.rows if r.ok and r.baseline.scores is not None]
        out = []
        for m in METRIC_NAMES:
            deltas = [r.deltas()[m] for r in scored]
            med = statistics.median(deltas) if deltas else float("nan")
            out.append((m, med, sum(d > 0 for d in deltas), len(deltas)))
        return out

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric", "median_delta", "improved_wins", "ties", "subsets"))
        scored = [r for r in self.rows if r.ok and r.baseline.scores is not None]
        for m, med, wins, total in self.summary():
            ties = sum(r.deltas()[m] == 0 for r in scored)
            w.writerow((m, _fmt(med), wins, ties, total))
        return buf.getvalue()


def _compare_one(args) -> ComparisonRow:
    ident, matrix, birch_config, walk_config, top_fraction = args
    try:
        base = run_baseline(matrix, birch_config)
        imp = run_improved(matrix, birch_config, walk_config, top_fraction)
    except Exception as exc:  # recorded per subset; the batch goes on
        return ComparisonRow(ident, error=f"{type(exc).__name__}: {exc}")
    return ComparisonRow(ident, base, imp)


def compare(matrices: Sequence[Tuple[str, FeatureMatrix]], birch_config: BirchConfig,
            walk_config: WalkConfig, top_fraction: float = 0.6, workers: int = 1) -> Comparison:
    """Run both variants on every matrix; rows keep the input order."""
    if not matrices:
        raise ValueError("compare needs at least one matrix")
    jobs = [(ident, m, birch_config, walk_config, top_fraction) for ident, m in matrices]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_compare_one, jobs))
    else:
        rows = [_compare_one(j) for j in jobs]
    return Comparison(rows)
