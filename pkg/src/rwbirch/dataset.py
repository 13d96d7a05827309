"""Interaction records, per-subset feature matrices and a synthetic generator.

Records are (learner, subset, activity, clicks) tuples. A subset is one
(category, course, period) cell; each subset is pivoted into a
learner x activity matrix of click counts and min-max scaled per column
before clustering.
"""
from __future__ import annotations

import csv
import math
import re
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

CATALOG: Tuple[str, ...] = (
    "dataplus", "dualpane", "externalquiz", "folder", "forumng",
    "glossary", "homepage", "htmlactivity", "collaborate", "content",
    "illuminate", "wiki", "page", "questionnaire", "quiz",
    "repeatactivity", "resource", "sharedsubpage", "subpage", "url",
)
CATALOG_INDEX = {name: i for i, name in enumerate(CATALOG)}

COURSES = {
    "SocialScience": ("S1", "S2", "S3", "S4"),
    "STEM": ("T1", "T2", "T3"),
}

# (course, period) -> (feature count, learner count) for the 22 populated cells.
PAPER_SHAPE: Tuple[Tuple[str, int, int, int], ...] = (
    ("S1", 2, 4, 378), ("S1", 4, 4, 357),
    ("S2", 1, 10, 1527), ("S2", 2, 10, 1870), ("S2", 3, 10, 1294), ("S2", 4, 10, 1921),
    ("S3", 3, 9, 1681), ("S3", 4, 9, 2302),
    ("S4", 2, 7, 895), ("S4", 3, 7, 773), ("S4", 4, 7, 698),
    ("T1", 1, 11, 1214), ("T1", 2, 10, 1768), ("T1", 3, 10, 1116), ("T1", 4, 10, 1647),
    ("T2", 2, 11, 964), ("T2", 3, 11, 624), ("T2", 4, 11, 1097),
    ("T3", 1, 14, 1510), ("T3", 2, 16, 2098), ("T3", 3, 15, 1563), ("T3", 4, 16, 2121),
)


class DatasetError(ValueError):
    pass


class MissingColumn(DatasetError):
    def __init__(self, column: str, row: int = 1):
        self.column, self.row = column, row
        super().__init__(f"row {row}: column {column!r} not in header")


class ParseError(DatasetError):
    def __init__(self, message: str, row: int, column: Optional[str] = None):
        self.row, self.column = row, column
        where = f"row {row}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")


class EmptySubset(DatasetError):
    pass


class InvalidSpec(DatasetError):
    pass


class UnknownActivity(DatasetError):
    pass


def check_activity(name: str) -> str:
    if name not in CATALOG_INDEX:
        raise UnknownActivity(f"{name!r} is not a catalogued activity")
    return name


@dataclass(frozen=True, order=True)
class SubsetKey:
    category: str
    course: str
    period: int

    def __post_init__(self):
        if self.category not in COURSES:
            raise DatasetError(f"unknown category {self.category!r}")
        if self.course not in COURSES[self.category]:
            raise DatasetError(f"course {self.course!r} does not belong to {self.category}")
        if not 1 <= self.period <= 4:
            raise DatasetError(f"period must be in 1..4, got {self.period}")

    @property
    def label(self) -> str:
        return f"{self.course}-{self.period}"

    @classmethod
    def parse(cls, text: str) -> "SubsetKey":
        m = re.fullmatch(r"([ST])(\d)-(\d)", text)
        if m is None:
            raise DatasetError(f"{text!r} is not a <course>-<period> label")
        category = "SocialScience" if m.group(1) == "S" else "STEM"
        return cls(category, m.group(1) + m.group(2), int(m.group(3)))

    def __str__(self) -> str:
        return self.label


SubsetId = Union[SubsetKey, str]


@dataclass(frozen=True)
class InteractionRecord:
    learner_id: str
    subset: SubsetKey
    activity: str
    clicks: float

    def __post_init__(self):
        check_activity(self.activity)
        if not self.clicks >= 0:
            raise DatasetError(f"clicks must be non-negative, got {self.clicks}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Learner x activity matrix for one subset.

    ``rows`` and ``labels`` are stored read-only; derive new matrices with
    :func:`dataclasses.replace` or the module functions.
    """

    subset: SubsetId
    feature_names: Tuple[str, ...]
    rows: np.ndarray
    labels: Optional[np.ndarray] = None
    learner_ids: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        names = tuple(self.feature_names)
        for name in names:
            check_activity(name)
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate feature names in {names}")
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(names):
            raise DatasetError(f"rows of shape {rows.shape} do not match {len(names)} features")
        rows.setflags(write=False)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "rows", rows)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=int)
            if labels.shape != (rows.shape[0],):
                raise DatasetError(f"{labels.shape[0]} labels for {rows.shape[0]} rows")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.learner_ids is None:
            object.__setattr__(self, "learner_ids", tuple(f"L{i:05d}" for i in range(rows.shape[0])))
        else:
            ids = tuple(str(x) for x in self.learner_ids)
            if len(ids) != rows.shape[0]:
                raise DatasetError(f"{len(ids)} learner ids for {rows.shape[0]} rows")
            object.__setattr__(self, "learner_ids", ids)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    @property
    def name(self) -> str:
        return str(self.subset)

    def same_content(self, other: "FeatureMatrix") -> bool:
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return (self.feature_names == other.feature_names
                and np.array_equal(self.rows, other.rows) and same_labels
                and self.learner_ids == other.learner_ids)


@dataclass(frozen=True)
class CsvSchema:
    """Which header columns hold what. ``activity_columns=None`` means every
    column other than the learner and label columns."""

    learner_column: str = "learner_id"
    activity_columns: Optional[Tuple[str, ...]] = None
    label_column: str = "label"
    subset: Optional[SubsetKey] = None


def _parse_number(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {cell!r}", row, column)
    return value


def _read_table(path: Union[str, Path]) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", 1) from None
        body = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(cells)}", lineno)
            body.append((lineno, cells))
    return header, body


def _subset_from_path(path: Union[str, Path]) -> Optional[SubsetKey]:
    try:
        return SubsetKey.parse(Path(path).stem)
    except DatasetError:
        return None


def load_records(path: Union[str, Path], schema: Optional[CsvSchema] = None) -> List[InteractionRecord]:
    """One record per non-zero (row, activity) cell of a wide CSV file.

    The subset comes from ``schema.subset`` or, failing that, from a file
    name of the form ``<course>-<period>.csv``.
    """
    schema = schema or CsvSchema()
    header, body = _read_table(path)
    subset = schema.subset or _subset_from_path(path)
    if subset is None:
        raise DatasetError(f"no subset given and {Path(path).name!r} is not named <course>-<period>.csv")
    if schema.learner_column not in header:
        raise MissingColumn(schema.learner_column)
    if schema.activity_columns is None:
        activities = [h for h in header if h not in (schema.learner_column, schema.label_column)]
    else:
        activities = list(schema.activity_columns)
    for a in activities:
        if a not in header:
            raise MissingColumn(a)
        check_activity(a)
    learner_at = header.index(schema.learner_column)
    cols = [(a, header.index(a)) for a in activities]

    records = []
    for lineno, cells in body:
        learner = cells[learner_at]
        for activity, j in cols:
            clicks = _parse_number(cells[j], lineno, activity)
            if clicks < 0:
                raise ParseError(f"negative click count {cells[j]!r}", lineno, activity)
            if clicks != 0:
                records.append(InteractionRecord(learner, subset, activity, clicks))
    return records


def partition(records: Sequence[InteractionRecord]) -> Dict[SubsetKey, List[InteractionRecord]]:
    buckets: Dict[SubsetKey, List[InteractionRecord]] = {}
    for r in records:
        buckets.setdefault(r.subset, []).append(r)
    return buckets


def pivot(records: Sequence[InteractionRecord]) -> FeatureMatrix:
    """Total clicks per (learner, activity); learners in first-seen order,
    activities in catalog order."""
    if not records:
        raise EmptySubset("no records to pivot")
    subset = records[0].subset
    totals: Dict[Tuple[str, str], float] = defaultdict(float)
    learners: Dict[str, int] = {}
    seen = set()
    for r in records:
        if r.subset != subset:
            raise DatasetError(f"records span subsets {subset} and {r.subset}")
        learners.setdefault(r.learner_id, len(learners))
        seen.add(r.activity)
        totals[r.learner_id, r.activity] += r.clicks
    names = tuple(sorted(seen, key=CATALOG_INDEX.__getitem__))
    col = {a: j for j, a in enumerate(names)}
    rows = np.zeros((len(learners), len(names)))
    for (learner, activity), clicks in totals.items():
        rows[learners[learner], col[activity]] = clicks
    return FeatureMatrix(subset, names, rows, learner_ids=tuple(learners))


def normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Per-column min-max scaling onto [0, 1]; constant columns become 0."""
    if matrix.n_rows == 0:
        raise EmptySubset("cannot normalize a matrix without rows")
    x = matrix.rows
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    out = np.zeros_like(x)
    live = span > 0
    out[:, live] = (x[:, live] - lo[live]) / span[live]
    return replace(matrix, rows=out)


@dataclass(frozen=True)
class SyntheticSpec:
    cluster_count: int = 4
    informative_features: int = 8
    distractor_features: int = 0
    points_per_cluster: int = 100
    variance: float = 0.35
    outlier_fraction: float = 0.0
    seed: int = 0
    span: float = 10.0
    variance_range: Tuple[float, float] = (0.3, 0.4)
    subset: SubsetId = "synthetic"

    def validate(self) -> None:
        if self.cluster_count < 1:
            raise InvalidSpec(f"cluster_count must be positive, got {self.cluster_count}")
        if self.informative_features < 1:
            raise InvalidSpec(f"informative_features must be positive, got {self.informative_features}")
        if self.distractor_features < 0:
            raise InvalidSpec(f"distractor_features must be >= 0, got {self.distractor_features}")
        if self.informative_features + self.distractor_features > len(CATALOG):
            raise InvalidSpec(f"at most {len(CATALOG)} features in total")
        if self.points_per_cluster < 1:
            raise InvalidSpec(f"points_per_cluster must be positive, got {self.points_per_cluster}")
        lo, hi = self.variance_range
        if not (0 < lo <= hi and lo <= self.variance <= hi):
            raise InvalidSpec(f"variance {self.variance} outside [{lo}, {hi}]")
        if not 0 <= self.outlier_fraction <= 0.2:
            raise InvalidSpec(f"outlier_fraction must be in [0, 0.2], got {self.outlier_fraction}")
        if not self.span > 0:
            raise InvalidSpec(f"span must be positive, got {self.span}")

    def centroid(self, c: int) -> np.ndarray:
        k = self.cluster_count
        level = 0.0 if k == 1 else c / (k - 1) * self.span
        return np.full(self.informative_features, level)


def generate_synthetic(spec: SyntheticSpec) -> FeatureMatrix:
    """Gaussian blobs whose centroids sit on the all-coordinates-equal diagonal.

    Informative columns carry the blobs; distractor columns are uniform over
    the informative bounding box. Rows are shuffled. Outliers, if any,
    replace random rows with uniform points and carry label -1. Feature
    names are a seeded draw from the catalog, laid out in catalog order.
    """
    return generate_with_roles(spec)[0]


def generate_with_roles(spec: SyntheticSpec) -> Tuple[FeatureMatrix, Tuple[str, ...]]:
    """:func:`generate_synthetic` plus the names of its informative columns."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k, m = spec.cluster_count, spec.points_per_cluster
    n_inf, n_dis = spec.informative_features, spec.distractor_features
    n = k * m

    labels = np.repeat(np.arange(k), m)
    centers = np.stack([spec.centroid(c) for c in range(k)])
    informative = centers[labels] + rng.normal(0.0, math.sqrt(spec.variance), size=(n, n_inf))
    lo, hi = informative.min(), informative.max()
    distractors = rng.uniform(lo, hi, size=(n, n_dis))

    names = rng.choice(len(CATALOG), size=n_inf + n_dis, replace=False)
    order = np.argsort(names)
    rows = np.concatenate([informative, distractors], axis=1)[:, order]
    feature_names = tuple(CATALOG[i] for i in names[order])

    perm = rng.permutation(n)
    rows, labels = rows[perm], labels[perm]

    n_out = int(round(spec.outlier_fraction * n))
    if n_out:
        box_lo, box_hi = rows.min(axis=0), rows.max(axis=0)
        victims = rng.choice(n, size=n_out, replace=False)
        rows[victims] = rng.uniform(box_lo, box_hi, size=(n_out, rows.shape[1]))
        labels[victims] = -1

    matrix = FeatureMatrix(spec.subset, feature_names, rows, labels=labels)
    return matrix, tuple(CATALOG[i] for i in sorted(names[:n_inf]))


def paper_shape_specs(seed: int, cluster_count: int = 4, scale: float = 1.0) -> List[SyntheticSpec]:
    """One spec per populated (course, period) cell, matching its feature
    count and (scaled) learner count. About half of each cell's features
    are informative; the rest are distractors."""
    rng = np.random.default_rng(seed)
    specs = []
    for i, (course, period, n_features, n_learners) in enumerate(PAPER_SHAPE):
        category = "SocialScience" if course.startswith("S") else "STEM"
        informative = (n_features + 1) // 2
        per_cluster = max(1, int(round(n_learners * scale / cluster_count)))
        specs.append(SyntheticSpec(
            cluster_count=cluster_count,
            informative_features=informative,
            distractor_features=n_features - informative,
            points_per_cluster=per_cluster,
            variance=float(rng.uniform(0.3, 0.4)),
            seed=seed * 1000 + i,
            subset=SubsetKey(category, course, period),
        ))
    return specs


def _format_cell(v: float) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def write_subset(matrix: FeatureMatrix, path: Union[str, Path]) -> None:
    """Write ``learner_id,<activity>...[,label]`` with ``\\n`` line endings."""
    path = Path(path)
    header = ["learner_id", *matrix.feature_names]
    if matrix.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(matrix.rows):
            cells = [matrix.learner_ids[i], *(_format_cell(v) for v in row)]
            if matrix.labels is not None:
                cells.append(str(int(matrix.labels[i])))
            w.writerow(cells)


def read_matrix(path: Union[str, Path], subset: Optional[SubsetId] = None) -> FeatureMatrix:
    """Read a wide CSV straight into a matrix, keeping every row, column and label.

    Unlike :func:`load_records` followed by :func:`pivot`, all-zero rows and
    columns survive and the optional ``label`` column is kept.
    """
    header, body = _read_table(path)
    if not header or header[0] != "learner_id":
        raise MissingColumn("learner_id")
    has_labels = header[-1] == "label"
    names = header[1:-1] if has_labels else header[1:]
    for a in names:
        check_activity(a)
    rows = np.zeros((len(body), len(names)))
    labels = np.zeros(len(body), dtype=int) if has_labels else None
    ids = []
    for i, (lineno, cells) in enumerate(body):
        ids.append(cells[0])
        for j, a in enumerate(names):
            rows[i, j] = _parse_number(cells[j + 1], lineno, a)
        if has_labels:
            try:
                labels[i] = int(cells[-1])
            except ValueError:
                raise ParseError(f"non-integer label {cells[-1]!r}", lineno, "label") from None
    if subset is None:
        subset = _subset_from_path(path) or Path(path).stem
    return FeatureMatrix(subset, tuple(names), rows, labels=labels, learner_ids=tuple(ids))
