"""BIRCH over a feature matrix: tree build, outlier filtering, global phase.

The global phase agglomerates leaf-entry CFs by centroid distance, either
down to a target cluster count or while the closest pair is within a
merge distance, and every row is then labelled with its nearest cluster
centroid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .cf_tree import (CFTree, ClusteringFeature, DimensionMismatch, TreeParams,
                      cf_centroid, cf_radius)
from .dataset import FeatureMatrix


class BirchError(ValueError):
    pass


class EmptyInput(BirchError):
    pass


class NoEntries(BirchError):
    pass


class DegenerateClustering(BirchError):
    pass


@dataclass(frozen=True)
class BirchConfig:
    threshold: float = 0.5
    branching: int = 8
    leaf_capacity: int = 8
    outlier_min_points: int = 1
    global_merge_distance: Optional[float] = None
    target_cluster_count: Optional[int] = None

    def __post_init__(self):
        if (self.global_merge_distance is None) == (self.target_cluster_count is None):
            raise BirchError("set exactly one of global_merge_distance and target_cluster_count")
        if self.global_merge_distance is not None and not self.global_merge_distance > 0:
            raise BirchError(f"global_merge_distance must be positive, got {self.global_merge_distance}")
        if self.target_cluster_count is not None and self.target_cluster_count < 1:
            raise BirchError(f"target_cluster_count must be >= 1, got {self.target_cluster_count}")
        if self.outlier_min_points < 1:
            raise BirchError(f"outlier_min_points must be >= 1, got {self.outlier_min_points}")
        self.tree_params(1)

    def tree_params(self, dimension: int) -> TreeParams:
        return TreeParams(self.threshold, self.branching, self.leaf_capacity, dimension)


@dataclass
class ClusterModel:
    centroids: np.ndarray
    cluster_cfs: List[ClusteringFeature]
    outlier_cfs: List[ClusteringFeature]
    config: BirchConfig
    merge_distances: List[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_cfs)

    def report(self) -> str:
        """``cluster,n,radius,centroid`` lines; centroid coordinates are space separated."""
        lines = ["cluster,n,radius,centroid"]
        for i, cf in enumerate(self.cluster_cfs):
            c = " ".join(f"{v:.10g}" for v in self.centroids[i])
            lines.append(f"{i},{cf.n},{cf_radius(cf):.10g},{c}")
        return "\n".join(lines) + "\n"


@dataclass
class Assignment:
    labels: np.ndarray
    # Rows that sat in leaf entries dropped by the outlier filter.
    outlier_rows: Tuple[int, ...] = ()


def build_tree(matrix: FeatureMatrix, config: BirchConfig, track_points: bool = False,
               check: bool = False) -> CFTree:
    if matrix.n_rows == 0:
        raise EmptyInput("matrix has no rows")
    tree = CFTree(config.tree_params(matrix.n_features), track_points=track_points, check=check)
    for row in matrix.rows:
        tree.insert_point(row)
    return tree


def filter_outliers(tree: CFTree, config: BirchConfig) -> Tuple[List[ClusteringFeature], List[ClusteringFeature]]:
    kept, outliers = [], []
    for cf in tree.leaf_entries():
        (outliers if cf.n < config.outlier_min_points else kept).append(cf)
    return kept, outliers


def _row_dist(c: np.ndarray, i: int) -> np.ndarray:
    diff = c - c[i]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def global_cluster(entries: List[ClusteringFeature], config: BirchConfig) -> ClusterModel:
    """Centroid-linkage agglomeration of CF entries.

    Equal distances resolve to the lexicographically smallest index pair;
    the merged cluster keeps the lower index.
    """
    if not entries:
        raise NoEntries("global clustering needs at least one entry")
    m = len(entries)
    n = np.array([e.n for e in entries], dtype=float)
    ls = np.stack([e.ls for e in entries]).astype(float)
    ss = np.stack([e.ss for e in entries]).astype(float)
    c = ls / n[:, None]
    active = np.ones(m, dtype=bool)

    dist = np.empty((m, m))
    for i in range(m):
        dist[i] = _row_dist(c, i)
    np.fill_diagonal(dist, np.inf)
    row_min = dist.min(axis=1)
    row_arg = dist.argmin(axis=1)

    target = config.target_cluster_count
    limit = config.global_merge_distance
    merged_at = []
    alive = m
    while alive > 1 and (target is None or alive > target):
        r = int(np.argmin(row_min))
        d = float(row_min[r])
        if limit is not None and d > limit:
            break
        k = int(row_arg[r])
        if k < r:
            r, k = k, r
        merged_at.append(d)
        n[r] += n[k]
        ls[r] += ls[k]
        ss[r] += ss[k]
        c[r] = ls[r] / n[r]
        active[k] = False
        alive -= 1

        dist[k, :] = np.inf
        dist[:, k] = np.inf
        row_min[k] = np.inf
        fresh = _row_dist(c, r)
        fresh[~active] = np.inf
        fresh[r] = np.inf
        dist[r, :] = fresh
        dist[:, r] = fresh

        stale = active & ((row_arg == r) | (row_arg == k))
        stale[r] = True
        idx = np.flatnonzero(stale)
        row_min[idx] = dist[idx].min(axis=1)
        row_arg[idx] = dist[idx].argmin(axis=1)
        rest = active & ~stale
        better = rest & ((fresh < row_min) | ((fresh == row_min) & (r < row_arg)))
        row_min[better] = fresh[better]
        row_arg[better] = r

    keep = np.flatnonzero(active)
    cfs = [ClusteringFeature(int(n[i]), ls[i].copy(), ss[i].copy()) for i in keep]
    centroids = np.stack([cf_centroid(cf) for cf in cfs])
    return ClusterModel(centroids, cfs, [], config, merged_at)


def assign_points(matrix: FeatureMatrix, model: ClusterModel) -> Assignment:
    x = matrix.rows
    if x.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch(f"matrix has {x.shape[1]} features, model {model.centroids.shape[1]}")
    best = np.zeros(x.shape[0], dtype=int)
    best_d = np.full(x.shape[0], np.inf)
    for j, cen in enumerate(model.centroids):
        diff = x - cen
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best_d
        best[closer] = j
        best_d[closer] = d[closer]
    return Assignment(best)


def fit_predict(matrix: FeatureMatrix, config: BirchConfig) -> Tuple[ClusterModel, Assignment]:
    tree = build_tree(matrix, config, track_points=True)
    kept, outliers = filter_outliers(tree, config)
    if not kept:
        raise DegenerateClustering(
            f"all {len(outliers)} leaf entries hold fewer than {config.outlier_min_points} points")
    model = global_cluster(kept, config)
    model.outlier_cfs = outliers
    assignment = assign_points(matrix, model)
    if outliers:
        dropped = sorted(i for pts, cf in zip(tree.leaf_entry_points(), tree.leaf_entries())
                         if cf.n < config.outlier_min_points for i in pts)
        assignment.outlier_rows = tuple(dropped)
    return model, assignment
