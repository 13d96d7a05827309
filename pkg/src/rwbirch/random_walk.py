"""Activity correlation graph, Markov walks over it, and key-path extraction.

Each activity column is a vertex; edges carry the Pearson correlation of
the two columns. A walker moves along positive correlations only, and the
most visited activities form the key path that pre-filters features before
clustering. :func:`rw_descent` is the random-direction search with
step halving, usable with any objective.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import CATALOG_INDEX, FeatureMatrix, UnknownActivity


class WalkError(ValueError):
    pass


class TooFewRows(WalkError):
    pass


class TooFewFeatures(WalkError):
    pass


class LengthMismatch(WalkError):
    pass


class NonFiniteObjective(WalkError):
    pass


@dataclass(frozen=True)
class WalkConfig:
    lambda0: float = 1.0
    epsilon: float = 1e-4
    max_tries: int = 100
    seed: int = 0
    steps: Optional[int] = None  # None -> 10 x vertex count

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise WalkError(f"lambda0 must be positive, got {self.lambda0}")
        if not 0 < self.epsilon < self.lambda0:
            raise WalkError(f"epsilon must lie in (0, lambda0), got {self.epsilon}")
        if self.max_tries < 1:
            raise WalkError(f"max_tries must be >= 1, got {self.max_tries}")
        if self.steps is not None and self.steps < 1:
            raise WalkError(f"steps must be >= 1, got {self.steps}")

    def walk_steps(self, n_vertices: int) -> int:
        return self.steps if self.steps is not None else 10 * n_vertices


@dataclass(frozen=True, eq=False)
class ActivityGraph:
    vertices: Tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.shape != (len(self.vertices),) * 2:
            raise WalkError(f"weights of shape {w.shape} for {len(self.vertices)} vertices")
        if not np.array_equal(w, w.T):
            raise WalkError("weights are not symmetric")
        if np.any(np.diag(w) != 0):
            raise WalkError("self-weights must be zero")
        if np.any(np.abs(w) > 1 + 1e-12):
            raise WalkError("weights outside [-1, 1]")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    vertices: Tuple[str, ...]
    p: np.ndarray


@dataclass(frozen=True)
class KeyPath:
    activities: Tuple[str, ...]
    scores: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.activities)

    def to_text(self) -> str:
        """One ``<rank>,<activity>,<score>`` line per activity, rank from 1."""
        return "".join(f"{i},{a},{s!r}\n" for i, (a, s) in enumerate(zip(self.activities, self.scores), 1))

    @classmethod
    def from_text(cls, text: str) -> "KeyPath":
        acts, scores = [], []
        for line in text.splitlines():
            if line.strip():
                _, a, s = line.split(",")
                acts.append(a)
                scores.append(float(s))
        return cls(tuple(acts), tuple(scores))

    def inline(self) -> str:
        return " ".join(self.activities)


def pearson(x, y) -> float:
    """Pearson correlation; 0 when either vector is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"{x.shape} vs {y.shape}")
    if x.size < 2:
        raise LengthMismatch("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return 0.0
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def build_activity_graph(matrix: FeatureMatrix) -> ActivityGraph:
    if matrix.n_rows < 2:
        raise TooFewRows(f"need at least 2 rows, got {matrix.n_rows}")
    if matrix.n_features < 2:
        raise TooFewFeatures(f"need at least 2 features, got {matrix.n_features}")
    x = matrix.rows - matrix.rows.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    live = norms > 0
    z = np.zeros_like(x)
    z[:, live] = x[:, live] / norms[live]
    w = np.clip(z.T @ z, -1.0, 1.0)
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0.0)
    return ActivityGraph(matrix.feature_names, w)


def transition_matrix(graph: ActivityGraph) -> TransitionMatrix:
    n = len(graph.vertices)
    if n < 2:
        raise TooFewFeatures("need at least 2 vertices")
    pos = np.maximum(graph.weights, 0.0)
    p = np.empty((n, n))
    for i in range(n):
        total = pos[i].sum()
        if total > 0:
            p[i] = pos[i] / total
        else:
            p[i] = 1.0 / (n - 1)
            p[i, i] = 0.0
    return TransitionMatrix(graph.vertices, p)


def graph_walk(tm: TransitionMatrix, config: WalkConfig) -> np.ndarray:
    """Visit frequencies of one walker from a uniform random start.

    The start vertex counts as a visit, so ``steps`` transitions produce
    ``steps + 1`` visits.
    """
    n = tm.p.shape[0]
    steps = config.walk_steps(n)
    rng = np.random.default_rng(config.seed)
    cum = []
    for row in tm.p:
        c = np.cumsum(row).tolist()
        # The last reachable state absorbs any rounding shortfall below 1.
        last = int(np.flatnonzero(row > 0)[-1])
        c[last:] = [math.inf] * (len(c) - last)
        cum.append(c)
    state = int(rng.integers(n))
    visits = [0] * n
    visits[state] += 1
    for u in rng.random(steps).tolist():
        state = bisect.bisect_right(cum[state], u)
        visits[state] += 1
    return np.array(visits, dtype=float) / (steps + 1)


def stationary_distribution(p: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
    """Power iteration on a lazy copy of ``p`` (aperiodic, same fixed point)."""
    n = p.shape[0]
    lazy = 0.5 * (np.eye(n) + p)
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.abs(nxt - pi).max() < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


def key_path_size(n_features: int, top_fraction: float) -> int:
    # Nudge down so that e.g. 0.6 * 10 does not round up to 7.
    want = math.ceil(top_fraction * n_features - 1e-9)
    return min(max(2, want), n_features)


def extract_key_path(matrix: FeatureMatrix, config: WalkConfig, top_fraction: float = 0.6) -> KeyPath:
    if not 0 < top_fraction <= 1:
        raise WalkError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    if matrix.n_features < 2:
        raise TooFewFeatures(f"need at least 2 features, got {matrix.n_features}")
    graph = build_activity_graph(matrix)
    freq = graph_walk(transition_matrix(graph), config)
    order = sorted(range(len(freq)), key=lambda j: (-freq[j], CATALOG_INDEX[graph.vertices[j]]))
    top = order[:key_path_size(matrix.n_features, top_fraction)]
    return KeyPath(tuple(graph.vertices[j] for j in top), tuple(float(freq[j]) for j in top))


def project_features(matrix: FeatureMatrix, path: KeyPath) -> FeatureMatrix:
    index = {a: j for j, a in enumerate(matrix.feature_names)}
    missing = [a for a in path.activities if a not in index]
    if missing:
        raise UnknownActivity(f"key path activities {missing} not in matrix")
    cols = [index[a] for a in path.activities]
    return replace(matrix, feature_names=tuple(path.activities), rows=matrix.rows[:, cols])


@dataclass
class DescentResult:
    x_best: np.ndarray
    f_best: float
    rounds: int
    step: float
    evaluations: int
    trace: List[float] = field(default_factory=list)


def rw_descent(f: Callable[[np.ndarray], float], x0, config: WalkConfig) -> DescentResult:
    """Random-direction descent.

    Each try draws ``u`` uniform in (-1, 1)^n, normalises it and probes
    ``x + step * u/|u|``; a strictly better probe is accepted and resets the
    failure count. After ``max_tries`` failures in a row the step is halved
    and a new round starts; the search ends once the step drops below
    ``epsilon``. ``trace`` holds f(x0) followed by every accepted value.
    """
    x = np.array(x0, dtype=float)
    fx = float(f(x))
    if not math.isfinite(fx):
        raise NonFiniteObjective(f"f(x0) = {fx}")
    rng = np.random.default_rng(config.seed)
    step = config.lambda0
    rounds = evaluations = 0
    trace = [fx]
    while True:
        failures = 0
        while failures < config.max_tries:
            u = rng.uniform(-1.0, 1.0, size=x.shape)
            norm = math.sqrt(float(u @ u))
            if norm == 0:
                continue
            x1 = x + step * (u / norm)
            f1 = float(f(x1))
            evaluations += 1
            if not math.isfinite(f1):
                raise NonFiniteObjective(f"f = {f1} at {x1.tolist()}")
            if f1 < fx:
                x, fx = x1, f1
                trace.append(fx)
                failures = 0
            else:
                failures += 1
        rounds += 1
        step /= 2
        if step < config.epsilon:
            break
    return DescentResult(x, fx, rounds, step, evaluations, trace)


def correlation_objective(graph: ActivityGraph) -> Callable[[np.ndarray], float]:
    """f(x) = -sum_{i<j} x_i x_j w_ij with x clipped to the unit box."""
    w = graph.weights

    def f(x: np.ndarray) -> float:
        z = np.clip(x, 0.0, 1.0)
        return -0.5 * float(z @ w @ z)

    return f


def descent_key_path(matrix: FeatureMatrix, config: WalkConfig, cutoff: float = 0.5) -> KeyPath:
    """Key path from :func:`rw_descent` on the correlation objective.

    Activities whose optimised weight reaches ``cutoff`` are kept, ordered
    by weight; at least the two heaviest are always returned.
    """
    graph = build_activity_graph(matrix)
    n = len(graph.vertices)
    res = rw_descent(correlation_objective(graph), np.full(n, 0.5), config)
    z = np.clip(res.x_best, 0.0, 1.0)
    order = sorted(range(n), key=lambda j: (-z[j], CATALOG_INDEX[graph.vertices[j]]))
    keep = [j for j in order if z[j] >= cutoff]
    if len(keep) < 2:
        keep = order[:2]
    return KeyPath(tuple(graph.vertices[j] for j in keep), tuple(float(z[j]) for j in keep))
