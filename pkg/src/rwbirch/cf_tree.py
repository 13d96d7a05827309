"""Clustering features and the height-balanced CF-tree.

A clustering feature (CF) summarises a set of points by its count ``n``,
per-dimension linear sum ``ls`` and per-dimension sum of squares ``ss``.
CFs are additive, so a tree of CF entries can absorb points one at a time
while every internal entry stays equal to the sum of its subtree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np


class CFError(ValueError):
    pass


class NonFiniteInput(CFError):
    pass


class DimensionMismatch(CFError):
    pass


class EmptyCF(CFError):
    pass


class Underfull(CFError):
    pass


class TreeInvariantError(AssertionError):
    pass


class ClusteringFeature:
    """The (N, LS, SS) triple.

    ``ss`` is kept per dimension; the scalar sum of squares needed by the
    radius is derived on demand.
    """

    __slots__ = ("n", "ls", "ss")

    def __init__(self, n: int, ls, ss):
        ls = np.asarray(ls, dtype=float)
        ss = np.asarray(ss, dtype=float)
        if ls.ndim != 1 or ss.shape != ls.shape:
            raise DimensionMismatch(f"ls shape {ls.shape} vs ss shape {ss.shape}")
        if n < 0:
            raise CFError(f"negative point count {n}")
        self.n = int(n)
        self.ls = ls
        self.ss = ss

    @classmethod
    def zero(cls, d: int) -> "ClusteringFeature":
        return cls(0, np.zeros(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.ls.shape[0]

    def copy(self) -> "ClusteringFeature":
        return ClusteringFeature(self.n, self.ls.copy(), self.ss.copy())

    def __add__(self, other: "ClusteringFeature") -> "ClusteringFeature":
        return cf_merge(self, other)

    def absorb(self, other: "ClusteringFeature") -> None:
        """In-place merge, used along insertion paths."""
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimension {self.dim} vs {other.dim}")
        self.n += other.n
        self.ls += other.ls
        self.ss += other.ss

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClusteringFeature):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.ls, other.ls)
                and np.array_equal(self.ss, other.ss))

    def __repr__(self) -> str:
        return f"ClusteringFeature(n={self.n}, ls={self.ls.tolist()}, ss={self.ss.tolist()})"


def cf_from_point(x) -> ClusteringFeature:
    x = np.array(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"non-finite coordinate in {x.tolist()}")
    return ClusteringFeature(1, x, x * x)


def cf_from_points(points) -> ClusteringFeature:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D point array, got shape {pts.shape}")
    return ClusteringFeature(pts.shape[0], pts.sum(axis=0), (pts * pts).sum(axis=0))


def cf_merge(a: ClusteringFeature, b: ClusteringFeature) -> ClusteringFeature:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} vs {b.dim}")
    return ClusteringFeature(a.n + b.n, a.ls + b.ls, a.ss + b.ss)


def cf_centroid(cf: ClusteringFeature) -> np.ndarray:
    if cf.n == 0:
        raise EmptyCF("centroid of an empty CF")
    return cf.ls / cf.n


def cf_radius(cf: ClusteringFeature) -> float:
    """RMS distance of the summarised points to their centroid."""
    if cf.n == 0:
        raise EmptyCF("radius of an empty CF")
    c = cf.ls / cf.n
    r2 = float(cf.ss.sum() / cf.n - np.dot(c, c))
    return float(np.sqrt(r2)) if r2 > 0.0 else 0.0


def cf_distance(a: ClusteringFeature, b: ClusteringFeature) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} vs {b.dim}")
    diff = cf_centroid(a) - cf_centroid(b)
    return float(np.sqrt(np.dot(diff, diff)))


@dataclass(frozen=True)
class TreeParams:
    threshold: float = 0.5
    branching: int = 8
    leaf_capacity: int = 8
    dimension: int = 2

    def __post_init__(self):
        if not (self.threshold > 0 and np.isfinite(self.threshold)):
            raise ValueError(f"threshold T must be positive, got {self.threshold}")
        if self.branching < 2:
            raise ValueError(f"branching B must be >= 2, got {self.branching}")
        if self.leaf_capacity < 1:
            raise ValueError(f"leaf capacity L must be >= 1, got {self.leaf_capacity}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")


@dataclass(eq=False)
class CFEntry:
    cf: ClusteringFeature
    child: Optional["CFNode"] = None
    # Row indices summarised by a leaf entry; only populated when the tree tracks points.
    points: Optional[List[int]] = None


@dataclass(eq=False)
class CFNode:
    is_leaf: bool
    entries: List[CFEntry] = field(default_factory=list)
    prev: Optional["CFNode"] = None
    next: Optional["CFNode"] = None

    @property
    def kind(self) -> str:
        return "Leaf" if self.is_leaf else "Internal"

    def total(self, d: int) -> ClusteringFeature:
        cf = ClusteringFeature.zero(d)
        for e in self.entries:
            cf.absorb(e.cf)
        return cf

    def centroids(self) -> np.ndarray:
        return np.stack([e.cf.ls / e.cf.n for e in self.entries])


def _closest(node: CFNode, x: np.ndarray) -> int:
    diff = node.centroids() - x
    # argmin returns the first minimum, i.e. the lowest index on ties.
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def _pairwise_centroid_dist(entries: Sequence[CFEntry]) -> np.ndarray:
    c = np.stack([cf_centroid(e.cf) for e in entries])
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def split_node(node: CFNode) -> Tuple[CFNode, CFNode]:
    """Split an overfull node around its farthest pair of entries.

    ``node`` keeps the group seeded by the first of the pair and a new
    sibling receives the other group. Leaf siblings are spliced into the
    leaf chain right after ``node``.
    """
    m = len(node.entries)
    if m < 2:
        raise Underfull(f"cannot split a node with {m} entries")
    dist = _pairwise_centroid_dist(node.entries)
    iu, ju = np.triu_indices(m, k=1)
    k = int(np.argmax(dist[iu, ju]))
    s1, s2 = int(iu[k]), int(ju[k])

    group1, group2 = [], []
    for idx, entry in enumerate(node.entries):
        if idx == s1:
            group1.append(entry)
        elif idx == s2:
            group2.append(entry)
        elif dist[idx, s1] <= dist[idx, s2]:
            group1.append(entry)
        else:
            group2.append(entry)

    sibling = CFNode(is_leaf=node.is_leaf, entries=group2)
    node.entries = group1
    if node.is_leaf:
        sibling.prev = node
        sibling.next = node.next
        if node.next is not None:
            node.next.prev = sibling
        node.next = sibling
    return node, sibling


class CFTree:
    """Height-balanced CF-tree with a doubly linked chain of leaves.

    With ``track_points`` each leaf entry records the insertion indices of
    the points it absorbed. With ``check`` the full invariant suite runs
    after every insert (slow; meant for tests).
    """

    def __init__(self, params: TreeParams, track_points: bool = False, check: bool = False):
        self.params = params
        self.root: Optional[CFNode] = None
        self.leaf_head: Optional[CFNode] = None
        self.point_total = 0
        self.track_points = track_points
        self.check = check
        self.merges = 0

    def __len__(self) -> int:
        return self.point_total

    def insert_point(self, x) -> None:
        cf = cf_from_point(x)
        if cf.dim != self.params.dimension:
            raise DimensionMismatch(f"point has dimension {cf.dim}, tree expects {self.params.dimension}")
        idx = self.point_total
        if self.root is None:
            self.root = CFNode(is_leaf=True, entries=[self._leaf_entry(cf, idx)])
            self.leaf_head = self.root
        else:
            sibling = self._insert(self.root, cf, idx)
            if sibling is not None:
                d = self.params.dimension
                old = self.root
                self.root = CFNode(is_leaf=False, entries=[
                    CFEntry(old.total(d), child=old),
                    CFEntry(sibling.total(d), child=sibling),
                ])
        self.point_total += 1
        if self.check:
            self.check_invariants()

    def _leaf_entry(self, cf: ClusteringFeature, idx: int) -> CFEntry:
        return CFEntry(cf, points=[idx] if self.track_points else None)

    def _insert(self, node: CFNode, cf: ClusteringFeature, idx: int) -> Optional[CFNode]:
        p = self.params
        if node.is_leaf:
            i = _closest(node, cf.ls)
            entry = node.entries[i]
            if cf_radius(entry.cf + cf) <= p.threshold:
                entry.cf.absorb(cf)
                if entry.points is not None:
                    entry.points.append(idx)
                return None
            node.entries.append(self._leaf_entry(cf.copy(), idx))
            if len(node.entries) <= p.leaf_capacity:
                return None
            return split_node(node)[1]

        i = _closest(node, cf.ls)
        entry = node.entries[i]
        sibling = self._insert(entry.child, cf, idx)
        if sibling is None:
            entry.cf.absorb(cf)
            return None
        entry.cf = entry.child.total(p.dimension)
        node.entries.insert(i + 1, CFEntry(sibling.total(p.dimension), child=sibling))
        if len(node.entries) > p.branching:
            return split_node(node)[1]
        self.merges += merge_refinement(node, p, (i, i + 1), self)
        return None

    def leaves(self) -> Iterator[CFNode]:
        leaf = self.leaf_head
        while leaf is not None:
            yield leaf
            leaf = leaf.next

    def leaf_entries(self) -> List[ClusteringFeature]:
        return [e.cf for leaf in self.leaves() for e in leaf.entries]

    def leaf_entry_points(self) -> List[List[int]]:
        if not self.track_points:
            raise RuntimeError("tree was built without point tracking")
        return [list(e.points) for leaf in self.leaves() for e in leaf.entries]

    def root_cf(self) -> ClusteringFeature:
        if self.root is None:
            return ClusteringFeature.zero(self.params.dimension)
        return self.root.total(self.params.dimension)

    def height(self) -> int:
        h, node = 0, self.root
        while node is not None:
            h += 1
            node = None if node.is_leaf else node.entries[0].child
        return h

    def nodes(self) -> Iterator[Tuple[CFNode, int]]:
        """Depth-first (node, depth) pairs, root at depth 0."""
        if self.root is None:
            return
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.is_leaf:
                stack.extend((e.child, depth + 1) for e in reversed(node.entries))

    def check_invariants(self, rtol: float = 1e-9) -> None:
        """Raise TreeInvariantError on the first violated structural invariant."""
        p = self.params
        if self.root is None:
            if self.point_total != 0 or self.leaf_head is not None:
                raise TreeInvariantError("empty tree with points or leaves")
            return

        leaf_depths = set()
        leaves_in_tree = []
        for node, depth in self.nodes():
            if not node.entries:
                raise TreeInvariantError("node without entries")
            if node.is_leaf:
                leaf_depths.add(depth)
                leaves_in_tree.append(node)
                if len(node.entries) > p.leaf_capacity:
                    raise TreeInvariantError(f"leaf holds {len(node.entries)} > L={p.leaf_capacity} entries")
                for e in node.entries:
                    if e.child is not None:
                        raise TreeInvariantError("leaf entry with a child")
                    r = cf_radius(e.cf)
                    if r > p.threshold + 1e-12:
                        raise TreeInvariantError(f"leaf entry radius {r} exceeds T={p.threshold}")
            else:
                if len(node.entries) > p.branching:
                    raise TreeInvariantError(f"internal node holds {len(node.entries)} > B={p.branching} entries")
                for e in node.entries:
                    if e.child is None:
                        raise TreeInvariantError("internal entry without a child")
                    _check_close(e.cf, e.child.total(p.dimension), rtol, "internal entry CF != sum of child")
        if len(leaf_depths) != 1:
            raise TreeInvariantError(f"leaves at depths {sorted(leaf_depths)}")

        chain, seen, prev = [], set(), None
        leaf = self.leaf_head
        if leaf is not None and leaf.prev is not None:
            raise TreeInvariantError("leaf head has a predecessor")
        while leaf is not None:
            if id(leaf) in seen:
                raise TreeInvariantError("leaf chain has a cycle")
            if leaf.prev is not prev:
                raise TreeInvariantError("leaf chain prev/next mismatch")
            seen.add(id(leaf))
            chain.append(leaf)
            prev, leaf = leaf, leaf.next
        if len(chain) != len(leaves_in_tree) or seen != {id(x) for x in leaves_in_tree}:
            raise TreeInvariantError(f"leaf chain visits {len(chain)} leaves, tree has {len(leaves_in_tree)}")

        total_n = sum(e.cf.n for x in chain for e in x.entries)
        if total_n != self.point_total:
            raise TreeInvariantError(f"leaf entries hold {total_n} points, tree absorbed {self.point_total}")

    def dump(self) -> str:
        """Indented text rendering, one line per node and per entry."""
        lines = []
        for node, depth in self.nodes():
            pad = "  " * depth
            lines.append(f"{pad}{node.kind} ({len(node.entries)} entries)")
            for e in node.entries:
                c = " ".join(f"{v:.6g}" for v in cf_centroid(e.cf))
                lines.append(f"{pad}  - n={e.cf.n} centroid=[{c}] radius={cf_radius(e.cf):.6g}")
        return "\n".join(lines) + ("\n" if lines else "")


def _check_close(a: ClusteringFeature, b: ClusteringFeature, rtol: float, msg: str) -> None:
    if a.n != b.n:
        raise TreeInvariantError(f"{msg}: n {a.n} vs {b.n}")
    if not a.ls.size:
        return
    for name, u, v in (("ls", a.ls, b.ls), ("ss", a.ss, b.ss)):
        if abs(u - v).max() > rtol * max(1.0, abs(v).max()):
            raise TreeInvariantError(f"{msg}: {name} differs")


def merge_refinement(parent: CFNode, params: TreeParams,
                     exclude: Optional[Tuple[int, int]] = None,
                     tree: Optional[CFTree] = None) -> bool:
    """Merge the closest pair of ``parent``'s entries if their union stays within T.

    ``exclude`` names the two halves of a split that just landed in
    ``parent``; that pair is never merged back. Child nodes are fused only
    when the combined entry list still fits the child's capacity. Pass
    ``tree`` whenever the children may be leaves so the chain head can move.
    """
    m = len(parent.entries)
    if m < 2:
        return False
    dist = _pairwise_centroid_dist(parent.entries)
    np.fill_diagonal(dist, np.inf)
    if exclude is not None:
        a, b = exclude
        dist[a, b] = dist[b, a] = np.inf
    iu, ju = np.triu_indices(m, k=1)
    k = int(np.argmin(dist[iu, ju]))
    i, j = int(iu[k]), int(ju[k])
    if not np.isfinite(dist[i, j]):
        return False
    ei, ej = parent.entries[i], parent.entries[j]
    if cf_radius(ei.cf + ej.cf) > params.threshold:
        return False
    if ei.child is not None:
        cap = params.leaf_capacity if ei.child.is_leaf else params.branching
        if len(ei.child.entries) + len(ej.child.entries) > cap:
            return False
        ei.child.entries.extend(ej.child.entries)
        if ej.child.is_leaf:
            _unlink_leaf(ej.child, tree)
    elif ei.points is not None:
        ei.points.extend(ej.points or [])
    ei.cf = ei.cf + ej.cf
    del parent.entries[j]
    return True


def _unlink_leaf(leaf: CFNode, tree: Optional[CFTree]) -> None:
    if leaf.prev is not None:
        leaf.prev.next = leaf.next
    elif tree is not None:
        tree.leaf_head = leaf.next
    if leaf.next is not None:
        leaf.next.prev = leaf.prev
    leaf.prev = leaf.next = None


def leaf_entries(tree: CFTree) -> List[ClusteringFeature]:
    return tree.leaf_entries()


def insert_point(tree: CFTree, x) -> None:
    tree.insert_point(x)
