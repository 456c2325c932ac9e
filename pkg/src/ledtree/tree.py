"""Combinatorial and metric core of full binary LED trees.

Vertex numbering: inner vertices are ``0 .. n_v-1`` and leaves are
``n_v .. n_t-1``.  The child with the lower index is the *left* child.
Edges are numbered by their lower (child) endpoint, skipping the root, so
edge ``j`` joins vertex ``edge_child[j]`` with its parent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CyclicStructure,
    DimensionMismatch,
    IndexRangeViolation,
    NotFullBinary,
    TopologyError,
)

__all__ = [
    "TreeTopology",
    "HangingType",
    "LedTreeInstance",
    "build_topology",
    "leaf_path_index_sets",
    "evaluate",
    "led_residuals",
    "feasibility_tolerance",
    "random_topology",
]


@dataclass(frozen=True)
class TreeTopology:
    leaf_count: int
    children: tuple[tuple[int, int], ...]
    parent: tuple[int, ...]
    root: int
    edge_child: tuple[int, ...]
    edge_of: tuple[int, ...]
    left_paths: tuple[tuple[int, ...], ...]
    right_paths: tuple[tuple[int, ...], ...]
    postorder: tuple[int, ...]

    @property
    def n_l(self) -> int:
        return self.leaf_count

    @property
    def n_v(self) -> int:
        return self.leaf_count - 1

    @property
    def n_t(self) -> int:
        return 2 * self.leaf_count - 1

    @property
    def n_e(self) -> int:
        return 2 * (self.leaf_count - 1)

    def is_leaf(self, v: int) -> bool:
        return v >= self.n_v

    def left(self, i: int) -> int:
        return self.children[i][0]

    def right(self, i: int) -> int:
        return self.children[i][1]

    def left_edge(self, i: int) -> int:
        return self.edge_of[self.children[i][0]]

    def right_edge(self, i: int) -> int:
        return self.edge_of[self.children[i][1]]

    def up_edge(self, i: int) -> int:
        return self.edge_of[i]

    def edge_parent(self, j: int) -> int:
        return self.parent[self.edge_child[j]]

    def root_path(self, v: int) -> list[int]:
        """Vertices from ``v`` up to and including the root."""
        path = [v]
        while self.parent[path[-1]] >= 0:
            path.append(self.parent[path[-1]])
        return path

    def leaves_below(self, v: int) -> list[int]:
        if self.is_leaf(v):
            return [v]
        stack, out = [v], []
        while stack:
            w = stack.pop()
            if self.is_leaf(w):
                out.append(w)
            else:
                stack.extend(reversed(self.children[w]))
        return sorted(out)

    def depth_order(self) -> list[int]:
        """Inner vertices, parents before children."""
        return [v for v in reversed(self.postorder) if not self.is_leaf(v)]

    @cached_property
    def constraint_matrix(self) -> np.ndarray:
        """Rows are the linear maps ``z -> sum_{I_i^L} z - sum_{I_i^R} z``."""
        A = np.zeros((self.n_v, self.n_e))
        for i in range(self.n_v):
            A[i, list(self.left_paths[i])] += 1.0
            A[i, list(self.right_paths[i])] -= 1.0
        return A


def build_topology(child_pairs: Iterable[Sequence], leaf_count: int) -> TreeTopology:
    """Validate ``(inner, child, child)`` triples and derive the full structure.

    The order of the two children inside a triple is irrelevant; the left
    child is always the lower index.
    """
    if leaf_count < 2:
        raise TopologyError("a full binary tree needs at least two leaves")
    n_v = leaf_count - 1
    n_t = 2 * leaf_count - 1

    children: dict[int, tuple[int, int]] = {}
    for entry in child_pairs:
        entry = tuple(entry)
        kids = [c for c in entry[1:] if c is not None]
        if len(entry) < 1:
            raise TopologyError("empty child-pair entry")
        i = entry[0]
        if len(kids) != 2:
            raise NotFullBinary(f"vertex {i} has {len(kids)} children")
        if not 0 <= i < n_v:
            raise IndexRangeViolation(f"inner index {i} outside 0..{n_v - 1}")
        for c in kids:
            if not 0 <= c < n_t:
                raise IndexRangeViolation(f"child index {c} outside 0..{n_t - 1}")
        if kids[0] == kids[1]:
            raise NotFullBinary(f"vertex {i} lists child {kids[0]} twice")
        if i in kids:
            raise CyclicStructure(f"vertex {i} is its own child")
        if i in children:
            raise TopologyError(f"vertex {i} listed twice")
        children[i] = (min(kids), max(kids))
    missing = [i for i in range(n_v) if i not in children]
    if missing:
        raise NotFullBinary(f"inner vertices without children: {missing}")

    parent = [-1] * n_t
    for i, (a, b) in children.items():
        for c in (a, b):
            if parent[c] != -1:
                raise CyclicStructure(f"vertex {c} has two parents")
            parent[c] = i
    roots = [v for v in range(n_t) if parent[v] == -1]
    if len(roots) != 1 or roots[0] >= n_v:
        raise CyclicStructure(f"expected exactly one parentless inner vertex, found {roots}")
    root = roots[0]

    # Post-order sweep from the root; anything unreached sits on a cycle.
    post: list[int] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        v, expanded = stack.pop()
        if expanded or v >= n_v:
            post.append(v)
            continue
        if v in seen:
            raise CyclicStructure(f"vertex {v} reached twice")
        seen.add(v)
        stack.append((v, True))
        a, b = children[v]
        stack.append((b, False))
        stack.append((a, False))
    if len(post) != n_t:
        raise CyclicStructure("not every vertex is reachable from the root")

    edge_child = tuple(v for v in range(n_t) if v != root)
    edge_of = [-1] * n_t
    for j, v in enumerate(edge_child):
        edge_of[v] = j

    def turn_left(v: int, path: list[int]) -> None:
        while v < n_v:
            a = children[v][0]
            path.append(edge_of[a])
            v = a

    lefts, rights = [], []
    for i in range(n_v):
        a, b = children[i]
        lp = [edge_of[a]]
        turn_left(a, lp)
        rp = [edge_of[b]]
        turn_left(b, rp)
        lefts.append(tuple(lp))
        rights.append(tuple(rp))

    return TreeTopology(
        leaf_count=leaf_count,
        children=tuple(children[i] for i in range(n_v)),
        parent=tuple(parent),
        root=root,
        edge_child=edge_child,
        edge_of=tuple(edge_of),
        left_paths=tuple(lefts),
        right_paths=tuple(rights),
        postorder=tuple(post),
    )


def leaf_path_index_sets(topology: TreeTopology) -> list[tuple[frozenset, frozenset]]:
    return [
        (frozenset(topology.left_paths[i]), frozenset(topology.right_paths[i]))
        for i in range(topology.n_v)
    ]


@dataclass(frozen=True, eq=False)
class HangingType:
    """A topology with pinned leaf coordinates (row ``k`` is vertex ``n_v + k``)."""

    topology: TreeTopology
    leaf_coords: np.ndarray
    leaf_labels: tuple[str, ...] = ()
    inner_labels: tuple[str, ...] = ()

    def __post_init__(self):
        coords = np.array(self.leaf_coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] != self.topology.n_l:
            raise DimensionMismatch(
                f"expected {self.topology.n_l} leaf rows, got shape {coords.shape}"
            )
        if coords.shape[1] < 1:
            raise DimensionMismatch("leaf coordinates must have at least one column")
        if not np.all(np.isfinite(coords)):
            raise DimensionMismatch("leaf coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "leaf_coords", coords)
        if not self.leaf_labels:
            object.__setattr__(
                self, "leaf_labels", tuple(f"L{k}" for k in range(self.topology.n_l))
            )
        if not self.inner_labels:
            object.__setattr__(self, "inner_labels", ("",) * self.topology.n_v)

    @property
    def dim(self) -> int:
        return self.leaf_coords.shape[1]

    def label(self, v: int) -> str:
        nv = self.topology.n_v
        return self.leaf_labels[v - nv] if v >= nv else self.inner_labels[v]

    def with_leaves(self, leaf_coords) -> "HangingType":
        return HangingType(self.topology, leaf_coords, self.leaf_labels, self.inner_labels)


@dataclass(frozen=True, eq=False)
class LedTreeInstance:
    hanging_type: HangingType
    placement: np.ndarray
    coords: np.ndarray = field(repr=False)
    lengths: np.ndarray = field(repr=False)
    depth: np.ndarray = field(repr=False)
    height: np.ndarray = field(repr=False)

    @property
    def topology(self) -> TreeTopology:
        return self.hanging_type.topology

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @cached_property
    def residuals(self) -> np.ndarray:
        return led_residuals(self)

    def unit(self, v: int, w: int) -> np.ndarray | None:
        """Unit vector in direction ``v - w``; ``None`` if the points coincide."""
        d = self.coords[v] - self.coords[w]
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            return None
        return d / nrm

    def u_left(self, i: int):
        return self.unit(i, self.topology.left(i))

    def u_right(self, i: int):
        return self.unit(i, self.topology.right(i))

    def u_up(self, i: int):
        p = self.topology.parent[i]
        return None if p < 0 else self.unit(i, p)

    def leaf_depths(self) -> np.ndarray:
        return self.depth[self.topology.n_v:]

    def diameter(self) -> float:
        pts = self.hanging_type.leaf_coords
        return float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)))


def evaluate(hanging_type: HangingType, placement) -> LedTreeInstance:
    """Edge lengths, depths and heights of the tree with inner vertices at ``placement``."""
    top = hanging_type.topology
    beta = np.array(placement, dtype=float)
    if beta.ndim == 1:
        if beta.size != top.n_v * hanging_type.dim:
            raise DimensionMismatch(
                f"flat placement of size {beta.size}, expected {top.n_v * hanging_type.dim}"
            )
        beta = beta.reshape(top.n_v, hanging_type.dim)
    if beta.shape != (top.n_v, hanging_type.dim):
        raise DimensionMismatch(
            f"placement shape {beta.shape}, expected {(top.n_v, hanging_type.dim)}"
        )
    if not np.all(np.isfinite(beta)):
        raise DimensionMismatch("placement has non-finite entries")
    beta.setflags(write=False)
    coords = np.vstack([beta, hanging_type.leaf_coords])
    coords.setflags(write=False)

    child = np.asarray(top.edge_child)
    par = np.asarray(top.parent)[child]
    lengths = np.linalg.norm(coords[child] - coords[par], axis=1)

    height = np.zeros(top.n_t)
    for v in top.postorder:
        if v < top.n_v:
            a, b = top.children[v]
            height[v] = max(
                lengths[top.edge_of[a]] + height[a], lengths[top.edge_of[b]] + height[b]
            )
    depth = np.zeros(top.n_t)
    for v in reversed(top.postorder):
        if v != top.root:
            depth[v] = depth[top.parent[v]] + lengths[top.edge_of[v]]
    for arr in (lengths, height, depth):
        arr.setflags(write=False)
    return LedTreeInstance(hanging_type, beta, coords, lengths, depth, height)


def led_residuals(instance: LedTreeInstance) -> np.ndarray:
    """Left leaf path length minus right leaf path length, per inner vertex."""
    return instance.topology.constraint_matrix @ instance.lengths


def feasibility_tolerance(instance: LedTreeInstance, rel: float = 1e-9) -> float:
    return rel * (1.0 + instance.total_length)


def random_topology(leaf_count: int, rng) -> TreeTopology:
    """Uniformly random merge order of ``leaf_count`` leaves; inner ids are shuffled."""
    n_v = leaf_count - 1
    roots = list(range(n_v, 2 * leaf_count - 1))
    ids = rng.permutation(n_v)
    triples = []
    for k in range(n_v):
        i, j = rng.choice(len(roots), 2, replace=False)
        a, b = roots[i], roots[j]
        triples.append((int(ids[k]), a, b))
        roots = [r for r in roots if r not in (a, b)] + [int(ids[k])]
    return build_topology(triples, leaf_count)
