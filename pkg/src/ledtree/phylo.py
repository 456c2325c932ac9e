"""From cognate tables to dated LED trees.

The chain is: a cognate table becomes one feature coordinate per cognate
group, the languages are re-embedded isometrically in ``n_l - 1``
dimensions, a hanging type is grown by merging the two closest roots at
their equal-depth point, and after minimization the inner vertices are
dated by scaling heights against one anchor split.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllMissingRow,
    EmptyTable,
    InputFormatError,
    TopologyInferenceFailed,
    ZeroAnchorHeight,
)
from .tree import HangingType, LedTreeInstance, build_topology

log = logging.getLogger(__name__)

MISSING = frozenset({"", "?"})
WEIGHTINGS = ("binary", "quartic")


@dataclass
class CognateTable:
    """``cells[m][k]`` is the cognate-class token of language ``k`` for meaning ``m``,
    or ``None`` where the word is missing.  Tokens are only compared within a meaning."""

    meanings: list[str]
    languages: list[str]
    cells: list[list[str | None]]
    clades: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.languages or not self.meanings:
            raise EmptyTable("cognate table needs at least one language and one meaning")
        if len(set(self.languages)) != len(self.languages):
            raise InputFormatError("language labels must be unique")
        for m, row in zip(self.meanings, self.cells):
            if len(row) != len(self.languages):
                raise InputFormatError(f"meaning {m!r} has {len(row)} cells for {len(self.languages)} languages")
        for name, members in self.clades.items():
            unknown = [x for x in members if x not in self.languages]
            if unknown:
                raise InputFormatError(f"clade {name!r} names unknown languages {unknown}")

    @classmethod
    def from_tsv(cls, source) -> "CognateTable":
        """Parse tab-separated text or a path.

        The header row lists the language labels after one leading cell; each
        further row is a meaning followed by one token per language.  Empty
        cells and ``?`` mean missing.  Lines ``#clade NAME=L1,L2,...`` define
        named language groups; other ``#`` lines are comments.
        """
        if isinstance(source, Path) or (isinstance(source, str) and source and "\t" not in source
                                          and "\n" not in source):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise InputFormatError(f"cannot read cognate table: {exc}") from None
        else:
            text = str(source)
        clades: dict[str, list[str]] = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("clade "):
                    name, _, members = body[len("clade "):].partition("=")
                    if not members:
                        raise InputFormatError(f"malformed clade line {line!r}")
                    clades[name.strip()] = [x.strip() for x in members.split(",") if x.strip()]
                continue
            if line.strip():
                rows.append(line)
        if not rows:
            raise EmptyTable("cognate table is empty")
        parsed = list(csv.reader(io.StringIO("\n".join(rows)), delimiter="\t"))
        header, body = parsed[0], parsed[1:]
        languages = [x.strip() for x in header[1:]]
        meanings, cells = [], []
        for rec in body:
            rec = rec + [""] * (len(languages) + 1 - len(rec))
            if len(rec) > len(languages) + 1:
                raise InputFormatError(f"row {rec[0]!r} has more cells than there are languages")
            meanings.append(rec[0].strip())
            cells.append([None if x.strip() in MISSING else x.strip() for x in rec[1:]])
        return cls(meanings, languages, cells, clades)


@dataclass
class FeatureEmbedding:
    coords: np.ndarray
    languages: list[str]
    columns: list[tuple[str, str]]
    weighting: str
    c_max: int

    def as_json(self) -> dict:
        return {
            "weighting": self.weighting,
            "c_max": self.c_max,
            "columns": [{"meaning": m, "group": g} for m, g in self.columns],
            "languages": self.languages,
            "coords": self.coords.tolist(),
        }


def embed_cognates(table: CognateTable, weighting: str = "binary") -> FeatureEmbedding:
    """One coordinate per cognate group, groups ordered by first appearance within each meaning.

    A language scores the group weight in the column of its own group and 0
    elsewhere.  Quartic weights are ``(c_max - c + 1)**4`` where ``c`` is the
    number of groups of that meaning, so meanings that split into few groups
    count more.
    """
    if weighting not in WEIGHTINGS:
        raise InputFormatError(f"unknown weighting {weighting!r}; choose from {WEIGHTINGS}")
    groups_per_meaning = []
    for row in table.cells:
        order: list[str] = []
        for tok in row:
            if tok is not None and tok not in order:
                order.append(tok)
        groups_per_meaning.append(order)
    nonempty = [len(g) for g in groups_per_meaning if g]
    if not nonempty:
        raise EmptyTable("cognate table has no data")
    c_max = max(nonempty)
    for k, lang in enumerate(table.languages):
        if all(row[k] is None for row in table.cells):
            raise AllMissingRow(f"language {lang!r} has no data")

    columns, blocks = [], []
    for meaning, row, groups in zip(table.meanings, table.cells, groups_per_meaning):
        if not groups:
            continue
        weight = 1.0 if weighting == "binary" else float((c_max - len(groups) + 1) ** 4)
        block = np.zeros((len(table.languages), len(groups)))
        for k, tok in enumerate(row):
            if tok is not None:
                block[k, groups.index(tok)] = weight
        blocks.append(block)
        columns.extend((meaning, g) for g in groups)
    return FeatureEmbedding(np.hstack(blocks), list(table.languages), columns, weighting, c_max)


@dataclass
class SimplexEmbedding:
    points: np.ndarray
    labels: list[str]
    rank: int
    coincident: list[tuple[str, str]]

    @property
    def has_coincident(self) -> bool:
        return bool(self.coincident)


def simplex_reembed(embedding: FeatureEmbedding | np.ndarray, labels=None) -> SimplexEmbedding:
    """Isometric copy of the language points in exactly ``n_l - 1`` dimensions.

    Principal axes of the centred cloud come from an SVD; axes beyond the rank
    are zero columns.  Each axis is signed so its largest entry is positive.
    Coincident languages stay coincident and are listed, not rejected.
    """
    if isinstance(embedding, FeatureEmbedding):
        X, labels = embedding.coords, embedding.languages
    else:
        X = np.asarray(embedding, float)
        labels = list(labels) if labels is not None else [f"L{k}" for k in range(X.shape[0])]
    n_l = X.shape[0]
    if n_l < 2:
        raise InputFormatError("re-embedding needs at least two languages")
    centred = X - X.mean(axis=0)
    U, s, _ = np.linalg.svd(centred, full_matrices=False)
    P = U * s
    scale = float(s[0]) if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > 1e-12 * scale))
    out = np.zeros((n_l, n_l - 1))
    k = min(n_l - 1, P.shape[1])
    out[:, :k] = P[:, :k]
    out[:, rank:] = 0.0
    for j in range(rank):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    coincident = [
        (labels[a], labels[b])
        for a, b in itertools.combinations(range(n_l), 2)
        if np.linalg.norm(X[a] - X[b]) <= 1e-12 * scale
    ]
    if coincident:
        log.warning("coincident languages: %s", coincident)
    return SimplexEmbedding(out, list(labels), rank, coincident)


@dataclass
class _Cluster:
    vertex: int
    point: np.ndarray
    height: float
    tag: str


def infer_hanging_type(points, labels, fallback_width: int = 3) -> tuple[HangingType, np.ndarray]:
    """Grow a hanging type by repeatedly joining the two closest current roots.

    The new root sits at the equal-depth point of the joining segment.  When
    that point does not exist (one subtree is too tall for the distance), the
    next-closest pairs are tried, up to ``fallback_width`` candidates in all.
    Equal distances are ordered by the pair of smallest leaf labels.
    """
    pts = np.asarray(points, float)
    labels = [str(x) for x in labels]
    n_l = pts.shape[0]
    if n_l < 2 or len(labels) != n_l:
        raise InputFormatError("need at least two points with one label each")
    if fallback_width < 1:
        raise InputFormatError("fallback width must be at least 1")
    n_v = n_l - 1
    clusters = [_Cluster(n_v + k, pts[k], 0.0, labels[k]) for k in range(n_l)]
    triples, placement = [], np.zeros((n_v, pts.shape[1]))
    span = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) or 1.0
    for stage in range(n_v):
        cands = []
        for p, q in itertools.combinations(range(len(clusters)), 2):
            a, b = clusters[p], clusters[q]
            d = float(np.linalg.norm(a.point - b.point))
            cands.append((round(d / span, 12), tuple(sorted((a.tag, b.tag))), d, p, q))
        cands.sort(key=lambda c: c[:2])
        for rank, (_, _, d, p, q) in enumerate(cands[:fallback_width]):
            a, b = clusters[p], clusters[q]
            if d + 1e-12 * span >= abs(a.height - b.height):
                break
            log.info("stage %d: pair (%s, %s) is not mergeable, trying the next one", stage, a.tag, b.tag)
        else:
            raise TopologyInferenceFailed(stage)
        if rank:
            log.info("stage %d merged the pair ranked %d", stage, rank + 1)
        if d == 0.0:
            point, height = a.point.copy(), max(a.height, b.height)
        else:
            t = min(1.0, max(0.0, (d + b.height - a.height) / (2.0 * d)))
            point = a.point + t * (b.point - a.point)
            height = max(t * d + a.height, (1.0 - t) * d + b.height)
        triples.append((stage, a.vertex, b.vertex))
        placement[stage] = point
        merged = _Cluster(stage, point, height, min(a.tag, b.tag))
        clusters = [c for k, c in enumerate(clusters) if k not in (p, q)] + [merged]
    topology = build_topology(triples, n_l)
    return HangingType(topology, pts, tuple(labels)), placement


def mrca(hanging_type: HangingType, leaf_labels) -> int:
    """Deepest inner vertex whose subtree holds every named leaf."""
    top = hanging_type.topology
    lookup = {lab: top.n_v + k for k, lab in enumerate(hanging_type.leaf_labels)}
    try:
        verts = [lookup[x] for x in leaf_labels]
    except KeyError as exc:
        raise InputFormatError(f"unknown leaf label {exc}") from None
    if not verts:
        raise InputFormatError("empty leaf set")
    common = None
    for v in verts:
        path = top.root_path(v)
        common = path if common is None else [x for x in path if x in set(common)]
    return common[0]


def resolve_anchor(hanging_type: HangingType, name: str, clades: dict | None = None) -> int:
    """Vertex for an inner label, a clade name or a comma-separated leaf list."""
    clades = clades or {}
    if name in hanging_type.inner_labels:
        return hanging_type.inner_labels.index(name)
    if name in clades:
        return mrca(hanging_type, clades[name])
    if name in hanging_type.leaf_labels:
        return hanging_type.topology.n_v + hanging_type.leaf_labels.index(name)
    if "," in name:
        return mrca(hanging_type, [x.strip() for x in name.split(",") if x.strip()])
    raise InputFormatError(f"anchor {name!r} is neither a vertex label, a clade nor a leaf list")


def label_clades(hanging_type: HangingType, clades: dict) -> HangingType:
    """Copy of the hanging type with each clade's common ancestor labelled by the clade name."""
    inner = list(hanging_type.inner_labels)
    for name, members in clades.items():
        v = mrca(hanging_type, members)
        if not inner[v]:
            inner[v] = name
    return HangingType(hanging_type.topology, hanging_type.leaf_coords, hanging_type.leaf_labels, tuple(inner))


def date_splits(instance: LedTreeInstance, anchor_vertex: int, anchor_years: float) -> dict[int, float]:
    """Years before present per vertex, linear in height with the anchor at ``anchor_years``."""
    h_anchor = float(instance.height[anchor_vertex])
    scale = instance.total_length or 1.0
    if h_anchor <= 1e-12 * scale:
        raise ZeroAnchorHeight(f"vertex {anchor_vertex} has zero height and cannot anchor the dating")
    top = instance.topology
    return {v: (0.0 if top.is_leaf(v) else anchor_years * (float(instance.height[v]) / h_anchor))
            for v in range(top.n_t)}
