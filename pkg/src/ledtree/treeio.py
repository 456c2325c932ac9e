"""Tree JSON and Newick serialization.

The JSON layout is::

    {"n": 2,
     "leaves": [{"id": 2, "label": "A", "coords": [-1.0, 0.0]}, ...],
     "inner":  [{"id": 0, "left": 2, "right": 3, "coords": [0.0, 0.5]}, ...],
     "root": 1}

Ids on input may be any JSON scalars; they are renumbered so inner vertices
come first in listed order, followed by the leaves in listed order.  Floats
are written with Python's shortest round-trip ``repr``, so a write/read
cycle reproduces every coordinate bit for bit.
"""
from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import InputFormatError, TopologyError
from .tree import HangingType, LedTreeInstance, build_topology

__all__ = [
    "tree_from_dict",
    "tree_to_dict",
    "load_tree",
    "dump_json",
    "to_newick",
    "floats",
]


def floats(a) -> list:
    """Nested lists of Python floats (numpy scalars do not survive ``json``)."""
    return np.asarray(a, dtype=float).tolist()


def tree_from_dict(doc: dict) -> tuple[HangingType, np.ndarray | None]:
    """Parse a tree document; returns the hanging type and the inner placement if every
    inner vertex carries coordinates."""
    try:
        leaves = doc["leaves"]
        inner = doc["inner"]
        root_id = doc["root"]
    except (KeyError, TypeError) as exc:
        raise InputFormatError(f"tree JSON is missing field {exc}") from None
    n_l = len(leaves)
    if len(inner) != n_l - 1:
        raise TopologyError(f"{n_l} leaves need {n_l - 1} inner vertices, got {len(inner)}")
    index: dict = {}
    for k, rec in enumerate(inner):
        index.setdefault(_key(rec.get("id", f"inner{k}")), k)
    for k, rec in enumerate(leaves):
        key = _key(rec.get("id", f"leaf{k}"))
        if key in index:
            raise TopologyError(f"duplicate vertex id {rec.get('id')!r}")
        index[key] = len(inner) + k
    if len(index) != 2 * n_l - 1:
        raise TopologyError("vertex ids are not unique")

    def lookup(ref):
        try:
            return index[_key(ref)]
        except KeyError:
            raise TopologyError(f"unknown vertex id {ref!r}") from None

    pairs = [(k, lookup(rec.get("left")), lookup(rec.get("right"))) for k, rec in enumerate(inner)]
    topology = build_topology(pairs, n_l)
    if topology.root != lookup(root_id):
        raise TopologyError(f"declared root {root_id!r} has a parent")

    try:
        coords = np.array([rec["coords"] for rec in leaves], dtype=float)
    except (KeyError, ValueError, TypeError):
        raise InputFormatError("every leaf needs a numeric 'coords' list") from None
    dim = doc.get("n", coords.shape[1] if coords.ndim == 2 else None)
    if coords.ndim != 2 or coords.shape[1] != dim:
        raise InputFormatError(f"leaf coordinates are not all of dimension {dim}")
    ht = HangingType(
        topology,
        coords,
        tuple(str(rec.get("label", rec.get("id", f"L{k}"))) for k, rec in enumerate(leaves)),
        tuple(str(rec.get("label", "")) for rec in inner),
    )
    placement = None
    if inner and all(rec.get("coords") is not None for rec in inner):
        try:
            placement = np.array([rec["coords"] for rec in inner], dtype=float)
        except ValueError:
            raise InputFormatError("inner coordinates are not numeric") from None
        if placement.shape != (n_l - 1, dim):
            raise InputFormatError("inner coordinates have the wrong dimension")
    return ht, placement


def _key(x):
    # JSON ids 3 and "3" name the same vertex.
    return str(x)


def tree_to_dict(hanging_type: HangingType, placement=None, inner_extra: dict | None = None) -> dict:
    top = hanging_type.topology
    nv = top.n_v
    inner = []
    for i in range(nv):
        rec = {"id": i, "left": top.left(i), "right": top.right(i)}
        if hanging_type.inner_labels[i]:
            rec["label"] = hanging_type.inner_labels[i]
        if placement is not None:
            rec["coords"] = floats(np.asarray(placement)[i])
        if inner_extra and i in inner_extra:
            rec.update(inner_extra[i])
        inner.append(rec)
    leaves = [
        {"id": nv + k, "label": hanging_type.leaf_labels[k], "coords": floats(hanging_type.leaf_coords[k])}
        for k in range(top.n_l)
    ]
    return {"n": hanging_type.dim, "leaves": leaves, "inner": inner, "root": top.root}


def load_tree(path) -> tuple[HangingType, np.ndarray | None]:
    """Read a tree document, or the ``"tree"`` member of a solution document."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(doc, dict) and "tree" in doc and "leaves" not in doc:
        doc = doc["tree"]
    return tree_from_dict(doc)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


_UNQUOTED = re.compile(r"^[^\s()\[\]':;,]+$")


def _newick_label(label: str) -> str:
    if label == "" or _UNQUOTED.match(label):
        return label
    return "'" + label.replace("'", "''") + "'"


def to_newick(instance: LedTreeInstance, digits: int = 12) -> str:
    """Rooted Newick string; branch lengths are Euclidean edge lengths."""
    top = instance.topology
    ht = instance.hanging_type

    def fmt(x: float) -> str:
        if not math.isfinite(x):
            raise ValueError("non-finite branch length")
        return f"{x:.{digits}g}"

    def rec(v: int) -> str:
        name = _newick_label(ht.label(v))
        if top.is_leaf(v):
            body = name
        else:
            a, b = top.children[v]
            body = f"({rec(a)},{rec(b)}){name}"
        if v != top.root:
            body += ":" + fmt(float(instance.lengths[top.edge_of[v]]))
        return body

    return rec(top.root) + ";"
