"""Command-line interface.

Exit status: 0 success, 1 KKT check failed (``check-kkt`` only), 2 bad
input, 3 infeasible hanging type, 4 solution not certified, 5 internal
error.  ``LEDTREE_LOG`` selects the log level (error, info, debug).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import TOL_STAT, certify, geometric_checks
from .errors import InputFormatError, LedTreeError
from .feasible import PAIR_EXAMPLES, probe_region, write_pgm
from .phylo import (
    CognateTable,
    date_splits,
    embed_cognates,
    infer_hanging_type,
    label_clades,
    resolve_anchor,
    simplex_reembed,
)
from .solver import METHODS, SolveOptions, Status, minimize, solution_to_dict, stretched_tree
from .tree import evaluate
from .treeio import dump_json, floats, load_tree, to_newick, tree_to_dict

log = logging.getLogger("ledtree")

EXIT_OK, EXIT_KKT_FAILED, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNCERTIFIED, EXIT_INTERNAL = 0, 1, 2, 3, 4, 5


def data_file(name: str) -> Path:
    """Path to a bundled fixture such as ``toy.tsv`` or ``isosceles.json``."""
    ref = resources.files("ledtree") / "data" / name
    if not ref.is_file():
        raise InputFormatError(f"no such file or bundled fixture: {name}")
    return Path(str(ref))


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.exists() else data_file(p.name)


def _emit(doc: dict, out) -> None:
    text = dump_json(doc)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _outdir(args) -> Path:
    d = Path(args.out or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _clades(table_clades: dict, specs) -> dict:
    clades = dict(table_clades)
    for spec in specs or []:
        name, _, members = spec.partition("=")
        if not members:
            raise InputFormatError(f"--clade expects NAME=L1,L2,..., got {spec!r}")
        clades[name.strip()] = [x.strip() for x in members.split(",") if x.strip()]
    return clades


def _options(args) -> SolveOptions:
    try:
        return SolveOptions(tol_feas=args.tol_feas, tol_stat=args.tol_stat, restarts=args.restarts,
                            seed=args.seed, method=args.method)
    except ValueError as exc:
        raise InputFormatError(str(exc)) from None


def _embedding_and_tree(args):
    table = CognateTable.from_tsv(_resolve(args.cognates))
    emb = embed_cognates(table, args.weighting)
    simplex = simplex_reembed(emb)
    ht, placement = infer_hanging_type(simplex.points, simplex.labels, args.fallback_width)
    clades = _clades(table.clades, getattr(args, "clade", None))
    ht = label_clades(ht, clades)
    return table, emb, simplex, ht, placement, clades


def _solution_summary(doc: dict) -> str:
    return f"status {doc['status']}  total length {doc['total_length']!r}\n"


def _dates_doc(inst, years, anchor, anchor_years) -> dict:
    top = inst.topology
    ht = inst.hanging_type
    return {
        "anchor": {"vertex": anchor, "label": ht.label(anchor), "years": anchor_years,
                   "height": float(inst.height[anchor])},
        "vertices": [
            {
                "id": v,
                "label": ht.label(v),
                "height": float(inst.height[v]),
                "years": years[v],
                "leaves": [ht.label(x) for x in top.leaves_below(v)],
            }
            for v in range(top.n_v)
        ],
        "newick": to_newick(inst),
    }


def _write_dates_tsv(doc: dict, path: Path) -> None:
    lines = ["vertex\tlabel\theight\tyears\tleaves"]
    for rec in doc["vertices"]:
        lines.append(f"{rec['id']}\t{rec['label']}\t{rec['height']!r}\t{rec['years']!r}\t{','.join(rec['leaves'])}")
    path.write_text("\n".join(lines) + "\n")


# -- subcommands ---------------------------------------------------------------


def cmd_embed(args) -> int:
    table = CognateTable.from_tsv(_resolve(args.cognates))
    emb = embed_cognates(table, args.weighting)
    doc = emb.as_json()
    simplex = simplex_reembed(emb)
    doc["simplex"] = {"points": floats(simplex.points), "rank": simplex.rank,
                      "coincident": [list(p) for p in simplex.coincident]}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_infer(args) -> int:
    _, _, simplex, ht, placement, _ = _embedding_and_tree(args)
    _emit(tree_to_dict(ht, placement), args.out)
    return EXIT_OK


def cmd_minimize(args) -> int:
    ht, placement = load_tree(_resolve(args.input))
    if args.stretch_only:
        _emit(tree_to_dict(ht, stretched_tree(ht)), args.out)
        return EXIT_OK
    sol = minimize(ht, init=placement, options=_options(args))
    doc = solution_to_dict(sol)
    _emit(doc, args.out)
    if args.out:
        sys.stdout.write(_solution_summary(doc))
    return EXIT_OK if sol.status is Status.CERTIFIED else EXIT_UNCERTIFIED


def cmd_check_kkt(args) -> int:
    ht, placement = load_tree(_resolve(args.input))
    if placement is None:
        raise InputFormatError("check-kkt needs inner vertex coordinates")
    inst = evaluate(ht, placement)
    cert, report = certify(inst, args.tol)
    doc = report.as_json()
    if cert is not None:
        doc["duals"] = cert.as_json()
    doc["geometry"] = geometric_checks(inst).as_json()
    sys.stdout.write(dump_json(doc))
    if args.out:
        dump_json(doc, args.out)
    sys.stdout.write(report.verdict + "\n")
    return EXIT_OK if report.certified else EXIT_KKT_FAILED


def cmd_probe(args) -> int:
    from .plotting import probe_figure

    result = probe_region(args.example, args.a, args.c, grid=args.grid, extent=args.range)
    out = _outdir(args)
    stem = f"{args.example}"
    write_pgm(result.bitmap, out / f"{stem}.pgm")
    doc = result.summary()
    doc["boundary_points"] = floats(result.boundary_points)
    dump_json(doc, out / f"{stem}.json")
    probe_figure(result, out / f"{stem}.png")
    sys.stdout.write(f"{args.example}: {result.components} component(s), {result.holes} hole(s), "
                     f"full grid {result.full}\n")
    return EXIT_OK


def cmd_date(args) -> int:
    ht, placement = load_tree(_resolve(args.input))
    if placement is None:
        raise InputFormatError("dating needs inner vertex coordinates")
    clades = _clades({}, args.clade)
    ht = label_clades(ht, clades) if clades else ht
    inst = evaluate(ht, placement)
    anchor = resolve_anchor(ht, args.anchor_label, clades)
    years = date_splits(inst, anchor, args.anchor_years)
    doc = _dates_doc(inst, years, anchor, args.anchor_years)
    out = _outdir(args)
    dump_json(doc, out / "dates.json")
    _write_dates_tsv(doc, out / "dates.tsv")
    sys.stdout.write(f"anchored {ht.label(anchor) or anchor} at {args.anchor_years!r} years\n")
    return EXIT_OK


def cmd_render(args) -> int:
    from .plotting import render_svg

    ht, placement = load_tree(_resolve(args.input))
    if placement is None:
        placement = stretched_tree(ht)
    inst = evaluate(ht, placement)
    years = None
    if args.dates:
        import json

        doc = json.loads(Path(args.dates).read_text())
        years = {rec["id"]: rec["years"] for rec in doc["vertices"]}
    svg = render_svg(inst, years=years, project=args.project)
    out = Path(args.out or "tree.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .plotting import render_svg

    out = _outdir(args)
    table, emb, simplex, ht, placement, clades = _embedding_and_tree(args)
    dump_json(emb.as_json(), out / "embedding.json")
    dump_json(tree_to_dict(ht, placement), out / "tree.json")
    sol = minimize(ht, init=placement, options=_options(args))
    doc = solution_to_dict(sol)
    dump_json(doc, out / "solution.json")
    inst = sol.instance
    _, report = certify(inst, args.tol_stat)
    dump_json(report.as_json(), out / "kkt.json")
    years = None
    if args.anchor_label is not None:
        anchor = resolve_anchor(ht, args.anchor_label, clades)
        years = date_splits(inst, anchor, args.anchor_years)
        dates = _dates_doc(inst, years, anchor, args.anchor_years)
        dump_json(dates, out / "dates.json")
        _write_dates_tsv(dates, out / "dates.tsv")
    (out / "chronogram.svg").write_text(render_svg(inst, years=years, project=ht.dim != 2))
    sys.stdout.write(_solution_summary(doc))
    sys.stdout.write(report.verdict + "\n")
    return EXIT_OK if sol.status is Status.CERTIFIED else EXIT_UNCERTIFIED


# -- parser ----------------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("--tol-feas", type=float, default=1e-9, help="equal-depth residual tolerance (relative)")
    p.add_argument("--tol-stat", type=float, default=TOL_STAT, help="stationarity tolerance")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=METHODS, default="relaxation_interior")


def _cognate_flags(p):
    p.add_argument("--cognates", required=True, help="cognate TSV (or the name of a bundled fixture)")
    p.add_argument("--weighting", choices=("binary", "quartic"), default="binary")
    p.add_argument("--fallback-width", type=int, default=3,
                   help="candidate pairs tried per merge when the closest pair cannot be merged")
    p.add_argument("--clade", action="append", metavar="NAME=L1,L2,...", help="name a language group")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ledtree", description="Shortest trees with all leaves at equal depth.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed-cognates", help="cognate table to feature coordinates")
    _cognate_flags(p)
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("infer-topology", help="hanging type by closest-root agglomeration")
    _cognate_flags(p)
    p.add_argument("--out", help="output tree JSON (default: stdout)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("minimize", help="shortest LED tree of a hanging type")
    p.add_argument("--input", required=True, help="tree JSON")
    _solver_flags(p)
    p.add_argument("--stretch-only", action="store_true", help="only build the stretched tree")
    p.add_argument("--out", help="solution JSON (default: stdout)")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("check-kkt", help="verify the optimality certificate of a solution")
    p.add_argument("--input", required=True, help="solution or tree JSON with inner coordinates")
    p.add_argument("--tol", type=float, default=TOL_STAT)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_check_kkt)

    p = sub.add_parser("feasibility-probe", help="grid probe of a two-vertex feasible region")
    p.add_argument("--example", required=True, choices=sorted(PAIR_EXAMPLES))
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--range", type=float, default=10.0, help="half-width of the (s, t) square")
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("date", help="date inner vertices from one anchor split")
    p.add_argument("--input", required=True, help="solution or tree JSON with inner coordinates")
    p.add_argument("--anchor-label", required=True, help="inner label, clade name or comma-separated leaves")
    p.add_argument("--anchor-years", type=float, required=True)
    p.add_argument("--clade", action="append", metavar="NAME=L1,L2,...")
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_date)

    p = sub.add_parser("render", help="SVG drawing of a tree")
    p.add_argument("--input", required=True)
    p.add_argument("--dates", help="dates.json to annotate inner vertices")
    p.add_argument("--project", action="store_true", help="project onto the leaf principal axes")
    p.add_argument("--out", help="output SVG (default: tree.svg)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="cognates to dated chronogram in one go")
    _cognate_flags(p)
    _solver_flags(p)
    p.add_argument("--anchor-label")
    p.add_argument("--anchor-years", type=float, default=1000.0)
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("LEDTREE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LedTreeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - reported, not hidden
        log.exception("internal error")
        sys.stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
