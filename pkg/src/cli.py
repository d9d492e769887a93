"""Command line entry point.

    phyloalg analyze --data table.tsv --trees candidates.nwk --conditional
    phyloalg analyze --matrices romance.tsv --denominator 165
    phyloalg flatten --distribution s1.json --split Dutch,German,Swedish
    phyloalg invariants --matrix flat.tsv
    phyloalg distance --matrix flat.tsv --rank 2
    phyloalg simulate --model model.json --samples 1000 --seed 7
    phyloalg trees resolve|enumerate|graft|ancient-move ...

Results go to stdout (or ``--out``); logs go to stderr as JSON lines.
Exit codes: 0 success, 2 invalid input, 3 leaf mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from io import StringIO
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import structlog
from pydantic import BaseModel, ValidationError, model_validator

from .dataset import (
    BoundaryDistribution,
    boundary_distribution,
    completely_mapped,
    count_patterns,
    load_distribution,
    load_table,
    load_weights,
    weighted_boundary_distribution,
    write_distribution,
)
from .errors import PhyloAlgError
from .invariants import minor_norms
from .markov import boundary_map, load_model, sample_patterns
from .models import Error, SplitScore, format_rational, format_sci
from .ranking import normalise_criteria, rank, rank_matrices, render_table
from .settings import get_settings
from .spectral import spectral_result
from .tensor_flatten import Flattening, flatten, load_matrix, split_from_names, write_matrix
from .tree_model import (
    PhyloTree,
    ancient_pair_resolutions,
    enumerate_unrooted_trees,
    graft,
    parse_tree_file,
    read_leaf_order,
    resolve_multifurcations,
    unrooted_topology,
    write_newick,
)

log = structlog.get_logger(__name__)

_PATH_FIELDS = ("data", "trees", "leaf_order", "distribution", "matrices", "matrix", "weights", "model", "other_trees")


def _configure_logging(level: str) -> None:
    numeric_level = getattr(logging, level.upper(), logging.WARNING)
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
    )


class RunConfig(BaseModel):
    command: str
    action: Optional[str] = None
    data: Optional[Path] = None
    dialect: Literal["sswl", "langelin"] = "sswl"
    languages: Optional[List[str]] = None
    trees: Optional[Path] = None
    other_trees: Optional[Path] = None
    leaf_order: Optional[Path] = None
    distribution: Optional[Path] = None
    matrices: Optional[Path] = None
    matrix: Optional[Path] = None
    denominator: Optional[int] = None
    split: Optional[List[str]] = None
    criteria: Optional[List[str]] = None
    conditional: bool = False
    weights: Optional[Path] = None
    model: Optional[Path] = None
    samples: Optional[int] = None
    seed: Optional[int] = None
    rank: int = 2
    leaf: Optional[str] = None
    ancient: Optional[List[str]] = None
    leaves: Optional[List[str]] = None
    dedupe: bool = False
    format: Literal["json", "table", "tsv"] = "json"
    out: Optional[Path] = None

    @model_validator(mode="after")
    def _paths_exist(self) -> "RunConfig":
        for name in _PATH_FIELDS:
            path = getattr(self, name)
            if path is not None and not path.exists():
                raise ValueError(f"file not found: {path}")
        if self.denominator is not None and self.denominator <= 0:
            raise ValueError("--denominator must be positive")
        if self.samples is not None and self.samples < 1:
            raise ValueError("--samples must be at least 1")
        if self.ancient is not None and len(self.ancient) != 2:
            raise ValueError("--ancient takes exactly two leaf names")
        return self


def _csv(text: Optional[str]) -> Optional[List[str]]:
    if text is None:
        return None
    return [x.strip() for x in text.split(",") if x.strip()]


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    raw = {k: v for k, v in vars(args).items() if v is not None and k != "func"}
    for key in ("languages", "split", "criteria", "ancient", "leaves"):
        if key in raw:
            raw[key] = _csv(raw[key])
    return RunConfig(**raw)


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.out is not None:
        cfg.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# Input assembly


def _leaf_order(cfg: RunConfig) -> Optional[List[str]]:
    if cfg.leaf_order is not None:
        return read_leaf_order(cfg.leaf_order)
    return cfg.languages


def _distribution(cfg: RunConfig) -> Tuple[BoundaryDistribution, Optional[int]]:
    order = _leaf_order(cfg)
    if cfg.distribution is not None:
        if cfg.weights is not None:
            raise PhyloAlgError("--weights needs a trait table (--data), not a distribution")
        dist = load_distribution(cfg.distribution)
        return (dist.reordered(order) if order else dist), None
    if cfg.data is None:
        raise PhyloAlgError("give a trait table with --data or a distribution with --distribution")
    table = completely_mapped(load_table(cfg.data, dialect=cfg.dialect), order)
    if cfg.weights is not None:
        dist = weighted_boundary_distribution(table, load_weights(cfg.weights))
    else:
        dist = boundary_distribution(count_patterns(table))
    return dist, len(table.variables)


def _manifest(path: Path, denominator: Optional[int]) -> Dict[str, List[Flattening]]:
    groups: Dict[str, List[Flattening]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise PhyloAlgError(f"{path}:{lineno}: expected 'tree_id<TAB>matrix path'")
        cid, rel = parts
        groups.setdefault(cid, []).append(load_matrix(path.parent / rel, denominator))
    if not groups:
        raise PhyloAlgError(f"{path} lists no matrices")
    return groups


def _single_matrix(cfg: RunConfig) -> Tuple[Flattening, str]:
    if cfg.matrix is not None:
        return load_matrix(cfg.matrix, cfg.denominator), cfg.matrix.name
    if not cfg.split:
        raise PhyloAlgError("give --matrix, or a distribution and --split")
    dist, _ = _distribution(cfg)
    split = split_from_names(cfg.split, dist.names)
    return flatten(dist, split), split.label(dist.names)


# Commands


def cmd_analyze(cfg: RunConfig) -> int:
    criteria = normalise_criteria(cfg.criteria)
    if cfg.matrices is not None:
        report = rank_matrices(_manifest(cfg.matrices, cfg.denominator), criteria, conditional=cfg.conditional)
    else:
        if cfg.trees is None:
            raise PhyloAlgError("analyze needs --trees (or --matrices)")
        dist, n_variables = _distribution(cfg)
        trees = parse_tree_file(cfg.trees, dist.names)
        report = rank(dist, trees, criteria, conditional=cfg.conditional, n_variables=n_variables)
    if cfg.format == "json":
        _emit(report.model_dump_json(indent=2) + "\n", cfg)
    else:
        _emit(render_table(report), cfg)
    return 0


def cmd_flatten(cfg: RunConfig) -> int:
    matrix, label = _single_matrix(cfg)
    if cfg.format == "json":
        doc = {
            "split": label,
            "rows": matrix.rows,
            "cols": matrix.cols,
            "entries": [[format_rational(x) for x in row] for row in matrix.entries],
        }
        _emit(json.dumps(doc, indent=2) + "\n", cfg)
        return 0
    buf = StringIO()
    write_matrix(matrix, buf, decimals=cfg.format == "table", digits=get_settings().DISPLAY_DIGITS)
    _emit(buf.getvalue(), cfg)
    return 0


def cmd_invariants(cfg: RunConfig) -> int:
    matrix, label = _single_matrix(cfg)
    norms = minor_norms(matrix)
    score = SplitScore(
        split=label,
        rows=matrix.rows,
        cols=matrix.cols,
        linf=format_rational(norms.linf),
        l1=format_rational(norms.l1),
        minor_count=norms.minor_count,
        flags=["degenerate_flattening"] if norms.degenerate else [],
    )
    if cfg.format == "json":
        _emit(score.model_dump_json(indent=2) + "\n", cfg)
        return 0
    digits = get_settings().DISPLAY_DIGITS
    lines = [
        f"linf\t{score.linf}\t{format_sci(float(norms.linf), digits)}",
        f"l1\t{score.l1}\t{format_sci(float(norms.l1), digits)}",
        f"minor_count\t{norms.minor_count}",
    ]
    if norms.degenerate:
        lines.append(f"note\tno 3x3 minors in a {matrix.rows}x{matrix.cols} matrix")
    _emit("\n".join(lines) + "\n", cfg)
    return 0


def cmd_distance(cfg: RunConfig) -> int:
    matrix, label = _single_matrix(cfg)
    res = spectral_result(matrix, cfg.rank)
    score = SplitScore(
        split=label,
        rows=matrix.rows,
        cols=matrix.cols,
        dist_sq=res.dist_sq,
        singular_values=list(res.singular_values),
        flags=[] if res.unique_minimizer else ["nonunique_minimizer"],
    )
    if cfg.format == "json":
        _emit(score.model_dump_json(indent=2) + "\n", cfg)
        return 0
    digits = get_settings().DISPLAY_DIGITS
    lines = [
        "singular_values\t" + "\t".join(format_sci(s, digits) for s in res.singular_values),
        f"dist_sq\t{format_sci(res.dist_sq, digits)}\trank={cfg.rank}",
    ]
    if not res.unique_minimizer:
        lines.append("note\tnearest low-rank matrix is not unique")
    _emit("\n".join(lines) + "\n", cfg)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.model is None:
        raise PhyloAlgError("simulate needs --model")
    model = load_model(cfg.model)
    if cfg.samples is None:
        data = boundary_map(model)
    else:
        data = sample_patterns(model, cfg.samples, cfg.seed if cfg.seed is not None else 0)
    if cfg.out is not None:
        write_distribution(data, cfg.out)
    else:
        write_distribution(data, sys.stdout)
    return 0


def _tree_lines(cfg: RunConfig, trees: Sequence[Tuple[str, PhyloTree]]) -> None:
    if cfg.dedupe:
        seen = set()
        kept = []
        for tid, t in trees:
            key = unrooted_topology(t)
            if key not in seen:
                seen.add(key)
                kept.append((tid, t))
        trees = kept
    if cfg.format == "json":
        doc = [{"id": tid, "newick": write_newick(t)} for tid, t in trees]
        _emit(json.dumps(doc, indent=2) + "\n", cfg)
    else:
        _emit("".join(f"{tid} {write_newick(t)}\n" for tid, t in trees), cfg)


def cmd_trees(cfg: RunConfig) -> int:
    order = _leaf_order(cfg)
    out: List[Tuple[str, PhyloTree]] = []
    if cfg.action == "enumerate":
        leaves = cfg.leaves or order
        if not leaves:
            raise PhyloAlgError("enumerate needs --leaves or --leaf-order")
        out = [(f"E{i}", t) for i, t in enumerate(enumerate_unrooted_trees(leaves), start=1)]
    else:
        if cfg.trees is None:
            raise PhyloAlgError(f"trees {cfg.action} needs --trees")
        source = parse_tree_file(cfg.trees, order if cfg.action != "graft" else None)
        if cfg.action == "resolve":
            for tid, t in source:
                for i, r in enumerate(resolve_multifurcations(t), start=1):
                    out.append((f"{tid}.{i}", r))
        elif cfg.action == "ancient-move":
            if not cfg.ancient:
                raise PhyloAlgError("ancient-move needs --ancient a,b")
            for tid, t in source:
                for i, r in enumerate(ancient_pair_resolutions(t, (cfg.ancient[0], cfg.ancient[1])), start=1):
                    out.append((f"{tid}.{i}", r))
        elif cfg.action == "graft":
            if cfg.other_trees is None or not cfg.leaf:
                raise PhyloAlgError("graft needs --with and --leaf")
            for tid1, t1 in source:
                for tid2, t2 in parse_tree_file(cfg.other_trees):
                    out.append((f"{tid1}+{tid2}", graft(t1, t2, cfg.leaf)))
    _tree_lines(cfg, out)
    return 0


# Parser


def _add_output(p: argparse.ArgumentParser, default: str = "json") -> None:
    p.add_argument("--format", choices=["json", "table", "tsv"], default=default)
    p.add_argument("--out", type=Path, help="Write to this file instead of stdout")


def _add_distribution_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, help="Language x variable trait table (TSV or CSV)")
    p.add_argument("--dialect", choices=["sswl", "langelin"], default="sswl", help="Meaning of 0 cells (default: sswl, 0 = minus)")
    p.add_argument("--languages", help="Comma-separated languages, in leaf order")
    p.add_argument("--leaf-order", type=Path, help="File with one leaf name per line")
    p.add_argument("--distribution", type=Path, help="JSON distribution or counts file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phyloalg", description="Phylogenetic invariants and distances for binary trait data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="Score and rank candidate trees")
    _add_distribution_inputs(p)
    p.add_argument("--trees", type=Path, help="Candidate trees, one per line")
    p.add_argument("--matrices", type=Path, help="Manifest of 'tree_id<TAB>matrix path' lines")
    p.add_argument("--denominator", type=int, help="Snap matrix entries to the nearest k/N")
    p.add_argument("--criteria", help="Comma-separated subset of linf,l1,dist (default: all)")
    p.add_argument("--conditional", action="store_true", help="Use only splits that distinguish the candidates")
    p.add_argument("--weights", type=Path, help="variable<TAB>weight file")
    _add_output(p)
    p.set_defaults(func=cmd_analyze)

    for name, func, default in (("flatten", cmd_flatten, "tsv"), ("invariants", cmd_invariants, "table"), ("distance", cmd_distance, "table")):
        p = sub.add_parser(name)
        _add_distribution_inputs(p)
        p.add_argument("--split", help="Comma-separated leaves on one side of the edge")
        p.add_argument("--matrix", type=Path, help="Flattening matrix file (rationals or decimals)")
        p.add_argument("--denominator", type=int, help="Snap matrix entries to the nearest k/N")
        if name == "distance":
            p.add_argument("--rank", type=int, default=2)
        _add_output(p, default)
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="Exact or sampled distribution of a tree model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trees", help="Tree manipulations")
    p.add_argument("action", choices=["resolve", "enumerate", "graft", "ancient-move"])
    p.add_argument("--trees", type=Path)
    p.add_argument("--with", dest="other_trees", type=Path, help="Second tree file for graft")
    p.add_argument("--leaf", help="Shared leaf for graft")
    p.add_argument("--ancient", help="Two ancient leaves, comma-separated")
    p.add_argument("--leaves", help="Comma-separated leaf names for enumerate")
    p.add_argument("--leaf-order", type=Path)
    p.add_argument("--languages", help=argparse.SUPPRESS)
    p.add_argument("--dedupe", action="store_true", help="Drop root shifts of earlier output trees")
    _add_output(p, "tsv")
    p.set_defaults(func=cmd_trees)
    return parser


def _fail(code: str, message: str, exit_code: int, details: Optional[dict] = None) -> int:
    print(f"error: {message}", file=sys.stderr)
    print(Error(code=code, message=message, details=details).model_dump_json(), file=sys.stderr)
    return exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as exc:
        return _fail("settings", f"invalid settings: {exc.errors()[0]['msg']}", 2)
    _configure_logging(settings.LOG_LEVEL)

    try:
        cfg = _config_from_args(args)
    except ValidationError as exc:
        first = exc.errors()[0]
        message = str(first.get("ctx", {}).get("error", first["msg"]))
        return _fail("invalid_input", message, 2)

    log.info("cli.start", command=cfg.command, action=cfg.action)
    try:
        return args.func(cfg)
    except PhyloAlgError as exc:
        return _fail(exc.code, exc.message, exc.exit_code, exc.details)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
