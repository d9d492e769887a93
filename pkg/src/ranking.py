"""Score candidate trees on every criterion and pick per-criterion minima.

The invariant criteria compare exact rationals. Squared distances compare
as floats, with ``DISTANCE_TIE_BAND`` as the indifference band. Minimal
candidates that are root shifts of the winner are reported as
``equivalent``; minimal candidates with another unrooted topology make the
criterion ``tied``. The report never names a correct tree.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import structlog

from .dataset import BoundaryDistribution, dataset_digest
from .errors import LeafMismatchError, RankingError
from .invariants import InvariantScore, matrix_invariant_score, tree_invariant_score
from .models import (
    CandidateReport,
    DatasetSummary,
    RankingReport,
    SplitScore,
    Winner,
    format_rational,
    format_sci,
)
from .settings import get_settings
from .spectral import DistanceEstimate, matrix_distance_estimate, tree_distance_estimate
from .tensor_flatten import Flattening, distinguishing_splits
from .tree_model import EdgeSplit, PhyloTree, UnrootedTopology, internal_edge_splits, relabel, unrooted_topology, write_newick

log = structlog.get_logger(__name__)

CRITERIA = ("linf", "l1", "dist")

Candidate = Tuple[str, PhyloTree]


@dataclass
class _Scored:
    id: str
    newick: Optional[str]
    topology: Optional[UnrootedTopology]
    invariants: Optional[InvariantScore]
    distance: Optional[DistanceEstimate]
    report: CandidateReport

    def value(self, criterion: str) -> Union[Fraction, float]:
        if criterion == "dist":
            return self.distance.lower_bound  # type: ignore[union-attr]
        return getattr(self.invariants, criterion)


def normalise_criteria(criteria: Optional[Sequence[str]]) -> List[str]:
    if not criteria:
        return list(CRITERIA)
    unknown = [c for c in criteria if c not in CRITERIA]
    if unknown:
        raise RankingError(f"unknown criterion {unknown[0]!r}; choose from {', '.join(CRITERIA)}")
    return [c for c in CRITERIA if c in criteria]


def _as_candidates(trees: Sequence[Union[PhyloTree, Candidate]]) -> List[Candidate]:
    out: List[Candidate] = []
    for i, t in enumerate(trees, start=1):
        out.append(t if isinstance(t, tuple) else (f"T{i}", t))
    ids = [c[0] for c in out]
    if len(set(ids)) != len(ids):
        raise RankingError("candidate ids must be unique")
    return out


def _split_scores(
    keys: Sequence[Union[EdgeSplit, int]],
    names: Optional[Sequence[str]],
    inv: Optional[InvariantScore],
    dist: Optional[DistanceEstimate],
    shapes: Mapping[Union[EdgeSplit, int], Tuple[int, int]],
) -> Tuple[List[SplitScore], List[str]]:
    scores: List[SplitScore] = []
    flags: List[str] = []
    for key in keys:
        label = key.label(names) if isinstance(key, EdgeSplit) and names else f"matrix {key}"
        rows, cols = shapes[key]
        entry = SplitScore(split=label, rows=rows, cols=cols)
        if inv is not None:
            norms = inv.per_split[key]
            entry.linf, entry.l1, entry.minor_count = format_rational(norms.linf), format_rational(norms.l1), norms.minor_count
            if norms.degenerate:
                entry.flags.append("degenerate_flattening")
        if dist is not None:
            res = dist.per_split[key]
            entry.dist_sq = res.dist_sq
            entry.singular_values = list(res.singular_values)
            if not res.unique_minimizer:
                entry.flags.append("nonunique_minimizer")
        for flag in entry.flags:
            if flag not in flags:
                flags.append(flag)
        scores.append(entry)
    return scores, flags


def _candidate_report(
    cid: str,
    newick: Optional[str],
    keys: Sequence[Union[EdgeSplit, int]],
    names: Optional[Sequence[str]],
    inv: Optional[InvariantScore],
    dist: Optional[DistanceEstimate],
    shapes: Mapping[Union[EdgeSplit, int], Tuple[int, int]],
) -> CandidateReport:
    per_split, flags = _split_scores(keys, names, inv, dist, shapes)
    return CandidateReport(
        id=cid,
        newick=newick,
        linf=format_rational(inv.linf) if inv is not None else None,
        l1=format_rational(inv.l1) if inv is not None else None,
        dist_sq_lb=dist.lower_bound if dist is not None else None,
        splits=[s.split for s in per_split],
        flags=flags,
        per_split=per_split,
    )


def _pick_winner(criterion: str, scored: Sequence[_Scored]) -> Winner:
    values = [s.value(criterion) for s in scored]
    best = min(values)
    if criterion == "dist":
        band = get_settings().DISTANCE_TIE_BAND
        minimal = [s for s, v in zip(scored, values) if v <= best + band]
    else:
        minimal = [s for s, v in zip(scored, values) if v == best]
    order = {s.id: i for i, s in enumerate(scored)}
    winner = min(minimal, key=lambda s: (s.newick or "", order[s.id]))
    equivalent = [s.id for s in minimal if s is not winner and s.topology is not None and s.topology == winner.topology]
    tied = [s.id for s in minimal if s is not winner and s.id not in equivalent]
    value = winner.value(criterion)
    if tied:
        log.warning("rank.tie", criterion=criterion, winner=winner.id, tied=tied)
    log.info("rank.winner", criterion=criterion, id=winner.id)
    return Winner(
        criterion=criterion,
        id=winner.id,
        newick=winner.newick,
        value=format_rational(value) if isinstance(value, Fraction) else float(value),
        tied=tied,
        equivalent=equivalent,
    )


def _agreement(winners: Mapping[str, Winner], scored: Sequence[_Scored]) -> str:
    if any(w.tied for w in winners.values()):
        return "tied"
    by_id = {s.id: s for s in scored}
    first = next(iter(winners.values()))
    anchor = by_id[first.id]

    def same(w: Winner) -> bool:
        other = by_id[w.id]
        if w.id == anchor.id:
            return True
        return anchor.topology is not None and anchor.topology == other.topology

    if all(same(w) for w in winners.values()):
        return "consistent"
    return "inconsistent: " + ", ".join(f"{c}={w.id}" for c, w in winners.items())


def _finish(
    summary: DatasetSummary, criteria: List[str], conditional: bool, scored: List[_Scored]
) -> RankingReport:
    winners = {c: _pick_winner(c, scored) for c in criteria}
    return RankingReport(
        dataset=summary,
        criteria=criteria,
        conditional=conditional,
        candidates=[s.report for s in scored],
        winners=winners,
        agreement=_agreement(winners, scored),
    )


def rank(
    p: BoundaryDistribution,
    trees: Sequence[Union[PhyloTree, Candidate]],
    criteria: Optional[Sequence[str]] = None,
    conditional: bool = True,
    n_variables: Optional[int] = None,
) -> RankingReport:
    crit = normalise_criteria(criteria)
    candidates = _as_candidates(trees)
    if not candidates:
        raise RankingError("no candidate trees")
    aligned: List[Candidate] = []
    for cid, tree in candidates:
        if set(tree.names) != set(p.names):
            raise LeafMismatchError(
                f"tree {cid} does not have the distribution's leaves",
                details={"tree": sorted(tree.names), "distribution": sorted(p.names)},
            )
        aligned.append((cid, tree if tree.names == p.names else relabel(tree, p.names)))

    tree_list = [t for _, t in aligned]
    split_lists = distinguishing_splits(tree_list) if conditional else [internal_edge_splits(t) for t in tree_list]

    scored: List[_Scored] = []
    for (cid, tree), splits in zip(aligned, split_lists):
        inv = tree_invariant_score(p, tree, splits) if {"linf", "l1"} & set(crit) else None
        dist = tree_distance_estimate(p, tree, splits) if "dist" in crit else None
        shapes = {s: (1 << len(s.side_a), 1 << len(s.side_b)) for s in splits}
        newick = write_newick(tree)
        report = _candidate_report(cid, newick, splits, p.names, inv, dist, shapes)
        if not splits:
            report.flags.append("no_distinguishing_splits" if conditional else "no_internal_edges")
        scored.append(_Scored(cid, newick, unrooted_topology(tree), inv, dist, report))
        log.debug("rank.scored", id=cid, splits=len(splits))

    summary = DatasetSummary(digest=dataset_digest(p), n_languages=p.n, n_variables=n_variables)
    return _finish(summary, crit, conditional, scored)


def _matrices_digest(groups: Mapping[str, Sequence[Flattening]]) -> str:
    h = hashlib.sha256()
    for cid, mats in groups.items():
        h.update(f"{cid}\n".encode())
        for m in mats:
            for row in m.entries:
                h.update(("\t".join(format_rational(x) for x in row) + "\n").encode())
            h.update(b"\n")
    return h.hexdigest()


def rank_matrices(
    groups: Mapping[str, Sequence[Flattening]],
    criteria: Optional[Sequence[str]] = None,
    conditional: bool = True,
) -> RankingReport:
    """Rank candidates supplied directly as their (distinguishing) flattening matrices."""
    crit = normalise_criteria(criteria)
    if not groups:
        raise RankingError("no candidates")
    scored: List[_Scored] = []
    for cid, mats in groups.items():
        if not mats:
            raise RankingError(f"candidate {cid} has no matrices")
        inv = matrix_invariant_score(mats) if {"linf", "l1"} & set(crit) else None
        dist = matrix_distance_estimate(mats) if "dist" in crit else None
        keys = list(range(len(mats)))
        shapes = {i: m.shape for i, m in enumerate(mats)}
        report = _candidate_report(cid, None, keys, None, inv, dist, shapes)
        scored.append(_Scored(cid, None, None, inv, dist, report))
    summary = DatasetSummary(digest=_matrices_digest(groups))
    return _finish(summary, crit, conditional, scored)


# Human output


def _show_rational(text: Optional[str], digits: int) -> str:
    if text is None:
        return "-"
    return f"{text} ({format_sci(float(Fraction(text)), digits)})"


def render_table(report: RankingReport, digits: Optional[int] = None) -> str:
    digits = digits or get_settings().DISPLAY_DIGITS
    header = ["id"]
    if "linf" in report.criteria:
        header.append("linf")
    if "l1" in report.criteria:
        header.append("l1")
    if "dist" in report.criteria:
        header.append("dist_sq_lb")
    header.append("flags")

    rows: List[List[str]] = []
    for c in report.candidates:
        row = [c.id]
        if "linf" in report.criteria:
            row.append(_show_rational(c.linf, digits))
        if "l1" in report.criteria:
            row.append(_show_rational(c.l1, digits))
        if "dist" in report.criteria:
            row.append(format_sci(c.dist_sq_lb, digits) if c.dist_sq_lb is not None else "-")
        row.append(",".join(c.flags) or "-")
        rows.append(row)

    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [
        f"dataset {report.dataset.digest[:12]}  conditional={'yes' if report.conditional else 'no'}",
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
    ]
    lines.extend("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)
    lines.append("winners:")
    for crit, w in report.winners.items():
        value = _show_rational(w.value, digits) if isinstance(w.value, str) else format_sci(w.value, digits)
        extra = ""
        if w.equivalent:
            extra += f"  equivalent: {', '.join(w.equivalent)}"
        if w.tied:
            extra += f"  tied: {', '.join(w.tied)}"
        lines.append(f"  {crit}: {w.id} {value}{extra}")
    lines.append(f"agreement: {report.agreement}")
    return "\n".join(lines) + "\n"
