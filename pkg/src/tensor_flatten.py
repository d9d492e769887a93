"""Flattenings of boundary distributions along edge bipartitions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import structlog

from .dataset import BoundaryDistribution
from .errors import FlatteningError, LeafMismatchError
from .models import parse_rational
from .tree_model import EdgeSplit, PhyloTree, internal_edge_splits

log = structlog.get_logger(__name__)

Matrix = Tuple[Tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class Flattening:
    entries: Matrix
    split: Optional[EdgeSplit] = None

    def __post_init__(self) -> None:
        if not self.entries or not self.entries[0]:
            raise FlatteningError("flattening must have at least one row and one column")
        width = len(self.entries[0])
        if any(len(r) != width for r in self.entries):
            raise FlatteningError("flattening rows differ in length")

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def total(self) -> Fraction:
        return sum((x for r in self.entries for x in r), Fraction(0))

    def to_array(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.entries], dtype=np.float64)

    def transpose(self) -> "Flattening":
        return Flattening(tuple(zip(*self.entries)), self.split)


def split_from_names(side: Sequence[str], names: Sequence[str]) -> EdgeSplit:
    unknown = [x for x in side if x not in names]
    if unknown:
        raise LeafMismatchError(f"split mentions unknown leaf {unknown[0]!r}", details={"unknown": unknown})
    return EdgeSplit.from_side((names.index(x) for x in side), len(names))


def _sub_code(code: int, n: int, indices: Sequence[int]) -> int:
    out = 0
    for i in indices:
        out = (out << 1) | ((code >> (n - 1 - i)) & 1)
    return out


def flatten(p: BoundaryDistribution, split: EdgeSplit) -> Flattening:
    """Rows are side_a patterns and columns side_b patterns, both big-endian in leaf order."""
    n = p.n
    if split.n != n:
        raise FlatteningError(f"split covers {split.n} leaves but the distribution has {n}")
    rows, cols = 1 << len(split.side_a), 1 << len(split.side_b)
    grid = [[Fraction(0)] * cols for _ in range(rows)]
    for code, value in p.p.items():
        grid[_sub_code(code, n, split.side_a)][_sub_code(code, n, split.side_b)] = value
    log.debug("flatten.built", rows=rows, cols=cols, side_a=list(split.side_a))
    return Flattening(tuple(tuple(r) for r in grid), split)


def distinguishing_splits(trees: Sequence[PhyloTree]) -> List[List[EdgeSplit]]:
    """Internal splits of each tree minus those shared by every tree, aligned with ``trees``."""
    if not trees:
        return []
    names = trees[0].names
    for t in trees[1:]:
        if t.names != names:
            raise LeafMismatchError(
                "candidate trees do not share one leaf ordering",
                details={"expected": list(names), "got": list(t.names)},
            )
    per_tree = [internal_edge_splits(t) for t in trees]
    common = set(per_tree[0]).intersection(*per_tree[1:])
    log.debug("flatten.common_splits", count=len(common))
    return [[s for s in splits if s not in common] for splits in per_tree]


# Bare matrices


def _rows_from_lines(lines: Sequence[Tuple[int, str]], path: Path) -> List[List[Fraction]]:
    rows: List[List[Fraction]] = []
    for lineno, line in lines:
        try:
            rows.append([parse_rational(tok) for tok in line.split()])
        except ValueError as exc:
            raise FlatteningError(f"{path}:{lineno}: {exc}") from None
    return rows


def snap(value: Fraction, denominator: int) -> Fraction:
    """Nearest k/denominator; halves round to even."""
    return Fraction(round(value * denominator), denominator)


def load_matrix(path: Union[str, Path], denominator: Optional[int] = None) -> Flattening:
    path = Path(path)
    if not path.exists():
        raise FlatteningError(f"matrix file not found: {path}")
    lines = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    rows = _rows_from_lines(lines, path)
    if not rows:
        raise FlatteningError(f"{path} holds no matrix")
    if len({len(r) for r in rows}) != 1:
        raise FlatteningError(f"{path}: rows differ in length")
    if denominator is not None:
        if denominator <= 0:
            raise FlatteningError("denominator must be positive")
        rows = [[snap(x, denominator) for x in r] for r in rows]
    log.debug("flatten.loaded", path=str(path), rows=len(rows), cols=len(rows[0]), denominator=denominator)
    return Flattening(tuple(tuple(r) for r in rows))


def _format_entry(x: Fraction, decimals: bool, digits: int) -> str:
    if decimals:
        return f"{float(x):.{digits}g}"
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def write_matrix(matrix: Flattening, out: TextIO, decimals: bool = False, digits: int = 5) -> None:
    for row in matrix.entries:
        out.write("\t".join(_format_entry(x, decimals, digits) for x in row) + "\n")


def common_denominator(matrix: Flattening) -> Tuple[List[List[int]], int]:
    d = 1
    for row in matrix.entries:
        for x in row:
            d = d * x.denominator // math.gcd(d, x.denominator)
    ints = [[int(x * d) for x in row] for row in matrix.entries]
    return ints, d


def exact_rank(matrix: Union[Flattening, Sequence[Sequence[Fraction]]]) -> int:
    rows = matrix.entries if isinstance(matrix, Flattening) else matrix
    mat = [[Fraction(x) for x in r] for r in rows]
    if not mat:
        return 0
    n_rows, n_cols = len(mat), len(mat[0])
    rank = 0
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        lead = mat[rank][col]
        for r in range(rank + 1, n_rows):
            factor = mat[r][col]
            if factor:
                factor /= lead
                for j in range(col, n_cols):
                    mat[r][j] -= factor * mat[rank][j]
        rank += 1
        if rank == n_rows:
            break
    return rank


def flattenings_of(p: BoundaryDistribution, tree: PhyloTree, splits: Sequence[EdgeSplit]) -> Dict[EdgeSplit, Flattening]:
    """Flattenings along ``splits`` after checking each is an edge of ``tree``."""
    if tree.names != p.names:
        if set(tree.names) != set(p.names):
            raise LeafMismatchError(
                "tree and distribution disagree on the leaves",
                details={"tree": list(tree.names), "distribution": list(p.names)},
            )
        p = p.reordered(tree.names)
    edges = set(internal_edge_splits(tree))
    for s in splits:
        if s not in edges:
            raise FlatteningError(f"split {s.label(tree.names)} is not an edge of the tree")
    return {s: flatten(p, s) for s in splits}
