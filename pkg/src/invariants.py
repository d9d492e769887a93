"""Exact 3x3-minor norms of flattenings.

Every flattening is scaled to an integer matrix by the common denominator D
of its entries, all minors are evaluated with integer cofactor expansion in
numpy, and the norms are returned as Fractions over D**3. Row triples are
processed in chunks, optionally on a thread pool; the reductions are exact
so the result does not depend on the chunking.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from .dataset import BoundaryDistribution
from .settings import get_settings
from .tensor_flatten import Flattening, common_denominator, flattenings_of
from .tree_model import EdgeSplit, PhyloTree

log = structlog.get_logger(__name__)

_CHUNK = 64
_INT64_LIMIT = 2**62

SplitKey = Union[EdgeSplit, int]


@dataclass(frozen=True)
class MinorNorms:
    linf: Fraction
    l1: Fraction
    minor_count: int

    @property
    def degenerate(self) -> bool:
        return self.minor_count == 0


@dataclass(frozen=True)
class InvariantScore:
    linf: Fraction
    l1: Fraction
    minor_count: int
    per_split: Dict[SplitKey, MinorNorms] = field(default_factory=dict)


def _chunk_norms(a: np.ndarray, row_triples: np.ndarray, col_triples: np.ndarray) -> Tuple[int, int]:
    sub = a[row_triples[:, None, :, None], col_triples[None, :, None, :]]
    m = [[sub[..., i, j] for j in range(3)] for i in range(3)]
    det = (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )
    det = np.abs(det)
    return int(det.max()), int(det.sum())


def minor_norms(f: Flattening, workers: Optional[int] = None) -> MinorNorms:
    """Max and sum of |det| over all 3x3 minors, exactly."""
    rows, cols = f.shape
    if rows < 3 or cols < 3:
        log.warning("invariants.degenerate_flattening", rows=rows, cols=cols)
        return MinorNorms(Fraction(0), Fraction(0), 0)

    ints, d = common_denominator(f)
    largest = max(abs(x) for r in ints for x in r)
    count = comb(rows, 3) * comb(cols, 3)
    dtype = np.int64 if 6 * largest**3 * count < _INT64_LIMIT else object
    a = np.array(ints, dtype=dtype)
    row_triples = np.array(list(combinations(range(rows), 3)), dtype=np.intp)
    col_triples = np.array(list(combinations(range(cols), 3)), dtype=np.intp)
    chunks = [row_triples[i : i + _CHUNK] for i in range(0, len(row_triples), _CHUNK)]

    n_workers = workers if workers is not None else get_settings().worker_count()
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: _chunk_norms(a, c, col_triples), chunks))
    else:
        parts = [_chunk_norms(a, c, col_triples) for c in chunks]

    scale = d**3
    linf = Fraction(max(p[0] for p in parts), scale)
    l1 = Fraction(sum(p[1] for p in parts), scale)
    log.debug("invariants.minors", rows=rows, cols=cols, minors=count, dtype=str(np.dtype(dtype)), workers=n_workers)
    return MinorNorms(linf, l1, count)


def _aggregate(per_split: Dict[SplitKey, MinorNorms]) -> InvariantScore:
    norms = list(per_split.values())
    return InvariantScore(
        linf=max((x.linf for x in norms), default=Fraction(0)),
        l1=sum((x.l1 for x in norms), Fraction(0)),
        minor_count=sum(x.minor_count for x in norms),
        per_split=per_split,
    )


def tree_invariant_score(p: BoundaryDistribution, tree: PhyloTree, splits: Sequence[EdgeSplit]) -> InvariantScore:
    """Max of maxima and sum of sums over the given edges of ``tree``."""
    flats = flattenings_of(p, tree, splits)
    return _aggregate({s: minor_norms(f) for s, f in flats.items()})


def matrix_invariant_score(matrices: Sequence[Flattening]) -> InvariantScore:
    return _aggregate({i: minor_norms(m) for i, m in enumerate(matrices)})


def all_minors(f: Flattening) -> List[Fraction]:
    """Signed minors in (row-triple, col-triple) lexicographic order.

    Plain cofactor expansion over exact fractions, kept apart from the
    vectorised ``_chunk_norms`` so that ``minor_norms`` can be checked
    against it.
    """
    rows, cols = f.shape
    out = []
    for r in combinations(range(rows), 3):
        for c in combinations(range(cols), 3):
            m = [[f.entries[i][j] for j in c] for i in r]
            out.append(
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            )
    return out
