"""Trait tables, leaf-pattern counts and boundary distributions.

Patterns are stored as integers, big-endian over the language order: the
first language is the most significant bit. ``pattern_str`` renders the
``i1 i2 ... in`` subscript form used in files and reports.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import structlog
from pydantic import ValidationError

from .errors import DatasetError, LeafMismatchError
from .models import DistributionFile, SamplingRecord, format_rational, parse_rational

log = structlog.get_logger(__name__)


class Cell(str, Enum):
    PLUS = "+"
    MINUS = "-"
    ZERO = "0"
    UNKNOWN = "?"


_COMMON_TOKENS = {
    "1": Cell.PLUS,
    "+1": Cell.PLUS,
    "+": Cell.PLUS,
    "-1": Cell.MINUS,
    "-": Cell.MINUS,
    "?": Cell.UNKNOWN,
}

# SSWL tables are strictly binary, LanGeLin tables use 0 for "not defined".
DIALECTS: Dict[str, Dict[str, Cell]] = {
    "sswl": {**_COMMON_TOKENS, "0": Cell.MINUS},
    "langelin": {**_COMMON_TOKENS, "0": Cell.ZERO},
}


def pattern_str(code: int, n: int) -> str:
    return format(code, f"0{n}b") if n else ""


def pattern_code(bits: str) -> int:
    return int(bits, 2)


@dataclass(frozen=True)
class TraitTable:
    languages: Tuple[str, ...]
    variables: Tuple[str, ...]
    cells: Tuple[Tuple[Cell, ...], ...]

    def __post_init__(self) -> None:
        if len(set(self.languages)) != len(self.languages):
            raise DatasetError("duplicate language name")
        if len(set(self.variables)) != len(self.variables):
            raise DatasetError("duplicate variable id")
        if len(self.cells) != len(self.languages) or any(len(r) != len(self.variables) for r in self.cells):
            raise DatasetError("table is not rectangular")

    def row(self, language: str) -> Tuple[Cell, ...]:
        return self.cells[self.languages.index(language)]


@dataclass(frozen=True)
class PatternCounts:
    names: Tuple[str, ...]
    counts: Mapping[int, int]
    sampling: Optional[SamplingRecord] = None

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def get(self, bits: str) -> int:
        return self.counts.get(pattern_code(bits), 0)


@dataclass(frozen=True)
class BoundaryDistribution:
    """Exact tensor over {0,1}^n; zero entries are not stored.

    ``normalised=False`` admits rescaled tensors cP, which the invariants
    accept but which are not probability distributions.
    """

    names: Tuple[str, ...]
    p: Mapping[int, Fraction]
    normalised: bool = True

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise DatasetError("duplicate leaf name in distribution")
        size = 1 << len(self.names)
        for code, value in self.p.items():
            if not 0 <= code < size:
                raise DatasetError(f"pattern {code} out of range for {len(self.names)} leaves")
            if value < 0:
                raise DatasetError(f"negative entry at {pattern_str(code, len(self.names))}")
        if self.normalised and sum(self.p.values(), Fraction(0)) != 1:
            raise DatasetError("distribution entries must sum to exactly 1")

    @property
    def n(self) -> int:
        return len(self.names)

    def get(self, bits: str) -> Fraction:
        return self.p.get(pattern_code(bits), Fraction(0))

    def entry(self, code: int) -> Fraction:
        return self.p.get(code, Fraction(0))

    def items(self) -> List[Tuple[str, Fraction]]:
        return [(pattern_str(c, self.n), v) for c, v in sorted(self.p.items()) if v]

    def marginal(self, indices: Sequence[int]) -> "BoundaryDistribution":
        idx = list(indices)
        n = self.n
        out: Dict[int, Fraction] = {}
        for code, value in self.p.items():
            sub = 0
            for i in idx:
                sub = (sub << 1) | ((code >> (n - 1 - i)) & 1)
            out[sub] = out.get(sub, Fraction(0)) + value
        return BoundaryDistribution(tuple(self.names[i] for i in idx), _nonzero(out), self.normalised)

    def scaled(self, c: Union[int, Fraction]) -> "BoundaryDistribution":
        c = Fraction(c)
        if c <= 0:
            raise DatasetError("scale factor must be positive")
        return BoundaryDistribution(self.names, {k: v * c for k, v in self.p.items()}, normalised=False)

    def reordered(self, names: Sequence[str]) -> "BoundaryDistribution":
        if sorted(names) != sorted(self.names):
            raise LeafMismatchError(
                "leaf ordering does not match the distribution",
                details={"expected": sorted(self.names), "got": sorted(names)},
            )
        out = self.marginal([self.names.index(x) for x in names])
        return BoundaryDistribution(tuple(names), out.p, self.normalised)


@dataclass(frozen=True)
class VariableWeighting:
    weights: Mapping[str, Fraction] = field(default_factory=dict)

    def normalizer(self, variables: Iterable[str]) -> Fraction:
        return sum((self.weights[v] for v in variables), Fraction(0))


def _nonzero(p: Mapping[int, Fraction]) -> Dict[int, Fraction]:
    return {k: v for k, v in p.items() if v}


def _infer_format(path: Path) -> str:
    return "csv" if path.suffix.lower() == ".csv" else "tsv"


def load_table(path: Union[str, Path], format: Optional[str] = None, dialect: str = "sswl") -> TraitTable:
    """Read a language x variable table.

    The first row holds variable ids after a corner cell; each further row is
    a language name followed by one cell per variable.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"data file not found: {path}")
    if dialect not in DIALECTS:
        raise DatasetError(f"unknown dialect {dialect!r}")
    tokens = DIALECTS[dialect]
    fmt = format or _infer_format(path)
    delimiter = "," if fmt == "csv" else "\t"

    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter), start=1) if r and not r[0].startswith("#")]
    if not rows:
        raise DatasetError(f"{path} is empty")
    _, header = rows[0]
    variables = tuple(v.strip() for v in header[1:])
    if not variables:
        raise DatasetError(f"{path} has no variables", row=rows[0][0])

    languages: List[str] = []
    cells: List[Tuple[Cell, ...]] = []
    for lineno, raw in rows[1:]:
        if len(raw) != len(variables) + 1:
            raise DatasetError(f"expected {len(variables)} values, found {len(raw) - 1}", row=lineno)
        row: List[Cell] = []
        for col, token in enumerate(raw[1:], start=2):
            cell = tokens.get(token.strip())
            if cell is None:
                raise DatasetError(f"unknown cell value {token.strip()!r}", row=lineno, column=col)
            row.append(cell)
        languages.append(raw[0].strip())
        cells.append(tuple(row))
    if not languages:
        raise DatasetError(f"{path} has no languages")
    table = TraitTable(tuple(languages), variables, tuple(cells))
    log.info("dataset.loaded", path=str(path), languages=len(languages), variables=len(variables), dialect=dialect)
    return table


def completely_mapped(table: TraitTable, languages: Optional[Sequence[str]] = None) -> TraitTable:
    """Restrict to ``languages`` and to variables that are +/- for all of them."""
    langs = tuple(languages) if languages is not None else table.languages
    unknown = [x for x in langs if x not in table.languages]
    if unknown:
        raise DatasetError(f"unknown language {unknown[0]!r}")
    if len(set(langs)) != len(langs):
        raise DatasetError("language listed twice")
    rows = [table.row(x) for x in langs]
    keep = [j for j in range(len(table.variables)) if all(r[j] in (Cell.PLUS, Cell.MINUS) for r in rows)]
    if not keep:
        log.warning("dataset.no_mapped_variables", languages=list(langs))
    out = TraitTable(
        langs,
        tuple(table.variables[j] for j in keep),
        tuple(tuple(r[j] for j in keep) for r in rows),
    )
    log.info("dataset.filtered", retained=len(keep), dropped=len(table.variables) - len(keep))
    return out


def _column_code(table: TraitTable, j: int) -> int:
    # Plus -> 1, Minus -> 0
    code = 0
    for i, row in enumerate(table.cells):
        cell = row[j]
        if cell is Cell.PLUS:
            code = (code << 1) | 1
        elif cell is Cell.MINUS:
            code <<= 1
        else:
            raise DatasetError(
                f"variable {table.variables[j]!r} is not mapped for {table.languages[i]!r}",
                row=i + 1,
                column=j + 1,
            )
    return code


def count_patterns(table: TraitTable) -> PatternCounts:
    counts: Dict[int, int] = {}
    for j in range(len(table.variables)):
        code = _column_code(table, j)
        counts[code] = counts.get(code, 0) + 1
    log.debug("dataset.counted", leaves=len(table.languages), patterns=len(counts))
    return PatternCounts(table.languages, counts)


def boundary_distribution(counts: PatternCounts) -> BoundaryDistribution:
    total = counts.total
    if total <= 0:
        raise DatasetError("no variables to build a distribution from")
    return BoundaryDistribution(counts.names, {k: Fraction(v, total) for k, v in counts.counts.items() if v})


def weighted_boundary_distribution(table: TraitTable, weights: VariableWeighting) -> BoundaryDistribution:
    """Each variable contributes its weight instead of 1, normalised by the total weight."""
    missing = [v for v in table.variables if v not in weights.weights]
    if missing:
        raise DatasetError(f"no weight for variable {missing[0]!r}")
    z = weights.normalizer(table.variables)
    if z <= 0:
        raise DatasetError("total weight of the retained variables is zero")
    sums: Dict[int, Fraction] = {}
    for j, var in enumerate(table.variables):
        code = _column_code(table, j)
        sums[code] = sums.get(code, Fraction(0)) + weights.weights[var]
    return BoundaryDistribution(table.languages, _nonzero({k: v / z for k, v in sums.items()}))


def counts_to_table(counts: PatternCounts) -> TraitTable:
    """One synthetic variable ``v1, v2, ...`` per occurrence, in pattern order."""
    n = counts.n
    columns: List[str] = []
    for code in sorted(counts.counts):
        columns.extend([pattern_str(code, n)] * counts.counts[code])
    variables = tuple(f"v{j}" for j in range(1, len(columns) + 1))
    cells = tuple(tuple(Cell.PLUS if col[i] == "1" else Cell.MINUS for col in columns) for i in range(n))
    return TraitTable(counts.names, variables, cells)


def load_weights(path: Union[str, Path]) -> VariableWeighting:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"weights file not found: {path}")
    weights: Dict[str, Fraction] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError("expected 'variable<TAB>weight'", row=lineno)
        try:
            value = parse_rational(parts[1])
        except ValueError as exc:
            raise DatasetError(str(exc), row=lineno, column=2) from None
        if value < 0:
            raise DatasetError("weights must be nonnegative", row=lineno, column=2)
        if parts[0] in weights:
            raise DatasetError(f"duplicate weight for {parts[0]!r}", row=lineno)
        weights[parts[0]] = value
    return VariableWeighting(weights)


def _read_distribution_file(path: Path) -> DistributionFile:
    if not path.exists():
        raise DatasetError(f"distribution file not found: {path}")
    try:
        return DistributionFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        first = exc.errors()[0]
        raise DatasetError(f"invalid distribution file {path}: {first['msg']}") from None


def load_counts(path: Union[str, Path]) -> PatternCounts:
    doc = _read_distribution_file(Path(path))
    if doc.kind != "counts":
        raise DatasetError(f"{path} holds a distribution, not counts")
    counts = {pattern_code(k): int(v) for k, v in doc.entries.items() if v}
    return PatternCounts(tuple(doc.leaves), counts, doc.sampling)


def load_distribution(path: Union[str, Path]) -> BoundaryDistribution:
    doc = _read_distribution_file(Path(path))
    if doc.kind == "counts":
        return boundary_distribution(PatternCounts(tuple(doc.leaves), {pattern_code(k): int(v) for k, v in doc.entries.items() if v}))
    p = {pattern_code(k): parse_rational(v) for k, v in doc.entries.items()}
    return BoundaryDistribution(tuple(doc.leaves), _nonzero(p))


def distribution_document(data: Union[BoundaryDistribution, PatternCounts]) -> DistributionFile:
    if isinstance(data, PatternCounts):
        entries: Dict[str, Union[int, str]] = {pattern_str(k, data.n): v for k, v in sorted(data.counts.items()) if v}
        return DistributionFile(leaves=list(data.names), kind="counts", entries=entries, sampling=data.sampling)
    return DistributionFile(
        leaves=list(data.names),
        kind="distribution",
        entries={bits: format_rational(v) for bits, v in data.items()},
    )


def write_distribution(data: Union[BoundaryDistribution, PatternCounts], out: Union[str, Path, TextIO]) -> None:
    text = json.dumps(distribution_document(data).model_dump(exclude_none=True), indent=2) + "\n"
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def dataset_digest(dist: BoundaryDistribution) -> str:
    h = hashlib.sha256()
    h.update(("\t".join(dist.names) + "\n").encode())
    for bits, value in dist.items():
        h.update(f"{bits}\t{format_rational(value)}\n".encode())
    return h.hexdigest()
