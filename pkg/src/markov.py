"""General binary Markov model on a rooted tree.

The root takes state 0 with probability ``pi``; each edge flips the state
with its own probability ``p_e`` (transition matrix [[1-p, p], [p, 1-p]]).
Edges are identified by the set of leaves below them. State 0 means the
feature is absent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, TextIO, Tuple, Union

import numpy as np
import structlog
from pydantic import ValidationError

from .dataset import BoundaryDistribution, PatternCounts
from .errors import ModelError, PhyloAlgError
from .models import ModelFile, SamplingRecord, format_rational, parse_rational
from .tree_model import Node, PhyloTree, graft, parse_newick, write_newick

log = structlog.get_logger(__name__)

RNG_ALGORITHM = "numpy.PCG64"

Clade = FrozenSet[int]


def compose_flips(p1: Fraction, p2: Fraction) -> Fraction:
    """Flip probability of two symmetric transitions in series."""
    return p1 + p2 - 2 * p1 * p2


def _unit(x: Fraction, what: str) -> Fraction:
    x = Fraction(x)
    if not 0 <= x <= 1:
        raise ModelError(f"{what} must lie in [0, 1], got {x}")
    return x


@dataclass(frozen=True)
class TreeMarkovModel:
    tree: PhyloTree
    pi: Fraction
    edge_flip: Mapping[Clade, Fraction]

    def __post_init__(self) -> None:
        if not self.tree.is_binary():
            raise ModelError("the model tree must be binary")
        _unit(self.pi, "root probability")
        expected = set(edge_clades(self.tree))
        got = set(self.edge_flip)
        if expected != got:
            missing = sorted(sorted(c) for c in expected - got)
            raise ModelError(f"edge parameters do not match the tree edges; missing {missing}")
        for clade, p in self.edge_flip.items():
            _unit(p, f"flip probability of edge {sorted(clade)}")

    @property
    def parameter_count(self) -> int:
        """Informational: 4n - 5 for a binary tree with a matrix on every edge."""
        return 4 * self.tree.n - 5

    def flip(self, node: Node) -> Fraction:
        return self.edge_flip[node.clade]


def edge_clades(tree: PhyloTree) -> List[Clade]:
    return [node.clade for node in tree.root.iter_nodes() if node is not tree.root]


def _transition(p: Fraction, parent: int, child: int) -> Fraction:
    return p if parent != child else 1 - p


def _subtree_tables(model: TreeMarkovModel, node: Node, n: int) -> Tuple[Dict[int, Fraction], Dict[int, Fraction]]:
    """Distribution of the leaf bits below ``node`` given its state 0 or 1."""
    if node.is_leaf:
        bit = 1 << (n - 1 - node.leaf)  # type: ignore[operator]
        return {0: Fraction(1)}, {bit: Fraction(1)}
    given = ({0: Fraction(1)}, {0: Fraction(1)})
    for child in node.children:
        p = model.flip(child)
        low, high = _subtree_tables(model, child, n)
        for state in (0, 1):
            below: Dict[int, Fraction] = {}
            for child_state, table in ((0, low), (1, high)):
                w = _transition(p, state, child_state)
                if not w:
                    continue
                for code, v in table.items():
                    below[code] = below.get(code, Fraction(0)) + w * v
            merged: Dict[int, Fraction] = {}
            for a, va in given[state].items():
                for b, vb in below.items():
                    if va and vb:
                        merged[a | b] = merged.get(a | b, Fraction(0)) + va * vb
            given = (merged, given[1]) if state == 0 else (given[0], merged)
    return given


def boundary_map(model: TreeMarkovModel) -> BoundaryDistribution:
    """Exact leaf-pattern distribution by pruning over the tree."""
    n = model.tree.n
    low, high = _subtree_tables(model, model.tree.root, n)
    p: Dict[int, Fraction] = {}
    for weight, table in ((model.pi, low), (1 - model.pi, high)):
        for code, v in table.items():
            p[code] = p.get(code, Fraction(0)) + weight * v
    return BoundaryDistribution(model.tree.names, {k: v for k, v in p.items() if v})


def naive_boundary_map(model: TreeMarkovModel) -> BoundaryDistribution:
    """The same distribution as an explicit sum over every internal-state history."""
    tree = model.tree
    n = tree.n
    internal = [node for node in tree.root.iter_nodes() if not node.is_leaf]
    edges = [(parent, child) for parent in internal for child in parent.children]
    p: Dict[int, Fraction] = {}
    for code in range(1 << n):
        total = Fraction(0)
        for history in product((0, 1), repeat=len(internal)):
            state = {id(node): s for node, s in zip(internal, history)}
            root_state = state[id(tree.root)]
            term = model.pi if root_state == 0 else 1 - model.pi
            for parent, child in edges:
                if child.is_leaf:
                    child_state = (code >> (n - 1 - child.leaf)) & 1  # type: ignore[operator]
                else:
                    child_state = state[id(child)]
                term *= _transition(model.flip(child), state[id(parent)], child_state)
                if not term:
                    break
            total += term
        if total:
            p[code] = total
    return BoundaryDistribution(tree.names, p)


def _names_of(tree: PhyloTree, clade: Clade) -> FrozenSet[str]:
    return frozenset(tree.names[i] for i in clade)


def _unrooted_flips(model: TreeMarkovModel) -> Dict[FrozenSet[FrozenSet[str]], Fraction]:
    """Parameters per unrooted edge; the two edges at a degree-2 root compose into one."""
    all_names = frozenset(model.tree.names)
    out: Dict[FrozenSet[FrozenSet[str]], Fraction] = {}
    for clade, p in model.edge_flip.items():
        side = _names_of(model.tree, clade)
        key = frozenset((side, all_names - side))
        out[key] = compose_flips(out[key], p) if key in out else p
    return out


def graft_models(m1: TreeMarkovModel, m2: TreeMarkovModel, shared_leaf: str) -> TreeMarkovModel:
    """Model on ``graft(m1.tree, m2.tree, shared_leaf)``.

    m1's root distribution is kept; m2's is dropped. The two pendant edges of
    the shared leaf become one edge whose flip probability is their
    composition. All other edges keep their parameters.
    """
    t = graft(m1.tree, m2.tree, shared_leaf)
    names2 = frozenset(m2.tree.names)
    hanging = names2 - {shared_leaf}
    flips2 = _unrooted_flips(m2)
    flips1 = {_names_of(m1.tree, c): p for c, p in m1.edge_flip.items()}
    pendant1 = flips1[frozenset((shared_leaf,))]
    pendant2 = flips2[frozenset((frozenset((shared_leaf,)), names2 - {shared_leaf}))]

    edges: Dict[Clade, Fraction] = {}
    for clade in edge_clades(t):
        side = _names_of(t, clade)
        if side == hanging:
            edges[clade] = compose_flips(pendant1, pendant2)
        elif side < hanging:
            edges[clade] = flips2[frozenset((side, names2 - side))]
        elif hanging < side:
            edges[clade] = flips1[(side - hanging) | {shared_leaf}]
        else:
            edges[clade] = flips1[side]
    log.debug("markov.grafted", leaf=shared_leaf, edges=len(edges))
    return TreeMarkovModel(t, m1.pi, edges)


def sample_patterns(model: TreeMarkovModel, count: int, seed: Optional[int] = None) -> PatternCounts:
    """``count`` independent draws from the boundary distribution."""
    if count < 1:
        raise ModelError("sample count must be at least 1")
    exact = boundary_map(model)
    size = 1 << model.tree.n
    probs = np.zeros(size, dtype=np.float64)
    for code, v in exact.p.items():
        probs[code] = float(v)
    probs /= probs.sum()
    rng = np.random.Generator(np.random.PCG64(seed))
    drawn = rng.multinomial(count, probs)
    counts = {code: int(c) for code, c in enumerate(drawn) if c}
    log.info("markov.sampled", count=count, seed=seed, rng=RNG_ALGORITHM, patterns=len(counts))
    return PatternCounts(model.tree.names, counts, SamplingRecord(rng=RNG_ALGORITHM, seed=seed))


def random_model(tree: PhyloTree, rng: np.random.Generator, max_denominator: int = 12) -> TreeMarkovModel:
    def draw() -> Fraction:
        d = int(rng.integers(1, max_denominator + 1))
        return Fraction(int(rng.integers(0, d + 1)), d)

    return TreeMarkovModel(tree, draw(), {c: draw() for c in edge_clades(tree)})


def _edge_key(tree: PhyloTree, clade: Clade) -> str:
    return ",".join(tree.names[i] for i in sorted(clade))


def model_document(model: TreeMarkovModel) -> ModelFile:
    order = sorted(model.edge_flip, key=lambda c: (len(c), sorted(c)))
    return ModelFile(
        newick=write_newick(model.tree),
        pi=format_rational(model.pi),
        edges={_edge_key(model.tree, c): format_rational(model.edge_flip[c]) for c in order},
        leaves=list(model.tree.names),
    )


def write_model(model: TreeMarkovModel, out: Union[str, Path, TextIO]) -> None:
    text = json.dumps(model_document(model).model_dump(), indent=2) + "\n"
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def load_model(path: Union[str, Path]) -> TreeMarkovModel:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"model file not found: {path}")
    try:
        doc = ModelFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ModelError(f"invalid model file {path}: {exc.errors()[0]['msg']}") from None
    try:
        tree = parse_newick(doc.newick, doc.leaves)
        edges: Dict[Clade, Fraction] = {}
        for key, value in doc.edges.items():
            members = [x.strip() for x in key.split(",")]
            edges[frozenset(tree.index_of(x) for x in members)] = parse_rational(value)
        return TreeMarkovModel(tree, parse_rational(doc.pi), edges)
    except PhyloAlgError as exc:
        raise ModelError(f"{path}: {exc.message}") from exc
    except ValueError as exc:
        raise ModelError(f"{path}: {exc}") from None
