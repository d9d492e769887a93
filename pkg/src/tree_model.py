"""Leaf-labelled phylogenetic trees.

Trees are immutable. Every internal node keeps its children sorted by the
smallest leaf index they contain, so two trees are equal exactly when they
have the same rooted shape over the same leaf ordering, and ``write_newick``
is deterministic.

Leaf indices come from an analysis-level ordering (the dataset's language
order) when one is supplied, otherwise from first appearance in the Newick
text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import structlog

from .errors import LeafMismatchError, NewickSyntaxError, TreeError
from .settings import get_settings

log = structlog.get_logger(__name__)

_NAME_RE = re.compile(r"[A-Za-z0-9_.\-]+")
_LENGTH_RE = re.compile(r":\s*[-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?")

# Nested tuples with leaf names at the tips; the parser's output and the
# common currency of the restructuring helpers below.
Shape = Union[str, Tuple["Shape", ...]]


@dataclass(frozen=True)
class LeafLabel:
    name: str
    index: int


@dataclass(frozen=True)
class Node:
    children: Tuple["Node", ...] = ()
    leaf: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    @cached_property
    def clade(self) -> FrozenSet[int]:
        if self.leaf is not None:
            return frozenset((self.leaf,))
        return frozenset().union(*(c.clade for c in self.children))

    @cached_property
    def min_leaf(self) -> int:
        return min(self.clade)

    def iter_nodes(self) -> Iterable["Node"]:
        yield self
        for child in self.children:
            yield from child.iter_nodes()


def leaf_node(index: int) -> Node:
    return Node(leaf=index)


def join(children: Iterable[Node]) -> Node:
    """Internal node with canonically ordered children."""
    kids = tuple(sorted(children, key=lambda c: c.min_leaf))
    if len(kids) < 2:
        raise TreeError("internal node needs at least two children")
    return Node(children=kids)


@dataclass(frozen=True, order=True)
class EdgeSplit:
    side_a: Tuple[int, ...]
    side_b: Tuple[int, ...]

    @classmethod
    def from_side(cls, side: Iterable[int], n: int) -> "EdgeSplit":
        """Normalise so that ``side_a`` holds leaf 0."""
        a = frozenset(side)
        b = frozenset(range(n)) - a
        if not a or not b:
            raise TreeError("both sides of a split must be nonempty")
        if not a <= frozenset(range(n)):
            raise TreeError(f"split mentions leaves outside 0..{n - 1}")
        if 0 not in a:
            a, b = b, a
        return cls(tuple(sorted(a)), tuple(sorted(b)))

    @property
    def n(self) -> int:
        return len(self.side_a) + len(self.side_b)

    @property
    def is_internal(self) -> bool:
        return len(self.side_a) >= 2 and len(self.side_b) >= 2

    def label(self, names: Sequence[str]) -> str:
        left = ",".join(names[i] for i in self.side_a)
        right = ",".join(names[i] for i in self.side_b)
        return f"{{{left}}}|{{{right}}}"


@dataclass(frozen=True)
class UnrootedTopology:
    names: Tuple[str, ...]
    canonical_splits: Tuple[EdgeSplit, ...] = field(default=())


@dataclass(frozen=True)
class PhyloTree:
    root: Node
    names: Tuple[str, ...]

    def __post_init__(self) -> None:
        if self.root.clade != frozenset(range(len(self.names))):
            raise TreeError("leaf indices must cover 0..n-1 exactly")
        if len(set(self.names)) != len(self.names):
            raise TreeError("leaf names must be unique")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def leaves(self) -> Tuple[LeafLabel, ...]:
        return tuple(LeafLabel(name, i) for i, name in enumerate(self.names))

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TreeError(f"leaf {name!r} not in tree") from None

    def is_binary(self) -> bool:
        """Binary as an unrooted tree: the root may have two or three children."""
        for node in self.root.iter_nodes():
            if node.is_leaf:
                continue
            limit = 3 if node is self.root else 2
            if not 2 <= len(node.children) <= limit:
                return False
        return True


# Newick


class _NewickReader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _skip_length(self) -> None:
        self._skip_ws()
        m = _LENGTH_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
        elif self._peek() == ":":
            raise NewickSyntaxError("malformed branch length", self.pos)

    def read(self) -> Shape:
        if not self.text.strip():
            raise NewickSyntaxError("empty input", 0)
        shape = self._subtree()
        if self._peek() == ";":
            self.pos += 1
        if self._peek():
            raise NewickSyntaxError(f"unexpected {self._peek()!r}", self.pos)
        return shape

    def _subtree(self) -> Shape:
        c = self._peek()
        if c == "(":
            start = self.pos
            self.pos += 1
            items = [self._subtree()]
            while self._peek() == ",":
                self.pos += 1
                items.append(self._subtree())
            if self._peek() != ")":
                raise NewickSyntaxError("expected ',' or ')'", self.pos)
            self.pos += 1
            if len(items) < 2:
                raise NewickSyntaxError("internal node with a single child", start)
            # internal labels carry no meaning here
            m = _NAME_RE.match(self.text, self.pos)
            if m:
                self.pos = m.end()
            self._skip_length()
            return tuple(items)
        m = _NAME_RE.match(self.text, self.pos)
        if not m:
            raise NewickSyntaxError(f"expected a leaf name or '(' but found {c or 'end of input'!r}", self.pos)
        self.pos = m.end()
        self._skip_length()
        return m.group(0)


def _shape_names(shape: Shape) -> List[str]:
    if isinstance(shape, str):
        return [shape]
    out: List[str] = []
    for item in shape:
        out.extend(_shape_names(item))
    return out


def tree_from_shape(shape: Shape, leaf_order: Optional[Sequence[str]] = None) -> PhyloTree:
    seen = _shape_names(shape)
    dupes = sorted({n for n in seen if seen.count(n) > 1})
    if dupes:
        raise TreeError(f"duplicate leaf name {dupes[0]!r}")
    if leaf_order is None:
        names = tuple(seen)
    else:
        names = tuple(leaf_order)
        if set(names) != set(seen) or len(names) != len(seen):
            raise LeafMismatchError(
                "tree leaves do not match the leaf ordering",
                details={
                    "missing_from_tree": sorted(set(names) - set(seen)),
                    "unknown": sorted(set(seen) - set(names)),
                },
            )
    index = {name: i for i, name in enumerate(names)}

    def build(s: Shape) -> Node:
        if isinstance(s, str):
            return leaf_node(index[s])
        return join(build(c) for c in s)

    return PhyloTree(build(shape), names)


def tree_to_shape(tree: PhyloTree, node: Optional[Node] = None) -> Shape:
    node = node if node is not None else tree.root
    if node.is_leaf:
        return tree.names[node.leaf]  # type: ignore[index]
    return tuple(tree_to_shape(tree, c) for c in node.children)


def parse_newick(text: str, leaf_order: Optional[Sequence[str]] = None) -> PhyloTree:
    shape = _NewickReader(text).read()
    return tree_from_shape(shape, leaf_order)


def write_newick(tree: PhyloTree) -> str:
    def emit(node: Node) -> str:
        if node.is_leaf:
            return tree.names[node.leaf]  # type: ignore[index]
        return "(" + ",".join(emit(c) for c in node.children) + ")"

    return emit(tree.root)


def read_leaf_order(path: Union[str, Path]) -> List[str]:
    path = Path(path)
    if not path.exists():
        raise TreeError(f"leaf-order file not found: {path}")
    names: List[str] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    if len(set(names)) != len(names):
        raise TreeError(f"duplicate names in leaf-order file {path}")
    return names


def parse_tree_file(path: Union[str, Path], leaf_order: Optional[Sequence[str]] = None) -> List[Tuple[str, PhyloTree]]:
    """Read ``[id] newick`` lines; ids default to T1, T2, ..."""
    path = Path(path)
    if not path.exists():
        raise TreeError(f"tree file not found: {path}")
    trees: List[Tuple[str, PhyloTree]] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if rest.strip() and not head.startswith("("):
            tree_id, text = head, rest.strip()
        else:
            tree_id, text = f"T{len(trees) + 1}", line
        try:
            trees.append((tree_id, parse_newick(text, leaf_order)))
        except NewickSyntaxError as exc:
            raise NewickSyntaxError(f"{path}:{lineno}: {exc.message.rsplit(' at offset', 1)[0]}", exc.offset) from exc
    if not trees:
        raise TreeError(f"no trees in {path}")
    log.debug("trees.loaded", path=str(path), count=len(trees))
    return trees


def relabel(tree: PhyloTree, leaf_order: Sequence[str]) -> PhyloTree:
    return tree_from_shape(tree_to_shape(tree), leaf_order)


# Splits


def splits_of(tree: PhyloTree) -> FrozenSet[EdgeSplit]:
    """Every nontrivial split of the underlying unrooted tree."""
    n = tree.n
    out = set()
    for node in tree.root.iter_nodes():
        if node is tree.root or node.is_leaf:
            continue
        if 2 <= len(node.clade) <= n - 2:
            out.add(EdgeSplit.from_side(node.clade, n))
    return frozenset(out)


def unrooted_topology(tree: PhyloTree) -> UnrootedTopology:
    return UnrootedTopology(tree.names, tuple(sorted(splits_of(tree))))


def internal_edge_splits(tree: PhyloTree) -> List[EdgeSplit]:
    if tree.n < 4:
        raise TreeError(f"internal edge splits need at least 4 leaves, got {tree.n}")
    if not tree.is_binary():
        raise TreeError("tree is not binary; resolve multifurcations first")
    splits = sorted(splits_of(tree))
    if len(splits) != tree.n - 3:
        raise TreeError(f"binary tree on {tree.n} leaves should have {tree.n - 3} internal edges, found {len(splits)}")
    return splits


# Resolution and enumeration


def double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def _insert(shape, item):
    out = [(shape, item)]
    if isinstance(shape, tuple):
        left, right = shape
        out.extend((l, right) for l in _insert(left, item))
        out.extend((left, r) for r in _insert(right, item))
    return out


def rooted_shapes(k: int) -> List:
    """All rooted binary trees over items 0..k-1, by stepwise insertion; (2k-3)!! of them."""
    shapes: List = [0]
    for item in range(1, k):
        shapes = [new for s in shapes for new in _insert(s, item)]
    return shapes


def _materialise(shape, items: Sequence[Node]) -> Node:
    if isinstance(shape, int):
        return items[shape]
    return join(_materialise(s, items) for s in shape)


def _node_resolutions(node: Node) -> List[Node]:
    if node.is_leaf:
        return [node]
    options = [_node_resolutions(c) for c in node.children]
    shapes = rooted_shapes(len(node.children))
    out: List[Node] = []
    for combo in product(*options):
        for shape in shapes:
            out.append(_materialise(shape, combo))
    return out


def rooted_resolutions(tree: PhyloTree) -> List[PhyloTree]:
    return [PhyloTree(root, tree.names) for root in _node_resolutions(tree.root)]


def _dedupe_unrooted(trees: Iterable[PhyloTree]) -> List[PhyloTree]:
    seen = set()
    out = []
    for t in trees:
        key = unrooted_topology(t)
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def resolve_multifurcations(tree: PhyloTree) -> List[PhyloTree]:
    resolved = rooted_resolutions(tree)
    out = _dedupe_unrooted(resolved)
    log.debug("trees.resolved", rooted=len(resolved), unrooted=len(out))
    return out


def binarize_root(tree: PhyloTree) -> PhyloTree:
    kids = tree.root.children
    if len(kids) <= 2:
        return tree

    def nest(rest: Sequence[Node]) -> Node:
        if len(rest) == 2:
            return join(rest)
        return join((rest[0], nest(rest[1:])))

    return PhyloTree(join((kids[0], nest(kids[1:]))), tree.names)


def _leaf_names(leaves: Sequence[Union[str, LeafLabel]]) -> List[str]:
    names = [x.name if isinstance(x, LeafLabel) else str(x) for x in leaves]
    if isinstance(leaves[0] if leaves else None, LeafLabel):
        names = [x.name for x in sorted(leaves, key=lambda x: x.index)]  # type: ignore[union-attr]
    if len(set(names)) != len(names):
        raise TreeError("leaf names must be unique")
    return names


def enumerate_unrooted_trees(leaves: Sequence[Union[str, LeafLabel]], max_leaves: Optional[int] = None) -> List[PhyloTree]:
    """One representative per unrooted binary topology, rooted next to the first leaf."""
    names = _leaf_names(leaves)
    limit = max_leaves if max_leaves is not None else get_settings().MAX_ENUMERATION_LEAVES
    n = len(names)
    if not 3 <= n <= limit:
        raise TreeError(f"enumeration supports 3..{limit} leaves, got {n}")
    rest = [leaf_node(i) for i in range(1, n)]
    trees = [PhyloTree(join((leaf_node(0), _materialise(s, rest))), tuple(names)) for s in rooted_shapes(n - 1)]
    log.info("trees.enumerated", leaves=n, count=len(trees))
    return trees


def enumerate_unrooted_binary(leaves: Sequence[Union[str, LeafLabel]], max_leaves: Optional[int] = None) -> List[UnrootedTopology]:
    return [unrooted_topology(t) for t in enumerate_unrooted_trees(leaves, max_leaves)]


# Restructuring


def _adjacency(tree: PhyloTree) -> Tuple[Dict[int, List[int]], Dict[int, str]]:
    """Unrooted adjacency over integer node ids; a degree-2 root is suppressed."""
    adj: Dict[int, List[int]] = {}
    labels: Dict[int, str] = {}
    counter = iter(range(1 << 30))

    def visit(node: Node) -> int:
        me = next(counter)
        adj[me] = []
        if node.is_leaf:
            labels[me] = tree.names[node.leaf]  # type: ignore[index]
        for child in node.children:
            cid = visit(child)
            adj[me].append(cid)
            adj[cid].append(me)
        return me

    root = visit(tree.root)
    if len(adj[root]) == 2:
        a, b = adj.pop(root)
        adj[a] = [b if x == root else x for x in adj[a]]
        adj[b] = [a if x == root else x for x in adj[b]]
    return adj, labels


def _shape_from(adj: Dict[int, List[int]], labels: Dict[int, str], node: int, parent: Optional[int]) -> Shape:
    if node in labels:
        return labels[node]
    return tuple(_shape_from(adj, labels, nb, node) for nb in adj[node] if nb != parent)


def _hanging_shape(tree: PhyloTree, name: str) -> Shape:
    """The rest of the tree as seen from leaf ``name``, rooted at its neighbour."""
    adj, labels = _adjacency(tree)
    (leaf_id,) = [k for k, v in labels.items() if v == name]
    (neighbour,) = adj[leaf_id]
    return _shape_from(adj, labels, neighbour, leaf_id)


def reroot_at_leaf(tree: PhyloTree, name: str) -> PhyloTree:
    tree.index_of(name)
    if tree.n < 3:
        return tree
    return tree_from_shape((name, _hanging_shape(tree, name)), tree.names)


def prune_leaf(tree: PhyloTree, name: str) -> PhyloTree:
    tree.index_of(name)
    if tree.n <= 2:
        raise TreeError("cannot prune a tree below two leaves")

    def drop(s: Shape) -> Optional[Shape]:
        if isinstance(s, str):
            return None if s == name else s
        kept = [x for x in (drop(c) for c in s) if x is not None]
        return kept[0] if len(kept) == 1 else tuple(kept)

    shape = drop(tree_to_shape(tree))
    return tree_from_shape(shape, [n for n in tree.names if n != name])  # type: ignore[arg-type]


def graft(t1: PhyloTree, t2: PhyloTree, shared_leaf: str) -> PhyloTree:
    """Glue ``t2`` onto ``t1`` along the pendant edges of ``shared_leaf``.

    The result keeps t1's root and has ``n + m - 2`` leaves, ordered as t1's
    remaining leaves followed by t2's.
    """
    if shared_leaf not in t1.names or shared_leaf not in t2.names:
        raise TreeError(f"shared leaf {shared_leaf!r} must occur in both trees")
    clash = (set(t1.names) & set(t2.names)) - {shared_leaf}
    if clash:
        raise TreeError(f"leaf name collision: {sorted(clash)[0]!r}")
    if t2.n < 2:
        raise TreeError("the grafted tree needs at least one leaf besides the shared one")
    hanging = _hanging_shape(t2, shared_leaf)

    def replace(s: Shape) -> Shape:
        if isinstance(s, str):
            return hanging if s == shared_leaf else s
        return tuple(replace(c) for c in s)

    order = [n for n in t1.names if n != shared_leaf] + [n for n in t2.names if n != shared_leaf]
    out = tree_from_shape(replace(tree_to_shape(t1)), order)
    log.debug("trees.grafted", leaf=shared_leaf, leaves=out.n)
    return out


def ancient_pair_resolutions(tree: PhyloTree, ancient: Tuple[str, str]) -> List[PhyloTree]:
    """Move a root-adjacent cherry of ancient languages to the tops of the two root subtrees.

    For each rooted binary resolution of the rest of the tree, with root
    subtrees X (holding the smaller leaf index) and Y, both assignments
    ``((a1,X),(a2,Y))`` and ``((a2,X),(a1,Y))`` are produced; results are
    deduplicated by unrooted topology.
    """
    a, b = ancient
    ia, ib = tree.index_of(a), tree.index_of(b)
    if ia == ib:
        raise TreeError("ancient pair needs two distinct leaves")
    first, second = sorted((ia, ib))
    cherry = frozenset((ia, ib))
    holder = None
    for node in tree.root.iter_nodes():
        if not node.is_leaf and node.clade == cherry and len(node.children) == 2:
            holder = node
            break
    if holder is None:
        raise TreeError(f"{a!r} and {b!r} do not form a cherry")
    if holder not in tree.root.children:
        raise TreeError(f"cherry {{{a},{b}}} is not adjacent to the root")

    rest = [c for c in tree.root.children if c is not holder]
    remainder = rest[0] if len(rest) == 1 else join(rest)
    if remainder.is_leaf:
        raise TreeError("the rest of the tree must have at least two leaves")

    out: List[PhyloTree] = []
    for resolved in _node_resolutions(remainder):
        x, y = resolved.children
        for top, bottom in ((first, second), (second, first)):
            root = join((join((leaf_node(top), x)), join((leaf_node(bottom), y))))
            out.append(PhyloTree(root, tree.names))
    out = _dedupe_unrooted(out)
    log.info("trees.ancient_move", ancient=list(ancient), count=len(out))
    return out
