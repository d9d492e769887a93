from fractions import Fraction

import pytest

from src.dataset import boundary_distribution, count_patterns
from src.invariants import all_minors, matrix_invariant_score, minor_norms, tree_invariant_score
from src.tensor_flatten import Flattening, distinguishing_splits, flatten, load_matrix, split_from_names
from src.tree_model import internal_edge_splits, parse_tree_file

F = Fraction


def matrix(rows):
    return Flattening(tuple(tuple(F(x) for x in r) for r in rows))


def manifest_groups(directory, denominator):
    groups = {}
    for line in (directory / "manifest.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        cid, name = line.split()
        groups.setdefault(cid, []).append(load_matrix(directory / name, denominator))
    return groups


def conditional_scores(dist, trees):
    splits = distinguishing_splits([t for _, t in trees])
    return {tid: tree_invariant_score(dist, t, s) for (tid, t), s in zip(trees, splits)}


def test_rank_two_matrix_has_vanishing_minors():
    m = matrix([[1, 2, 3, 4], [2, 4, 6, 8], [0, 1, 0, 1], [1, 3, 3, 5]])

    norms = minor_norms(m)

    assert norms.linf == 0
    assert norms.l1 == 0
    assert norms.minor_count == 16
    assert not norms.degenerate


def test_small_matrices_are_degenerate():
    norms = minor_norms(matrix([[1, 0, 0, 1], [0, 1, 1, 0]]))

    assert norms.degenerate
    assert (norms.linf, norms.l1, norms.minor_count) == (0, 0, 0)


def test_norms_agree_with_direct_expansion():
    m = matrix([["1/2", "1/3", 0, "1/7"], ["1/5", 0, "2/9", "1/11"], [0, "1/4", "1/6", 0], ["1/8", "1/10", 0, "3/13"]])

    norms = minor_norms(m)
    minors = all_minors(m)

    assert norms.linf == max(abs(x) for x in minors)
    assert norms.l1 == sum(abs(x) for x in minors)


def test_large_denominators_stay_exact():
    m = matrix([[F(k * k + 1, 10**9 + 7 * k) for k in range(r, r + 5)] for r in range(5)])

    norms = minor_norms(m)

    assert norms.l1 == sum(abs(x) for x in all_minors(m))


def test_threaded_evaluation_matches_serial(s1_dist):
    f = flatten(s1_dist, split_from_names(["Dutch", "German", "Faroese", "Icelandic"], s1_dist.names))

    assert minor_norms(f, workers=4) == minor_norms(f, workers=1)


def test_germanic_s1_scores(s1_dist, s1_trees):
    scores = conditional_scores(s1_dist, s1_trees)

    assert (scores["pars1"].linf, scores["pars1"].l1) == (F(22, 18225), F(3707, 364500))
    assert (scores["pars2"].linf, scores["pars2"].l1) == (F(419, 364500), F(2719, 364500))
    assert (scores["pars3"].linf, scores["pars3"].l1) == (F(22, 18225), F(949, 91125))
    for a, b in (("pars1", "bnb2"), ("pars2", "bnb1"), ("pars3", "bnb3")):
        assert (scores[a].linf, scores[a].l1) == (scores[b].linf, scores[b].l1)


def test_longobardi_scores(longobardi_dist, s2_trees):
    scores = conditional_scores(longobardi_dist, s2_trees)

    assert {tid: s.l1 for tid, s in scores.items()} == {
        "T1": F(83, 8232),
        "T2": F(233, 24696),
        "T3": F(181, 18522),
        "T4": F(181, 18522),
        "T5": F(233, 24696),
        "T6": F(83, 8232),
    }
    assert all(s.linf == F(4, 1029) for s in scores.values())

    t1 = dict(s2_trees)["T1"]
    per_split = {s.label(t1.names): norms for s, norms in scores["T1"].per_split.items()}
    assert per_split["{Norwegian,Danish,Gothic}|{Old_English,Icelandic,English,German}"].l1 == F(59, 8232)
    assert per_split["{Norwegian,Danish,Gothic,Old_English}|{Icelandic,English,German}"].l1 == F(1, 343)

    assert all(n.linf <= F(4, 1029) for s in scores.values() for n in s.per_split.values())


def test_sswl_scores(sswl_dist, s2_trees):
    scores = conditional_scores(sswl_dist, s2_trees)

    assert {tid: s.l1 for tid, s in scores.items()} == {
        "T1": F(8811, 157216),
        "T2": F(7103, 157216),
        "T3": F(14845, 314432),
        "T4": F(15445, 314432),
        "T5": F(341, 9826),
        "T6": F(9107, 314432),
    }
    assert [scores[f"T{i}"].linf for i in range(1, 6)] == [F(13, 4913)] * 5
    assert scores["T6"].linf == F(207, 78608)


def test_early_ie_scores(data_dir, early_ie_table):
    dist = boundary_distribution(count_patterns(early_ie_table))
    trees = dict(parse_tree_file(data_dir / "early_ie_trees.nwk", dist.names))

    gray = tree_invariant_score(dist, trees["gray"], internal_edge_splits(trees["gray"]))
    rwt = tree_invariant_score(dist, trees["rwt"], internal_edge_splits(trees["rwt"]))

    assert gray.linf == rwt.linf == F(8, 1331)
    assert gray.l1 == F(9, 484)
    assert rwt.l1 == F(18, 1331)
    assert gray.minor_count == rwt.minor_count == 2 * 4 * 56


def test_romance_matrices(data_dir):
    groups = manifest_groups(data_dir / "romance", 165)

    t1 = matrix_invariant_score(groups["T1"])
    t2 = matrix_invariant_score(groups["T2"])

    assert t1.l1 == F(111361, 165**3)
    assert t2.l1 == F(101887, 165**3)
    assert t1.linf == t2.linf == F(4024, 165**3)


def test_slavic_matrices(data_dir):
    groups = manifest_groups(data_dir / "slavic", 82)

    scores = {cid: matrix_invariant_score(m) for cid, m in groups.items()}

    assert [scores[f"T{i}"].l1 * 82**3 for i in range(1, 6)] == [1753, 2017, 501, 751, 947]
    assert [scores[f"T{i}"].linf * 82**3 for i in range(1, 6)] == [1050, 1050, 210, 210, 210]


@pytest.mark.parametrize("c", [F(3), F(1, 2), F(7, 5)])
def test_scores_scale_cubically(s1_dist, s1_trees, c):
    pars1 = dict(s1_trees)["pars1"]
    splits = internal_edge_splits(pars1)

    base = tree_invariant_score(s1_dist, pars1, splits)
    scaled = tree_invariant_score(s1_dist.scaled(c), pars1, splits)

    assert scaled.linf == c**3 * base.linf
    assert scaled.l1 == c**3 * base.l1
