from fractions import Fraction

import pytest

from src.dataset import BoundaryDistribution, boundary_distribution, count_patterns
from src.errors import LeafMismatchError, RankingError
from src.ranking import normalise_criteria, rank, rank_matrices, render_table
from src.tensor_flatten import Flattening, load_matrix
from src.tree_model import parse_newick, parse_tree_file, write_newick


def manifest_groups(directory, denominator):
    groups = {}
    for line in (directory / "manifest.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        cid, name = line.split()
        groups.setdefault(cid, []).append(load_matrix(directory / name, denominator))
    return groups


def test_criteria_are_validated():
    assert normalise_criteria(None) == ["linf", "l1", "dist"]
    assert normalise_criteria(["dist", "l1"]) == ["l1", "dist"]
    with pytest.raises(RankingError, match="unknown criterion 'l2'"):
        normalise_criteria(["l2"])


def test_germanic_s1_ranking(s1_dist, s1_trees):
    report = rank(s1_dist, s1_trees, conditional=True, n_variables=90)

    for criterion in ("linf", "l1", "dist"):
        winner = report.winners[criterion]
        assert {winner.id, *winner.equivalent} == {"pars2", "bnb1"}
        assert winner.tied == []
    assert report.winners["l1"].value == "2719/364500"
    assert report.agreement == "consistent"
    assert report.dataset.n_languages == 6
    assert report.dataset.n_variables == 90

    by_id = {c.id: c for c in report.candidates}
    assert by_id["pars1"].linf == "22/18225"
    assert by_id["pars1"].splits == ["{Dutch,German,Swedish}|{English,Faroese,Icelandic}"]
    assert by_id["pars1"].dist_sq_lb == pytest.approx(4.6767882e-4, abs=1e-10)
    assert by_id["pars3"].l1 == "949/91125"


def test_winner_is_smallest_canonical_newick(s1_dist, s1_trees):
    report = rank(s1_dist, s1_trees, ["l1"])

    winner = report.winners["l1"]
    assert winner.id == "bnb1"
    assert winner.newick == "((((Dutch,German),English),(Faroese,Icelandic)),Swedish)"
    assert winner.equivalent == ["pars2"]


def test_longobardi_ranking_ties(longobardi_dist, s2_trees):
    report = rank(longobardi_dist, s2_trees, conditional=True)

    l1 = report.winners["l1"]
    assert {l1.id, *l1.tied} == {"T2", "T5"}
    assert l1.value == "233/24696"
    assert len(report.winners["linf"].tied) == 5
    assert report.winners["dist"].id in {"T2", "T5"}
    assert report.agreement == "tied"


def test_longobardi_printed_matrices(data_dir):
    report = rank_matrices(manifest_groups(data_dir / "longobardi", None))

    by_id = {c.id: c for c in report.candidates}
    assert (by_id["T3"].linf, by_id["T3"].l1) == ("1/3087", "16/3087")
    assert by_id["T1"].l1 == by_id["T6"].l1 == "83/8232"
    assert by_id["T2"].l1 == by_id["T5"].l1 == "233/24696"
    assert by_id["T4"].l1 == "181/18522"
    assert all(by_id[f"T{i}"].linf == "4/1029" for i in (1, 2, 4, 5, 6))
    assert by_id["T3"].dist_sq_lb == pytest.approx(0.30245e-4, abs=1e-9)
    assert by_id["T2"].dist_sq_lb == pytest.approx(0.57831e-3, abs=1e-8)

    assert {c: (w.id, w.tied) for c, w in report.winners.items()} == {
        "linf": ("T3", []),
        "l1": ("T3", []),
        "dist": ("T3", []),
    }
    assert report.agreement == "consistent"


def test_sswl_ranking_is_consistent(sswl_dist, s2_trees):
    report = rank(sswl_dist, s2_trees, conditional=True)

    assert {c: w.id for c, w in report.winners.items()} == {"linf": "T6", "l1": "T6", "dist": "T6"}
    assert report.winners["linf"].value == "207/78608"
    assert report.agreement == "consistent"


def test_early_ie_ranking(data_dir, early_ie_table):
    dist = boundary_distribution(count_patterns(early_ie_table))
    trees = parse_tree_file(data_dir / "early_ie_trees.nwk")

    report = rank(dist, trees, conditional=False)

    assert report.winners["l1"].id == "rwt"
    assert report.winners["dist"].id == "rwt"
    assert report.winners["linf"].tied in (["rwt"], ["gray"])
    assert report.agreement == "tied"

    assert rank(dist, trees, ["l1", "dist"]).agreement == "consistent"
    distance_only = rank(dist, trees, ["dist"])
    assert distance_only.candidates[0].linf is None
    assert distance_only.candidates[0].l1 is None


def test_disagreeing_criteria_are_reported():
    def diag(*values):
        return Flattening(
            tuple(tuple(Fraction(v) if i == j else Fraction(0) for j in range(3)) for i, v in enumerate(values))
        )

    report = rank_matrices({"A": [diag(1, 1, "1/2")], "B": [diag(2, 2, "1/3")]})

    assert report.winners["l1"].value == "1/2"
    assert report.winners["dist"].value == pytest.approx(1 / 9)
    assert report.agreement == "inconsistent: linf=A, l1=A, dist=B"


def test_romance_matrices(data_dir):
    report = rank_matrices(manifest_groups(data_dir / "romance", 165))

    assert report.winners["l1"].id == "T2"
    assert report.winners["dist"].id == "T2"
    assert report.winners["linf"].tied == ["T2"]
    assert report.winners["linf"].value == f"4024/{165**3}"
    by_id = {c.id: c for c in report.candidates}
    assert float(Fraction(by_id["T1"].l1)) == pytest.approx(0.24790e-1, abs=1e-5)
    assert float(Fraction(by_id["T2"].l1)) == pytest.approx(0.22681e-1, abs=1e-5)
    assert by_id["T1"].splits == ["matrix 0", "matrix 1", "matrix 2"]


def test_slavic_matrices(data_dir):
    report = rank_matrices(manifest_groups(data_dir / "slavic", 82))

    assert report.winners["l1"].id == "T3"
    assert report.winners["dist"].id == "T3"
    assert sorted(report.winners["linf"].tied) == ["T4", "T5"]
    assert float(Fraction(report.winners["l1"].value)) == pytest.approx(0.90864e-3, abs=1e-7)


def test_rescaling_keeps_every_winner(s1_dist, s1_trees, sswl_dist, s2_trees):
    for dist, trees in ((s1_dist, s1_trees), (sswl_dist, s2_trees)):
        base = rank(dist, trees, conditional=True)
        scaled = rank(dist.scaled(Fraction(7, 3)), trees, conditional=True)

        assert {c: w.id for c, w in scaled.winners.items()} == {c: w.id for c, w in base.winners.items()}
        assert scaled.agreement == base.agreement


def test_trees_are_aligned_to_the_distribution(s1_dist, s1_trees):
    reversed_trees = [(tid, parse_newick(write_newick(t), list(reversed(t.names)))) for tid, t in s1_trees]

    assert rank(s1_dist, reversed_trees, ["l1"]).winners["l1"].id == "bnb1"


def test_identical_candidates_are_flagged(quartet):
    dist = BoundaryDistribution(quartet.names, {0: Fraction(1)})

    report = rank(dist, [("a", quartet), ("b", quartet)], conditional=True)

    assert all("no_distinguishing_splits" in c.flags for c in report.candidates)
    assert report.winners["l1"].equivalent == ["b"]
    assert report.agreement == "consistent"


def test_ranking_errors(s1_dist, quartet):
    with pytest.raises(RankingError, match="no candidate"):
        rank(s1_dist, [])
    with pytest.raises(LeafMismatchError):
        rank(s1_dist, [quartet])
    with pytest.raises(RankingError, match="unique"):
        rank(s1_dist, [("x", quartet), ("x", quartet)])
    with pytest.raises(RankingError, match="no candidates"):
        rank_matrices({})


def test_plain_trees_get_default_ids(s1_dist, s1_trees):
    report = rank(s1_dist, [t for _, t in s1_trees[:3]], ["l1"])

    assert [c.id for c in report.candidates] == ["T1", "T2", "T3"]
    assert report.winners["l1"].id == "T2"


def test_render_table(s1_dist, s1_trees):
    text = render_table(rank(s1_dist, s1_trees, conditional=True))

    lines = text.splitlines()
    assert lines[0].startswith("dataset ") and lines[0].endswith("conditional=yes")
    assert lines[1].split() == ["id", "linf", "l1", "dist_sq_lb", "flags"]
    assert "22/18225 (0.12071e-2)" in lines[2]
    assert "  l1: bnb1 2719/364500 (0.74595e-2)  equivalent: pars2" in text
    assert text.endswith("agreement: consistent\n")
