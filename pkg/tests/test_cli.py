import json

import pytest

from src.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_json(capsys, data_dir):
    code, out, _ = run(
        capsys,
        "analyze",
        "--distribution", data_dir / "germanic_s1_counts.json",
        "--trees", data_dir / "germanic_s1_trees.nwk",
        "--conditional",
    )

    assert code == 0
    doc = json.loads(out)
    assert doc["conditional"] is True
    assert doc["winners"]["l1"]["id"] == "bnb1"
    assert doc["winners"]["l1"]["value"] == "2719/364500"
    assert doc["agreement"] == "consistent"
    assert [c["id"] for c in doc["candidates"]] == ["pars1", "pars2", "pars3", "bnb1", "bnb2", "bnb3"]


def test_analyze_table_from_a_trait_table(capsys, data_dir):
    code, out, _ = run(
        capsys,
        "analyze",
        "--data", data_dir / "early_ie.tsv",
        "--trees", data_dir / "early_ie_trees.nwk",
        "--criteria", "l1,dist",
        "--format", "table",
    )

    assert code == 0
    assert "conditional=no" in out.splitlines()[0]
    assert "  l1: rwt 18/1331" in out
    assert "  dist: rwt" in out
    assert out.endswith("agreement: consistent\n")


def test_analyze_matrix_manifest(capsys, data_dir):
    code, out, _ = run(capsys, "analyze", "--matrices", data_dir / "romance" / "manifest.tsv", "--denominator", 165)

    assert code == 0
    doc = json.loads(out)
    assert doc["winners"]["l1"]["id"] == "T2"
    assert doc["winners"]["linf"]["tied"] == ["T2"]
    assert doc["candidates"][0]["newick"] is None


def test_analyze_writes_to_out(capsys, data_dir, tmp_path):
    target = tmp_path / "report.json"

    code, out, _ = run(
        capsys,
        "analyze",
        "--distribution", data_dir / "sswl_s2_counts.json",
        "--leaf-order", data_dir / "germanic_s2.order",
        "--trees", data_dir / "germanic_s2_trees.nwk",
        "--conditional",
        "--out", target,
    )

    assert code == 0
    assert out == ""
    assert json.loads(target.read_text())["winners"]["dist"]["id"] == "T6"


def test_flatten_tsv(capsys, data_dir):
    code, out, _ = run(
        capsys,
        "flatten",
        "--distribution", data_dir / "germanic_s1_counts.json",
        "--split", "Dutch,German,Faroese,Icelandic",
    )

    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 16
    assert lines[0] == "4/9\t0\t1/45\t0"


def test_flatten_json(capsys, data_dir):
    code, out, _ = run(
        capsys,
        "flatten",
        "--distribution", data_dir / "germanic_s1_counts.json",
        "--split", "English,Swedish",
        "--format", "json",
    )

    assert code == 0
    doc = json.loads(out)
    assert doc["split"] == "{Dutch,German,Faroese,Icelandic}|{English,Swedish}"
    assert (doc["rows"], doc["cols"]) == (16, 4)
    assert doc["entries"][0][0] == "4/9"


def test_invariants_table(capsys, tmp_path):
    path = tmp_path / "flat.tsv"
    path.write_text("1 2 3 4\n2 4 6 8\n0 1 0 1\n1 3 3 5\n")

    code, out, _ = run(capsys, "invariants", "--matrix", path)

    assert code == 0
    assert out.splitlines() == ["linf\t0/1\t0", "l1\t0/1\t0", "minor_count\t16"]


def test_invariants_on_a_matrix_without_minors(capsys, tmp_path):
    path = tmp_path / "flat.tsv"
    path.write_text("1/2 0 0 0\n0 0 0 1/2\n")

    code, out, _ = run(capsys, "invariants", "--matrix", path)

    assert code == 0
    assert out.splitlines()[-1] == "note\tno 3x3 minors in a 2x4 matrix"


def test_distance_table(capsys, tmp_path):
    path = tmp_path / "flat.tsv"
    path.write_text("3 0 0\n0 2 0\n0 0 1\n")

    code, out, _ = run(capsys, "distance", "--matrix", path)

    assert code == 0
    assert out.splitlines() == ["singular_values\t0.30000e1\t0.20000e1\t0.10000e1", "dist_sq\t0.10000e1\trank=2"]


def test_distance_reports_a_repeated_singular_value(capsys, tmp_path):
    path = tmp_path / "flat.tsv"
    path.write_text("2 0 0\n0 1 0\n0 0 1\n")

    code, out, _ = run(capsys, "distance", "--matrix", path, "--format", "json")

    assert code == 0
    assert json.loads(out)["flags"] == ["nonunique_minimizer"]


def test_simulate_exact(capsys, data_dir):
    code, out, _ = run(capsys, "simulate", "--model", data_dir / "identity_model.json")

    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "distribution"
    assert doc["entries"] == {"0000": "1/3", "1111": "2/3"}


def test_simulate_samples_are_seeded(capsys, data_dir):
    argv = ("simulate", "--model", data_dir / "four_leaf_model.json", "--samples", 50, "--seed", 3)

    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)

    assert first == second
    doc = json.loads(first)
    assert doc["kind"] == "counts"
    assert sum(doc["entries"].values()) == 50
    assert doc["sampling"] == {"rng": "numpy.PCG64", "seed": 3}


def test_trees_enumerate(capsys):
    code, out, _ = run(capsys, "trees", "enumerate", "--leaves", "A,B,C,D,E")

    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 15
    assert lines[0].startswith("E1 (")


def test_trees_resolve(capsys, tmp_path):
    path = tmp_path / "trees.nwk"
    path.write_text("x ((A,B,C),D)\n")

    code, out, _ = run(capsys, "trees", "resolve", "--trees", path)

    assert code == 0
    assert [line.split()[0] for line in out.splitlines()] == ["x.1", "x.2", "x.3"]


def test_trees_ancient_move(capsys, data_dir):
    code, out, _ = run(
        capsys,
        "trees",
        "ancient-move",
        "--trees", data_dir / "germanic_s2_star.nwk",
        "--leaf-order", data_dir / "germanic_s2.order",
        "--ancient", "Gothic,Old_English",
        "--format", "json",
    )

    assert code == 0
    assert [t["id"] for t in json.loads(out)] == [f"star.{i}" for i in range(1, 7)]


def test_trees_graft(capsys, tmp_path):
    first = tmp_path / "a.nwk"
    first.write_text("a (A,(B,X))\n")
    second = tmp_path / "b.nwk"
    second.write_text("b (X,(C,D))\n")

    code, out, _ = run(capsys, "trees", "graft", "--trees", first, "--with", second, "--leaf", "X")

    assert code == 0
    [(tid, newick)] = [line.split() for line in out.splitlines()]
    assert tid == "a+b"
    assert "X" not in newick
    assert all(name in newick for name in "ABCD")


def test_missing_file_is_invalid_input(capsys, tmp_path):
    code, out, err = run(capsys, "invariants", "--matrix", tmp_path / "nope.tsv")

    assert code == 2
    assert out == ""
    assert err.startswith("error: file not found")
    assert '"code":"invalid_input"' in err


def test_leaf_mismatch_exit_code(capsys, data_dir):
    code, _, err = run(
        capsys,
        "analyze",
        "--distribution", data_dir / "germanic_s1_counts.json",
        "--trees", data_dir / "early_ie_trees.nwk",
    )

    assert code == 3
    assert '"code":"leaf_mismatch"' in err


@pytest.mark.parametrize(
    "argv, message",
    [
        (("analyze", "--matrices", "romance/manifest.tsv", "--denominator", "0"), "--denominator must be positive"),
        (("trees", "ancient-move", "--trees", "germanic_s2_star.nwk", "--ancient", "Gothic"), "exactly two"),
        (("analyze", "--distribution", "germanic_s1_counts.json"), "needs --trees"),
        (("analyze", "--trees", "germanic_s1_trees.nwk", "--criteria", "l2"), "unknown criterion"),
    ],
)
def test_invalid_arguments(capsys, monkeypatch, data_dir, argv, message):
    monkeypatch.chdir(data_dir)

    code, _, err = run(capsys, *argv)

    assert code == 2
    assert message in err


def test_invalid_settings_are_reported(capsys, monkeypatch):
    monkeypatch.setenv("MAX_ENUMERATION_LEAVES", "2")

    code, _, err = run(capsys, "trees", "enumerate", "--leaves", "A,B,C")

    assert code == 2
    assert "invalid settings" in err
