from pathlib import Path

import pytest
import structlog

from src.dataset import (
    boundary_distribution,
    completely_mapped,
    count_patterns,
    load_distribution,
    load_table,
)
from src.settings import Settings, get_settings
from src.tree_model import parse_newick, parse_tree_file, read_leaf_order

DATA_DIR = Path(__file__).parent / "_data"


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    # Every test starts from defaults, whatever the developer's shell exports.
    for key in Settings.model_fields:
        monkeypatch.delenv(key, raising=False)
    monkeypatch.chdir(Path(__file__).parent)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    structlog.reset_defaults()


@pytest.fixture()
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture()
def settings() -> Settings:
    return get_settings()


@pytest.fixture()
def s1_dist():
    return load_distribution(DATA_DIR / "germanic_s1_counts.json")


@pytest.fixture()
def s1_trees(s1_dist):
    return parse_tree_file(DATA_DIR / "germanic_s1_trees.nwk", s1_dist.names)


@pytest.fixture()
def s2_order():
    return read_leaf_order(DATA_DIR / "germanic_s2.order")


@pytest.fixture()
def s2_trees(s2_order):
    return parse_tree_file(DATA_DIR / "germanic_s2_trees.nwk", s2_order)


@pytest.fixture()
def longobardi_table():
    return load_table(DATA_DIR / "longobardi_s2.tsv", dialect="langelin")


@pytest.fixture()
def longobardi_dist(longobardi_table, s2_order):
    return boundary_distribution(count_patterns(completely_mapped(longobardi_table, s2_order)))


@pytest.fixture()
def sswl_dist():
    return load_distribution(DATA_DIR / "sswl_s2_counts.json")


@pytest.fixture()
def early_ie_table():
    return load_table(DATA_DIR / "early_ie.tsv")


@pytest.fixture()
def quartet():
    return parse_newick("((A,B),(C,D));")
