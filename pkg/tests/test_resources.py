import pytest

from biasrel.resources import (BUNDLED_LISTS, BUNDLED_QUERIES, SINGULAR_PLURAL, BasePair, WordList,
                               bundled_basepairs, bundled_list, bundled_queries, read_basepairs,
                               read_table, read_wordlist)


def test_bundled_counts():
    assert len(bundled_basepairs()) == 23
    sizes = {name: len(bundled_list(name)) for name in BUNDLED_LISTS}
    assert sizes == {"occ16": 320, "occ18": 76, "adj": 230}
    qs = bundled_queries()
    assert [q.name for q in qs] == list(BUNDLED_QUERIES)
    assert all(len(q) == 8 for q in qs)


def test_singular_plural_pairs_bundled():
    labels = {p.label for p in bundled_basepairs()}
    assert len(SINGULAR_PLURAL) == 8
    for s, p in SINGULAR_PLURAL.items():
        assert s in labels and p in labels


def test_basepair_validation():
    assert BasePair("He", "SHE").label == "he/she"
    assert BasePair("he", "she").reversed() == BasePair("she", "he")
    with pytest.raises(ValueError):
        BasePair("x", "x")


def test_wordlist_dedup_and_empty():
    assert WordList("a", ("X", "x", "y")).words == ("x", "y")
    with pytest.raises(ValueError):
        WordList("a", ())


def test_readers(tmp_path):
    p = tmp_path / "pairs.tsv"
    p.write_text("# comment\nman\twoman\n\nboy\tgirl\n")
    assert [b.label for b in read_basepairs(p)] == ["man/woman", "boy/girl"]
    bad = tmp_path / "bad.tsv"
    bad.write_text("man woman\n")
    with pytest.raises(ValueError):
        read_basepairs(bad)
    w = tmp_path / "jobs.txt"
    w.write_text("nurse\nengineer\n")
    assert read_wordlist(w).name == "jobs"
    t = tmp_path / "counts.tsv"
    t.write_text("nurse\t10\nengineer\t20\n")
    assert read_table(t, float) == {"nurse": 10.0, "engineer": 20.0}
