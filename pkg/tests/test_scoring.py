import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasrel.embeddings import EmbeddingModel, unit_normalize
from biasrel.resources import BasePair, WordList
from biasrel.scoring import (DegenerateVector, MissingWord, ScoringRule, aggregate_pair,
                             aggregate_query, aggregate_target, average_over_models,
                             compute_bias_tensor, score_dbwa, score_nbm, score_ripa)

from conftest import random_model
from oracles import cos, nbm_bruteforce

PAIR = BasePair("t0", "t1")


def _model(seed, V=40, d=5):
    return random_model(np.random.default_rng(seed), V, d)


def test_dbwa_and_ripa_definitions(rng):
    m = _model(0)
    w, a, b = m.vector("t5"), m.vector("t0"), m.vector("t1")
    assert score_dbwa(m, "t5", PAIR) == pytest.approx(cos(w, a) - cos(w, b), abs=1e-14)
    diff = a - b
    assert score_ripa(m, "t5", PAIR) == pytest.approx(w @ diff / np.linalg.norm(diff), abs=1e-14)


def test_missing_and_degenerate():
    m = _model(1)
    with pytest.raises(MissingWord):
        score_dbwa(m, "nope", PAIR)
    mat = m.matrix.copy()
    mat[7] = 0
    z = EmbeddingModel(m.vocab, mat)
    with pytest.raises(DegenerateVector):
        score_dbwa(z, "t7", PAIR)
    with pytest.raises(DegenerateVector):
        score_nbm(z, "t7", PAIR, k=5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.01, 100))
def test_antisymmetry_and_scale(seed, c):
    m = _model(seed)
    scaled = EmbeddingModel(m.vocab, m.matrix * c)
    rev = PAIR.reversed()
    for w in ("t3", "t9"):
        for fn in (score_dbwa, score_ripa):
            assert fn(m, w, PAIR) == pytest.approx(-fn(m, w, rev), abs=1e-12)
        assert score_nbm(m, w, PAIR, k=10) == -score_nbm(m, w, rev, k=10)
        assert score_dbwa(scaled, w, PAIR) == pytest.approx(score_dbwa(m, w, PAIR), abs=1e-10)
        assert score_ripa(scaled, w, PAIR) == pytest.approx(c * score_ripa(m, w, PAIR),
                                                            rel=1e-10, abs=1e-10)
        assert score_nbm(scaled, w, PAIR, k=10) == score_nbm(m, w, PAIR, k=10)


def test_unit_norm_bridge():
    m = unit_normalize(_model(3))
    gap = np.linalg.norm(m.vector("t0") - m.vector("t1"))
    for w in m.vocab[2:]:
        assert score_dbwa(m, w, PAIR) == pytest.approx(gap * score_ripa(m, w, PAIR), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_nbm_matches_bruteforce(seed):
    m = _model(seed, V=120, d=4)
    mat = np.array(m.matrix)
    for w in (2, 50, 119):
        got = score_nbm(m, m.vocab[w], PAIR, k=15)
        assert got == nbm_bruteforce(mat, w, 0, 1, 15)


def test_nbm_exclusions_and_pair_words():
    m = _model(8, V=60)
    mat = np.array(m.matrix)
    got = score_nbm(m, "t10", PAIR, k=8, exclusions=["t11", "t12"], exclude_pair_words=True)
    assert got == nbm_bruteforce(mat, 10, 0, 1, 8, banned={0, 1, 11, 12})


def test_nbm_tie_goes_to_lower_index():
    # words 3 and 4 are identical and tie at the k-th rank
    mat = np.array([[1, 0], [0, 1], [1, 0.1], [1, 0.5], [1, 0.5], [-1, 0.2]], dtype=float)
    m = EmbeddingModel(tuple(f"t{i}" for i in range(6)), mat)
    k = 2
    assert score_nbm(m, "t2", PAIR, k=k) == nbm_bruteforce(mat, 2, 0, 1, k)


def test_nbm_too_few_neighbours():
    with pytest.raises(ValueError):
        score_nbm(_model(2, V=10), "t3", PAIR, k=20)


@pytest.mark.parametrize("n_jobs", [1, 3])
def test_bias_tensor_matches_single_scores(small_ensemble, n_jobs):
    ens, res = small_ensemble
    rules = [ScoringRule("dbwa"), ScoringRule("ripa"), ScoringRule("nbm", 7)]
    targets = list(res.targets.words[:6]) + ["not_a_word"]
    B = compute_bias_tensor(ens, rules, res.pairs, targets, n_jobs=n_jobs)
    assert B.scores.shape == (3, len(res.pairs), 6, ens.k)
    assert ("target", "not_a_word", "not in aligned vocabulary") in B.missing
    for g, pair in enumerate(res.pairs):
        for t, w in enumerate(B.targets):
            for j, model in enumerate(ens.models):
                assert B.scores[0, g, t, j] == pytest.approx(score_dbwa(model, w, pair), abs=1e-12)
                assert B.scores[1, g, t, j] == pytest.approx(score_ripa(model, w, pair), abs=1e-12)
                assert B.scores[2, g, t, j] == score_nbm(model, w, pair, k=7)


def test_nbm_values_on_grid(small_ensemble):
    ens, res = small_ensemble
    k = 9
    B = compute_bias_tensor(ens, [ScoringRule("nbm", k)], res.pairs, res.targets)
    scaled = B.scores[0] * k
    np.testing.assert_array_equal(scaled, np.round(scaled))
    assert np.all(np.abs(B.scores) <= 1)


def test_missing_pair_dropped(small_ensemble):
    ens, res = small_ensemble
    pairs = list(res.pairs) + [BasePair("m0", "ghost")]
    B = compute_bias_tensor(ens, [ScoringRule("dbwa")], pairs, res.targets)
    assert len(B.pairs) == len(res.pairs)
    assert any(m[0] == "pair" and m[1] == "m0/ghost" for m in B.missing)


def test_cube_and_aggregates(small_ensemble):
    ens, res = small_ensemble
    B = compute_bias_tensor(ens, [ScoringRule("dbwa"), ScoringRule("nbm", 5)], res.pairs,
                            res.targets)
    cube = average_over_models(B)
    np.testing.assert_allclose(cube.scores, B.scores.mean(axis=3), atol=1e-12, rtol=0)
    w = B.targets[4]
    assert aggregate_target(cube, "dbwa", w) == pytest.approx(cube.scores[0, :, 4].mean(), abs=1e-12)
    assert aggregate_pair(cube, "nbm", res.pairs[1]) == pytest.approx(cube.scores[1, 1].mean(),
                                                                     abs=1e-12)
    q = WordList("q", B.targets[:3])
    assert aggregate_query(cube, "dbwa", q) == pytest.approx(cube.scores[0][:, :3].mean(), abs=1e-12)


def test_rule_validation():
    with pytest.raises(ValueError):
        ScoringRule("weat")
    with pytest.raises(ValueError):
        ScoringRule("nbm", 0)
    assert ScoringRule("nbm", 100).label == "nbm"
