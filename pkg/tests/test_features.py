import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasrel.alignment import embedding_stability
from biasrel.embeddings import EmbeddingModel
from biasrel.features import (build_feature_table, nn_similarity, paired_t_test, pearson_r,
                              singular_plural_test, t_sf_two_sided)
from biasrel.resources import SINGULAR_PLURAL

from oracles import cos, t_sf_quadrature


@pytest.mark.parametrize("t,df", [(0.0, 5), (0.5, 1), (1.3, 3), (2.45, 7), (4.0, 30), (-2.0, 12),
                                  (8.0, 2)])
def test_t_tail_matches_quadrature(t, df):
    assert t_sf_two_sided(t, df) == pytest.approx(t_sf_quadrature(t, df), rel=1e-9, abs=1e-14)


def test_t_tail_shape():
    assert t_sf_two_sided(0.0, 4) == 1.0
    grid = [t_sf_two_sided(t, 6) for t in np.linspace(0, 10, 101)]
    assert all(a > b for a, b in zip(grid, grid[1:]))
    assert t_sf_two_sided(math.inf, 3) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    base = pearson_r(x, y)
    assert pearson_r(a * x + b, y).r == pytest.approx(base.r, abs=1e-10)
    assert pearson_r(x, a * y + b).r == pytest.approx(base.r, abs=1e-10)
    assert pearson_r(-a * x + b, y).r == pytest.approx(-base.r, abs=1e-10)
    assert base.r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_edge_cases():
    assert not pearson_r([1, 1, 1], [1, 2, 3]).defined
    perfect = pearson_r([1, 2, 3, 4], [2, 4, 6, 8])
    assert perfect.r == 1.0 and perfect.p_two_sided == 0.0
    with pytest.raises(ValueError):
        pearson_r([1, 2], [1, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_paired_t_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(8), rng.standard_normal(8)
    a, b = paired_t_test(x, y), paired_t_test(y, x)
    assert a.t_stat == -b.t_stat and a.p_two_sided == b.p_two_sided
    d = x - y
    assert a.t_stat == pytest.approx(d.mean() / (d.std(ddof=1) / math.sqrt(8)), rel=1e-12)
    assert a.df == 7


def test_paired_t_constant_difference():
    assert not paired_t_test([1, 2, 3], [0, 1, 2]).defined


def test_singular_plural():
    rng = np.random.default_rng(0)
    scores = {}
    for i, (s, p) in enumerate(SINGULAR_PLURAL.items()):
        scores[s] = list(0.9 + 0.01 * rng.standard_normal(5))
        scores[p] = list(0.7 + 0.01 * rng.standard_normal(5))
    res = singular_plural_test(scores)
    assert res.df == 7 and res.t_stat > 10
    xs = [np.median(scores[s]) for s in SINGULAR_PLURAL]
    ys = [np.median(scores[p]) for p in SINGULAR_PLURAL.values()]
    assert res.t_stat == pytest.approx(paired_t_test(xs, ys).t_stat, rel=1e-12)
    assert singular_plural_test(scores, "mean").df == 7


def test_nn_similarity(rng):
    mat = rng.standard_normal((10, 3))
    m = EmbeddingModel(tuple(f"w{i}" for i in range(10)), mat)
    best = max(cos(mat[2], mat[j]) for j in range(10) if j != 2)
    assert nn_similarity(m, "w2") == pytest.approx(best, abs=1e-12)
    assert nn_similarity(m, "w2") < 1.0
    mat2 = mat.copy()
    mat2[7] = 2.0 * mat2[2]
    mat2[4] = 0.0
    m2 = EmbeddingModel(m.vocab, mat2)
    assert nn_similarity(m2, "w2") == pytest.approx(1.0, abs=1e-12)
    assert math.isnan(nn_similarity(m2, "w4"))


def test_feature_table(small_ensemble, tmp_path):
    ens, res = small_ensemble
    stab = embedding_stability(ens)
    counts = dict(res.counts)
    counts["w00"] = 0.0
    words = list(res.targets.words[:6]) + ["absent"]
    pos_path = tmp_path / "pos.tsv"
    pos_path.write_text("".join(f"{w}\t{res.pos[w]}\n" for w in words[:3]))
    ft = build_feature_table(ens, words, counts, res.senses, pos_path, stab)
    assert ft.words == tuple(words[:6])
    c = ft.columns
    assert math.isnan(c["log_freq"][0])
    assert c["log_freq"][1] == pytest.approx(math.log(res.counts["w01"]))
    assert c["log2_freq"][1] == pytest.approx(c["log_freq"][1] ** 2)
    assert c["log_senses"][2] == pytest.approx(math.log(res.senses["w02"]))
    assert c["es"][3] == stab.as_dict()["w03"]
    norms = [np.linalg.norm(m.vector("w03")) for m in ens.models]
    assert c["l2_norm"][3] == pytest.approx(np.mean(norms))
    nn = [nn_similarity(m, "w03") for m in ens.models]
    assert c["nn_sim"][3] == pytest.approx(np.mean(nn))
    assert ft.pos[:3] == [res.pos[w] for w in words[:3]] and ft.pos[3] is None
    assert ft.complete().tolist() == [False, True, True, False, False, False]
    assert ft.row("w01")["pos"] == res.pos["w01"]
