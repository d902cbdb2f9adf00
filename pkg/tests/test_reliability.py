import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from biasrel.reliability import (ALPHA, ICC21, ICC31, RatingsMatrix, band,
                                 build_interrater_matrices, build_pair_ensemble_matrices,
                                 build_query_matrices, build_retest_matrices, cronbach_alpha,
                                 evaluate, icc21, icc31, two_way_anova)
from biasrel.resources import WordList
from biasrel.scoring import ScoringRule, average_over_models, compute_bias_tensor

from oracles import alpha_oracle, anova_loops, icc_oracle


def _random(rng, n=None, r=None):
    n = n or int(rng.integers(3, 31))
    r = r or int(rng.integers(2, 17))
    rows = rng.standard_normal((n, 1)) * rng.uniform(0, 3)
    cols = rng.standard_normal((1, r)) * rng.uniform(0, 1)
    return rows + cols + rng.standard_normal((n, r))


matrices = st.integers(0, 2**32 - 1).map(lambda s: _random(np.random.default_rng(s)))


@pytest.mark.parametrize("seed", range(25))
def test_oracle_agreement(seed):
    x = _random(np.random.default_rng(seed))
    i2, i3 = icc_oracle(x)
    assert icc21(x).value == pytest.approx(i2, abs=1e-10)
    assert icc31(x).value == pytest.approx(i3, abs=1e-10)
    assert cronbach_alpha(x).value == pytest.approx(alpha_oracle(x), abs=1e-10)
    ssr, ssc, sse, sst = anova_loops(x)
    a = two_way_anova(x)
    assert (a.ss_rows, a.ss_cols, a.ss_error) == pytest.approx((ssr, ssc, sse), rel=1e-10)
    assert a.ss_rows + a.ss_cols + a.ss_error == pytest.approx(a.ss_total, rel=1e-9)


def test_anova_degrees_of_freedom():
    a = two_way_anova(np.arange(12.0).reshape(4, 3) ** 1.5)
    assert (a.df_rows, a.df_cols, a.df_error) == (3, 2, 6)
    assert a.ms_error == pytest.approx(a.ss_error / 6)


@settings(max_examples=60, deadline=None)
@given(matrices, st.floats(-50, 50), st.floats(0.01, 100))
def test_affine_invariance(x, shift, scale):
    for fn in (icc21, icc31, cronbach_alpha):
        base = fn(x).value
        assert fn(x + shift).value == pytest.approx(base, abs=1e-10)
        assert fn(x * scale).value == pytest.approx(base, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(0, 1000))
def test_permutation_invariance(x, seed):
    rng = np.random.default_rng(seed)
    xr = x[rng.permutation(x.shape[0])]
    xc = x[:, rng.permutation(x.shape[1])]
    for fn in (icc21, icc31, cronbach_alpha):
        assert fn(xr).value == pytest.approx(fn(x).value, abs=1e-10)
        assert fn(xc).value == pytest.approx(fn(x).value, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(0, 1000))
def test_column_offsets(x, seed):
    rng = np.random.default_rng(seed)
    offsets = rng.normal(0, 5, size=x.shape[1])
    assert icc31(x + offsets).value == pytest.approx(icc31(x).value, abs=1e-10)
    # amplifying the existing column spread can only grow the ICC(2,1) denominator
    spread = x.mean(axis=0) - x.mean()
    lam = rng.uniform(0.1, 10)
    before, after = icc21(x).value, icc21(x + lam * spread).value
    if before >= 0:
        assert after <= before + 1e-12
    else:
        assert after >= before - 1e-12


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_alpha_covariance_identity(x):
    r = x.shape[1]
    c = np.cov(x, rowvar=False)
    expected = r / (r - 1) * (1 - np.trace(c) / c.sum())
    assert cronbach_alpha(x).value == pytest.approx(expected, abs=1e-10)


def test_noise_monotonicity():
    rng = np.random.default_rng(7)
    row_effect = rng.standard_normal((200, 1))
    noise = rng.standard_normal((200, 16))
    values = [icc21(row_effect + s * noise).value for s in (0.0, 0.1, 0.5, 2.0)]
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_trivial_values():
    col = np.arange(1.0, 9.0)[:, None]
    same = np.repeat(col, 4, axis=1)
    for fn in (icc21, icc31, cronbach_alpha):
        s = fn(same)
        assert s.value == pytest.approx(1.0, abs=1e-12) and not s.degenerate
        c = fn(np.full((5, 3), 2.5))
        assert c.degenerate and math.isnan(c.value) and c.band == "undefined"
        z = fn(np.zeros((5, 3)))
        assert z.degenerate


def test_negative_values_reported():
    # rows anti-correlated across columns
    x = np.array([[1.0, -0.9], [-1.0, 0.9], [2.0, -1.8], [-2.0, 1.8]])
    assert icc31(x).value < 0
    assert cronbach_alpha(x).value < 0
    assert icc31(x).band == "poor"


@pytest.mark.parametrize("value,label", [(0.49, "poor"), (0.5, "moderate"), (0.7499, "moderate"),
                                         (0.75, "good"), (0.8999, "good"), (0.9, "excellent"),
                                         (-0.3, "poor")])
def test_icc_bands(value, label):
    assert band(value, ICC21) == label
    assert band(value, ICC31) == label


def test_alpha_bands():
    assert band(0.7, ALPHA) == "acceptable"
    assert band(0.6999, ALPHA) == "unacceptable"
    assert band(float("nan"), ALPHA) == "undefined"
    with pytest.raises(ValueError):
        band(0.5, "kappa")


def test_matrix_validation():
    with pytest.raises(ValueError):
        RatingsMatrix(np.ones((1, 3)))
    with pytest.raises(ValueError):
        RatingsMatrix(np.array([[1.0, np.nan], [1.0, 2.0]]))


def test_builders(small_ensemble):
    ens, res = small_ensemble
    rules = [ScoringRule("dbwa"), ScoringRule("ripa"), ScoringRule("nbm", 6)]
    targets = res.targets.words[:10]
    B = compute_bias_tensor(ens, rules, res.pairs, list(targets) + list(res.queries[0].words))
    cube = average_over_models(B)
    g, k = len(res.pairs), ens.k

    rt = build_retest_matrices(B, WordList("t", targets))
    per_target = [m for m in rt.matrices if m.unit_type == "target"]
    per_pair = [m for m in rt.matrices if m.unit_type == "pair"]
    assert len(per_target) == 3 * 10 and len(per_pair) == 3 * g
    assert per_target[0].shape == (g, k) and per_pair[0].shape == (10, k)
    t0 = B.targets.index(per_target[0].unit)
    np.testing.assert_array_equal(per_target[0].values, B.scores[0, :, t0, :])

    ir = build_interrater_matrices(cube, targets)
    assert {m.shape for m in ir.matrices if m.unit_type == "target"} == {(g, 3)}
    z = build_interrater_matrices(cube, targets, zscore=True)
    zp = [m for m in z.matrices if m.unit_type == "pair"][0].values
    np.testing.assert_allclose(zp.mean(axis=0), 0, atol=1e-12)
    assert evaluate(z, ICC31)[0].estimator == ICC31

    q = build_query_matrices(cube, [res.queries[0], WordList("partial", ("c0_0", "c0_1", "gone"))])
    assert [m.shape for m in q.matrices][:2] == [(g, 8), (g, 2)]
    assert ("query_words", "partial", "dbwa", "absent: gone") in q.skipped
    pe = build_pair_ensemble_matrices(cube, targets)
    assert [m.shape for m in pe.matrices] == [(10, g)] * 3


def test_small_units_are_skipped(small_ensemble):
    ens, res = small_ensemble
    B = compute_bias_tensor(ens, [ScoringRule("dbwa")], res.pairs[:1], res.targets.words[:5])
    rt = build_retest_matrices(B)
    # one base pair: per-target matrices would be 1 x k
    assert [m.unit_type for m in rt.matrices] == ["pair"]
    assert len(rt.skipped) == 5
    assert all("below 2 x 2" in s[3] for s in rt.skipped)
