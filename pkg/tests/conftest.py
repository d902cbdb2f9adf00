import numpy as np
import pytest

from biasrel.embeddings import EmbeddingModel
from biasrel.synth import synth_ensemble


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_ensemble():
    return synth_ensemble(vocab_size=120, d=8, k=3, noise_sigma=0.1, seed=5)


def random_model(rng, V=50, d=6, prefix="t"):
    vocab = tuple(f"{prefix}{i}" for i in range(V))
    return EmbeddingModel(vocab, rng.standard_normal((V, d)), label=prefix)


def planted_effects(rng, q, var):
    # centred and rescaled so the realised variance equals ``var``
    b = rng.normal(size=q)
    if q < 2 or var == 0:
        return np.zeros(q)
    b -= b.mean()
    return b * np.sqrt(var / np.mean(b ** 2))


def lmm_data(seed=7, n=20000, qa=6, qc=6, p=8, s2_nu=0.3, s2_mu=0.2, s2_eps=1.0):
    from biasrel.mixed_model import Column, RegressionDataset
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = np.linspace(-1.0, 1.5, p)
    a = rng.integers(0, qa, n)
    c = rng.integers(0, qc, n)
    y = (X @ beta + planted_effects(rng, qa, s2_nu)[a] + planted_effects(rng, qc, s2_mu)[c]
         + rng.normal(scale=np.sqrt(s2_eps), size=n))
    cols = (Column("intercept", "intercept", "intercept"),) + tuple(
        Column(f"x{i}", "continuous", f"x{i}") for i in range(1, p))
    ds = RegressionDataset(y, X, cols, a, c, tuple(f"a{i}" for i in range(qa)),
                           tuple(f"c{i}" for i in range(qc)))
    return ds, beta
