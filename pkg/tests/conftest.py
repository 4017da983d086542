import numpy as np
import pytest

from motionweave import corpus, embedding
from motionweave import pipeline as P
from motionweave import vae as V


@pytest.fixture(scope="session")
def small_corpus():
    return corpus.generate_corpus(1, 120)


@pytest.fixture(scope="session")
def tiny_models(small_corpus):
    """Cheap end-to-end models for unit tests (not quality-bearing)."""
    space = embedding.train_contrastive(
        small_corpus, embedding.EmbedderConfig(epochs=12, seed=0))
    vaes = {}
    for level in "mas":
        result = V.train_vae(small_corpus,
                             V.VaeConfig(level=level, epochs=6, seed=0))
        vaes[level] = result.vae
    diff = P.train_diffusion(small_corpus, space, vaes,
                             P.DiffusionConfig(epochs=6, seed=0))
    return P.ModelBundle(space, vaes, diff.model, diff.schedule,
                         corpus=small_corpus)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
