import numpy as np
import pytest

from motionweave import corpus
from motionweave import vae as V
from motionweave.errors import DivergenceError
from motionweave.motion import MotionSequence
from motionweave.nn import tensor as T
from motionweave.nn.gradcheck import check_gradients


@pytest.fixture(scope="module")
def entries():
    return corpus.generate_corpus(2, 30)


@pytest.fixture(scope="module")
def fresh_vae():
    return V.MotionVae(V.VaeConfig(level="m", seed=0),
                       np.random.default_rng(0))


def test_level_token_counts():
    assert V.LEVEL_TOKENS == {"m": 2, "a": 4, "s": 8}
    for level in "mas":
        cfg = V.VaeConfig(level=level)
        assert cfg.latent_tokens == V.LEVEL_TOKENS[level]
    with pytest.raises(ValueError):
        V.VaeConfig(level="x")


def test_encode_shapes_and_determinism(fresh_vae, entries):
    mean1, logvar1 = fresh_vae.encode(entries[0].motion)
    mean2, logvar2 = fresh_vae.encode(entries[0].motion)
    assert mean1.shape == (2, 32) and logvar1.shape == (2, 32)
    assert np.array_equal(mean1, mean2)
    assert np.all(np.isfinite(mean1)) and np.all(np.isfinite(logvar1))


def test_encode_rejects_overlong(fresh_vae):
    frames = np.zeros((241, 104))
    with pytest.raises(ValueError, match="max"):
        fresh_vae.encode(MotionSequence(frames, 20.0))


def test_sample_latent_degenerate_variance(fresh_vae, entries):
    mean, _ = fresh_vae.encode(entries[0].motion)
    z = V.sample_latent(mean, np.full_like(mean, -1e9), seed=0)
    assert np.abs(z - mean).max() < 1e-6


def test_sample_latent_seeded(fresh_vae, entries):
    mean, logvar = fresh_vae.encode(entries[0].motion)
    assert np.array_equal(V.sample_latent(mean, logvar, 7),
                          V.sample_latent(mean, logvar, 7))
    assert not np.array_equal(V.sample_latent(mean, logvar, 7),
                              V.sample_latent(mean, logvar, 8))


def test_sample_latent_monte_carlo_mean():
    mean = np.array([[0.5, -1.0], [2.0, 0.0]])
    logvar = np.full((2, 2), np.log(0.25))
    draws = np.stack([V.sample_latent(mean, logvar, s) for s in range(10000)])
    stderr = 0.5 / np.sqrt(10000)
    assert np.abs(draws.mean(axis=0) - mean).max() < 3 * stderr


def test_decode_contracts(fresh_vae, entries):
    mean, _ = fresh_vae.encode(entries[0].motion)
    one = fresh_vae.decode(mean, 1)
    assert one.frames.shape == (1, 104)
    a = fresh_vae.decode(mean, 17)
    b = fresh_vae.decode(mean, 17)
    assert np.array_equal(a.frames, b.frames)
    with pytest.raises(ValueError, match="level"):
        fresh_vae.decode(np.zeros((8, 32)), 10)
    with pytest.raises(ValueError, match="length"):
        fresh_vae.decode(mean, 0)
    with pytest.raises(ValueError, match="length"):
        fresh_vae.decode(mean, 500)


def test_zero_epochs_returns_init(entries):
    cfg = V.VaeConfig(level="a", epochs=0, seed=5)
    a = V.train_vae(entries, cfg).vae
    b = V.train_vae(entries, cfg).vae
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(pa.data, pb.data)


def test_training_curve_improves(entries):
    result = V.train_vae(entries, V.VaeConfig(level="s", epochs=6, seed=0))
    assert all(np.isfinite(v) for v in result.curve)
    assert result.curve[-1] < result.curve[0]


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        V.train_vae([], V.VaeConfig())


def test_kl_nonnegative(entries):
    cfg = V.VaeConfig(level="m", epochs=0, seed=0, dtype="float64")
    vae = V.MotionVae(cfg, np.random.default_rng(0))
    frames = [e.motion.frames for e in entries[:4]]
    eps = np.random.default_rng(1).standard_normal((4, 2, 32))
    total, recon, kl = V.vae_loss(vae, frames, eps)
    assert float(kl.data) >= 0.0
    assert np.isfinite(float(total.data))


def test_vae_gradients_match_fd():
    cfg = V.VaeConfig(level="m", latent_dim=4, width=8, layers=1, heads=2,
                      frame_dim=6, max_frames=12, enc_max_frames=8,
                      dtype="float64")
    vae = V.MotionVae(cfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    frames = [rng.standard_normal((5, 6)), rng.standard_normal((3, 6))]
    eps = rng.standard_normal((2, 2, 4))

    def build():
        total, _, _ = V.vae_loss(vae, frames, eps)
        return total

    assert check_gradients(build, vae.parameters()) < 1e-4


def test_reconstruction_error_batched_matches_single(entries):
    result = V.train_vae(entries[:8], V.VaeConfig(level="m", epochs=2, seed=0))
    vae = result.vae
    got = V.reconstruction_error(vae, entries[:8], batch_size=3)
    manual = []
    for e in entries[:8]:
        mean, _ = vae.encode(e.motion)
        recon = vae.decode(mean, len(e.motion), e.motion.fps)
        manual.append(float(np.abs(recon.frames - e.motion.frames).mean()))
    assert got == pytest.approx(np.mean(manual), rel=1e-4)
