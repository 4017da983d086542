import numpy as np
import pytest

from motionweave import corpus, diffusion as D, embedding, semgraph
from motionweave import pipeline as P
from motionweave import vae as V
from motionweave.gat import graph_edges
from motionweave.nn import tensor as T
from motionweave.nn.gradcheck import check_gradients


@pytest.fixture(scope="module")
def fresh_model():
    return P.HierarchicalDenoisers(P.DiffusionConfig(seed=0),
                                   np.random.default_rng(0))


@pytest.fixture(scope="module")
def cond_setup(tiny_models):
    graph = semgraph.parse("a person walks forward and jumps")
    v = tiny_models.space.init_graph_nodes(graph)
    return graph, v


def test_predict_eps_shapes_and_null(fresh_model, cond_setup):
    graph, v = cond_setup
    z = np.zeros((2, 32))
    out = P.predict_eps(fresh_model, "m", z, 500, None)
    assert out.shape == (2, 32)
    cond = P.Conditioning(graph, v)
    out2 = P.predict_eps(fresh_model, "m", z, 500, cond)
    assert out2.shape == (2, 32)
    assert not np.allclose(out, out2)


def test_predict_eps_deterministic(fresh_model, cond_setup):
    graph, v = cond_setup
    cond = P.Conditioning(graph, v, np.ones((2, 32)))
    z = np.random.default_rng(1).standard_normal((4, 32))
    a = P.predict_eps(fresh_model, "a", z, 77, cond)
    b = P.predict_eps(fresh_model, "a", z, 77, cond)
    assert np.array_equal(a, b)


def test_predict_eps_conditioning_arity(fresh_model, cond_setup):
    graph, v = cond_setup
    z_a = np.zeros((4, 32))
    with pytest.raises(ValueError, match="requires the motion-level latent"):
        P.predict_eps(fresh_model, "a", z_a, 10, P.Conditioning(graph, v))
    with pytest.raises(ValueError, match="takes no latent"):
        P.predict_eps(fresh_model, "m", np.zeros((2, 32)), 10,
                      P.Conditioning(graph, v, np.zeros((2, 32))))
    with pytest.raises(ValueError, match="expected 2"):
        P.predict_eps(fresh_model, "a", z_a, 10,
                      P.Conditioning(graph, v, np.zeros((4, 32))))
    with pytest.raises(ValueError, match="latent shape"):
        P.predict_eps(fresh_model, "a", np.zeros((2, 32)), 10,
                      P.Conditioning(graph, v, np.zeros((2, 32))))
    with pytest.raises(ValueError, match="unknown level"):
        fresh_model.level("x")


def test_conditioning_latent_sensitivity(fresh_model, cond_setup):
    """Perturbing the motion-level latent changes the action-level output."""
    graph, v = cond_setup
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4, 32))
    changed = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        zm = r.standard_normal((2, 32))
        a = P.predict_eps(fresh_model, "a", z, 50,
                          P.Conditioning(graph, v, zm))
        b = P.predict_eps(fresh_model, "a", z, 50,
                          P.Conditioning(graph, v, zm + 0.1))
        if not np.allclose(a, b):
            changed += 1
    assert changed == 20


def test_init_loss_scale(small_corpus, tiny_models):
    """At init each level's loss is near its latent dimensionality."""
    config = P.DiffusionConfig(seed=3, epochs=0)
    model = P.HierarchicalDenoisers(config, np.random.default_rng(3))
    schedule = D.make_schedule()
    rng = np.random.default_rng(0)
    entries = small_corpus[:8]
    graphs, feats, edges = P.prepare_conditioning(entries, tiny_models.space)
    for level, prev in (("m", None), ("a", "m"), ("s", "a")):
        q = P.LEVEL_TOKENS[level]
        dim = q * config.latent_dim
        losses = []
        for i, e in enumerate(entries):
            z0, _ = tiny_models.vaes[level].encode(e.motion)
            t = int(rng.integers(1, 1001))
            eps = rng.standard_normal(z0.shape)
            z_t = D.q_sample(z0, t, eps, schedule)
            prev_lat = None if prev is None \
                else tiny_models.vaes[prev].encode(e.motion)[0]
            cond = P.Conditioning(graphs[i], feats[i], prev_lat)
            eps_hat = P.predict_eps(model, level, z_t, t, cond)
            losses.append(((eps - eps_hat) ** 2).sum())
        mean = np.mean(losses)
        assert np.isfinite(mean)
        assert 0.3 * dim < mean < 3.0 * dim


def test_dropout_boundaries(small_corpus, tiny_models):
    """dropout=1 trains unconditioned only: the null token must move while
    the node projection stays frozen; dropout=0 moves the node projection."""
    entries = small_corpus[:12]
    vaes = tiny_models.vaes
    for p_drop, null_moves, proj_moves in ((1.0, True, False),
                                           (0.0, False, True)):
        cfg = P.DiffusionConfig(seed=5, epochs=1, cfg_dropout=p_drop,
                                batch_size=6)
        before = P.HierarchicalDenoisers(cfg, np.random.default_rng(
            np.random.SeedSequence(5, spawn_key=(301,))))
        result = P.train_diffusion(entries, tiny_models.space, vaes, cfg)
        after = result.model
        d_null = np.abs(after.null_token.data - before.null_token.data).max()
        d_proj = np.abs(after.m.node_proj.weight.data
                        - before.m.node_proj.weight.data).max()
        assert (d_null > 0) == null_moves
        assert (d_proj > 0) == proj_moves


def test_sampling_determinism_and_shapes(tiny_models):
    plan = P.SamplingPlan(steps=(6, 6, 6), seed=3)
    text = "a person walks forward and raises both arms"
    m1, d1 = P.sample(text, plan, tiny_models)
    m2, d2 = P.sample(text, plan, tiny_models)
    assert np.array_equal(m1.frames, m2.frames)
    assert d1.latents["m"].shape == (2, 32)
    assert d1.latents["a"].shape == (4, 32)
    assert d1.latents["s"].shape == (8, 32)
    assert m1.frames.shape[1] == 104
    assert len(d1.lambdas) == 2
    long_text = ("a person walks forward and raises both arms and jumps "
                 "and crouches down")
    m3, d3 = P.sample(long_text, plan, tiny_models)
    assert d3.latents["s"].shape == (8, 32)


def test_rho_zero_bitwise_equals_unguided(tiny_models):
    text = "a person walks forward and jumps"
    plan_g = P.SamplingPlan(steps=(5, 5, 5), seed=9, rho=0.01)
    plan_u = P.SamplingPlan(steps=(5, 5, 5), seed=9, rho=0.0)
    m_g, d_g = P.sample(text, plan_g, tiny_models)
    m_u, d_u = P.sample(text, plan_u, tiny_models)
    assert not np.array_equal(m_g.frames, m_u.frames)
    assert d_u.final_energies == []
    m_z, _ = P.sample(text, P.SamplingPlan(steps=(5, 5, 5), seed=9, rho=0.01),
                      tiny_models, weight_multipliers=[0.0, 0.0])
    assert np.array_equal(m_z.frames, m_u.frames)


def test_guided_energy_descent_recorded(tiny_models):
    text = "a person walks forward and jumps"
    plan = P.SamplingPlan(steps=(8, 8, 8), seed=2, rho=0.01)
    _, diag = P.sample(text, plan, tiny_models)
    assert len(diag.energy_trace) == 8
    assert all(len(row) == 2 for row in diag.energy_trace)
    assert len(diag.final_energies) == 2
    assert all(e >= 0 for e in diag.final_energies)


def test_sample_errors(tiny_models):
    with pytest.raises(Exception):
        P.sample("the quick brown fox", P.SamplingPlan(), tiny_models)
    with pytest.raises(ValueError, match="references"):
        P.sample("a person walks forward and jumps",
                 P.SamplingPlan(steps=(4, 4, 4), seed=0), tiny_models,
                 refs=[np.zeros((4, 32))])
    with pytest.raises(ValueError):
        P.SamplingPlan(steps=(0, 5, 5)).validate(1000)
    with pytest.raises(ValueError):
        P.SamplingPlan(mode="warp").validate(1000)


def test_sample_local_action(tiny_models):
    plan = P.SamplingPlan(steps=(6, 6, 1), seed=1)
    motion, latent = P.sample_local_action("a person jumps", plan,
                                           tiny_models, length=40)
    assert latent.shape == (4, 32)
    assert motion.frames.shape == (40, 104)
    motion2, latent2 = P.sample_local_action("a person jumps", plan,
                                             tiny_models, length=40)
    assert np.array_equal(motion.frames, motion2.frames)
    feats = [P.sample_local_action("a person walks forward",
                                   P.SamplingPlan(steps=(6, 6, 1), seed=s),
                                   tiny_models)[0] for s in range(3)]
    mats = tiny_models.space.motion_features(feats)
    d01 = np.linalg.norm(mats[0] - mats[1])
    d02 = np.linalg.norm(mats[0] - mats[2])
    assert d01 > 0 and d02 > 0


def test_retrieve_exemplar(tiny_models):
    seg_desc = tiny_models.corpus[0].local_actions[0].description
    hit = P.retrieve_exemplar(seg_desc, tiny_models)
    assert hit.description == seg_desc
    assert hit.latent.shape == (4, 32)
    with pytest.raises(ValueError, match="known tokens"):
        P.retrieve_exemplar("zzz qqq", tiny_models)
    flagged = P.retrieve_exemplar("zzz qqq", tiny_models, on_oov="flag")
    assert flagged.confidence == 0.0
    empty = P.ModelBundle(tiny_models.space, tiny_models.vaes,
                          tiny_models.denoisers, tiny_models.schedule)
    with pytest.raises(ValueError, match="corpus"):
        P.retrieve_exemplar("a person walks", empty)


def test_retrieval_family_accuracy(tiny_models):
    """Templated held-out queries retrieve a same-verb segment."""
    held = corpus.generate_corpus(77, 40)
    hits = 0
    total = 0
    for e in held:
        for seg in e.local_actions:
            verb = semgraph.parse(seg.description).action_nodes[0].text
            got = P.retrieve_exemplar(seg.description, tiny_models)
            got_verb = semgraph.parse(got.description).action_nodes[0].text
            hits += got_verb == verb
            total += 1
    assert hits / total >= 0.9


def test_training_reduces_loss(small_corpus, tiny_models):
    cfg = P.DiffusionConfig(seed=0, epochs=3, batch_size=12)
    res = P.train_diffusion(small_corpus[:24], tiny_models.space,
                            tiny_models.vaes, cfg)
    assert res.curve[-1] < res.curve[0]
    assert all(np.isfinite(v) for v in res.curve)
    assert set(res.level_curves) == {"m", "a", "s"}
