import numpy as np
import pytest

from motionweave import corpus, embedding, semgraph
from motionweave.nn import tensor as T
from motionweave.nn.gradcheck import check_gradients


@pytest.fixture(scope="module")
def entries():
    return corpus.generate_corpus(4, 40)


@pytest.fixture(scope="module")
def space(entries):
    return embedding.train_contrastive(
        entries, embedding.EmbedderConfig(epochs=0, seed=1))


def test_encode_deterministic(space):
    a_tokens, a_summary = space.text_encoder.encode("a person walks forward")
    b_tokens, b_summary = space.text_encoder.encode("a person walks forward")
    assert np.array_equal(a_tokens, b_tokens)
    assert np.array_equal(a_summary, b_summary)
    assert a_tokens.shape == (4, space.config.dim)


def test_distinct_verbs_distinct_vectors(space):
    walk, _ = space.text_encoder.encode("a person walks")
    wave, _ = space.text_encoder.encode("a person waves")
    assert not np.allclose(walk[2], wave[2])


def test_empty_text_rejected(space):
    with pytest.raises(ValueError):
        space.text_encoder.encode("")


def test_oov_maps_to_token_zero(space):
    ids = space.text_encoder.token_ids("a person zzzquux")
    assert ids[-1] == 0


def test_node_features_mean_pooling(space):
    graph = semgraph.parse("a person raises both arms")
    tokens, summary = space.text_encoder.encode(" ".join(graph.tokens))
    feats = space.init_graph_nodes(graph)
    assert feats.shape == (len(graph.nodes), space.config.dim)
    order = {n.id: k for k, n in enumerate(graph.nodes)}
    assert np.allclose(feats[order["m0"]], summary)
    verb = graph.action_nodes[0]
    assert np.allclose(feats[order[verb.id]], tokens[verb.token_span[0]])
    phrase = next(n for n in graph.specific_nodes if n.text == "both arms")
    lo, hi = phrase.token_span
    assert np.allclose(feats[order[phrase.id]], tokens[lo:hi].mean(axis=0))
    single = next(n for n in graph.specific_nodes if n.text == "a person")
    lo, hi = single.token_span
    assert np.allclose(feats[order[single.id]], tokens[lo:hi].mean(axis=0))


def test_span_misalignment_rejected(space):
    graph = semgraph.parse("a person jumps")
    graph.nodes[1] = semgraph.GraphNode("a0", "action", "jumps", (40, 41))
    with pytest.raises(ValueError, match="misaligned"):
        space.init_graph_nodes(graph)


def test_identical_pairs_loss_is_log_batch():
    rng = np.random.default_rng(0)
    row = rng.standard_normal(16)
    feats = np.tile(row, (8, 1))
    loss = embedding.contrastive_loss(T.Tensor(feats),
                                      T.Tensor(feats.copy()), 0.07)
    assert abs(float(loss.data) - np.log(8)) < 1e-9


def test_zero_epochs_returns_initialization(entries):
    cfg = embedding.EmbedderConfig(epochs=0, seed=3)
    a = embedding.train_contrastive(entries, cfg)
    b = embedding.train_contrastive(entries, cfg)
    for (na, pa), (nb, pb) in zip(a.text_encoder.named_parameters(),
                                  b.text_encoder.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    assert a.train_curve == []


def test_training_reduces_loss(entries):
    cfg = embedding.EmbedderConfig(epochs=8, seed=0)
    space = embedding.train_contrastive(entries, cfg)
    assert space.train_curve[-1] < space.train_curve[0]
    assert all(np.isfinite(v) for v in space.train_curve)


def test_summary_changes_when_action_word_replaced(space, entries):
    changed = 0
    total = 0
    for e in entries[:20]:
        tokens = semgraph.tokenize(e.description)
        verbs = [i for i, t in enumerate(tokens)
                 if t in semgraph.DEFAULT_LEXICON.verbs]
        if not verbs:
            continue
        swapped = list(tokens)
        swapped[verbs[0]] = "jumps" if tokens[verbs[0]] != "jumps" else "walks"
        _, s1 = space.text_encoder.encode(" ".join(tokens))
        _, s2 = space.text_encoder.encode(" ".join(swapped))
        total += 1
        if not np.allclose(s1, s2):
            changed += 1
    assert changed == total


def test_contrastive_gradients_match_fd():
    entries = corpus.generate_corpus(6, 4)
    cfg = embedding.EmbedderConfig(dim=8, eval_dim=4, layers=1, heads=2,
                                   max_tokens=16, max_eval_frames=6,
                                   epochs=0, seed=2, dtype="float64")
    space = embedding.train_contrastive(entries, cfg)
    texts = [e.description for e in entries]
    ids, tmask = embedding._pad_token_ids(space.text_encoder, texts)
    frames, fmask = embedding._pad_motions(
        [e.motion.frames for e in entries], cfg)
    params = (list(space.text_encoder.parameters())
              + list(space.eval_extractor.parameters()))

    def build():
        t_out = space.text_encoder.forward_batch(ids, tmask)
        t_feats = space.eval_extractor.text_head(t_out[:, 0, :])
        m_feats = space.eval_extractor.motion_encoder.forward_batch(frames,
                                                                    fmask)
        return embedding.contrastive_loss(t_feats, m_feats, cfg.temperature)

    assert check_gradients(build, params) < 1e-4
