"""Acceptance suite: one test per criterion, each printing a PASS line.

The heavier criteria reuse one session-scoped desk pipeline run driven
through the CLI (corpus generation, all training stages, generation, and
a 20-repeat evaluation), timed against the stated budgets.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from motionweave import checkpoint as C
from motionweave import corpus, diffusion as D, embedding, gat as G
from motionweave import metrics as M
from motionweave import pipeline as P
from motionweave import semgraph
from motionweave import vae as V
from motionweave.motion import MotionSequence
from motionweave.nn import tensor as T
from motionweave.nn.gradcheck import check_gradients


def _report(name, detail=""):
    print(f"\n[ACCEPTANCE] {name}: PASS {detail}")


def _cli(*args, timeout=1800):
    cmd = [sys.executable, "-m", "motionweave.cli", *args]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise AssertionError(f"CLI failed: {args}\n{proc.stdout}\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """Full desk pipeline via the CLI: corpus, training, samples, report."""
    root = tmp_path_factory.mktemp("desk")
    corpus_path = root / "corpus.jsonl"
    models = root / "models"
    timings = {}
    t_all = time.monotonic()

    t0 = time.monotonic()
    _cli("gen-corpus", "--seed", "0", "--size", "200", "--out",
         str(corpus_path))
    timings["gen_corpus"] = time.monotonic() - t0

    t0 = time.monotonic()
    _cli("train", "all", "--corpus", str(corpus_path), "--out", str(models))
    timings["train_all"] = time.monotonic() - t0

    gen_args = ["generate", "--text",
                "a person walks forward and raises both arms",
                "--models", str(models), "--corpus", str(corpus_path),
                "--steps", "50,50,50", "--seed", "0"]
    t0 = time.monotonic()
    _cli(*gen_args, "--out", str(root / "motion1.json"))
    _cli(*gen_args, "--out", str(root / "motion2.json"))
    timings["generate"] = time.monotonic() - t0

    t0 = time.monotonic()
    _cli("evaluate", "--corpus", str(corpus_path), "--models", str(models),
         "--repeats", "20", "--out", str(root / "report.json"))
    timings["evaluate"] = time.monotonic() - t0
    timings["total"] = time.monotonic() - t_all
    return {"root": root, "corpus": corpus_path, "models": models,
            "timings": timings}


# ---------------------------------------------------------------- criterion 1

def test_gradient_integrity():
    """Analytic gradients match central finite differences (<1e-4, 64-bit)."""
    t0 = time.monotonic()
    errors = {}

    entries = corpus.generate_corpus(6, 4)
    cfg = embedding.EmbedderConfig(dim=8, eval_dim=4, layers=1, heads=2,
                                   max_tokens=16, max_eval_frames=6,
                                   epochs=0, seed=2, dtype="float64")
    space = embedding.train_contrastive(entries, cfg)
    ids, tmask = embedding._pad_token_ids(space.text_encoder,
                                          [e.description for e in entries])
    frames, fmask = embedding._pad_motions(
        [e.motion.frames for e in entries], cfg)
    emb_params = (list(space.text_encoder.parameters())
                  + list(space.eval_extractor.parameters()))

    def emb_loss():
        out = space.text_encoder.forward_batch(ids, tmask)
        t_feats = space.eval_extractor.text_head(out[:, 0, :])
        m_feats = space.eval_extractor.motion_encoder.forward_batch(frames,
                                                                    fmask)
        return embedding.contrastive_loss(t_feats, m_feats, cfg.temperature)

    errors["embedder"] = check_gradients(emb_loss, emb_params)

    vcfg = V.VaeConfig(level="m", latent_dim=4, width=8, layers=1, heads=2,
                       frame_dim=6, max_frames=12, enc_max_frames=8,
                       dtype="float64")
    vnet = V.MotionVae(vcfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    vframes = [rng.standard_normal((5, 6)), rng.standard_normal((3, 6))]
    veps = rng.standard_normal((2, 2, 4))
    errors["vae"] = check_gradients(
        lambda: V.vae_loss(vnet, vframes, veps)[0], vnet.parameters())

    graph = semgraph.parse("a person walks forward and raises both arms")
    gnet = G.GraphAttention(5, np.random.default_rng(7))
    gv = T.Tensor(np.random.default_rng(8).standard_normal(
        (len(graph.nodes), 5)))
    edges = G.graph_edges(graph)

    def gat_loss():
        _, updated = gnet.forward(gv, edges)
        return T.mean(T.mul(updated, updated))

    errors["gat"] = check_gradients(gat_loss, gnet.parameters())

    dcfg = P.DiffusionConfig(node_dim=4, latent_dim=3, width=6, layers=1,
                             heads=2, T=8, seed=3, dtype="float64")
    model = P.HierarchicalDenoisers(dcfg, np.random.default_rng(3))
    dgraph = semgraph.parse("a person walks forward")
    drng = np.random.default_rng(4)
    dv = drng.standard_normal((len(dgraph.nodes), 4))
    dedges = G.graph_edges(dgraph)
    targets = {l: drng.standard_normal((P.LEVEL_TOKENS[l], 3)) for l in "mas"}
    z_t = {l: drng.standard_normal((P.LEVEL_TOKENS[l], 3)) for l in "mas"}
    prev = {"m": None, "a": z_t["m"], "s": z_t["a"]}

    for level in "mas":
        def level_loss(level=level):
            _, updated = model.gat.forward(T.Tensor(dv), dedges)
            cond = P.Conditioning(dgraph, updated, prev[level])
            tokens, mask = P.build_condition_tokens(model, level, [cond])
            eps_hat = model.level(level).forward(
                z_t[level][None], np.asarray([7]), tokens, mask)
            diff = T.add(eps_hat, T.Tensor(-targets[level][None]))
            return T.sum_(T.mul(diff, diff))

        den = model.level(level)
        level_params = list(den.parameters()) + model.gat.parameters() \
            + [model.null_token]
        errors[f"denoiser_{level}"] = check_gradients(level_loss, level_params)

    elapsed = time.monotonic() - t0
    for name, err in errors.items():
        assert err < 1e-4, f"{name} gradient error {err}"
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s"
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
    _report("gradient-integrity", f"({detail}; {elapsed:.0f}s)")


# ---------------------------------------------------------------- criterion 2

def test_attention_normalization_and_guiding_weights():
    rng = np.random.default_rng(0)
    for trial in range(10):
        text = ["a person walks forward and jumps",
                "a person raises both arms and crouches down and jumps",
                "a person waves the left hand slowly"][trial % 3]
        graph = semgraph.parse(text)
        net = G.GraphAttention(6, np.random.default_rng(trial))
        v = rng.standard_normal((len(graph.nodes), 6))
        edges = G.graph_edges(graph)
        res = G.attention_coefficients(net, v, edges)
        sums = {}
        for (i, _), val in res.coefficients.items():
            sums[i] = sums.get(i, 0.0) + val
        for s in sums.values():
            assert abs(s - 1.0) <= 1e-9
        rho = 0.01
        lam = G.guiding_weights(res, graph, rho)
        order = {n.id: k for k, n in enumerate(graph.nodes)}
        m = order[graph.motion_node.id]
        for k, a in enumerate(graph.action_nodes):
            assert lam[k] == rho * res.coefficients[(m, order[a.id])]
        # argmax invariant to constant logit shifts
        logits = rng.standard_normal(6)
        shift = rng.uniform(-5, 5)

        def softmax(x):
            e = np.exp(x - x.max())
            return e / e.sum()

        assert np.abs(softmax(logits) - softmax(logits + shift)).max() <= 1e-9
    _report("attention-normalization-eq8")


# ---------------------------------------------------------------- criterion 3

def test_energy_guidance_suite(tiny_models):
    rng = np.random.default_rng(1)
    c = rng.standard_normal((4, 8))
    assert D.energy(c, c) == 0.0

    z = np.ones(2)
    for lam in (0.1, 0.25, 0.45):
        z1 = z - lam * 2.0 * z
        assert D.energy(np.zeros(2), z1) == pytest.approx(
            (1 - 2 * lam) ** 2 * D.energy(np.zeros(2), z), rel=1e-12)

    schedule = D.make_schedule()
    z_t = rng.standard_normal((4, 8))
    eps = rng.standard_normal((4, 8))
    base = D.reverse_step(z_t, eps, 500, schedule, "deterministic")
    guided = D.guided_step(z_t, eps, 500, schedule, D.GuidanceSpec(),
                           "deterministic")
    assert np.array_equal(base, guided)

    text = "a person walks forward and jumps"
    plan_u = P.SamplingPlan(steps=(5, 5, 5), seed=17, rho=0.0)
    m_u, _ = P.sample(text, plan_u, tiny_models)
    plan_z = P.SamplingPlan(steps=(5, 5, 5), seed=17, rho=0.0)
    m_z, _ = P.sample(text, plan_z, tiny_models)
    assert np.array_equal(m_u.frames, m_z.frames)
    m_mult0, _ = P.sample(text, P.SamplingPlan(steps=(5, 5, 5), seed=17,
                                               rho=0.01), tiny_models,
                          weight_multipliers=[0.0, 0.0])
    assert np.array_equal(m_u.frames, m_mult0.frames)
    _report("energy-guidance-suite")


# ---------------------------------------------------------------- criterion 4

def test_fid_oracle():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((128, 8))
    assert M.fid(a, a) < 1e-8
    closed = M.fid(None, None, exact_moments=(
        (np.zeros(2), np.eye(2)), (np.array([3.0, 4.0]), np.eye(2))))
    assert abs(closed - 25.0) < 1e-6
    worst = 0.0
    for seed in range(8):
        r = np.random.default_rng(seed)
        x = r.standard_normal((80, 6)) @ r.standard_normal((6, 6))
        y = r.standard_normal((80, 6)) @ r.standard_normal((6, 6)) \
            + r.standard_normal(6)
        worst = max(worst, abs(M.fid(x, y) - M.fid_reference(x, y)))
    assert worst < 1e-8
    _report("fid-oracle", f"(max |impl - schur oracle| = {worst:.2e})")


# ---------------------------------------------------------------- criterion 5

def test_metric_nulls():
    vals = []
    for s in range(50):
        r = np.random.default_rng(4000 + s)
        t = M.FeatureSet(r.standard_normal((128, 8)), list(range(128)),
                         "text")
        m = M.FeatureSet(r.standard_normal((128, 8)), list(range(128)),
                         "motion")
        vals.append(M.r_precision(t, m, seed=s)["top1"])
    mean = np.mean(vals)
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(mean - 1 / 32) <= 3 * se

    rng = np.random.default_rng(5)
    f = rng.standard_normal((64, 8))
    ids = list(range(64))
    aligned = M.r_precision(M.FeatureSet(f, ids, "text"),
                            M.FeatureSet(f.copy(), ids, "motion"), seed=1)
    assert aligned["top1"] == 1.0

    assert M.diversity(np.ones((40, 6)), 10) == 0.0

    g = rng.standard_normal((4, 10, 7))
    brute = np.mean([np.linalg.norm(g[j, 2 * i] - g[j, 2 * i + 1])
                     for j in range(4) for i in range(5)])
    assert abs(M.multimodality(g) - brute) < 1e-12
    _report("metric-nulls",
            f"(null top1 {mean:.4f} vs 1/32 = {1/32:.4f}, se {se:.4f})")


# ---------------------------------------------------------------- criterion 6

def test_table_b_reconstruction_trend(desk):
    """Reconstruction fidelity ordering s <= a <= m, measured as FID of
    reconstructions in the evaluation feature space (the protocol behind
    the capacity-vs-token-size claim)."""
    t0 = time.monotonic()
    entries = corpus.load_corpus(desk["corpus"])
    space = C.load_space(Path(desk["models"]) / "embedder.ckpt")
    real_feats = space.motion_features([e.motion for e in entries])

    def recon_fid(vae):
        recons = []
        for start in range(0, len(entries), 16):
            batch = [e.motion.frames for e in entries[start:start + 16]]
            mean, _ = vae.encode_batch(batch)
            frames, mask = V._pad_batch(batch, vae.config.frame_dim,
                                        vae.config.np_dtype)
            out = vae.decode_batch(T.Tensor(mean.data), mask).data
            for i, b in enumerate(batch):
                recons.append(MotionSequence(
                    np.asarray(out[i][:len(b)], dtype=np.float64), 20.0))
        return M.fid(real_feats, space.motion_features(recons))

    ordered = 0
    results = []
    for seed in range(3):
        fids = {}
        for level in "mas":
            res = V.train_vae(entries, V.VaeConfig(level=level, epochs=20,
                                                   seed=seed))
            fids[level] = recon_fid(res.vae)
        results.append(fids)
        if fids["s"] <= fids["a"] <= fids["m"]:
            ordered += 1
    elapsed = time.monotonic() - t0
    assert ordered >= 2, f"trend held in {ordered}/3 seeds: {results}"
    assert elapsed < 600, f"trend suite took {elapsed:.0f}s"
    detail = "; ".join(
        "seed{}: m={m:.2f} a={a:.2f} s={s:.2f}".format(i, **r)
        for i, r in enumerate(results))
    _report("table-b-trend", f"({ordered}/3 ordered; {detail}; {elapsed:.0f}s)")


# ---------------------------------------------------------------- criterion 7

def test_guidance_efficacy(desk):
    t0 = time.monotonic()
    models = C.load_bundle(desk["models"], desk["corpus"])
    entries = models.corpus
    rng = np.random.default_rng(7)
    energy_wins = 0
    guided_dists = []
    unguided_dists = []
    for s in range(20):
        entry = entries[int(rng.integers(len(entries)))]
        descs = [a.description for a in entry.local_actions]
        refs = []
        ref_motions = []
        for d in descs:
            hit = P.retrieve_exemplar(d, models)
            refs.append(hit.latent)
            ref_motions.append(hit.motion)
        plan_g = P.SamplingPlan(steps=(15, 15, 15), rho=0.01, seed=9000 + s)
        plan_u = P.SamplingPlan(steps=(15, 15, 15), rho=0.0, seed=9000 + s)
        m_g, d_g = P.sample(entry.description, plan_g, models, refs=refs)
        m_u, d_u = P.sample(entry.description, plan_u, models, refs=refs)
        e_g = np.mean([D.energy(c, d_g.latents["a"]) for c in refs])
        e_u = np.mean([D.energy(c, d_u.latents["a"]) for c in refs])
        energy_wins += e_g < e_u
        feats = models.space.motion_features([m_g, m_u] + ref_motions)
        guided_dists.append(
            np.linalg.norm(feats[0] - feats[2:], axis=1).mean())
        unguided_dists.append(
            np.linalg.norm(feats[1] - feats[2:], axis=1).mean())
    p_value = scipy.stats.binomtest(energy_wins, 20, 0.5,
                                    alternative="greater").pvalue
    elapsed = time.monotonic() - t0
    assert p_value < 0.05, f"sign test p={p_value} ({energy_wins}/20 wins)"
    mean_g = float(np.mean(guided_dists))
    mean_u = float(np.mean(unguided_dists))
    assert mean_g < mean_u, (
        f"guided feature distance {mean_g:.4f} not below unguided {mean_u:.4f}")
    assert elapsed < 600, f"guidance suite took {elapsed:.0f}s"
    _report("guidance-efficacy",
            f"({energy_wins}/20 energy wins, p={p_value:.2e}; feature dist "
            f"{mean_g:.4f} < {mean_u:.4f}; {elapsed:.0f}s)")


# ---------------------------------------------------------------- criterion 8

def test_parser_exactness():
    entries = corpus.generate_corpus(123, 500)
    for e in entries:
        parsed = semgraph.parse(e.description)
        gold = e.gold_graph
        assert len(parsed.action_nodes) == len(gold.action_nodes)
        assert [a.text for a in parsed.action_nodes] \
            == [a.text for a in gold.action_nodes]
        assert len(parsed.nodes) == len(gold.nodes)
        parsed_types = sorted((e2.src, e2.dst, e2.type.value)
                              for e2 in parsed.edges)
        gold_types = sorted((e2.src, e2.dst, e2.type.value)
                            for e2 in gold.edges)
        assert parsed_types == gold_types
        assert parsed.to_dict() == gold.to_dict()
    _report("parser-exactness", "(500/500 gold matches)")


# ---------------------------------------------------------------- criterion 9

def test_determinism_and_budget(desk):
    m1 = (desk["root"] / "motion1.json").read_bytes()
    m2 = (desk["root"] / "motion2.json").read_bytes()
    assert m1 == m2, "CLI generate not byte-identical across runs"

    config, arrays = C.load_checkpoint(Path(desk["models"]) / "embedder.ckpt")
    resaved = desk["root"] / "resaved.ckpt"
    C.save_checkpoint(resaved, config, arrays)
    original = (Path(desk["models"]) / "embedder.ckpt").read_bytes()
    assert resaved.read_bytes() == original, "checkpoint round trip differs"

    report = json.loads((desk["root"] / "report.json").read_text())
    for key in ("r_precision_top1", "r_precision_top2", "r_precision_top3",
                "fid", "mm_dist", "diversity", "multimodality"):
        assert key in report
        assert len(report[key]["values"]) == 20
        assert "ci95" in report[key]

    total = desk["timings"]["total"]
    assert total < 1800, f"desk pipeline took {total:.0f}s"
    detail = ", ".join(f"{k}={v:.0f}s" for k, v in desk["timings"].items())
    _report("determinism-and-budget", f"({detail})")
