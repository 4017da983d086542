"""Hierarchical denoisers and the three-stage guided sampling procedure.

Stage 1 denoises the coarse latent from the description's motion node.
Stage 2 denoises the action-level latent conditioned on the motion/action
nodes plus the stage-1 result, applying reference-latent energy guidance.
Stage 3 refines at the specific level from all nodes plus the stage-2
result, and the specific-level decoder emits the motion.

The graph attention module is shared by the three levels and trained
jointly with them; the text encoder underneath stays frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffusion as D
from . import semgraph
from .corpus import CorpusEntry
from .embedding import EmbeddingSpace
from .errors import DivergenceError
from .gat import (AttentionResult, GraphAttention, GraphEdges, graph_edges,
                  guiding_weights)
from .motion import MotionSequence
from .nn import tensor as T
from .nn.blocks import Embedding, LayerNorm, Linear, Module, TransformerLayer
from .nn.optim import AdamW
from .semgraph import SemanticGraph
from .vae import LEVEL_TOKENS, LEVELS, MotionVae

TYPE_TIME, TYPE_MOTION, TYPE_ACTION, TYPE_SPECIFIC, TYPE_LATENT, TYPE_Z = range(6)
MAX_COND_LATENT_TOKENS = 8


@dataclass
class DiffusionConfig:
    node_dim: int = 64           # D, matches the embedder
    latent_dim: int = 32         # D'
    width: int = 64
    layers: int = 2
    heads: int = 4
    T: int = 1000
    beta_start: float = D.DEFAULT_BETA_START
    beta_end: float = D.DEFAULT_BETA_END
    cfg_dropout: float = 0.1
    epochs: int = 60
    batch_size: int = 16
    lr: float = 2e-3
    seed: int = 0
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


class Denoiser(Module):
    """Noise predictor for one level: transformer over
    [timestep, condition tokens, latent tokens]."""

    def __init__(self, level: str, config: DiffusionConfig, rng):
        dt = config.np_dtype
        self.level = level
        self.config = config
        q, w = LEVEL_TOKENS[level], config.width
        self.t_table = Embedding(config.T + 1, w, rng, dt)
        self.node_proj = Linear(config.node_dim, w, rng, dt)
        self.lat_proj = Linear(config.latent_dim, w, rng, dt)
        self.z_in = Linear(config.latent_dim, w, rng, dt)
        self.z_pos = Embedding(q, w, rng, dt)
        self.cond_pos = Embedding(MAX_COND_LATENT_TOKENS, w, rng, dt)
        self.type_emb = Embedding(6, w, rng, dt)
        self.blocks = [TransformerLayer(w, config.heads, rng, dt)
                       for _ in range(config.layers)]
        self.final_ln = LayerNorm(w, dt)
        self.head = Linear(w, config.latent_dim, rng, dt)

    def forward(self, z_t, t: np.ndarray, cond_tokens, cond_mask: np.ndarray):
        """z_t Tensor/array (B, Q, D'), t (B,), cond_tokens Tensor
        (B, C, W) with validity mask (B, C) → eps_hat Tensor (B, Q, D')."""
        if not isinstance(z_t, T.Tensor):
            z_t = T.Tensor(np.asarray(z_t, dtype=self.config.np_dtype))
        b, q, _ = z_t.shape
        w = self.config.width
        t_tok = T.add(self.t_table(np.asarray(t)).reshape((b, 1, w)),
                      self.type_emb.table[TYPE_TIME:TYPE_TIME + 1])
        z_tok = T.add(T.add(self.z_in(z_t),
                            self.z_pos(np.tile(np.arange(q), b)).reshape((b, q, w))),
                      self.type_emb.table[TYPE_Z:TYPE_Z + 1])
        x = T.concat([t_tok, cond_tokens, z_tok], axis=1)
        mask = np.concatenate([np.ones((b, 1), dtype=bool), cond_mask,
                               np.ones((b, q), dtype=bool)], axis=1)
        for blk in self.blocks:
            x = blk(x, self_mask=mask)
        c = cond_tokens.shape[1]
        out = self.final_ln(x[:, 1 + c:, :])
        return self.head(out)


class HierarchicalDenoisers(Module):
    def __init__(self, config: DiffusionConfig, rng):
        self.config = config
        self.gat = GraphAttention(config.node_dim, rng, config.np_dtype)
        self.null_token = T.Tensor(
            (rng.standard_normal(config.width) * 0.02).astype(config.np_dtype),
            requires_grad=True)
        self.m = Denoiser("m", config, rng)
        self.a = Denoiser("a", config, rng)
        self.s = Denoiser("s", config, rng)

    def level(self, name: str) -> Denoiser:
        if name not in LEVELS:
            raise ValueError(f"unknown level {name!r}")
        return getattr(self, name)


@dataclass
class Conditioning:
    """Per-sample level conditioning: graph node features plus the previous
    level's latent. node_values rows align with graph.nodes."""
    graph: SemanticGraph
    node_values: object            # Tensor or ndarray (n_nodes, D)
    prev_latent: object = None     # Tensor or ndarray (Q_prev, D') or None


def _node_groups(graph: SemanticGraph):
    order = {n.id: k for k, n in enumerate(graph.nodes)}
    motion = [order[graph.motion_node.id]]
    actions = [order[n.id] for n in graph.action_nodes]
    specifics = [order[n.id] for n in graph.specific_nodes]
    return motion, actions, specifics


def _required_groups(level: str, cond: Conditioning):
    motion, actions, specifics = _node_groups(cond.graph)
    if level == "m":
        if cond.prev_latent is not None:
            raise ValueError("motion level takes no latent conditioning")
        return [(TYPE_MOTION, motion)], None
    if level == "a":
        if cond.prev_latent is None:
            raise ValueError("action level requires the motion-level latent")
        _check_latent(cond.prev_latent, "m")
        return [(TYPE_MOTION, motion), (TYPE_ACTION, actions)], cond.prev_latent
    if cond.prev_latent is None:
        raise ValueError("specific level requires the action-level latent")
    _check_latent(cond.prev_latent, "a")
    return [(TYPE_MOTION, motion), (TYPE_ACTION, actions),
            (TYPE_SPECIFIC, specifics)], cond.prev_latent


def _check_latent(lat, level):
    shape = lat.shape if hasattr(lat, "shape") else np.asarray(lat).shape
    if shape[0] != LEVEL_TOKENS[level]:
        raise ValueError(
            f"conditioning latent has {shape[0]} tokens, expected "
            f"{LEVEL_TOKENS[level]} (level {level!r})")


def build_condition_tokens(model: HierarchicalDenoisers, level: str,
                           conds: list):
    """Assemble padded condition tokens for a batch.

    Each entry of conds is a Conditioning or None (the learned null token).
    Returns (tokens Tensor (B, C_max, W), mask (B, C_max)).
    """
    den = model.level(level)
    w = model.config.width
    per_sample = []
    for cond in conds:
        if cond is None:
            per_sample.append(T.reshape(model.null_token, (1, w)))
            continue
        groups, prev = _required_groups(level, cond)
        v = cond.node_values
        if not isinstance(v, T.Tensor):
            v = T.Tensor(np.asarray(v, dtype=model.config.np_dtype))
        projected = den.node_proj(v)
        toks = []
        for type_id, rows in groups:
            sel = T.take_rows(projected, np.asarray(rows))
            toks.append(T.add(sel, den.type_emb.table[type_id:type_id + 1]))
        if prev is not None:
            if not isinstance(prev, T.Tensor):
                prev = T.Tensor(np.asarray(prev, dtype=model.config.np_dtype))
            lat = den.lat_proj(prev)
            lat = T.add(lat, den.cond_pos(np.arange(prev.shape[0])))
            toks.append(T.add(lat, den.type_emb.table[TYPE_LATENT:TYPE_LATENT + 1]))
        per_sample.append(T.concat(toks, axis=0))
    c_max = max(t.shape[0] for t in per_sample)
    b = len(per_sample)
    mask = np.zeros((b, c_max), dtype=bool)
    rows = []
    for i, tok in enumerate(per_sample):
        c = tok.shape[0]
        mask[i, :c] = True
        if c < c_max:
            pad = T.Tensor(np.zeros((c_max - c, w),
                                    dtype=model.config.np_dtype))
            tok = T.concat([tok, pad], axis=0)
        rows.append(T.reshape(tok, (1, c_max, w)))
    return T.concat(rows, axis=0), mask


def predict_eps(model: HierarchicalDenoisers, level: str, z_t: np.ndarray,
                t: int, cond: Conditioning | None) -> np.ndarray:
    """Single-sample noise prediction; cond=None uses the null condition."""
    den = model.level(level)
    z_t = np.asarray(z_t)
    expected = (LEVEL_TOKENS[level], model.config.latent_dim)
    if z_t.shape != expected:
        raise ValueError(f"latent shape {z_t.shape}, expected {expected}")
    tokens, mask = build_condition_tokens(model, level, [cond])
    out = den.forward(z_t[None], np.asarray([t]), tokens, mask)
    return np.asarray(out.data[0], dtype=np.float64)


# --------------------------------------------------------------- training

@dataclass
class DiffusionTrainResult:
    model: HierarchicalDenoisers
    schedule: D.NoiseSchedule
    curve: list = field(default_factory=list)
    level_curves: dict = field(default_factory=lambda: {l: [] for l in LEVELS})


def prepare_conditioning(entries: list[CorpusEntry], space: EmbeddingSpace):
    """Parse, embed and index every entry once before training."""
    graphs = [semgraph.parse(e.description) for e in entries]
    feats = [space.init_graph_nodes(g) for g in graphs]
    edges = [graph_edges(g) for g in graphs]
    return graphs, feats, edges


def train_diffusion(entries: list[CorpusEntry], space: EmbeddingSpace,
                    vaes: dict, config: DiffusionConfig
                    ) -> DiffusionTrainResult:
    """Joint denoiser + graph-attention training with condition dropout."""
    if not entries:
        raise ValueError("empty corpus")
    for level in LEVELS:
        if level not in vaes:
            raise ValueError(f"missing VAE for level {level!r}")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                       spawn_key=(301,)))
    model = HierarchicalDenoisers(config, rng)
    schedule = D.make_schedule(config.T, config.beta_start, config.beta_end)
    result = DiffusionTrainResult(model, schedule)

    graphs, feats, edges = prepare_conditioning(entries, space)
    latents = {level: [vaes[level].encode(e.motion)[0].astype(np.float64)
                       for e in entries] for level in LEVELS}

    params = model.parameters()
    opt = AdamW(params, lr=config.lr)
    stream = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                          spawn_key=(302,)))
    dt = config.np_dtype
    for epoch in range(config.epochs):
        order = stream.permutation(len(entries))
        tot = 0.0
        level_tot = {l: 0.0 for l in LEVELS}
        n_batches = 0
        for start in range(0, len(entries), config.batch_size):
            idx = order[start:start + config.batch_size]
            b = len(idx)
            updated = {}
            for i in idx:
                _, v = model.gat.forward(T.Tensor(feats[i].astype(dt)),
                                         edges[i])
                updated[i] = v
            losses = []
            for level, prev_level in (("m", None), ("a", "m"), ("s", "a")):
                q = LEVEL_TOKENS[level]
                t_draw = stream.integers(1, config.T + 1, size=b)
                eps = stream.standard_normal((b, q, config.latent_dim))
                drop = stream.random(b) < config.cfg_dropout
                z_t = np.empty((b, q, config.latent_dim))
                conds = []
                for row, i in enumerate(idx):
                    z0 = latents[level][i]
                    z_t[row] = D.q_sample(z0, int(t_draw[row]), eps[row],
                                          schedule)
                    if drop[row]:
                        conds.append(None)
                    else:
                        prev = None if prev_level is None \
                            else latents[prev_level][i].astype(dt)
                        conds.append(Conditioning(graphs[i], updated[i], prev))
                tokens, mask = build_condition_tokens(model, level, conds)
                eps_hat = model.level(level).forward(
                    z_t.astype(dt), t_draw, tokens, mask)
                diff = T.add(eps_hat, T.Tensor(-eps.astype(dt)))
                level_loss = T.mul(T.sum_(T.mul(diff, diff)), 1.0 / b)
                losses.append(level_loss)
                level_tot[level] += float(level_loss.data)
            loss = T.add(T.add(losses[0], losses[1]), losses[2])
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(f"diffusion loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += value
            n_batches += 1
        result.curve.append(tot / n_batches)
        for l in LEVELS:
            result.level_curves[l].append(level_tot[l] / n_batches)
    return result


# --------------------------------------------------------------- sampling

@dataclass
class SamplingPlan:
    steps: tuple = (50, 50, 50)
    cfg_alpha: float = 7.5
    rho: float = 0.01
    rho_schedule: str = "constant"      # or "linear-decay"
    mode: str = "deterministic"         # or "ancestral"
    guidance_mode: str = "scaled-reference"
    squared_energy: bool = True
    seed: int = 0
    length: int | None = None
    reference_source: str = "retrieve"  # or "sample"

    def validate(self, T: int):
        if len(self.steps) != 3 or any(not 1 <= s <= T for s in self.steps):
            raise ValueError("steps must be three counts within 1..T")
        if self.mode not in ("deterministic", "ancestral"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    def to_dict(self):
        return {"steps": list(self.steps), "cfg_alpha": self.cfg_alpha,
                "rho": self.rho, "rho_schedule": self.rho_schedule,
                "mode": self.mode, "guidance_mode": self.guidance_mode,
                "squared_energy": self.squared_energy, "seed": self.seed,
                "length": self.length,
                "reference_source": self.reference_source}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "steps" in d:
            d["steps"] = tuple(d["steps"])
        return cls(**d)


@dataclass
class ModelBundle:
    space: EmbeddingSpace
    vaes: dict
    denoisers: HierarchicalDenoisers
    schedule: D.NoiseSchedule
    corpus: list = None
    fps: float = 20.0
    retrieval_index: object = None


@dataclass
class Diagnostics:
    graph: SemanticGraph
    coefficients: dict
    lambdas: np.ndarray
    reference_descriptions: list
    energy_trace: list          # per retained action step: list of E per ref
    final_energies: list        # E(c_k, final action latent)
    plan: SamplingPlan
    latents: dict = field(default_factory=dict)   # final z per level

    def to_dict(self):
        return {
            "graph": self.graph.to_dict(),
            "coefficients": {f"{i}->{j}": v for (i, j), v
                             in self.coefficients.items()},
            "lambdas": [float(x) for x in self.lambdas],
            "reference_descriptions": list(self.reference_descriptions),
            "energy_trace": [[float(x) for x in row]
                             for row in self.energy_trace],
            "final_energies": [float(x) for x in self.final_energies],
            "plan": self.plan.to_dict(),
            "latents": {k: v.tolist() for k, v in self.latents.items()},
        }


def _denoise_level(model: HierarchicalDenoisers, level: str, cond,
                   plan: SamplingPlan, steps: int, rng, schedule,
                   guidance=None):
    """Run the reverse process for one level, returning the final latent."""
    config = model.config
    schedule_T = config.T
    q = LEVEL_TOKENS[level]
    z = rng.standard_normal((q, config.latent_dim))
    grid = D.timestep_grid(schedule_T, steps)
    trace = []
    for k, t in enumerate(grid):
        t_prev = grid[k + 1] if k + 1 < len(grid) else 0
        eps_c = predict_eps(model, level, z, t, cond)
        eps_u = predict_eps(model, level, z, t, None)
        eps_hat = D.cfg_combine(eps_c, eps_u, plan.cfg_alpha)
        noise = rng.standard_normal(z.shape) if plan.mode == "ancestral" else None
        spec = None
        if guidance is not None and guidance.K > 0:
            spec = guidance
            if plan.rho_schedule == "linear-decay":
                spec = D.GuidanceSpec(guidance.references,
                                      guidance.weights * (t / schedule_T),
                                      guidance.mode, guidance.squared)
            trace.append([D.energy(np.sqrt(schedule.alpha_bar(t)) * c, z,
                                   guidance.squared)
                          for c in guidance.references])  # descent target
        if plan.mode == "ancestral" and t_prev != t - 1:
            raise ValueError("ancestral sampling requires the full grid; "
                             "set steps equal to T")
        z = D.guided_step(z, eps_hat, t, schedule, spec, plan.mode, noise,
                          t_prev)
    return z, trace


def sample(description: str, plan: SamplingPlan, models: ModelBundle,
           refs: list | None = None, weight_multipliers=None,
           ref_descriptions: list | None = None):
    """Full three-stage generation; returns (MotionSequence, Diagnostics)."""
    config = models.denoisers.config
    plan.validate(config.T)
    graph = semgraph.parse(description)
    v = models.space.init_graph_nodes(graph)
    edges = graph_edges(graph)
    coeffs_t, updated = models.denoisers.gat.forward(
        T.Tensor(v.astype(config.np_dtype)), edges)
    order = {n.id: k for k, n in enumerate(graph.nodes)}
    coeffs = {}
    if coeffs_t is not None:
        flat = coeffs_t.data[:, 0]
        for k in range(len(edges)):
            coeffs[(int(edges.dst[k]), int(edges.src[k]))] = float(flat[k])

    result = AttentionResult(coeffs, updated.data)

    actions = graph.action_nodes
    local_descs = semgraph.local_action_descriptions(graph)
    if plan.rho > 0:
        lambdas = guiding_weights(result, graph, plan.rho, weight_multipliers)
    else:
        lambdas = np.zeros(len(actions))

    guidance = None
    used_descs = []
    if plan.rho > 0 and np.any(lambdas > 0):
        if refs is None:
            refs = []
            for k, desc in enumerate(local_descs):
                if plan.reference_source == "sample":
                    _, lat = sample_local_action(
                        desc, plan, models,
                        seed_offset=1000 + k)
                    refs.append(lat)
                    used_descs.append(desc)
                else:
                    hit = retrieve_exemplar(desc, models)
                    refs.append(hit.latent)
                    used_descs.append(hit.description)
        else:
            used_descs = list(ref_descriptions or [""] * len(refs))
        if len(refs) != len(actions):
            raise ValueError(
                f"{len(refs)} references for {len(actions)} actions")
        guidance = D.GuidanceSpec(list(refs), lambdas, plan.guidance_mode,
                                  plan.squared_energy)

    cond_m = Conditioning(graph, updated.data)

    rng_m = np.random.default_rng(np.random.SeedSequence(plan.seed,
                                                         spawn_key=(0,)))
    z_m, _ = _denoise_level(models.denoisers, "m", cond_m, plan,
                            plan.steps[0], rng_m, models.schedule)

    cond_a = Conditioning(graph, updated.data, z_m)
    rng_a = np.random.default_rng(np.random.SeedSequence(plan.seed,
                                                         spawn_key=(1,)))
    z_a, trace = _denoise_level(models.denoisers, "a", cond_a, plan,
                                plan.steps[1], rng_a, models.schedule,
                                guidance)

    cond_s = Conditioning(graph, updated.data, z_a)
    rng_s = np.random.default_rng(np.random.SeedSequence(plan.seed,
                                                         spawn_key=(2,)))
    z_s, _ = _denoise_level(models.denoisers, "s", cond_s, plan,
                            plan.steps[2], rng_s, models.schedule)

    length = plan.length or min(60 * len(actions),
                                models.vaes["s"].config.max_frames)
    motion = models.vaes["s"].decode(z_s.astype(np.float64), length,
                                     models.fps)
    finals = []
    if guidance is not None:
        finals = [D.energy(c, z_a, plan.squared_energy)
                  for c in guidance.references]
    diag = Diagnostics(graph, coeffs, lambdas, used_descs, trace, finals, plan,
                       latents={"m": z_m, "a": z_a, "s": z_s})
    return motion, diag


def sample_local_action(action_description: str, plan: SamplingPlan,
                        models: ModelBundle, seed_offset: int = 0,
                        length: int = 60):
    """Generate one local-action candidate; returns (motion, action latent)."""
    config = models.denoisers.config
    plan.validate(config.T)
    graph = semgraph.parse(action_description)
    v = models.space.init_graph_nodes(graph)
    edges = graph_edges(graph)
    _, updated = models.denoisers.gat.forward(
        T.Tensor(v.astype(config.np_dtype)), edges)

    seed = plan.seed + seed_offset
    rng_m = np.random.default_rng(np.random.SeedSequence(seed,
                                                         spawn_key=(10,)))
    cond_m = Conditioning(graph, updated.data)
    z_m, _ = _denoise_level(models.denoisers, "m", cond_m, plan,
                            plan.steps[0], rng_m, models.schedule)
    cond_a = Conditioning(graph, updated.data, z_m)
    rng_a = np.random.default_rng(np.random.SeedSequence(seed,
                                                         spawn_key=(11,)))
    z_a, _ = _denoise_level(models.denoisers, "a", cond_a, plan,
                            plan.steps[1], rng_a, models.schedule)
    motion = models.vaes["a"].decode(z_a.astype(np.float64), length,
                                     models.fps)
    return motion, z_a


@dataclass
class RetrievedAction:
    motion: MotionSequence
    latent: np.ndarray
    description: str
    confidence: float


class RetrievalIndex:
    """Nearest corpus local-action segment by text-feature similarity."""

    def __init__(self, entries: list[CorpusEntry], space: EmbeddingSpace,
                 action_vae: MotionVae):
        if not entries:
            raise ValueError("empty corpus")
        self.space = space
        self.action_vae = action_vae
        self.segments = []
        for e in entries:
            for k, seg in enumerate(e.local_actions):
                self.segments.append((e, k, seg.description))
        self.features = space.text_features([d for _, _, d in self.segments])

    def query(self, text: str, on_oov: str = "error") -> RetrievedAction:
        ids = self.space.text_encoder.token_ids(text)
        confidence = 1.0
        if all(i == 0 for i in ids):
            if on_oov == "error":
                raise ValueError(f"query has no known tokens: {text!r}")
            confidence = 0.0
        q = self.space.text_features([text])[0]
        scores = self.features @ q
        best = int(np.argmax(scores))
        entry, k, desc = self.segments[best]
        motion = entry.local_action_motion(k)
        mean, _ = self.action_vae.encode(motion)
        return RetrievedAction(motion, mean.astype(np.float64), desc,
                               confidence * float(scores[best]))


def retrieve_exemplar(action_description: str, models: ModelBundle,
                      on_oov: str = "error") -> RetrievedAction:
    if models.corpus is None:
        raise ValueError("model bundle has no corpus for retrieval")
    if models.retrieval_index is None:
        models.retrieval_index = RetrievalIndex(models.corpus, models.space,
                                                models.vaes["a"])
    return models.retrieval_index.query(action_description, on_oov)
