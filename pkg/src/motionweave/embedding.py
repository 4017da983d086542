"""Shared text/motion embedding space.

A small self-attention text encoder yields per-token vectors plus a summary
vector used to initialize semantic-graph nodes. A parallel motion encoder
and a text projection head map both modalities into one evaluation feature
space; the pair is trained with a symmetric contrastive objective over
(description, motion) corpus pairs and then frozen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusEntry
from .errors import DivergenceError
from .nn import tensor as T
from .nn.blocks import Embedding, LayerNorm, Linear, Module, TransformerLayer
from .nn.optim import AdamW
from .semgraph import SemanticGraph, tokenize

OOV_TOKEN = "<oov>"


@dataclass
class EmbedderConfig:
    dim: int = 64                # node-representation width D (paper-scale: 768)
    eval_dim: int = 32           # evaluation feature width
    layers: int = 2
    heads: int = 4
    max_tokens: int = 32
    max_eval_frames: int = 64    # motion frames are strided down to this bound
    frame_dim: int = 104
    temperature: float = 0.07
    epochs: int = 200
    batch_size: int = 48
    lr: float = 2e-3
    lr_schedule: str = "cosine"  # or "constant"
    val_fraction: int = 5        # one of every val_fraction ids held out
    seed: int = 0
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def build_vocabulary(entries: list[CorpusEntry]) -> list[str]:
    """Closed corpus vocabulary, OOV token first, then first-seen order."""
    vocab = [OOV_TOKEN]
    seen = {OOV_TOKEN}
    for e in entries:
        for tok in tokenize(e.description):
            if tok not in seen:
                seen.add(tok)
                vocab.append(tok)
    return vocab


class TextEncoder(Module):
    def __init__(self, vocab: list[str], config: EmbedderConfig, rng):
        dt = config.np_dtype
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.config = config
        self.token_emb = Embedding(len(vocab), config.dim, rng, dt)
        self.pos_emb = Embedding(config.max_tokens + 1, config.dim, rng, dt)
        self.summary_token = T.Tensor(
            (rng.standard_normal(config.dim) * 0.02).astype(dt),
            requires_grad=True)
        self.blocks = [TransformerLayer(config.dim, config.heads, rng, dt)
                       for _ in range(config.layers)]
        self.final_ln = LayerNorm(config.dim, dt)

    def token_ids(self, text: str) -> list[int]:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("empty text")
        return [self.index.get(t, 0) for t in tokens[:self.config.max_tokens]]

    def forward_batch(self, ids: np.ndarray, mask: np.ndarray):
        """ids (B, L) padded, mask (B, L). Returns (B, L+1, D) outputs where
        position 0 is the summary vector."""
        b, l = ids.shape
        x = self.token_emb(ids.reshape(-1)).reshape((b, l, self.config.dim))
        pos = self.pos_emb(np.tile(np.arange(1, l + 1), b)).reshape(
            (b, l, self.config.dim))
        x = T.add(x, pos)
        summary = T.add(
            T.add(self.summary_token, self.pos_emb.table[0:1]),
            T.Tensor(np.zeros((b, 1, self.config.dim), dtype=x.dtype)))
        x = T.concat([summary, x], axis=1)
        key_mask = np.concatenate(
            [np.ones((b, 1), dtype=bool), mask.astype(bool)], axis=1)
        for blk in self.blocks:
            x = blk(x, self_mask=key_mask)
        return self.final_ln(x)

    def encode(self, text: str):
        """(per-token vectors (n, D), summary vector (D,)) as numpy arrays."""
        ids = np.asarray([self.token_ids(text)])
        out = self.forward_batch(ids, np.ones_like(ids, dtype=bool)).data[0]
        return out[1:], out[0]


class MotionEvalEncoder(Module):
    """Query-token transformer readout plus a mean-pooled statistics stem;
    the pooled branch carries magnitude cues (speeds, heights, contact
    rates) that a lone attention readout tends to wash out."""

    def __init__(self, config: EmbedderConfig, rng):
        dt = config.np_dtype
        self.config = config
        self.in_proj = Linear(config.frame_dim, config.dim, rng, dt)
        self.pos_emb = Embedding(config.max_eval_frames + 1, config.dim, rng, dt)
        self.query_token = T.Tensor(
            (rng.standard_normal(config.dim) * 0.02).astype(dt),
            requires_grad=True)
        self.blocks = [TransformerLayer(config.dim, config.heads, rng, dt)
                       for _ in range(config.layers)]
        self.final_ln = LayerNorm(config.dim, dt)
        self.pool_proj = Linear(config.frame_dim, config.dim, rng, dt)
        self.head = Linear(2 * config.dim, config.eval_dim, rng, dt)

    def forward_batch(self, frames: np.ndarray, mask: np.ndarray):
        """frames (B, L, F) strided/padded, mask (B, L) → features (B, D_e)."""
        b, l, _ = frames.shape
        x = self.in_proj(T.Tensor(frames))
        pos = self.pos_emb(np.tile(np.arange(1, l + 1), b)).reshape(
            (b, l, self.config.dim))
        x = T.add(x, pos)
        query = T.add(
            T.add(self.query_token, self.pos_emb.table[0:1]),
            T.Tensor(np.zeros((b, 1, self.config.dim), dtype=x.dtype)))
        x = T.concat([query, x], axis=1)
        key_mask = np.concatenate(
            [np.ones((b, 1), dtype=bool), mask.astype(bool)], axis=1)
        for blk in self.blocks:
            x = blk(x, self_mask=key_mask)
        out = self.final_ln(x)
        weights = (mask / mask.sum(axis=1, keepdims=True)).astype(frames.dtype)
        pooled = self.pool_proj(
            T.matmul(T.Tensor(weights[:, None, :]), T.Tensor(frames)))
        summary = T.concat([out[:, 0, :],
                            T.reshape(pooled, (b, self.config.dim))], axis=1)
        return self.head(summary)


class EvalExtractor(Module):
    """Paired feature extractors used by all evaluation metrics."""

    def __init__(self, config: EmbedderConfig, rng):
        self.motion_encoder = MotionEvalEncoder(config, rng)
        self.text_head = Linear(config.dim, config.eval_dim, rng,
                                config.np_dtype)
        self.temperature = config.temperature


@dataclass
class EmbeddingSpace:
    config: EmbedderConfig
    text_encoder: TextEncoder
    eval_extractor: EvalExtractor
    train_curve: list = field(default_factory=list)
    val_top1: float = 0.0
    meets_target: bool = False

    # -------------------------------------------------- node features
    def init_graph_nodes(self, graph: SemanticGraph):
        """Node feature matrix aligned with graph.nodes order."""
        tokens, summary = self.text_encoder.encode(" ".join(graph.tokens))
        n_tok = len(tokens)
        rows = []
        for node in graph.nodes:
            lo, hi = node.token_span
            if not (0 <= lo < hi <= n_tok):
                raise ValueError(
                    f"node {node.id} span {node.token_span} misaligned with "
                    f"{n_tok} tokens")
            if node.kind == "motion":
                rows.append(summary)
            elif node.kind == "action":
                rows.append(tokens[lo])
            else:
                rows.append(tokens[lo:hi].mean(axis=0))
        return np.stack(rows)

    # -------------------------------------------------- eval features
    def text_features(self, texts: list[str]) -> np.ndarray:
        ids, mask = _pad_token_ids(self.text_encoder, texts)
        out = self.text_encoder.forward_batch(ids, mask)
        feats = self.eval_extractor.text_head(out[:, 0, :]).data
        return _normalize(feats)

    def motion_features(self, motions) -> np.ndarray:
        frames, mask = _pad_motions(
            [m.frames for m in motions], self.eval_extractor.motion_encoder.config)
        feats = self.eval_extractor.motion_encoder.forward_batch(frames, mask).data
        return _normalize(feats)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _pad_token_ids(encoder: TextEncoder, texts: list[str]):
    ids = [encoder.token_ids(t) for t in texts]
    l = max(len(i) for i in ids)
    out = np.zeros((len(ids), l), dtype=np.int64)
    mask = np.zeros((len(ids), l), dtype=bool)
    for r, seq in enumerate(ids):
        out[r, :len(seq)] = seq
        mask[r, :len(seq)] = True
    return out, mask


def _stride_frames(frames: np.ndarray, max_frames: int) -> np.ndarray:
    if len(frames) <= max_frames:
        return frames
    idx = np.linspace(0, len(frames) - 1, max_frames).round().astype(int)
    return frames[idx]


def _pad_motions(frame_list, config: EmbedderConfig):
    strided = [_stride_frames(f, config.max_eval_frames) for f in frame_list]
    l = max(len(f) for f in strided)
    out = np.zeros((len(strided), l, config.frame_dim), dtype=config.np_dtype)
    mask = np.zeros((len(strided), l), dtype=bool)
    for r, f in enumerate(strided):
        out[r, :len(f)] = f
        mask[r, :len(f)] = True
    return out, mask


def split_by_id(entries: list[CorpusEntry], val_fraction: int):
    """Stable train/validation split by entry-id hash."""
    train, val = [], []
    for e in entries:
        h = int.from_bytes(hashlib.sha1(e.id.encode()).digest()[:4], "big")
        (val if h % val_fraction == 0 else train).append(e)
    return train, val


def contrastive_loss(text_feats: T.Tensor, motion_feats: T.Tensor,
                     temperature: float) -> T.Tensor:
    """Symmetric InfoNCE over in-batch pairs; features are L2-normalized."""
    tf = _normalize_t(text_feats)
    mf = _normalize_t(motion_feats)
    logits = T.mul(T.matmul(tf, T.transpose(mf, (1, 0))), 1.0 / temperature)
    b = logits.shape[0]
    diag = (np.arange(b), np.arange(b))
    loss_t = _cross_entropy_rows(logits, diag)
    loss_m = _cross_entropy_rows(T.transpose(logits, (1, 0)), diag)
    return T.mul(T.add(loss_t, loss_m), 0.5)


def _normalize_t(x: T.Tensor) -> T.Tensor:
    norm = T.sqrt(T.sum_(T.mul(x, x), axis=1, keepdims=True))
    return T.mul(x, T.power(norm, -1.0))


def _cross_entropy_rows(logits: T.Tensor, diag) -> T.Tensor:
    probs = T.softmax(logits)
    return T.mul(T.mean(T.log(T.getitem(probs, diag))), -1.0)


def retrieval_top1(space: EmbeddingSpace, entries: list[CorpusEntry],
                   pool_size: int = 32, repeats: int = 8, seed: int = 0) -> float:
    """Text→motion 32-way retrieval accuracy (ties favor the true match)."""
    texts = [e.description for e in entries]
    feats_t = space.text_features(texts)
    feats_m = space.motion_features([e.motion for e in entries])
    rng = np.random.default_rng(seed)
    n = len(entries)
    hits = 0
    trials = 0
    for _ in range(repeats):
        for i in range(n):
            others = rng.choice(np.delete(np.arange(n), i), size=pool_size - 1,
                                replace=n - 1 < pool_size - 1)
            d_true = np.linalg.norm(feats_t[i] - feats_m[i])
            d_others = np.linalg.norm(feats_t[i] - feats_m[others], axis=1)
            hits += int(np.sum(d_others < d_true) == 0)
            trials += 1
    return hits / trials


def train_contrastive(entries: list[CorpusEntry],
                      config: EmbedderConfig | None = None) -> EmbeddingSpace:
    """Train the text encoder and eval extractor; freeze afterwards."""
    config = config or EmbedderConfig()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                       spawn_key=(101,)))
    vocab = build_vocabulary(entries)
    text_encoder = TextEncoder(vocab, config, rng)
    eval_extractor = EvalExtractor(config, rng)
    space = EmbeddingSpace(config, text_encoder, eval_extractor)

    train, val = split_by_id(entries, config.val_fraction)
    if not train:
        raise ValueError("empty training split")
    params = list(text_encoder.parameters()) + list(eval_extractor.parameters())
    opt = AdamW(params, lr=config.lr)
    order_rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                             spawn_key=(102,)))
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            opt.lr = float(config.lr * 0.5
                           * (1.0 + np.cos(np.pi * epoch / config.epochs)))
        # random batches: contrastive negatives must stay uncorrelated, so
        # no length bucketing here
        order = order_rng.permutation(len(train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start:start + config.batch_size]]
            if len(batch) < 2:
                continue
            ids, tmask = _pad_token_ids(text_encoder,
                                        [e.description for e in batch])
            frames, fmask = _pad_motions([e.motion.frames for e in batch],
                                         config)
            t_out = text_encoder.forward_batch(ids, tmask)
            t_feats = eval_extractor.text_head(t_out[:, 0, :])
            m_feats = eval_extractor.motion_encoder.forward_batch(frames, fmask)
            loss = contrastive_loss(t_feats, m_feats, config.temperature)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"contrastive loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += value
            n_batches += 1
        space.train_curve.append(epoch_loss / max(1, n_batches))

    if val and config.epochs > 0:
        pool = val if len(val) >= 32 else entries
        space.val_top1 = retrieval_top1(space, pool, seed=config.seed)
        space.meets_target = space.val_top1 >= 0.6
    return space
