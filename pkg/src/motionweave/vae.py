"""Transformer motion autoencoders with learnable latent query tokens.

Three instances (token counts 2 / 4 / 8) compress motions into latent grids
of increasing resolution; the decoder cross-attends frame queries to the
latent tokens. Training minimizes masked smooth-L1 reconstruction plus a
small KL term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusEntry
from .errors import DivergenceError
from .motion import MotionSequence
from .nn import tensor as T
from .nn.blocks import (Embedding, LayerNorm, Linear, Module,
                        TransformerLayer, sinusoid_table)
from .nn.optim import AdamW

LEVELS = ("m", "a", "s")
LEVEL_TOKENS = {"m": 2, "a": 4, "s": 8}
LOGVAR_MIN, LOGVAR_MAX = -30.0, 20.0


@dataclass
class VaeConfig:
    level: str = "s"
    latent_dim: int = 32         # D' (paper-scale: 256)
    width: int = 64
    layers: int = 2
    heads: int = 4
    max_frames: int = 240
    enc_max_frames: int = 120    # encoder inputs are strided to this bound
    frame_dim: int = 104
    kl_weight: float = 1e-4
    decoder_ffn: bool = False    # pure cross-attention decoder: the token
                                 # count caps per-frame bandwidth directly
    locality: float = 6.0        # latent tokens own time slices: additive
                                 # attention bias -locality*|t/L - slice_j|
    epochs: int = 40
    batch_size: int = 16
    lr: float = 2e-3
    seed: int = 0
    dtype: str = "float32"

    @property
    def latent_tokens(self) -> int:
        return LEVEL_TOKENS[self.level]

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")


class MotionVae(Module):
    def __init__(self, config: VaeConfig, rng):
        dt = config.np_dtype
        self.config = config
        q, w = config.latent_tokens, config.width
        self.in_proj = Linear(config.frame_dim, w, rng, dt)
        self.frame_pos = Embedding(config.enc_max_frames, w, rng, dt)
        self.queries = T.Tensor((rng.standard_normal((q, w)) * 0.02).astype(dt),
                                requires_grad=True)
        self.enc_blocks = [TransformerLayer(w, config.heads, rng, dt)
                           for _ in range(config.layers)]
        self.enc_ln = LayerNorm(w, dt)
        self.mean_head = Linear(w, config.latent_dim, rng, dt)
        self.logvar_head = Linear(w, config.latent_dim, rng, dt)
        self.lat_proj = Linear(config.latent_dim, w, rng, dt)
        self.dec_pos = sinusoid_table(config.max_frames, w, dt)
        self.dec_in = Linear(w, w, rng, dt)
        self.dec_blocks = [TransformerLayer(w, config.heads, rng, dt,
                                            cross=True, self_attn=False,
                                            ffn=config.decoder_ffn)
                           for _ in range(config.layers)]
        self.dec_ln = LayerNorm(w, dt)
        self.out_head = Linear(w, config.frame_dim, rng, dt)

    def _stride(self, frames: np.ndarray) -> np.ndarray:
        bound = self.config.enc_max_frames
        if len(frames) <= bound:
            return frames
        idx = np.linspace(0, len(frames) - 1, bound).round().astype(int)
        return frames[idx]

    def _token_frame_bias(self, lengths, padded: int) -> np.ndarray:
        """(B, Q, padded) locality bias: token j prefers its time slice.

        Positions are normalized by each row's true length so padding does
        not shift the slices.
        """
        q = self.config.latent_tokens
        centers = (np.arange(q) + 0.5) / q
        t = np.arange(padded) + 0.5
        pos = t[None, :] / np.maximum(1, np.asarray(lengths))[:, None]
        return -self.config.locality * np.abs(
            centers[None, :, None] - np.clip(pos, 0.0, 1.0)[:, None, :])

    # ------------------------------------------------------------ encode
    def encode_batch(self, frame_list):
        """List of (L_i, F) arrays → posterior mean/logvar (B, Q, D')."""
        for f in frame_list:
            if len(f) > self.config.max_frames:
                raise ValueError(
                    f"motion has {len(f)} frames, max is "
                    f"{self.config.max_frames}")
        strided = [self._stride(f) for f in frame_list]
        frames, mask = _pad_batch(strided, self.config.frame_dim,
                                  self.config.np_dtype)
        b, l, _ = frames.shape
        q, w = self.config.latent_tokens, self.config.width
        x = self.in_proj(T.Tensor(frames))
        pos = self.frame_pos(np.tile(np.arange(l), b)).reshape((b, l, w))
        x = T.add(x, pos)
        queries = T.add(T.reshape(self.queries, (1, q, w)),
                        T.Tensor(np.zeros((b, 1, 1), dtype=x.dtype)))
        x = T.concat([queries, x], axis=1)
        key_mask = np.concatenate([np.ones((b, q), dtype=bool), mask], axis=1)
        tf = self._token_frame_bias(mask.sum(axis=1), l)
        bias = np.zeros((b, 1, q + l, q + l))
        bias[:, 0, :q, q:] = tf
        bias[:, 0, q:, :q] = np.swapaxes(tf, 1, 2)
        for blk in self.enc_blocks:
            x = blk(x, self_mask=key_mask, self_bias=bias)
        head_in = self.enc_ln(x[:, :q, :])
        mean = self.mean_head(head_in)
        logvar = T.clip(self.logvar_head(head_in), LOGVAR_MIN, LOGVAR_MAX)
        return mean, logvar

    def encode(self, motion: MotionSequence):
        """Posterior (mean, logvar) for one motion, numpy (Q, D') each."""
        mean, logvar = self.encode_batch([motion.frames])
        return mean.data[0], logvar.data[0]

    # ------------------------------------------------------------ decode
    def decode_batch(self, z: T.Tensor, mask: np.ndarray):
        """z (B, Q, D'), mask (B, L) → frames (B, L, F)."""
        b, l = mask.shape
        w = self.config.width
        memory = self.lat_proj(z)
        pos = np.broadcast_to(self.dec_pos[None, :l, :], (b, l, w))
        x = self.dec_in(T.Tensor(np.ascontiguousarray(pos)))
        tf = self._token_frame_bias(mask.sum(axis=1), l)
        bias = np.swapaxes(tf, 1, 2)[:, None]            # (B, 1, L, Q)
        for blk in self.dec_blocks:
            x = blk(x, memory=memory, cross_bias=bias)
        return self.out_head(self.dec_ln(x))

    def decode(self, z: np.ndarray, length: int, fps: float = 20.0
               ) -> MotionSequence:
        z = np.asarray(z, dtype=self.config.np_dtype)
        if z.shape != (self.config.latent_tokens, self.config.latent_dim):
            raise ValueError(
                f"latent shape {z.shape} does not match level "
                f"{self.config.level!r} "
                f"({self.config.latent_tokens}x{self.config.latent_dim})")
        if not 1 <= length <= self.config.max_frames:
            raise ValueError(f"length {length} out of bounds")
        mask = np.ones((1, length), dtype=bool)
        out = self.decode_batch(T.Tensor(z[None]), mask)
        return MotionSequence(np.asarray(out.data[0], dtype=np.float64), fps)


def sample_latent(mean: np.ndarray, logvar: np.ndarray, seed) -> np.ndarray:
    """Reparameterized draw mean + exp(logvar/2) * eps with a seeded stream."""
    mean = np.asarray(mean, dtype=np.float64)
    logvar = np.clip(np.asarray(logvar, dtype=np.float64),
                     LOGVAR_MIN, LOGVAR_MAX)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))):
        raise ValueError("posterior must be finite")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    return mean + np.exp(0.5 * logvar) * rng.standard_normal(mean.shape)


def smooth_l1(diff: T.Tensor) -> T.Tensor:
    """Elementwise smooth-L1: quadratic inside |d|<1, linear outside."""
    absd = T.where(diff.data >= 0, diff, T.mul(diff, -1.0))
    quad = T.mul(T.mul(diff, diff), 0.5)
    lin = T.add(absd, -0.5)
    return T.where(np.abs(diff.data) < 1.0, quad, lin)


def vae_loss(vae: MotionVae, frame_list, eps: np.ndarray):
    """(total, recon, kl) losses for a batch of motions with noise draws eps."""
    mean, logvar = vae.encode_batch(frame_list)
    std = T.exp(T.mul(logvar, 0.5))
    z = T.add(mean, T.mul(std, T.Tensor(eps.astype(mean.dtype))))
    frames, mask = _pad_batch(frame_list, vae.config.frame_dim,
                              vae.config.np_dtype)
    recon = vae.decode_batch(z, mask)
    diff = T.add(recon, T.Tensor(-frames))
    per_elem = smooth_l1(diff)
    weights = mask.astype(per_elem.dtype)[:, :, None]
    # per-frame loss: sum over the feature tuple, mean over valid frames
    recon_loss = T.mul(T.sum_(T.mul(per_elem, T.Tensor(weights))),
                       1.0 / float(mask.sum()))
    # KL(q || N(0, I)) per latent token (sum over D', mean over tokens and
    # batch) so levels with more tokens pay the same per-token pressure
    kl_terms = T.mul(T.add(T.add(T.exp(logvar), T.mul(mean, mean)),
                           T.add(T.mul(logvar, -1.0), -1.0)), 0.5)
    kl = T.mul(T.sum_(kl_terms),
               1.0 / (frames.shape[0] * vae.config.latent_tokens))
    total = T.add(recon_loss, T.mul(kl, vae.config.kl_weight))
    return total, recon_loss, kl


def _pad_batch(frame_list, frame_dim, dtype):
    l = max(len(f) for f in frame_list)
    out = np.zeros((len(frame_list), l, frame_dim), dtype=dtype)
    mask = np.zeros((len(frame_list), l), dtype=bool)
    for r, f in enumerate(frame_list):
        out[r, :len(f)] = f
        mask[r, :len(f)] = True
    return out, mask


@dataclass
class VaeTrainResult:
    vae: MotionVae
    curve: list = field(default_factory=list)        # total loss per epoch
    recon_curve: list = field(default_factory=list)


def train_vae(entries: list[CorpusEntry], config: VaeConfig) -> VaeTrainResult:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                       spawn_key=(201,)))
    vae = MotionVae(config, rng)
    result = VaeTrainResult(vae)
    if not entries:
        raise ValueError("empty corpus")
    opt = AdamW(vae.parameters(), lr=config.lr)
    stream = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                          spawn_key=(202,)))
    frames_all = [e.motion.frames for e in entries]
    lengths = np.array([len(f) for f in frames_all])
    for epoch in range(config.epochs):
        # shuffle, then bucket by length so batches pad to similar sizes
        order = stream.permutation(len(entries))
        order = order[np.argsort(lengths[order], kind="stable")]
        tot = rec = 0.0
        n = 0
        for start in range(0, len(entries), config.batch_size):
            batch = [frames_all[i] for i in order[start:start + config.batch_size]]
            eps = stream.standard_normal(
                (len(batch), config.latent_tokens, config.latent_dim))
            loss, recon, _ = vae_loss(vae, batch, eps)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(f"VAE loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += value
            rec += float(recon.data)
            n += 1
        result.curve.append(tot / n)
        result.recon_curve.append(rec / n)
    return result


def reconstruction_error(vae: MotionVae, entries: list[CorpusEntry],
                         batch_size: int = 16) -> float:
    """Mean absolute reconstruction error through the posterior mean."""
    total = 0.0
    for start in range(0, len(entries), batch_size):
        batch = [e.motion.frames for e in entries[start:start + batch_size]]
        mean, _ = vae.encode_batch(batch)
        frames, mask = _pad_batch(batch, vae.config.frame_dim,
                                  vae.config.np_dtype)
        recon = vae.decode_batch(T.Tensor(mean.data), mask).data
        err = np.abs(recon - frames).mean(axis=2)
        per_entry = (err * mask).sum(axis=1) / mask.sum(axis=1)
        total += float(per_entry.sum())
    return total / len(entries)
