"""Neural building blocks: linear, layer norm, attention, transformer layers.

All blocks draw their initial weights from an explicit numpy Generator so
model construction is a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Minimal parameter container with deterministic traversal order."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{key}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_arrays(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_arrays(self, arrays):
        for name, p in self.named_parameters():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r}")
            src = arrays[name]
            if src.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {src.shape} vs {p.data.shape}")
            p.data = src.astype(p.data.dtype).copy()


def _param(rng, shape, scale, dtype):
    return Tensor(rng.uniform(-scale, scale, size=shape).astype(dtype),
                  requires_grad=True)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float64, bias=True):
        scale = np.sqrt(6.0 / (n_in + n_out))
        self.weight = _param(rng, (n_in, n_out), scale, dtype)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        return y


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float64, eps=1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, count, dim, rng, dtype=np.float64, scale=0.02):
        self.table = Tensor(
            (rng.standard_normal((count, dim)) * scale).astype(dtype),
            requires_grad=True)

    def __call__(self, idx):
        return T.take_rows(self.table, idx)


def split_heads(x, heads):
    b, l, w = x.shape
    return T.transpose(T.reshape(x, (b, l, heads, w // heads)), (0, 2, 1, 3))


def merge_heads(x):
    b, h, l, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, l, h * dh))


def attention(q, k, v, key_mask=None, bias=None):
    """Scaled dot-product attention; q,k,v are (B, H, L, dh).

    key_mask is a bool (B, Lk) validity mask or None; bias is a constant
    additive logit array broadcastable to (B, H, Lq, Lk).
    """
    dh = q.shape[-1]
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))),
                   float(1.0 / np.sqrt(dh)))
    if bias is not None:
        scores = T.add(scores, T.Tensor(
            np.asarray(bias, dtype=scores.dtype)))
    mask = None
    if key_mask is not None:
        b, lk = key_mask.shape
        mask = np.broadcast_to(key_mask[:, None, None, :], scores.shape)
    probs = T.softmax(scores, mask)
    return T.matmul(probs, v)


class MultiheadAttention(Module):
    def __init__(self, width, heads, rng, dtype=np.float64):
        if width % heads:
            raise ValueError("width must be divisible by heads")
        self.heads = heads
        self.q_proj = Linear(width, width, rng, dtype)
        self.k_proj = Linear(width, width, rng, dtype)
        self.v_proj = Linear(width, width, rng, dtype)
        self.out_proj = Linear(width, width, rng, dtype)

    def __call__(self, x, memory=None, key_mask=None, bias=None):
        kv = x if memory is None else memory
        q = split_heads(self.q_proj(x), self.heads)
        k = split_heads(self.k_proj(kv), self.heads)
        v = split_heads(self.v_proj(kv), self.heads)
        out = merge_heads(attention(q, k, v, key_mask, bias))
        return self.out_proj(out)


class FeedForward(Module):
    def __init__(self, width, rng, dtype=np.float64, mult=2):
        self.up = Linear(width, mult * width, rng, dtype)
        self.down = Linear(mult * width, width, rng, dtype)

    def __call__(self, x):
        return self.down(T.gelu(self.up(x)))


class TransformerLayer(Module):
    """Pre-LN transformer layer with optional self- and cross-attention."""

    def __init__(self, width, heads, rng, dtype=np.float64, cross=False,
                 self_attn=True, ffn=True):
        self.ln1 = LayerNorm(width, dtype) if self_attn else None
        self.attn = MultiheadAttention(width, heads, rng, dtype) if self_attn else None
        self.cross_ln = LayerNorm(width, dtype) if cross else None
        self.cross_attn = MultiheadAttention(width, heads, rng, dtype) if cross else None
        self.ln2 = LayerNorm(width, dtype) if ffn else None
        self.ffn = FeedForward(width, rng, dtype) if ffn else None

    def __call__(self, x, memory=None, self_mask=None, memory_mask=None,
                 self_bias=None, cross_bias=None):
        if self.attn is not None:
            x = T.add(x, self.attn(self.ln1(x), key_mask=self_mask,
                                   bias=self_bias))
        if self.cross_attn is not None:
            x = T.add(x, self.cross_attn(self.cross_ln(x), memory=memory,
                                         key_mask=memory_mask,
                                         bias=cross_bias))
        if self.ffn is not None:
            x = T.add(x, self.ffn(self.ln2(x)))
        return x


def sinusoid_table(length, width, dtype=np.float64):
    """Fixed sin/cos positional table (length, width)."""
    pos = np.arange(length)[:, None]
    i = np.arange(width // 2)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / width)
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(dtype)
