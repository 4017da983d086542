"""Checkpoint container and typed model persistence.

Binary layout: magic "MWCP", u16 version, u64 header length, header JSON
(config snapshot + tensor table), raw row-major tensor bytes, and a SHA-256
checksum over header+payload. Saving is canonical (sorted tensor names,
sorted JSON keys), so save→load→save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import diffusion as D
from .corpus import load_corpus
from .embedding import EmbedderConfig, EmbeddingSpace, EvalExtractor, TextEncoder
from .errors import ChecksumError, CorpusFormatError, VersionError
from .pipeline import DiffusionConfig, HierarchicalDenoisers, ModelBundle
from .vae import LEVELS, MotionVae, VaeConfig

MAGIC = b"MWCP"
VERSION = 1


def save_checkpoint(path, config: dict, arrays: dict) -> None:
    names = sorted(arrays)
    table = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        blob = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.name,
                      "shape": list(arr.shape), "offset": offset,
                      "nbytes": len(blob)})
        offset += len(blob)
        blobs.append(blob)
    header = json.dumps({"config": config, "tensors": table},
                        sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(blobs)
    digest = hashlib.sha256(header + payload).digest()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(digest)


def load_checkpoint(path):
    """Returns (config dict, {name: array}). Verifies version and checksum."""
    raw = Path(path).read_bytes()
    if len(raw) < 14 or raw[:4] != MAGIC:
        raise CorpusFormatError(f"not a checkpoint file: {path}")
    version = struct.unpack("<H", raw[4:6])[0]
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack("<Q", raw[6:14])[0]
    header_end = 14 + hlen
    if len(raw) < header_end + 32:
        raise CorpusFormatError(f"truncated checkpoint: {path}")
    header = raw[14:header_end]
    payload = raw[header_end:-32]
    digest = raw[-32:]
    if hashlib.sha256(header + payload).digest() != digest:
        raise ChecksumError(f"checksum mismatch in {path}")
    meta = json.loads(header)
    arrays = {}
    for t in meta["tensors"]:
        start, n = t["offset"], t["nbytes"]
        arr = np.frombuffer(payload[start:start + n],
                            dtype=np.dtype(t["dtype"]))
        arrays[t["name"]] = arr.reshape(t["shape"]).copy()
    return meta["config"], arrays


# ------------------------------------------------------------ typed savers

def save_space(path, space: EmbeddingSpace) -> None:
    config = asdict(space.config)
    config["vocab"] = space.text_encoder.vocab
    config["val_top1"] = space.val_top1
    arrays = {}
    for name, p in space.text_encoder.named_parameters("text."):
        arrays[name] = p.data
    for name, p in space.eval_extractor.named_parameters("eval."):
        arrays[name] = p.data
    save_checkpoint(path, config, arrays)


def load_space(path, precision: str | None = None) -> EmbeddingSpace:
    config, arrays = load_checkpoint(path)
    vocab = config.pop("vocab")
    val_top1 = config.pop("val_top1", 0.0)
    if precision:
        config["dtype"] = f"float{precision}"
    cfg = EmbedderConfig(**config)
    rng = np.random.default_rng(0)
    text = TextEncoder(vocab, cfg, rng)
    ext = EvalExtractor(cfg, rng)
    text.load_state_arrays({k[5:]: v for k, v in arrays.items()
                            if k.startswith("text.")})
    ext.load_state_arrays({k[5:]: v for k, v in arrays.items()
                           if k.startswith("eval.")})
    return EmbeddingSpace(cfg, text, ext, val_top1=val_top1,
                          meets_target=val_top1 >= 0.6)


def save_vae(path, vae: MotionVae) -> None:
    save_checkpoint(path, asdict(vae.config), vae.state_arrays())


def load_vae(path, precision: str | None = None) -> MotionVae:
    config, arrays = load_checkpoint(path)
    if precision:
        config["dtype"] = f"float{precision}"
    cfg = VaeConfig(**config)
    vae = MotionVae(cfg, np.random.default_rng(0))
    vae.load_state_arrays(arrays)
    return vae


def save_denoisers(path, model: HierarchicalDenoisers) -> None:
    save_checkpoint(path, asdict(model.config), model.state_arrays())


def load_denoisers(path, precision: str | None = None) -> HierarchicalDenoisers:
    config, arrays = load_checkpoint(path)
    if precision:
        config["dtype"] = f"float{precision}"
    cfg = DiffusionConfig(**config)
    model = HierarchicalDenoisers(cfg, np.random.default_rng(0))
    model.load_state_arrays(arrays)
    return model


BUNDLE_FILES = {
    "space": "embedder.ckpt",
    "vae_m": "vae_m.ckpt",
    "vae_a": "vae_a.ckpt",
    "vae_s": "vae_s.ckpt",
    "denoisers": "diffusion.ckpt",
}


def load_bundle(models_dir, corpus_path=None, precision: str | None = None
                ) -> ModelBundle:
    models_dir = Path(models_dir)
    for key, fname in BUNDLE_FILES.items():
        if not (models_dir / fname).exists():
            raise FileNotFoundError(f"missing checkpoint {fname} in {models_dir}")
    space = load_space(models_dir / BUNDLE_FILES["space"], precision)
    vaes = {level: load_vae(models_dir / BUNDLE_FILES[f"vae_{level}"], precision)
            for level in LEVELS}
    den = load_denoisers(models_dir / BUNDLE_FILES["denoisers"], precision)
    schedule = D.make_schedule(den.config.T, den.config.beta_start,
                               den.config.beta_end)
    corpus = load_corpus(corpus_path) if corpus_path else None
    return ModelBundle(space, vaes, den, schedule, corpus=corpus)
