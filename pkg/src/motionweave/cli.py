"""Command-line interface for the full pipeline."""

from __future__ import annotations

import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import click
import numpy as np

from . import __version__, corpus, diffusion, embedding, evaluate, metrics
from . import pipeline as P
from . import semgraph, vae
from .checkpoint import (BUNDLE_FILES, load_bundle, load_space, load_vae,
                         save_denoisers, save_space, save_vae)
from .errors import MotionweaveError
from .motion import default_skeleton, playback_dict


def _fail(message: str, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps({"error": str(message)}), err=True)
    else:
        click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _dump(payload, path=None, as_json=False, text=None):
    body = json.dumps(payload, indent=None if path else 2, sort_keys=True)
    if path:
        Path(path).write_text(body)
        if not as_json:
            click.echo(f"wrote {path}")
        else:
            click.echo(json.dumps({"written": str(path)}))
    elif as_json or text is None:
        click.echo(body)
    else:
        click.echo(text)


def _apply_config(cfg, config_path, **overrides):
    values = {}
    if config_path:
        values.update(json.loads(Path(config_path).read_text()))
    names = {f.name for f in fields(cfg)}
    unknown = set(values) - names
    if unknown:
        raise MotionweaveError(f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items()
                   if v is not None and k in names})
    for key in ("steps",):
        if key in values and isinstance(values[key], list):
            values[key] = tuple(values[key])
    return replace(cfg, **values)


@click.group()
@click.version_option(__version__)
@click.option("--precision", type=click.Choice(["32", "64"]), default=None,
              help="Float width for training and loaded models.")
@click.option("--json", "as_json", is_flag=True,
              help="Machine-readable JSON output.")
@click.pass_context
def main(ctx, precision, as_json):
    """Text-to-motion generation with local-action guidance."""
    ctx.ensure_object(dict)
    ctx.obj["precision"] = precision
    ctx.obj["json"] = as_json


@main.command("gen-corpus")
@click.option("--seed", type=int, required=True)
@click.option("--size", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--min-actions", type=int, default=1)
@click.option("--max-actions", type=int, default=4)
@click.pass_context
def gen_corpus(ctx, seed, size, out, min_actions, max_actions):
    """Generate the synthetic corpus and save it as JSONL."""
    try:
        cfg = corpus.GrammarConfig(min_actions=min_actions,
                                   max_actions=max_actions)
        entries = corpus.generate_corpus(seed, size, cfg)
        corpus.save_corpus(entries, out)
    except (MotionweaveError, ValueError, OSError) as exc:
        _fail(exc, ctx.obj["json"])
    _dump({"entries": size, "path": str(out)}, as_json=ctx.obj["json"],
          text=f"wrote {size} entries to {out}")


@main.command()
@click.argument("target", type=click.Choice(["embedder", "vae", "diffusion",
                                             "all"]))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              required=True)
@click.option("--out", type=click.Path(), required=True,
              help="Models directory; checkpoints accumulate here.")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--level", type=click.Choice(["m", "a", "s"]), default=None,
              help="Restrict 'vae' training to one level.")
@click.pass_context
def train(ctx, target, corpus_path, out, config_path, seed, epochs, level):
    """Train a pipeline stage (embedder must precede diffusion)."""
    as_json = ctx.obj["json"]
    dtype = f"float{ctx.obj['precision']}" if ctx.obj["precision"] else None
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        entries = corpus.load_corpus(corpus_path)
        summary = {}
        if target in ("embedder", "all"):
            cfg = _apply_config(embedding.EmbedderConfig(), config_path,
                                seed=seed, epochs=epochs, dtype=dtype)
            space = embedding.train_contrastive(entries, cfg)
            save_space(out_dir / BUNDLE_FILES["space"], space)
            summary["embedder"] = {"val_top1": space.val_top1,
                                   "meets_target": space.meets_target,
                                   "final_loss": space.train_curve[-1]
                                   if space.train_curve else None}
        if target in ("vae", "all"):
            levels = [level] if level else list(vae.LEVELS)
            for lvl in levels:
                cfg = _apply_config(vae.VaeConfig(level=lvl), config_path,
                                    seed=seed, epochs=epochs, dtype=dtype)
                cfg = replace(cfg, level=lvl)
                result = vae.train_vae(entries, cfg)
                save_vae(out_dir / BUNDLE_FILES[f"vae_{lvl}"], result.vae)
                summary[f"vae_{lvl}"] = {
                    "final_loss": result.curve[-1] if result.curve else None,
                    "recon_error": vae.reconstruction_error(result.vae,
                                                            entries)}
        if target in ("diffusion", "all"):
            space = load_space(out_dir / BUNDLE_FILES["space"],
                               ctx.obj["precision"])
            vaes = {lvl: load_vae(out_dir / BUNDLE_FILES[f"vae_{lvl}"],
                                  ctx.obj["precision"])
                    for lvl in vae.LEVELS}
            cfg = _apply_config(P.DiffusionConfig(), config_path, seed=seed,
                                epochs=epochs, dtype=dtype,
                                node_dim=space.config.dim,
                                latent_dim=vaes["s"].config.latent_dim)
            result = P.train_diffusion(entries, space, vaes, cfg)
            save_denoisers(out_dir / BUNDLE_FILES["denoisers"], result.model)
            summary["diffusion"] = {
                "final_loss": result.curve[-1] if result.curve else None}
    except (MotionweaveError, ValueError, OSError, FileNotFoundError) as exc:
        _fail(exc, as_json)
    _dump({"trained": target, "models": str(out_dir), **summary},
          as_json=as_json,
          text=f"trained {target} -> {out_dir}\n"
          + json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@click.option("--text", required=True)
@click.pass_context
def parse(ctx, text):
    """Parse a description and print its semantic graph as JSON."""
    try:
        graph = semgraph.parse(text)
    except (MotionweaveError, ValueError) as exc:
        _fail(exc, ctx.obj["json"])
    payload = graph.to_dict()
    payload["local_actions"] = semgraph.local_action_descriptions(graph)
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def _load_models(ctx, models_dir, corpus_path=None):
    return load_bundle(models_dir, corpus_path, ctx.obj["precision"])


@main.command("sample-action")
@click.option("--text", required=True)
@click.option("--seeds", type=int, default=3, help="Number of candidates.")
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--steps", default="15,15", help="Motion,action step counts.")
@click.option("--length", type=int, default=60)
@click.option("--out", type=click.Path())
@click.pass_context
def sample_action(ctx, text, seeds, models_dir, steps, length, out):
    """Generate candidate local actions for one action description."""
    try:
        models = _load_models(ctx, models_dir)
        sm, sa = (int(x) for x in steps.split(","))
        candidates = []
        for k in range(seeds):
            plan = P.SamplingPlan(steps=(sm, sa, 1), seed=k)
            motion, latent = P.sample_local_action(text, plan, models,
                                                   length=length)
            candidates.append({
                "seed": k,
                "latent": latent.tolist(),
                "motion": playback_dict(motion, default_skeleton()),
            })
    except (MotionweaveError, ValueError, FileNotFoundError) as exc:
        _fail(exc, ctx.obj["json"])
    payload = {"text": text, "candidates": candidates}
    _dump(payload, out, ctx.obj["json"],
          text=f"sampled {seeds} candidates for {text!r}")


def _parse_weights(weights: str | None, n_actions: int):
    if not weights:
        return None
    mult = np.ones(n_actions)
    for part in weights.split(","):
        key, _, value = part.partition("=")
        idx = int(key)
        if not 0 <= idx < n_actions:
            raise MotionweaveError(
                f"weight index {idx} out of range for {n_actions} actions")
        mult[idx] = float(value)
    return mult


@main.command()
@click.option("--text", required=True)
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus used for exemplar retrieval.")
@click.option("--weights", help="Per-action multipliers, e.g. 0=2.0,1=0.5.")
@click.option("--rho", type=float, default=0.01)
@click.option("--steps", default="50,50,50")
@click.option("--seed", type=int, default=0)
@click.option("--refs", "refs_path", type=click.Path(exists=True),
              help="JSON file with explicit reference latents.")
@click.option("--length", type=int, default=None)
@click.option("--out", type=click.Path())
@click.pass_context
def generate(ctx, text, models_dir, corpus_path, weights, rho, steps, seed,
             refs_path, length, out):
    """Generate a motion for a description with local-action guidance."""
    try:
        models = _load_models(ctx, models_dir, corpus_path)
        step_tuple = tuple(int(x) for x in steps.split(","))
        graph = semgraph.parse(text)
        mult = _parse_weights(weights, len(graph.action_nodes))
        refs = None
        if refs_path:
            refs = [np.asarray(r) for r in
                    json.loads(Path(refs_path).read_text())["references"]]
        plan = P.SamplingPlan(steps=step_tuple, rho=rho, seed=seed,
                              length=length)
        if rho > 0 and refs is None and models.corpus is None:
            raise MotionweaveError(
                "guidance requires --corpus for retrieval or --refs")
        motion, diag = P.sample(text, plan, models, refs=refs,
                                weight_multipliers=mult)
    except (MotionweaveError, ValueError, FileNotFoundError) as exc:
        _fail(exc, ctx.obj["json"])
    payload = {
        "text": text,
        "motion": playback_dict(motion, default_skeleton()),
        "features": motion.frames.tolist(),
        "diagnostics": diag.to_dict(),
    }
    _dump(payload, out, ctx.obj["json"],
          text=f"generated {len(motion)} frames; lambdas="
          f"{[round(float(x), 5) for x in diag.lambdas]}")


@main.command("evaluate")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              required=True)
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--repeats", type=int, default=20)
@click.option("--eval-size", type=int, default=32)
@click.option("--steps", default="15,15,15")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path())
@click.pass_context
def evaluate_cmd(ctx, corpus_path, models_dir, repeats, eval_size, steps,
                 seed, out):
    """Run the metric suite over generated motions."""
    try:
        models = _load_models(ctx, models_dir, corpus_path)
        cfg = evaluate.EvalConfig(repeats=repeats, eval_size=eval_size,
                                  steps=tuple(int(x) for x in steps.split(",")),
                                  seed=seed)
        report = evaluate.evaluate_models(models, models.corpus, cfg)
    except (MotionweaveError, ValueError, FileNotFoundError) as exc:
        _fail(exc, ctx.obj["json"])
    payload = report.to_dict()
    if out:
        Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(report.table())


@main.command()
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--models", "models_dir", type=click.Path(exists=True),
              required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True))
@click.pass_context
def serve(ctx, port, host, models_dir, corpus_path):
    """Serve the HTTP API for the companion UI."""
    import uvicorn

    from .service import create_app
    app = create_app(models_dir, corpus_path, precision=ctx.obj["precision"])
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
