"""Evaluation harness: generate motions for held descriptions, extract
features, and aggregate the metric suite over repeated runs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import metrics as M
from . import pipeline as P
from .corpus import CorpusEntry


@dataclass
class EvalConfig:
    repeats: int = 20
    eval_size: int = 32
    pool_size: int = 32
    steps: tuple = (15, 15, 15)
    rho: float = 0.01
    j_m: int = 4                 # descriptions in the multimodality set
    x_m: int = 2                 # motion pairs per description
    diversity_size: int = 8
    seed: int = 0


def evaluate_models(models: P.ModelBundle, entries: list[CorpusEntry],
                    config: EvalConfig | None = None) -> M.MetricReport:
    config = config or EvalConfig()
    if len(entries) < config.eval_size:
        raise ValueError(
            f"need at least {config.eval_size} corpus entries for evaluation")
    pick_rng = np.random.default_rng(np.random.SeedSequence(config.seed,
                                                            spawn_key=(1,)))
    eval_idx = pick_rng.choice(len(entries), size=config.eval_size,
                               replace=False)
    eval_entries = [entries[i] for i in eval_idx]
    mm_idx = pick_rng.choice(len(eval_entries), size=config.j_m, replace=False)

    ids = [e.id for e in eval_entries]
    descs = [e.description for e in eval_entries]
    text_feats = M.FeatureSet(models.space.text_features(descs), ids, "text")
    real_feats = M.FeatureSet(
        models.space.motion_features([e.motion for e in eval_entries]),
        ids, "motion")

    report = M.MetricReport()
    real_rp = M.r_precision(text_feats, real_feats, config.pool_size,
                            seed=config.seed)
    for k, v in real_rp.items():
        report.add(f"real_r_precision_{k}", v)
    report.add("real_diversity",
               M.diversity(real_feats.features, config.diversity_size,
                           seed=config.seed))

    for r in range(config.repeats):
        gen_motions = []
        for i, e in enumerate(eval_entries):
            plan = P.SamplingPlan(steps=config.steps, rho=config.rho,
                                  seed=_mix(config.seed, r, i))
            motion, _ = P.sample(e.description, plan, models)
            gen_motions.append(motion)
        gen_feats = M.FeatureSet(models.space.motion_features(gen_motions),
                                 ids, "motion")
        rp = M.r_precision(text_feats, gen_feats, config.pool_size,
                           seed=_mix(config.seed, r, 7001))
        report.add("r_precision_top1", rp["top1"])
        report.add("r_precision_top2", rp["top2"])
        report.add("r_precision_top3", rp["top3"])
        report.add("fid", M.fid(real_feats.features, gen_feats.features))
        report.add("mm_dist", M.mm_dist(text_feats, gen_feats))
        report.add("diversity",
                   M.diversity(gen_feats.features, config.diversity_size,
                               seed=_mix(config.seed, r, 7002)))
        groups = []
        for j in mm_idx:
            desc = eval_entries[j].description
            group = []
            for k in range(2 * config.x_m):
                plan = P.SamplingPlan(steps=config.steps, rho=config.rho,
                                      seed=_mix(config.seed, r, 9000 + 100 * j + k))
                motion, _ = P.sample(desc, plan, models)
                group.append(motion)
            groups.append(models.space.motion_features(group))
        report.add("multimodality", M.multimodality(np.stack(groups)))
    return report


def _mix(*parts) -> int:
    """Stable seed derivation from integer parts."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])
