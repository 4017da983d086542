"""Evaluation metrics over text/motion feature sets.

All five metrics operate on evaluation features extracted by the trained
embedding space: retrieval precision against 32-candidate pools, Frechet
distance between Gaussian fits, mean paired text-motion distance, diversity
between random disjoint subsets, and per-description multimodality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass
class FeatureSet:
    features: np.ndarray     # (N, D_e)
    ids: list
    kind: str                # "text" | "motion"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise ValueError("features must be a non-empty (N, D) matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if len(self.ids) != len(self.features):
            raise ValueError("one id per feature row required")


def _check_aligned(a: FeatureSet, b: FeatureSet):
    if list(a.ids) != list(b.ids):
        raise ValueError("feature sets are not id-aligned")


def _moments(x: np.ndarray, reg: float = 1e-6):
    mu = x.mean(axis=0)
    d = x.shape[1]
    if len(x) == 1:
        sigma = np.zeros((d, d))
    else:
        sigma = np.atleast_2d(np.cov(x, rowvar=False))
    if len(x) <= d:
        sigma = sigma + reg * np.eye(d)
    return mu, sigma


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a, features_b, exact_moments=None) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    The cross term uses the trace-equivalent symmetrized product
    sqrt(Sa) Sb sqrt(Sa) and a symmetric eigendecomposition; pass
    exact_moments=((mu_a, sig_a), (mu_b, sig_b)) to bypass estimation.
    """
    if exact_moments is not None:
        (mu_a, sig_a), (mu_b, sig_b) = exact_moments
        mu_a, sig_a = np.asarray(mu_a), np.atleast_2d(sig_a)
        mu_b, sig_b = np.asarray(mu_b), np.atleast_2d(sig_b)
    else:
        a = np.asarray(features_a, dtype=np.float64)
        b = np.asarray(features_b, dtype=np.float64)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("features contain non-finite values")
        mu_a, sig_a = _moments(a)
        mu_b, sig_b = _moments(b)
    diff = mu_a - mu_b
    root_a = _psd_sqrt(sig_a)
    inner = _psd_sqrt(root_a @ sig_b @ root_a)
    return float(diff @ diff + np.trace(sig_a) + np.trace(sig_b)
                 - 2.0 * np.trace(inner))


def fid_reference(features_a, features_b) -> float:
    """Independent oracle: Schur-decomposition matrix square root."""
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    mu_a, sig_a = _moments(a)
    mu_b, sig_b = _moments(b)
    covmean = scipy.linalg.sqrtm(sig_a @ sig_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(sig_a) + np.trace(sig_b)
                 - 2.0 * np.trace(covmean))


def r_precision(text: FeatureSet, motion: FeatureSet, pool_size: int = 32,
                seed: int = 0) -> dict:
    """Top-1/2/3 retrieval accuracy of the true description per motion.

    Each motion is ranked against its own description plus pool_size-1
    seeded mismatched ones by Euclidean distance; ties favor the true match.
    """
    _check_aligned(text, motion)
    n = len(motion.features)
    if n < pool_size:
        raise ValueError(f"need at least {pool_size} rows, got {n}")
    rng = np.random.default_rng(seed)
    hits = np.zeros(3)
    for i in range(n):
        others = rng.choice(np.delete(np.arange(n), i), size=pool_size - 1,
                            replace=False)
        d_true = np.linalg.norm(motion.features[i] - text.features[i])
        d_others = np.linalg.norm(motion.features[i] - text.features[others],
                                  axis=1)
        rank = 1 + int(np.sum(d_others < d_true))
        for k in range(3):
            hits[k] += rank <= k + 1
    return {"top1": hits[0] / n, "top2": hits[1] / n, "top3": hits[2] / n}


def mm_dist(text: FeatureSet, motion: FeatureSet) -> float:
    """Mean Euclidean distance over id-aligned text/motion pairs."""
    _check_aligned(text, motion)
    return float(np.linalg.norm(text.features - motion.features,
                                axis=1).mean())


def diversity(features: np.ndarray, subset_size: int, seed: int = 0) -> float:
    """Mean distance between two seeded disjoint subsets of equal size."""
    features = np.asarray(features, dtype=np.float64)
    if len(features) < 2 * subset_size:
        raise ValueError(
            f"need at least {2 * subset_size} rows, got {len(features)}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(features), size=2 * subset_size, replace=False)
    first, second = pick[:subset_size], pick[subset_size:]
    return float(np.linalg.norm(features[first] - features[second],
                                axis=1).mean())


def multimodality(grouped_features: np.ndarray) -> float:
    """Mean pairwise distance within per-description generation groups.

    grouped_features has shape (J_m, 2 * X_m, D): row 2i pairs with row
    2i+1 inside each group.
    """
    g = np.asarray(grouped_features, dtype=np.float64)
    if g.ndim != 3 or g.shape[1] % 2:
        raise ValueError("expected (J_m, 2*X_m, D) grouped features")
    a = g[:, 0::2, :]
    b = g[:, 1::2, :]
    return float(np.linalg.norm(a - b, axis=2).mean())


def confidence_interval(values) -> float:
    """Half-width of the normal-approximation 95% interval."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(len(values)))


@dataclass
class MetricReport:
    """Per-repeat metric values with mean and 95% confidence interval."""
    repeats: dict = field(default_factory=dict)   # name -> list of values

    def add(self, name: str, value: float):
        self.repeats.setdefault(name, []).append(float(value))

    def mean(self, name: str) -> float:
        return float(np.mean(self.repeats[name]))

    def ci(self, name: str) -> float:
        return confidence_interval(self.repeats[name])

    def to_dict(self) -> dict:
        out = {}
        for name, values in self.repeats.items():
            out[name] = {"mean": float(np.mean(values)),
                         "ci95": confidence_interval(values),
                         "values": [float(v) for v in values]}
        return out

    def table(self) -> str:
        order = ["r_precision_top1", "r_precision_top2", "r_precision_top3",
                 "fid", "mm_dist", "diversity", "multimodality"]
        headers = ["R-Precision Top-1", "Top-2", "Top-3", "FID", "MM-Dist",
                   "Diversity", "MModality"]
        cells = []
        for name in order:
            if name in self.repeats:
                cells.append(f"{self.mean(name):.3f}±{self.ci(name):.3f}")
            else:
                cells.append("-")
        w = max(len(h) for h in headers) + 2
        line1 = "".join(h.ljust(w) for h in headers)
        line2 = "".join(c.ljust(w) for c in cells)
        return line1 + "\n" + line2
