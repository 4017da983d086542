"""Noise schedule, forward noising, reverse steps, classifier-free guidance
combination, and the reference-latent energy guidance update.

All functions are pure numpy; the denoiser enters only through its predicted
noise. Timesteps are 1-indexed: t=0 means clean data, the schedule covers
t in 1..T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 8.5e-4
DEFAULT_BETA_END = 0.012


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray        # (T,) beta_1..beta_T
    alphas: np.ndarray       # 1 - beta
    alpha_bars: np.ndarray   # cumulative products

    @property
    def T(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bars[t - 1])

    def _check(self, t: int):
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} out of range 1..{self.T}")


def make_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if T < 2:
        raise ValueError("T must be >= 2")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ValueError("require 0 < beta_start < beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def q_sample(z0: np.ndarray, t: int, eps: np.ndarray,
             schedule: NoiseSchedule) -> np.ndarray:
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ValueError("z0 and eps shapes differ")
    schedule._check(t)
    return np.sqrt(schedule.alpha_bar(t)) * z0 \
        + np.sqrt(1.0 - schedule.alpha_bar(t)) * eps


def predict_z0(z_t: np.ndarray, eps_hat: np.ndarray, t: int,
               schedule: NoiseSchedule) -> np.ndarray:
    ab = schedule.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def reverse_step(z_t: np.ndarray, eps_hat: np.ndarray, t: int,
                 schedule: NoiseSchedule, mode: str = "deterministic",
                 noise: np.ndarray | None = None,
                 t_prev: int | None = None) -> np.ndarray:
    """One reverse update from t to t_prev (default t-1).

    "ancestral" adds sqrt(beta_t)-scaled noise and requires t_prev == t-1;
    "deterministic" is the noise-free update and may skip steps.
    """
    z_t = np.asarray(z_t)
    eps_hat = np.asarray(eps_hat)
    if z_t.shape != eps_hat.shape:
        raise ValueError("z_t and eps_hat shapes differ")
    if t < 1:
        raise ValueError("no reverse step from t=0")
    if t_prev is None:
        t_prev = t - 1
    if not 0 <= t_prev < t:
        raise ValueError(f"invalid t_prev {t_prev} for t {t}")
    if mode == "ancestral":
        if t_prev != t - 1:
            raise ValueError("ancestral mode cannot skip steps")
        beta = schedule.beta(t)
        ab = schedule.alpha_bar(t)
        mean = (z_t - beta / np.sqrt(1.0 - ab) * eps_hat) \
            / np.sqrt(schedule.alpha(t))
        if t == 1 or noise is None:
            return mean
        return mean + np.sqrt(beta) * np.asarray(noise)
    if mode == "deterministic":
        z0_hat = predict_z0(z_t, eps_hat, t, schedule)
        ab_prev = schedule.alpha_bar(t_prev)
        return np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    raise ValueError(f"unknown mode {mode!r}")


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray,
                alpha: float) -> np.ndarray:
    eps_cond = np.asarray(eps_cond)
    eps_uncond = np.asarray(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("prediction shapes differ")
    return alpha * eps_cond + (1.0 - alpha) * eps_uncond


def timestep_grid(T: int, steps: int) -> list[int]:
    """Evenly spaced sub-grid of timesteps including T and 1, descending.

    A single-step grid is just [T] (the jump straight to clean data).
    """
    if not 1 <= steps <= T:
        raise ValueError("steps must be in 1..T")
    if steps == 1:
        return [T]
    grid = np.unique(np.linspace(1, T, steps).round().astype(int))
    return [int(t) for t in grid[::-1]]


# ------------------------------------------------------------ energy guidance

def energy(c_ref: np.ndarray, z: np.ndarray, squared: bool = True) -> float:
    """Reference mismatch: squared L2 by default, plain L2 when squared=False.

    Zero exactly when z equals the reference; grows monotonically with
    distance.
    """
    c_ref = np.asarray(c_ref)
    z = np.asarray(z)
    if c_ref.shape != z.shape:
        raise ValueError(f"shape mismatch {c_ref.shape} vs {z.shape}")
    sq = float(((z - c_ref) ** 2).sum())
    return sq if squared else float(np.sqrt(sq))


def energy_gradient(c_ref: np.ndarray, z_t: np.ndarray, eps_hat: np.ndarray,
                    t: int, schedule: NoiseSchedule, mode: str,
                    squared: bool = True) -> np.ndarray:
    """Gradient of the energy with respect to z_t.

    scaled-reference: E compares z_t with sqrt(alpha_bar_t) * c (both at
    noise level t); clean-estimate: E compares the denoiser's z0 estimate
    with c, treating the denoiser as locally constant.
    """
    if mode == "scaled-reference":
        target = np.sqrt(schedule.alpha_bar(t)) * c_ref
        diff = z_t - target
        scale = 1.0
    elif mode == "clean-estimate":
        z0_hat = predict_z0(z_t, eps_hat, t, schedule)
        diff = z0_hat - c_ref
        scale = 1.0 / np.sqrt(schedule.alpha_bar(t))
    else:
        raise ValueError(f"unknown guidance mode {mode!r}")
    if squared:
        return 2.0 * diff * scale
    norm = np.sqrt((diff ** 2).sum())
    if norm == 0.0:
        return np.zeros_like(diff)
    return diff / norm * scale


@dataclass
class GuidanceSpec:
    """Reference latents with per-reference guiding weights."""
    references: list = field(default_factory=list)   # K arrays (Q^a, D')
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mode: str = "scaled-reference"
    squared: bool = True

    def __post_init__(self):
        self.references = [np.asarray(r, dtype=np.float64)
                           for r in self.references]
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.weights) != len(self.references):
            raise ValueError("one weight per reference required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        shapes = {r.shape for r in self.references}
        if len(shapes) > 1:
            raise ValueError("all references must share one shape")

    @property
    def K(self) -> int:
        return len(self.references)


def guided_step(z_t: np.ndarray, eps_hat: np.ndarray, t: int,
                schedule: NoiseSchedule, guidance: GuidanceSpec | None,
                mode: str = "deterministic",
                noise: np.ndarray | None = None,
                t_prev: int | None = None) -> np.ndarray:
    """Reverse step followed by the summed energy-gradient correction.

    With no guidance terms this reduces exactly to reverse_step.
    """
    base = reverse_step(z_t, eps_hat, t, schedule, mode, noise, t_prev)
    if guidance is None or guidance.K == 0:
        return base
    correction = np.zeros_like(base)
    for c_ref, lam in zip(guidance.references, guidance.weights):
        if c_ref.shape != z_t.shape:
            raise ValueError("reference shape does not match latent")
        grad = energy_gradient(c_ref, z_t, eps_hat, t, schedule,
                               guidance.mode, guidance.squared)
        correction += lam * grad
    return base - correction
