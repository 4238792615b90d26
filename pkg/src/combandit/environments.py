"""Randomized adversaries that plant an epsilon-advantaged optimum under
correlated or independent Gaussian noise, with optional [0,1] clipping.

The correlated adversary adds one shared draw Z_t ~ N(0, sigma^2) to every
coordinate of round t's loss vector, so any k-sparse action observes a sum
whose variance is k^2 sigma^2; the independent control adds a fresh draw per
coordinate (variance k sigma^2).  Both use the same gap schedule

    epsilon = sigma * sqrt(k*d / (4*T))   (multitask / layered path)
    epsilon = sigma * sqrt(k*d / (8*T))   (ranking / matching)

and the clipped construction fixes sigma^2 = 1/(192 + 96*ln T).  The natural
logarithm is the right reading of "log" here: the Gaussian tail bound
exp(-(1/4)^2 / (2 sigma^2)) = exp(-(6 + 3 ln T)) collapses to e^-6 / T^2
only with ln.

Gaussian noise is produced by inverse-CDF transform of uniforms from a
counter-based Philox stream, which keeps loss sequences bit-identical across
platforms and across the numba/pure kernel paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .action_sets import (
    ActionSet,
    ActionSetError,
    Dimensions,
    Family,
    action_to_string,
)


class NoiseMode(str, Enum):
    CORRELATED = "CorrelatedGaussian"
    INDEPENDENT = "IndependentGaussian"


class EpsilonVariant(str, Enum):
    MULTITASK = "multitask"
    RANKING = "ranking"


def make_rng(seed_seq) -> np.random.Generator:
    """Generator over the counter-based Philox stream."""
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(seed_seq)
    return np.random.Generator(np.random.Philox(seed_seq))


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """N(0,1) draws via the inverse normal CDF applied to uniforms.

    Uniforms are taken on the centered grid (i + 1/2) * 2^-53, i in
    [0, 2^53), so the transform never sees 0 or 1 and the mapping from the
    underlying bit stream to normals is an explicit, platform-independent
    formula.
    """
    u = (rng.integers(0, 1 << 53, size=shape, dtype=np.uint64) + 0.5) * 2.0**-53
    return ndtri(u)


def clip(a):
    """Truncate to [0, 1]: max(min(a, 1), 0).  Works on scalars and arrays."""
    return np.minimum(np.maximum(a, 0.0), 1.0)


def compute_sigma(T) -> float:
    """Noise scale of the clipped construction, 1/sqrt(192 + 96 ln T)."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    return 1.0 / math.sqrt(192.0 + 96.0 * math.log(T))


def compute_epsilon(sigma: float, dims: Dimensions, T: int,
                    variant: EpsilonVariant = EpsilonVariant.MULTITASK) -> float:
    """Planted gap: sigma*sqrt(kd/(4T)) multitask, sigma*sqrt(kd/(8T)) ranking."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    denom = 4.0 if EpsilonVariant(variant) is EpsilonVariant.MULTITASK else 8.0
    return sigma * math.sqrt(dims.k * dims.d / (denom * T))


def epsilon_variant_for(family: Family) -> EpsilonVariant:
    """Matching uses the ranking schedule; the other families the multitask one."""
    return (EpsilonVariant.RANKING if family is Family.MATCHING
            else EpsilonVariant.MULTITASK)


def sample_optimal_action(action_set: ActionSet, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw of the planted optimum x* from the action set."""
    return action_set.sample_uniform(rng)


@dataclass(frozen=True)
class AdversaryConfig:
    """Frozen description of one environment realization.

    ``seed`` keys the noise stream only; ``x_star`` is already sampled.  The
    full loss sequence is a deterministic function of this object.
    """

    dims: Dimensions
    T: int
    sigma: float
    epsilon: float
    noise_mode: NoiseMode
    clipped: bool
    x_star: np.ndarray
    seed: np.random.SeedSequence

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"horizon must be >= 1, got {self.T}")
        if self.sigma < 0 or self.epsilon < 0:
            raise ValueError("sigma and epsilon must be nonnegative")
        x = np.asarray(self.x_star, dtype=np.uint8)
        if x.shape != (self.dims.d,) or int(x.sum()) != self.dims.k:
            raise ValueError("x_star must be a k-sparse vector of length d")
        object.__setattr__(self, "x_star", x)

    def describe(self) -> str:
        return (
            f"noise_mode={self.noise_mode.value} clipped={str(self.clipped).lower()} "
            f"sigma={self.sigma!r} epsilon={self.epsilon!r} "
            f"seed={self.seed.entropy} x_star={action_to_string(self.x_star)}"
        )


def make_adversary(action_set: ActionSet, T: int, seed_seq,
                   noise_mode: NoiseMode = NoiseMode.CORRELATED,
                   clipped: bool = False,
                   sigma: float | None = None,
                   epsilon: float | None = None) -> AdversaryConfig:
    """Build an adversary for this action set.

    sigma defaults to the clipped-construction schedule and epsilon to the
    family's gap schedule.  The seed is split: one child samples x*, the
    other keys the per-round noise.
    """
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(seed_seq)
    dims = action_set.dims
    if sigma is None:
        sigma = compute_sigma(T)
    if epsilon is None:
        epsilon = compute_epsilon(sigma, dims, T, epsilon_variant_for(dims.family))
    xstar_seq, noise_seq = seed_seq.spawn(2)
    x_star = sample_optimal_action(action_set, make_rng(xstar_seq))
    return AdversaryConfig(
        dims=dims, T=T, sigma=sigma, epsilon=epsilon,
        noise_mode=NoiseMode(noise_mode), clipped=clipped,
        x_star=x_star, seed=noise_seq,
    )


def make_theorem4_adversary(action_set: ActionSet, T: int, seed_seq) -> AdversaryConfig:
    """Clipped correlated adversary with the full lower-bound recipe.

    Requires T >= k*d; uses sigma = 1/sqrt(192 + 96 ln T) and the family's
    epsilon schedule with a freshly sampled x*.
    """
    dims = action_set.dims
    if T < dims.k * dims.d:
        raise ValueError(
            f"clipped construction requires T >= k*d = {dims.k * dims.d}, got T={T}"
        )
    return make_adversary(action_set, T, seed_seq,
                          noise_mode=NoiseMode.CORRELATED, clipped=True)


def draw_losses(config: AdversaryConfig) -> tuple[np.ndarray, np.ndarray]:
    """All T loss vectors plus the recorded noise draws.

    Returns ``(losses, noise)`` where losses is (T, d) and noise is (T,) for
    the correlated mode or (T, d) for the independent control.  Rounds are
    i.i.d.; the whole sequence is a pure function of the config.
    """
    rng = make_rng(config.seed)
    T, d = config.T, config.dims.d
    if config.noise_mode is NoiseMode.CORRELATED:
        noise = config.sigma * standard_normals(rng, (T,))
        losses = 0.5 - config.epsilon * config.x_star.astype(np.float64)
        losses = np.tile(losses, (T, 1)) + noise[:, None]
    else:
        noise = config.sigma * standard_normals(rng, (T, d))
        losses = 0.5 - config.epsilon * config.x_star.astype(np.float64) + noise
    if config.clipped:
        losses = clip(losses)
    return np.ascontiguousarray(losses), noise


def draw_loss(config: AdversaryConfig, t: int) -> tuple[np.ndarray, np.ndarray | float]:
    """Round t's loss vector (1-indexed) and its recorded noise."""
    if not 1 <= t <= config.T:
        raise ValueError(f"round index {t} outside 1..{config.T}")
    losses, noise = draw_losses(config)
    return losses[t - 1], noise[t - 1]


def with_noise_mode(config: AdversaryConfig, noise_mode: NoiseMode) -> AdversaryConfig:
    """Same planted optimum and schedules, different noise structure."""
    return replace(config, noise_mode=NoiseMode(noise_mode))


def shortest_path_losses(multitask_losses: np.ndarray, graph) -> np.ndarray:
    """Lift multitask losses onto the layered graph's edges.

    Layer j's fan-out edges carry block j of the multitask loss vector (the
    induced problem has k/2 tasks of d/k arms); fan-in edges carry 0.  For
    every path x, the edge losses of x sum to the multitask losses of its
    arm tuple, exactly.
    """
    from .action_sets import LayeredPathSet

    if not isinstance(graph, LayeredPathSet):
        raise ActionSetError("shortest_path_losses requires a layered path set")
    multitask_losses = np.asarray(multitask_losses, dtype=np.float64)
    single = multitask_losses.ndim == 1
    if single:
        multitask_losses = multitask_losses[None, :]
    if multitask_losses.shape[1] != graph.layers * graph.fan:
        raise ActionSetError(
            f"expected {graph.layers * graph.fan} multitask coordinates, "
            f"got {multitask_losses.shape[1]}"
        )
    T = multitask_losses.shape[0]
    out = np.zeros((T, graph.dims.d), dtype=np.float64)
    for j in range(graph.layers):
        block = multitask_losses[:, j * graph.fan:(j + 1) * graph.fan]
        out[:, j * 2 * graph.fan:j * 2 * graph.fan + graph.fan] = block
    return out[0] if single else out
