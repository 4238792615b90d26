"""Empirical regret, Monte Carlo aggregation, and numerical checks of the
quantities the lower-bound argument turns on: observed-loss variance,
per-round KL, exact play-count identities, and the clip-event tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import beta as beta_dist

from . import _kernels
from .action_sets import ActionSet, Dimensions, MatchingSet, MultitaskSet
from .engine import Transcript, play_losses
from .environments import (
    AdversaryConfig,
    NoiseMode,
    make_rng,
    standard_normals,
)


class BoundForm(str, Enum):
    LEMMA1 = "lemma1"
    THEOREM4 = "theorem4"
    LEMMA3 = "lemma3"


def hindsight_best(transcript_or_losses, action_set: ActionSet,
                   cap: int | None = None) -> tuple[np.ndarray, float]:
    """Best fixed action for the realized losses, by full enumeration.

    Returns (action bits, its cumulative loss).  Scores accumulate loss
    coordinates in increasing index order per action, so scores of actions
    related by a pure index permutation agree exactly.
    """
    losses = (transcript_or_losses.hidden_losses
              if isinstance(transcript_or_losses, Transcript)
              else np.asarray(transcript_or_losses))
    active = action_set.active_coords(cap)
    cum = losses.sum(axis=0)
    scores = _kernels.hindsight_scores(cum, active)
    best = int(np.argmin(scores))
    return action_set.enumerate_actions(cap)[best], float(scores[best])


def empirical_regret(transcript: Transcript, action_set: ActionSet,
                     cap: int | None = None) -> float:
    """Realized cumulative loss minus the hindsight-best cumulative loss."""
    _, best_loss = hindsight_best(transcript, action_set, cap)
    return transcript.cumulative_loss() - best_loss


def lower_bound_value(dims: Dimensions, T: int,
                      form: BoundForm = BoundForm.THEOREM4,
                      sigma: float | None = None) -> float:
    """Theoretical expected-regret floor: sigma * k^{3/2} * sqrt(dT) / c.

    c = 8 for the unclipped Gaussian constructions (caller supplies sigma),
    c = 16 for the clipped one, where sigma follows its 1/sqrt(192+96 ln T)
    schedule.
    """
    form = BoundForm(form)
    if form is BoundForm.THEOREM4:
        from .environments import compute_sigma

        if T < dims.k * dims.d:
            raise ValueError(
                f"clipped bound requires T >= k*d = {dims.k * dims.d}, got {T}")
        sigma = compute_sigma(T)
        divisor = 16.0
    else:
        if sigma is None:
            raise ValueError("lemma-form bounds need an explicit sigma")
        divisor = 8.0
    return sigma * dims.k**1.5 * math.sqrt(dims.d * T) / divisor


@dataclass(frozen=True)
class RegretSummary:
    """Monte Carlo aggregate of per-replication empirical regrets."""

    regrets: np.ndarray
    mean: float
    std_error: float
    bound_value: float | None

    @property
    def reps(self) -> int:
        return self.regrets.shape[0]

    def exceeds_bound(self) -> bool | None:
        """mean - 2*SE >= bound, or None when no bound applies."""
        if self.bound_value is None:
            return None
        return self.mean - 2.0 * self.std_error >= self.bound_value


def summarize_regret(transcripts: list[Transcript], action_set: ActionSet,
                     bound_value: float | None = None,
                     cap: int | None = None) -> RegretSummary:
    regrets = np.array([empirical_regret(tr, action_set, cap) for tr in transcripts])
    if np.any(regrets < -1e-9):
        raise AssertionError("empirical regret fell below the -1e-9 floor")
    se = float(regrets.std(ddof=1) / math.sqrt(len(regrets))) if len(regrets) > 1 else 0.0
    return RegretSummary(regrets=regrets, mean=float(regrets.mean()),
                         std_error=se, bound_value=bound_value)


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of ln(regret) on ln(k)."""

    points: tuple[tuple[float, float], ...]
    exponent: float
    intercept: float
    residual: float


def scaling_fit(points) -> ScalingFit:
    """Least-squares exponent of regret as a power of k.

    ``points`` is a sequence of (k, regret) pairs with positive regrets and
    at least 3 distinct k values.
    """
    points = tuple((float(k), float(r)) for k, r in points)
    ks = np.array([p[0] for p in points])
    rs = np.array([p[1] for p in points])
    if np.unique(ks).size < 3:
        raise ValueError("scaling fit needs at least 3 distinct k values")
    if np.any(rs <= 0):
        raise ValueError("scaling fit needs positive regret values")
    design = np.column_stack([np.log(ks), np.ones_like(ks)])
    coef, _, _, _ = np.linalg.lstsq(design, np.log(rs), rcond=None)
    resid = float(np.sum((np.log(rs) - design @ coef) ** 2))
    return ScalingFit(points=points, exponent=float(coef[0]),
                      intercept=float(coef[1]), residual=resid)


def gaussian_kl(mean_gap: float, variance: float) -> float:
    """KL divergence between equal-variance Gaussians: gap^2 / (2 var)."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    return mean_gap**2 / (2.0 * variance)


# ---------------------------------------------------------------------------
# Play-count identities
#
# Both checks below run a deterministic learner against the "neutralized"
# law in which the planted coordinate of block j carries no gap: losses are
# 1/2 - eps * x(i) + Z_t with x's block-j coordinate zeroed.  That law is
# identical for every candidate planted coordinate of block j, so one run
# per off-block assignment covers all candidates at once and the play-count
# sums come out as exact integers.
# ---------------------------------------------------------------------------


def _neutralized_losses(x_bits: np.ndarray, block_j: int, n: int, epsilon: float,
                        noise: np.ndarray) -> np.ndarray:
    x = x_bits.astype(np.float64).copy()
    x[block_j * n:(block_j + 1) * n] = 0.0
    return 0.5 - epsilon * x + noise[:, None]


def _require_deterministic(learner) -> None:
    if not getattr(learner, "deterministic", False):
        raise ValueError("play-count identities require a deterministic learner")


def verify_tj_partition(learner_factory, action_set: MultitaskSet, j: int,
                        off_choices: tuple[int, ...], T: int, seed=0,
                        epsilon: float = 0.1, sigma: float = 0.1) -> np.ndarray:
    """Play counts of block j's candidate coordinates under the neutralized
    law, for one fixed assignment of the other blocks.

    The returned n counts always sum to exactly T: the learner sees the same
    losses whichever candidate is planted, and plays exactly one arm of
    block j per round.
    """
    k, n = action_set.dims.k, action_set.dims.n
    if len(off_choices) != k - 1:
        raise ValueError(f"expected {k - 1} off-block choices")
    choices = list(off_choices[:j]) + [0] + list(off_choices[j:])
    x_bits = action_set._choices_to_bits(choices)
    noise = sigma * standard_normals(make_rng(seed), (T,))
    losses = _neutralized_losses(x_bits, j, n, epsilon, noise)
    learner = learner_factory(action_set, T)
    _require_deterministic(learner)
    actions, _ = play_losses(learner, action_set, losses, rng=None)
    counts = np.empty(n, dtype=np.int64)
    for cand in range(n):
        counts[cand] = int(actions[:, j * n + cand].sum())
    return counts


def verify_tj_row_identity(learner_factory, action_set: MultitaskSet, j: int,
                           T: int, seed=0, epsilon: float = 0.1,
                           sigma: float = 0.1) -> tuple[int, int]:
    """Sum of block-j play counts over every planted optimum, vs n^{k-1} T.

    Averaged over the n^k planted optima this is the exact T/n identity;
    returned as the integer pair (sum over S of T_j, n^{k-1} * T).
    """
    if not isinstance(action_set, MultitaskSet):
        raise ValueError("row identity applies to the multitask family")
    k, n = action_set.dims.k, action_set.dims.n
    total = 0
    import itertools

    for off in itertools.product(range(n), repeat=k - 1):
        counts = verify_tj_partition(learner_factory, action_set, j, off, T,
                                     seed=seed, epsilon=epsilon, sigma=sigma)
        # each candidate coordinate of block j is one planted optimum
        total += int(counts.sum())
    return total, n ** (k - 1) * T


def verify_ranking_tj_bound(learner_factory, action_set: MatchingSet, j: int,
                            T: int, seed=0, epsilon: float = 0.1,
                            sigma: float = 0.1, cap: int | None = None
                            ) -> tuple[float, float]:
    """Row-j play-count average over all matchings vs the T/(n-k+1) ceiling.

    Returns (lhs, rhs) with lhs = ((n-k)!/n!) * sum over S of T_j.  For each
    assignment of the other rows there are exactly n-k+1 ways to complete
    row j, all sharing the neutralized law, so their counts sum to at most T.
    """
    if not isinstance(action_set, MatchingSet):
        raise ValueError("ranking bound applies to the matching family")
    k, n = action_set.dims.k, action_set.dims.n
    if 2 * k > n:
        raise ValueError(f"ranking bound requires k <= n/2, got k={k}, n={n}")
    action_set.check_cap(cap)
    import itertools

    total = 0
    for off in itertools.permutations(range(n), k - 1):
        taken = set(off)
        candidates = [c for c in range(n) if c not in taken]
        choices = list(off[:j]) + [candidates[0]] + list(off[j:])
        x_bits = action_set._choices_to_bits(choices)
        noise = sigma * standard_normals(make_rng(seed), (T,))
        losses = _neutralized_losses(x_bits, j, n, epsilon, noise)
        learner = learner_factory(action_set, T)
        _require_deterministic(learner)
        actions, _ = play_losses(learner, action_set, losses, rng=None)
        for cand in candidates:
            total += int(actions[:, j * n + cand].sum())
    lhs = total * math.factorial(n - k) / math.factorial(n)
    rhs = T / (n - k + 1)
    return lhs, rhs


# ---------------------------------------------------------------------------
# Clip event and variance reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClipEventReport:
    """Monte Carlo rate of the clipping-relevant event {exists t: Z_t > 1/4}
    (or epsilon > 1/4), with its analytic companions."""

    reps: int
    event_count: int
    frequency: float
    epsilon_over_8: float
    union_bound: float
    upper_conf_99: float
    epsilon_ok: bool

    @property
    def within_bound(self) -> bool:
        return self.epsilon_ok and self.upper_conf_99 <= self.epsilon_over_8


def verify_clip_event(config: AdversaryConfig, reps: int, seed=0) -> ClipEventReport:
    """Frequency of any per-round shared noise draw exceeding 1/4.

    The union bound T * exp(-1/(32 sigma^2)) collapses to e^-6 / T^2 at the
    clipped construction's sigma; the report also carries the one-sided 99%
    Clopper-Pearson upper confidence limit on the event probability.
    """
    rng = make_rng(seed)
    count = 0
    chunk = max(1, min(reps, 10**7 // max(config.T, 1)))
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        z = config.sigma * standard_normals(rng, (b, config.T))
        count += int((z > 0.25).any(axis=1).sum())
        done += b
    epsilon_ok = config.epsilon <= 0.25
    if not epsilon_ok:
        count = reps
    freq = count / reps
    union = config.T * math.exp(-(0.25**2) / (2.0 * config.sigma**2))
    if count == reps:
        upper = 1.0
    else:
        upper = float(beta_dist.ppf(0.99, count + 1, reps - count))
    return ClipEventReport(reps=reps, event_count=count, frequency=freq,
                           epsilon_over_8=config.epsilon / 8.0,
                           union_bound=union, upper_conf_99=upper,
                           epsilon_ok=epsilon_ok)


@dataclass(frozen=True)
class VarianceReport:
    estimate: float
    target: float

    @property
    def relative_error(self) -> float:
        if self.target == 0:
            return abs(self.estimate)
        return abs(self.estimate - self.target) / self.target


def variance_report(config: AdversaryConfig, x_bits: np.ndarray,
                    samples: int, seed=0) -> VarianceReport:
    """Sample variance of the observed loss of a fixed action vs its target:
    k^2 sigma^2 under correlated noise, k sigma^2 under the independent
    control.  Unclipped losses only."""
    if config.clipped:
        raise ValueError("variance targets apply to the unclipped construction")
    dims = config.dims
    x = np.asarray(x_bits, dtype=np.float64)
    rng = make_rng(seed)
    if config.sigma == 0.0:
        # the observed loss is a constant; np.var would report the ~1e-30
        # residue of non-dyadic mean subtraction instead of an exact zero
        return VarianceReport(estimate=0.0, target=0.0)
    if config.noise_mode is NoiseMode.CORRELATED:
        # the shared draw enters the sum once per active coordinate
        overlap = int(np.dot(config.x_star.astype(np.int64),
                             np.asarray(x_bits, dtype=np.int64)))
        z = config.sigma * standard_normals(rng, (samples,))
        dots = (0.5 * dims.k - config.epsilon * overlap) + dims.k * z
        target = dims.k**2 * config.sigma**2
    else:
        z = config.sigma * standard_normals(rng, (samples, dims.d))
        base = 0.5 - config.epsilon * config.x_star.astype(np.float64)
        dots = (base + z) @ x
        target = dims.k * config.sigma**2
    return VarianceReport(estimate=float(np.var(dots, ddof=1)), target=target)


def feedback_soundness(transcript: Transcript) -> bool:
    """Recompute every observed scalar from the hidden record."""
    for t in range(transcript.horizon):
        if _kernels.round_loss(transcript.hidden_losses[t],
                               transcript.actions[t]) != transcript.observed[t]:
            return False
    return True
