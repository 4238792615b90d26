"""Baseline learners the adversaries are run against.

None of these is tuned to be optimal; they are adversary targets spanning
the non-adaptive (fixed, uniform, round-robin) to adaptive (per-task EXP3,
enumerated EXP2) range.  Each learner exists twice in effect: as a
:class:`~combandit.engine.Learner` for the reference engine and as a fused
kernel loop dispatched by :func:`play_with_kernel`.  Both call the same
weight/estimator helpers in :mod:`combandit._kernels` and consume the same
uniform stream, so their transcripts agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .action_sets import (
    ActionSet,
    ActionSetError,
    Family,
    LayeredPathSet,
    MultitaskSet,
    action_to_string,
)
from .engine import Learner

LEARNER_KINDS = ("fixed", "uniform", "round_robin", "exp3", "exp2")


class Exp2SingularError(RuntimeError):
    """The play distribution's second-moment matrix lost rank on span(S)."""


def default_eta(action_set: ActionSet, horizon: int) -> float:
    """sqrt(ln|S| / (T k^2)); conventional exponential-weights scale."""
    return math.sqrt(math.log(action_set.cardinality) /
                     (horizon * action_set.dims.k**2))


def default_gamma(action_set: ActionSet, horizon: int) -> float:
    """min(1/2, sqrt(d/T)); uniform-exploration mixture weight."""
    return min(0.5, math.sqrt(action_set.dims.d / horizon))


def exhibit_eta(action_set: ActionSet, horizon: int) -> float:
    """Learning rate for the correlation-mechanism exhibit.

    The centered per-task surrogate moves on the scale of the noise, so the
    variance-matched exponential-weights rate is proportional to
    sqrt(k ln n / T) / sigma(T).  The extra factor of sqrt(k) here (giving
    k/sigma * sqrt(ln n / T)) pushes the learner into commit-style behavior
    exactly where the independent-noise control leaves enough signal to
    commit correctly, which is what makes the regret-vs-k slopes of the two
    noise structures separate cleanly at desk scale.
    """
    from .environments import compute_sigma

    dims = action_set.dims
    return (dims.k / compute_sigma(horizon)) * math.sqrt(math.log(dims.n) / horizon)


@dataclass(frozen=True)
class LearnerSpec:
    """Serializable learner description.

    eta/gamma default to the conventional schedules above when left None.
    ``baseline`` tunes the per-task EXP3 surrogate: None feeds the raw
    importance-weighted observation, a float subtracts that constant, and
    "mean" subtracts the running mean of past observations (a control
    variate; see :class:`PerTaskExp3Learner`).  ``action`` pins the fixed
    learner's action as a 0/1 string (default: first in canonical order).
    """

    kind: str
    eta: float | None = None
    gamma: float | None = None
    baseline: float | str | None = None
    action: str | None = None
    cap: int | None = None
    eta_schedule: str | None = None

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; "
                             f"expected one of {LEARNER_KINDS}")
        if self.eta is not None and not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if isinstance(self.baseline, str) and self.baseline != "mean":
            raise ValueError(f"baseline must be a number or 'mean', got {self.baseline!r}")
        if self.eta_schedule not in (None, "default", "exhibit"):
            raise ValueError(f"eta_schedule must be 'default' or 'exhibit', "
                             f"got {self.eta_schedule!r}")

    def bind(self, action_set: ActionSet, horizon: int) -> tuple[float, float]:
        """Effective (eta, gamma) for this set and horizon."""
        if self.eta is not None:
            eta = self.eta
        elif self.eta_schedule == "exhibit":
            eta = exhibit_eta(action_set, horizon)
        else:
            eta = default_eta(action_set, horizon)
        gamma = (self.gamma if self.gamma is not None
                 else default_gamma(action_set, horizon))
        return eta, gamma

    def describe(self) -> str:
        desc = self.kind
        if self.baseline is not None:
            desc += f"[b={self.baseline}]"
        if self.eta_schedule == "exhibit":
            desc += "[eta=exhibit]"
        return desc


def _baseline_params(spec: LearnerSpec, k: int) -> tuple[int, float]:
    if spec.baseline is None:
        return _kernels.BASELINE_NONE, 0.0
    if spec.baseline == "mean":
        # running mean; seeded with k/2, the a-priori observation level
        return _kernels.BASELINE_RUNNING_MEAN, k / 2.0
    return _kernels.BASELINE_FIXED, float(spec.baseline)


class FixedActionLearner(Learner):
    """Plays one membership-checked action every round."""

    deterministic = True

    def __init__(self, bits: np.ndarray):
        self.bits = np.asarray(bits, dtype=np.uint8)

    def start(self, action_set, horizon, rng):
        if not action_set.contains(self.bits):
            raise ActionSetError(
                f"fixed action {action_to_string(self.bits)} is not in the set")

    def choose(self):
        return self.bits

    def observe(self, observed_loss):
        pass


class UniformRandomLearner(Learner):
    """Fresh uniform draw from the action set every round."""

    def start(self, action_set, horizon, rng):
        self.action_set = action_set
        self.rng = rng

    def choose(self):
        return self.action_set.sample_uniform(self.rng)

    def observe(self, observed_loss):
        pass


class RoundRobinLearner(Learner):
    """Cycles through the enumerated action set in canonical order."""

    deterministic = True

    def __init__(self, cap: int | None = None):
        self.cap = cap

    def start(self, action_set, horizon, rng):
        self.matrix = action_set.enumerate_actions(self.cap)
        self.t = 0

    def choose(self):
        return self.matrix[self.t % self.matrix.shape[0]]

    def observe(self, observed_loss):
        self.t += 1


class PerTaskExp3Learner(Learner):
    """k independent EXP3 instances over the n arms of each block.

    Task j feeds the importance-weighted surrogate (lam - b)/(k * p_j(a_j))
    to its chosen arm only.  The default b = 0 uses the raw observation;
    because lam sits near k/2 regardless of the action, that surrogate
    carries O(1) importance-weighting variance per round, which at the
    lower-bound noise scales drowns the planted gap.  Subtracting a baseline
    (fixed k/2, or the running observation mean) removes that variance
    without changing the surrogate's arm-to-arm differences.
    """

    def __init__(self, eta: float, gamma: float,
                 baseline: float | str | None = None):
        self.eta = eta
        self.gamma = gamma
        self.baseline = baseline

    def start(self, action_set, horizon, rng):
        if action_set.dims.family is not Family.MULTITASK:
            raise ActionSetError("per-task EXP3 requires the multitask family")
        self.k = action_set.dims.k
        self.n = action_set.dims.n
        if self.baseline is None:
            self.baseline_mode, self.baseline_value = _kernels.BASELINE_NONE, 0.0
        elif self.baseline == "mean":
            self.baseline_mode = _kernels.BASELINE_RUNNING_MEAN
            self.baseline_value = self.k / 2.0
        else:
            self.baseline_mode = _kernels.BASELINE_FIXED
            self.baseline_value = float(self.baseline)
        self.rng = rng
        self.cum_est = np.zeros((self.k, self.n), dtype=np.float64)
        self.chosen = np.empty(self.k, dtype=np.int64)
        self.chosen_prob = np.empty(self.k, dtype=np.float64)
        self.obs_sum = 0.0
        self.t = 0

    def task_probs(self, j: int) -> np.ndarray:
        return _kernels.mixed_exponential_weights(self.cum_est[j], self.eta, self.gamma)

    def choose(self):
        u = self.rng.random(self.k)
        bits = np.zeros(self.k * self.n, dtype=np.uint8)
        for j in range(self.k):
            probs = self.task_probs(j)
            a_j = _kernels.sample_categorical(probs, u[j])
            self.chosen[j] = a_j
            self.chosen_prob[j] = probs[a_j]
            bits[j * self.n + a_j] = 1
        return bits

    def observe(self, observed_loss):
        if self.baseline_mode == _kernels.BASELINE_FIXED:
            b = self.baseline_value
        elif self.baseline_mode == _kernels.BASELINE_RUNNING_MEAN:
            b = self.baseline_value if self.t == 0 else self.obs_sum / self.t
        else:
            b = 0.0
        self.obs_sum += observed_loss
        self.t += 1
        for j in range(self.k):
            self.cum_est[j, self.chosen[j]] += _kernels.exp3_surrogate(
                observed_loss, b, self.k, self.chosen_prob[j])


class EnumeratedExp2Learner(Learner):
    """Exponential weights over the full enumerated action set.

    The loss estimator applies the pseudo-inverse of the play distribution's
    second-moment matrix to x_t * lam_t; with uniform mixing over a spanning
    set the estimator is unbiased on span(S).
    """

    def __init__(self, eta: float, gamma: float, cap: int | None = None):
        self.eta = eta
        self.gamma = gamma
        self.cap = cap

    def start(self, action_set, horizon, rng):
        self.matrix = action_set.enumerate_actions(self.cap)
        self.active = action_set.active_coords(self.cap)
        self.d = action_set.dims.d
        self.span_rank = int(np.linalg.matrix_rank(self.matrix.astype(np.float64)))
        self.rng = rng
        self.cum_est = np.zeros(self.matrix.shape[0], dtype=np.float64)
        self.t = 0

    def probs(self) -> np.ndarray:
        return _kernels.mixed_exponential_weights(self.cum_est, self.eta, self.gamma)

    def choose(self):
        self.last_probs = self.probs()
        self.last_idx = _kernels.sample_categorical(self.last_probs, self.rng.random())
        return self.matrix[self.last_idx]

    def observe(self, observed_loss):
        estimates, ok = _kernels.exp2_estimates(
            self.last_probs, self.active, self.d, self.last_idx,
            observed_loss, self.span_rank)
        if ok == 0:
            raise Exp2SingularError(
                f"second-moment matrix lost rank at round {self.t + 1}; "
                "increase gamma")
        self.cum_est += estimates
        self.t += 1


def fixed_action(bits: np.ndarray) -> FixedActionLearner:
    return FixedActionLearner(bits)


def uniform_random() -> UniformRandomLearner:
    return UniformRandomLearner()


def round_robin(cap: int | None = None) -> RoundRobinLearner:
    return RoundRobinLearner(cap)


def per_task_exp3(eta: float, gamma: float,
                  baseline: float | str | None = None) -> PerTaskExp3Learner:
    return PerTaskExp3Learner(eta, gamma, baseline)


def enumerated_exp2(eta: float, gamma: float,
                    cap: int | None = None) -> EnumeratedExp2Learner:
    return EnumeratedExp2Learner(eta, gamma, cap)


def make_learner(spec: LearnerSpec, action_set: ActionSet, horizon: int) -> Learner:
    """Instantiate the reference-engine learner described by ``spec``."""
    eta, gamma = spec.bind(action_set, horizon)
    if spec.kind == "fixed":
        if spec.action is not None:
            from .action_sets import action_from_string
            bits = action_from_string(spec.action)
        else:
            bits = action_set.enumerate_actions(spec.cap)[0]
        return FixedActionLearner(bits)
    if spec.kind == "uniform":
        return UniformRandomLearner()
    if spec.kind == "round_robin":
        return RoundRobinLearner(spec.cap)
    if spec.kind == "exp3":
        return PerTaskExp3Learner(eta, gamma, spec.baseline)
    return EnumeratedExp2Learner(eta, gamma, spec.cap)


def learner_factory(spec: LearnerSpec):
    """Factory form of :func:`make_learner` for the reference engine path."""
    def make(action_set, horizon):
        return make_learner(spec, action_set, horizon)
    make.spec = spec
    return make


def play_with_kernel(spec: LearnerSpec, action_set: ActionSet, losses: np.ndarray,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Run one game through the fused kernel for this learner kind.

    Returns (observed, actions).  Consumes the same uniforms in the same
    order as the reference-engine learner, so outputs are bit-identical.
    """
    horizon = losses.shape[0]
    dims = action_set.dims
    eta, gamma = spec.bind(action_set, horizon)
    if spec.kind == "fixed":
        if spec.action is not None:
            from .action_sets import action_from_string
            bits = action_from_string(spec.action)
            if not action_set.contains(bits):
                raise ActionSetError(f"fixed action {spec.action} is not in the set")
        else:
            bits = action_set.enumerate_actions(spec.cap)[0]
        observed = _kernels.play_fixed(losses, np.ascontiguousarray(bits))
        actions = np.tile(bits.astype(np.uint8), (horizon, 1))
        return observed, actions
    if spec.kind == "round_robin":
        matrix = action_set.enumerate_actions(spec.cap)
        observed, idx = _kernels.play_round_robin(losses, matrix)
        return observed, matrix[idx]
    if spec.kind == "uniform":
        upr = action_set.uniforms_per_round()
        uniforms = rng.random((horizon, upr))
        if isinstance(action_set, MultitaskSet):
            observed, actions = _kernels.play_uniform_blocks(
                losses, dims.k, dims.n, False, uniforms)
        elif isinstance(action_set, LayeredPathSet):
            observed, actions = _kernels.play_uniform_blocks(
                losses, action_set.layers, action_set.fan, True, uniforms)
        else:
            observed, actions = _kernels.play_uniform_matching(
                losses, dims.k, dims.n, uniforms)
        return observed, actions
    if spec.kind == "exp3":
        if dims.family is not Family.MULTITASK:
            raise ActionSetError("per-task EXP3 requires the multitask family")
        mode, value = _baseline_params(spec, dims.k)
        uniforms = rng.random((horizon, dims.k))
        observed, actions = _kernels.play_exp3_multitask(
            losses, dims.k, dims.n, eta, gamma, uniforms, mode, value)
        return observed, actions
    # exp2
    matrix = action_set.enumerate_actions(spec.cap)
    active = action_set.active_coords(spec.cap)
    span_rank = int(np.linalg.matrix_rank(matrix.astype(np.float64)))
    uniforms = rng.random(horizon)
    observed, idx, err_round = _kernels.play_exp2(
        losses, active, eta, gamma, uniforms, span_rank)
    if err_round >= 0:
        raise Exp2SingularError(
            f"second-moment matrix lost rank at round {err_round + 1}; "
            "increase gamma")
    return observed, matrix[idx]
