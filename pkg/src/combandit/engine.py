"""T-round game protocol under strict bandit feedback.

The engine pre-draws the entire loss sequence from the adversary config
before round 1 (obliviousness is structural, not behavioral), then reveals
to the learner exactly one scalar per round: the inner product of its action
with the hidden loss vector.  Learners never receive loss vectors; the
interface makes requesting them impossible.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .action_sets import ActionSet, action_to_string
from .environments import (
    AdversaryConfig,
    NoiseMode,
    draw_losses,
    make_adversary,
    make_rng,
    make_theorem4_adversary,
)


class GameProtocolError(RuntimeError):
    """A learner broke the protocol (played an action outside S)."""


class Learner:
    """Interface: ``choose`` an action, ``observe`` the scalar loss.

    A learner may keep any state derived from the action-set description,
    the horizon, its own past actions and the observed scalars; the engine
    hands it nothing else.  ``deterministic`` marks learners whose action
    sequence is a pure function of the observation sequence, which the
    play-count identity checks require.
    """

    deterministic = False

    def start(self, action_set: ActionSet, horizon: int,
              rng: np.random.Generator | None) -> None:
        raise NotImplementedError

    def choose(self) -> np.ndarray:
        raise NotImplementedError

    def observe(self, observed_loss: float) -> None:
        raise NotImplementedError


@dataclass
class Transcript:
    """Full record of one game.

    ``observed[t]`` equals the inner product of ``hidden_losses[t]`` with
    ``actions[t]`` exactly; ``tj_counts[j]`` counts the rounds whose action
    covered the j-th active coordinate of x* (coordinates in increasing
    order).
    """

    actions: np.ndarray
    observed: np.ndarray
    hidden_losses: np.ndarray
    noise: np.ndarray
    tj_counts: np.ndarray
    config: AdversaryConfig
    learner: str

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def cumulative_loss(self) -> float:
        return float(np.sum(self.observed))

    def to_lines(self, include_hidden: bool = False) -> list[str]:
        """Line-oriented record: a config header, then one row per round
        (t, action string, observed loss, shared noise draw)."""
        dims = self.config.dims
        lines = [
            "# combandit transcript",
            f"family={dims.family.value} d={dims.d} k={dims.k} n={dims.n} "
            f"T={self.config.T} learner={self.learner}",
            self.config.describe(),
        ]
        correlated = self.config.noise_mode is NoiseMode.CORRELATED
        for t in range(self.horizon):
            z = repr(float(self.noise[t])) if correlated else ""
            row = (f"{t + 1}\t{action_to_string(self.actions[t])}\t"
                   f"{float(self.observed[t])!r}\t{z}")
            if include_hidden:
                row += "\t" + ",".join(repr(float(v)) for v in self.hidden_losses[t])
            lines.append(row)
        return lines


def _tj_counts(actions: np.ndarray, x_star: np.ndarray) -> np.ndarray:
    planted = np.flatnonzero(x_star)
    return actions[:, planted].astype(np.int64).sum(axis=0)


def _assemble(actions, observed, losses, noise, config, learner_desc) -> Transcript:
    # feedback soundness: the observed scalars must reproduce from the record
    for t in range(actions.shape[0]):
        if _kernels.round_loss(losses[t], actions[t]) != observed[t]:
            raise AssertionError(f"observed loss mismatch at round {t + 1}")
    return Transcript(
        actions=actions, observed=observed, hidden_losses=losses, noise=noise,
        tj_counts=_tj_counts(actions, config.x_star), config=config,
        learner=learner_desc,
    )


def play_losses(learner: Learner, action_set: ActionSet, losses: np.ndarray,
                rng: np.random.Generator | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Run a learner against an explicit loss matrix, revealing only scalars.

    Returns the played actions (T, d) and observed losses (T,).  Raises
    :class:`GameProtocolError` the moment the learner leaves the action set.
    """
    horizon, d = losses.shape
    learner.start(action_set, horizon, rng)
    actions = np.zeros((horizon, d), dtype=np.uint8)
    observed = np.empty(horizon, dtype=np.float64)
    for t in range(horizon):
        bits = np.asarray(learner.choose())
        if bits.shape != (d,) or not action_set.contains(bits):
            raise GameProtocolError(
                f"round {t + 1}: learner played an action outside the set: "
                f"{action_to_string(bits) if bits.shape == (d,) else bits!r}"
            )
        actions[t] = bits
        observed[t] = _kernels.round_loss(losses[t], actions[t])
        learner.observe(float(observed[t]))
    return actions, observed


def run_game(learner: Learner, adversary: AdversaryConfig, action_set: ActionSet,
             learner_seed=None, learner_desc: str | None = None) -> Transcript:
    """One full game of the bandit protocol.

    The adversary's losses are fully determined by its config (oblivious by
    construction); the learner draws its own randomness from a stream keyed
    by ``learner_seed``.
    """
    if adversary.dims != action_set.dims:
        raise ValueError("learner and adversary must share the same dimensions")
    losses, noise = draw_losses(adversary)
    rng = make_rng(learner_seed) if learner_seed is not None else None
    actions, observed = play_losses(learner, action_set, losses, rng)
    return _assemble(actions, observed, losses, noise, adversary,
                     learner_desc or type(learner).__name__)


@dataclass(frozen=True)
class AdversaryFactory:
    """Picklable recipe for per-replication adversaries.

    With ``theorem4`` set it enforces T >= k*d and the clipped correlated
    construction; otherwise noise mode, clipping and optional overrides of
    the sigma/epsilon schedules apply.
    """

    T: int
    noise_mode: NoiseMode = NoiseMode.CORRELATED
    clipped: bool = False
    sigma: float | None = None
    epsilon: float | None = None
    theorem4: bool = False

    def __call__(self, action_set: ActionSet, seed_seq) -> AdversaryConfig:
        if self.theorem4:
            return make_theorem4_adversary(action_set, self.T, seed_seq)
        return make_adversary(action_set, self.T, seed_seq,
                              noise_mode=self.noise_mode, clipped=self.clipped,
                              sigma=self.sigma, epsilon=self.epsilon)


def _run_replication(learner_or_spec, factory, action_set, rep_seed) -> Transcript:
    from .learners import LearnerSpec, play_with_kernel

    env_seq, learner_seq = rep_seed.spawn(2)
    config = factory(action_set, env_seq)
    losses, noise = draw_losses(config)
    if isinstance(learner_or_spec, LearnerSpec):
        observed, actions = play_with_kernel(
            learner_or_spec, action_set, losses, make_rng(learner_seq))
        desc = learner_or_spec.describe()
    else:
        learner = learner_or_spec(action_set, config.T)
        actions, observed = play_losses(learner, action_set, losses,
                                        make_rng(learner_seq))
        desc = type(learner).__name__
    return _assemble(actions, observed, losses, noise, config, desc)


def replicate(learner_or_spec, adversary_factory, action_set: ActionSet,
              reps: int, seed, jobs: int = 1) -> list[Transcript]:
    """Independent games with disjoint seed streams.

    Each replication gets a fresh planted optimum, fresh noise and fresh
    learner state.  ``learner_or_spec`` is either a :class:`LearnerSpec`
    (dispatched to the fused kernels) or a factory ``(action_set, T) ->
    Learner`` run through the reference engine.  Results are ordered by
    replication index regardless of ``jobs``.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rep_seeds = seed.spawn(reps)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_replication, learner_or_spec, adversary_factory,
                            action_set, rep_seeds[r])
                for r in range(reps)
            ]
            return [f.result() for f in futures]
    return [
        _run_replication(learner_or_spec, adversary_factory, action_set, rep_seeds[r])
        for r in range(reps)
    ]
