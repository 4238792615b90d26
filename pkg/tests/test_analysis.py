"""Regret computation, bound values, scaling fits, KL kernel, play-count
identities, clip-event rates, and variance targets."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from combandit import (
    AdversaryFactory,
    BoundForm,
    Learner,
    LearnerSpec,
    NoiseMode,
    Transcript,
    build_layered_path_graph,
    build_matching,
    build_multitask,
    compute_sigma,
    empirical_regret,
    feedback_soundness,
    fixed_action,
    gaussian_kl,
    hindsight_best,
    lower_bound_value,
    make_adversary,
    replicate,
    round_robin,
    run_game,
    scaling_fit,
    shortest_path_losses,
    summarize_regret,
    uniform_random,
    variance_report,
    verify_clip_event,
    verify_ranking_tj_bound,
    verify_tj_partition,
    verify_tj_row_identity,
)
from combandit.engine import _assemble


class GreedyProbe(Learner):
    """Deterministic follow-the-leader: row by row, play the arm whose
    rounds produced the lower average observed loss so far (ties to the
    lower index), skipping columns already taken this round when the family
    forbids collisions.  Depends only on its own actions and the observed
    scalars."""

    deterministic = True

    def start(self, action_set, horizon, rng):
        from combandit import Family

        self.k = action_set.dims.k
        self.n = action_set.dims.n
        self.matching = action_set.dims.family is Family.MATCHING
        self.sums = np.zeros((self.k, self.n))
        self.counts = np.zeros((self.k, self.n), dtype=np.int64)
        self.last = np.zeros(self.k, dtype=np.int64)

    def choose(self):
        bits = np.zeros(self.k * self.n, dtype=np.uint8)
        taken = set()
        for j in range(self.k):
            order = sorted(
                (a for a in range(self.n) if not (self.matching and a in taken)),
                key=lambda a: (self.counts[j, a] > 0,
                               self.sums[j, a] / max(self.counts[j, a], 1), a))
            arm = order[0]
            taken.add(arm)
            self.last[j] = arm
            bits[j * self.n + arm] = 1
        return bits

    def observe(self, observed_loss):
        for j in range(self.k):
            self.sums[j, self.last[j]] += observed_loss
            self.counts[j, self.last[j]] += 1


class TestEmpiricalRegret:
    def test_hindsight_player_has_zero_regret(self):
        s = build_multitask(2, 2)
        cfg = make_adversary(s, T=8, seed_seq=0, sigma=0.0, epsilon=0.25)
        tr = run_game(fixed_action(cfg.x_star), cfg, s)
        assert empirical_regret(tr, s) == 0.0

    def test_two_round_hand_instance(self):
        s = build_multitask(1, 2)
        cfg = make_adversary(s, T=2, seed_seq=0, sigma=0.0, epsilon=0.0)
        losses = np.array([[1.0, 0.0], [1.0, 0.0]])
        actions = np.array([[1, 0], [1, 0]], dtype=np.uint8)
        observed = np.array([1.0, 1.0])
        tr = _assemble(actions, observed, losses, np.zeros(2), cfg, "hand")
        # brute force over both actions: best is 01 with cumulative loss 0
        assert empirical_regret(tr, s) == 2.0

    def test_bounded_by_kT_and_nonnegative(self):
        s = build_multitask(3, 2)
        factory = AdversaryFactory(T=32, clipped=True, theorem4=True)
        for tr in replicate(LearnerSpec(kind="uniform"), factory, s, 10, seed=4):
            r = empirical_regret(tr, s)
            assert -1e-9 <= r <= 3 * 32

    def test_hindsight_best_is_planted_under_correlated_noise(self):
        # the shared draw cancels across actions, so x* minimizes hindsight
        s = build_multitask(3, 2)
        cfg = make_adversary(s, T=64, seed_seq=5)
        tr = run_game(uniform_random(), cfg, s, learner_seed=6)
        best, _ = hindsight_best(tr, s)
        assert np.array_equal(best, cfg.x_star)

    def test_summarize_regret(self):
        s = build_multitask(2, 2)
        factory = AdversaryFactory(T=16, clipped=True, theorem4=True)
        trs = replicate(LearnerSpec(kind="uniform"), factory, s, 8, seed=7)
        summary = summarize_regret(trs, s, bound_value=0.01)
        assert summary.reps == 8
        assert summary.mean == pytest.approx(
            np.mean([empirical_regret(t, s) for t in trs]))
        assert summary.exceeds_bound() in (True, False)


class TestLowerBoundValue:
    def test_clipped_form_hand_case(self):
        dims = build_multitask(4, 2).dims
        sigma = 1 / math.sqrt(192 + 96 * math.log(32))
        expect = sigma * 8 * 16 / 16  # k^{3/2}=8, sqrt(dT)=16
        got = lower_bound_value(dims, 32, BoundForm.THEOREM4)
        assert got == pytest.approx(expect, abs=1e-15)
        assert got == pytest.approx(0.3493, abs=1e-3)

    def test_gaussian_form_direct_evaluation(self):
        dims = build_multitask(1, 2).dims  # k=1, d=2
        got = lower_bound_value(dims, 2, BoundForm.LEMMA1, sigma=1.0)
        assert got == pytest.approx(1.0 * 1.0 * math.sqrt(2 * 2) / 8, abs=1e-15)

    def test_zero_sigma(self):
        dims = build_matching(2, 4).dims
        assert lower_bound_value(dims, 16, BoundForm.LEMMA3, sigma=0.0) == 0.0

    def test_preconditions(self):
        dims = build_multitask(4, 2).dims
        with pytest.raises(ValueError, match="T >= k\\*d"):
            lower_bound_value(dims, 16, BoundForm.THEOREM4)
        with pytest.raises(ValueError, match="sigma"):
            lower_bound_value(dims, 16, BoundForm.LEMMA1)


class TestScalingFit:
    def test_exact_power_law(self):
        pts = [(k, 3 * k**1.5) for k in (2, 4, 8)]
        fit = scaling_fit(pts)
        assert fit.exponent == pytest.approx(1.5, abs=1e-12)
        assert fit.residual < 1e-24
        assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)

    def test_constant_points(self):
        fit = scaling_fit([(2, 5.0), (4, 5.0), (8, 5.0)])
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)

    def test_noisy_linear_power(self):
        rng = np.random.default_rng(0)
        ks = np.array([2, 3, 4, 6, 8, 12])
        pts = [(k, 2.0 * k * math.exp(rng.normal(0, 0.01))) for k in ks]
        fit = scaling_fit(pts)
        assert 0.9 <= fit.exponent <= 1.1

    def test_validation(self):
        with pytest.raises(ValueError, match="3 distinct"):
            scaling_fit([(2, 1.0), (2, 2.0), (4, 3.0)])
        with pytest.raises(ValueError, match="positive"):
            scaling_fit([(2, 1.0), (4, 0.0), (8, 3.0)])


class TestGaussianKL:
    def test_zero_gap(self):
        assert gaussian_kl(0.0, 1.0) == 0.0

    def test_hand_case(self):
        # gap 0.1 with variance (k sigma)^2 = 1 at k=2, sigma=0.5
        assert gaussian_kl(0.1, (2 * 0.5) ** 2) == pytest.approx(0.005, abs=1e-15)

    @pytest.mark.parametrize("gap", [0.0, 0.01, 0.1, 1.0])
    @pytest.mark.parametrize("var", [0.01, 1.0, 25.0])
    def test_matches_quadrature(self, gap, var):
        s = math.sqrt(var)

        def integrand(x):
            return norm.pdf(x, 0, s) * (norm.logpdf(x, 0, s) - norm.logpdf(x, gap, s))

        numeric, err = quad(integrand, -12 * s, 12 * s + gap, limit=200)
        assert abs(gaussian_kl(gap, var) - numeric) < 1e-6

    def test_nonpositive_variance(self):
        with pytest.raises(ValueError):
            gaussian_kl(0.1, 0.0)


class TestPlayCountIdentities:
    def test_round_robin_partition_splits_evenly(self):
        s = build_multitask(1, 2)
        counts = verify_tj_partition(lambda st, T: round_robin(), s, j=0,
                                     off_choices=(), T=4)
        assert counts.tolist() == [2, 2]

    def test_partition_always_sums_to_horizon(self):
        s = build_multitask(2, 3)
        for factory in (lambda st, T: round_robin(), lambda st, T: GreedyProbe()):
            for off in ((0,), (1,), (2,)):
                counts = verify_tj_partition(factory, s, j=1, off_choices=off, T=9)
                assert counts.sum() == 9

    def test_row_identity_exact_for_greedy(self):
        s = build_multitask(2, 2)
        total, expected = verify_tj_row_identity(
            lambda st, T: GreedyProbe(), s, j=0, T=8)
        assert total == expected == 2 * 8

    def test_row_identity_exact_for_round_robin(self):
        s = build_multitask(2, 2)
        total, expected = verify_tj_row_identity(
            lambda st, T: round_robin(), s, j=1, T=8)
        assert total == expected

    def test_randomized_learner_rejected(self):
        s = build_multitask(2, 2)
        with pytest.raises(ValueError, match="deterministic"):
            verify_tj_partition(lambda st, T: uniform_random(), s, 0, (0,), 4)

    def test_ranking_bound_equality_for_loss_blind_learner(self):
        s = build_matching(1, 2)
        lhs, rhs = verify_ranking_tj_bound(lambda st, T: round_robin(), s, j=0, T=4)
        assert rhs == 2.0
        assert lhs == pytest.approx(2.0, abs=1e-12)

    def test_ranking_bound_on_twelve_matchings(self):
        s = build_matching(2, 4)
        for factory in (lambda st, T: round_robin(), lambda st, T: GreedyProbe()):
            lhs, rhs = verify_ranking_tj_bound(factory, s, j=0, T=8)
            assert lhs <= rhs + 1e-12
            assert rhs == pytest.approx(8 / 3, abs=1e-15)

    def test_ranking_bound_zero_horizon(self):
        s = build_matching(2, 4)
        lhs, rhs = verify_ranking_tj_bound(lambda st, T: round_robin(), s, j=0, T=0)
        assert lhs == 0.0 and rhs == 0.0

    def test_ranking_requires_small_k(self):
        s = build_matching(3, 4)
        with pytest.raises(ValueError, match="n/2"):
            verify_ranking_tj_bound(lambda st, T: round_robin(), s, j=0, T=4)


class TestClipEvent:
    def _theorem4_config(self, T=256):
        from combandit import make_theorem4_adversary

        return make_theorem4_adversary(build_multitask(4, 2), T, seed_seq=0)

    def test_no_events_at_schedule_sigma(self):
        # 10^4 games are needed for the 99% upper confidence limit at zero
        # events (1 - 0.01^(1/reps)) to fit under epsilon/8
        report = verify_clip_event(self._theorem4_config(), reps=10**4, seed=1)
        assert report.event_count == 0
        assert report.within_bound
        # analytic union bound collapses to e^-6 / T^2
        assert report.union_bound == pytest.approx(math.exp(-6) / 256**2, rel=1e-9)

    def test_corrupted_sigma_fails_the_check(self):
        from dataclasses import replace

        config = replace(self._theorem4_config(), sigma=10 * compute_sigma(256))
        report = verify_clip_event(config, reps=400, seed=2)
        assert report.event_count > 0
        assert not report.within_bound

    def test_event_rate_monotone_in_sigma(self):
        from dataclasses import replace

        base = self._theorem4_config()
        r1 = verify_clip_event(replace(base, sigma=0.08), reps=2000, seed=3)
        r2 = verify_clip_event(replace(base, sigma=0.16), reps=2000, seed=3)
        assert r2.frequency > r1.frequency

    def test_epsilon_above_quarter_forces_failure(self):
        from dataclasses import replace

        config = replace(self._theorem4_config(), epsilon=0.3)
        report = verify_clip_event(config, reps=100, seed=4)
        assert not report.epsilon_ok and not report.within_bound


class TestVarianceReport:
    def test_correlated_target(self):
        s = build_multitask(4, 2)
        cfg = make_adversary(s, T=1, seed_seq=0, sigma=0.1, epsilon=0.0)
        rep = variance_report(cfg, s.enumerate_actions()[0], samples=10**5, seed=5)
        assert rep.target == pytest.approx(0.16, abs=1e-15)
        assert rep.relative_error < 0.05

    def test_independent_target(self):
        s = build_multitask(4, 2)
        cfg = make_adversary(s, T=1, seed_seq=0, sigma=0.1, epsilon=0.0,
                             noise_mode=NoiseMode.INDEPENDENT)
        rep = variance_report(cfg, s.enumerate_actions()[0], samples=10**5, seed=6)
        assert rep.target == pytest.approx(0.04, abs=1e-15)
        assert rep.relative_error < 0.05

    def test_zero_sigma_exact(self):
        s = build_multitask(4, 2)
        for mode in NoiseMode:
            cfg = make_adversary(s, T=1, seed_seq=0, sigma=0.0, epsilon=0.1,
                                 noise_mode=mode)
            rep = variance_report(cfg, s.enumerate_actions()[0], samples=100, seed=7)
            assert rep.estimate == 0.0

    def test_rejects_clipped_mode(self):
        s = build_multitask(2, 2)
        cfg = make_adversary(s, T=4, seed_seq=0, clipped=True)
        with pytest.raises(ValueError, match="unclipped"):
            variance_report(cfg, s.enumerate_actions()[0], samples=10)


class TestPathReductionRegret:
    def test_path_and_multitask_regrets_agree_exactly(self):
        from combandit import draw_losses, make_rng
        from combandit.engine import play_losses

        graph = build_layered_path_graph(4, 16)
        image = graph.multitask_image()
        mt_cfg = make_adversary(image, T=64, seed_seq=9, clipped=True)
        mt_losses, noise = draw_losses(mt_cfg)
        edge_losses = shortest_path_losses(mt_losses, graph)

        actions, observed = play_losses(uniform_random(), graph, edge_losses,
                                        make_rng(10))
        mapped = np.array([graph.path_to_multitask(a) for a in actions])
        mapped_observed = np.array([
            float(np.dot(mt_losses[t], mapped[t])) for t in range(64)])
        assert np.array_equal(observed, mapped_observed)

        path_cfg = make_adversary(graph, T=64, seed_seq=9, clipped=True)
        tr_path = _assemble(actions, observed, edge_losses, noise, path_cfg, "u")
        tr_mt = _assemble(mapped, mapped_observed, mt_losses, noise, mt_cfg, "u")
        assert empirical_regret(tr_path, graph) == empirical_regret(tr_mt, image)

    def test_soundness_helper(self):
        s = build_multitask(2, 2)
        cfg = make_adversary(s, T=8, seed_seq=11)
        tr = run_game(uniform_random(), cfg, s, learner_seed=12)
        assert feedback_soundness(tr)
        broken = Transcript(actions=tr.actions, observed=tr.observed + 1e-9,
                            hidden_losses=tr.hidden_losses, noise=tr.noise,
                            tj_counts=tr.tj_counts, config=tr.config, learner="x")
        assert not feedback_soundness(broken)
