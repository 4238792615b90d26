"""Batch experiment runner.

Subcommands: ``enumerate`` (list an action set), ``simulate`` (replicated
games, CSV + summary), ``sweep`` (regret-vs-k scaling under both noise
structures), ``verify`` (numerical verification suites).  Identical
(config, seed) pairs produce byte-identical output; the seed flag is
mandatory everywhere randomness is involved.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import analysis, environments, learners
from .action_sets import (
    ActionSetError,
    DEFAULT_ENUMERATION_CAP,
    Family,
    action_to_string,
    build_action_set,
)
from .engine import AdversaryFactory, replicate
from .environments import NoiseMode
from .learners import LearnerSpec

CSV_HEADER = ("run_id,family,k,n,d,T,adversary,noise_mode,clipped,sigma,"
              "epsilon,learner,eta,gamma,seed,regret,hindsight_best_loss,cum_loss")

VERIFY_SUITES = ("cardinalities", "bijection", "variance", "kl",
                 "lemma5", "lemma7", "clip", "estimator")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _add_common_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", required=True,
                   choices=[f.value for f in Family])
    p.add_argument("--k", required=True, help="sparsity (comma list for sweep)")
    p.add_argument("--n", type=int, help="arms per sub-problem")
    p.add_argument("--d", type=int, help="dimension (layered path)")
    p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP,
                   help="enumeration cap")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learner", required=True, choices=learners.LEARNER_KINDS)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eta-schedule", choices=("default", "exhibit"), default=None,
                   help="learning-rate schedule when --eta is not given")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--baseline", default=None,
                   help="per-task EXP3 surrogate baseline: a number or 'mean'")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")


def _learner_spec(args) -> LearnerSpec:
    baseline = args.baseline
    if baseline is not None and baseline != "mean":
        baseline = float(baseline)
    return LearnerSpec(kind=args.learner, eta=args.eta, gamma=args.gamma,
                       baseline=baseline, cap=args.cap,
                       eta_schedule=args.eta_schedule)


def _csv_rows(out, transcripts, action_set, args, spec, adversary_name, run_offset=0):
    dims = action_set.dims
    rows = []
    for r, tr in enumerate(transcripts):
        best_bits, best_loss = analysis.hindsight_best(tr, action_set, args.cap)
        cum = tr.cumulative_loss()
        eta, gamma = spec.bind(action_set, tr.config.T)
        if spec.kind in ("exp3", "exp2"):
            eta_s, gamma_s = _fmt(eta), _fmt(gamma)
        else:
            eta_s, gamma_s = "", ""
        rows.append(",".join([
            str(run_offset + r), dims.family.value, str(dims.k), str(dims.n),
            str(dims.d), str(tr.config.T), adversary_name,
            tr.config.noise_mode.value, str(tr.config.clipped).lower(),
            _fmt(tr.config.sigma), _fmt(tr.config.epsilon), spec.describe(),
            eta_s, gamma_s, str(args.seed), _fmt(cum - best_loss),
            _fmt(best_loss), _fmt(cum),
        ]))
    out.write("\n".join(rows) + "\n")
    return np.array([tr.cumulative_loss() -
                     analysis.hindsight_best(tr, action_set, args.cap)[1]
                     for tr in transcripts])


def cmd_enumerate(args, stdout) -> int:
    action_set = build_action_set(args.family, int(args.k), args.n, args.d)
    stdout.write(action_set.describe() + "\n")
    if action_set.cardinality <= args.cap:
        for bits in action_set.enumerate_actions(args.cap):
            stdout.write(action_to_string(bits) + "\n")
    else:
        stdout.write(f"# not listing {action_set.cardinality} actions "
                     f"(cap {args.cap})\n")
    return 0


def _simulate_one(action_set, args, spec, noise_mode, clipped, T):
    theorem4 = clipped and noise_mode is NoiseMode.CORRELATED
    factory = AdversaryFactory(T=T, noise_mode=noise_mode, clipped=clipped,
                               theorem4=theorem4)
    return replicate(spec, factory, action_set, args.reps, args.seed,
                     jobs=args.jobs)


def cmd_simulate(args, stdout) -> int:
    action_set = build_action_set(args.family, int(args.k), args.n, args.d)
    dims = action_set.dims
    spec = _learner_spec(args)
    noise_mode = (NoiseMode.CORRELATED if args.adversary == "correlated"
                  else NoiseMode.INDEPENDENT)
    transcripts = _simulate_one(action_set, args, spec, noise_mode,
                                args.clipped, args.T)

    out = open(args.out, "w") if args.out else stdout
    try:
        out.write(CSV_HEADER + "\n")
        regrets = _csv_rows(out, transcripts, action_set, args, spec,
                            args.adversary)
    finally:
        if args.out:
            out.close()

    theorem4 = args.clipped and noise_mode is NoiseMode.CORRELATED
    bound = (analysis.lower_bound_value(dims, args.T, analysis.BoundForm.THEOREM4)
             if theorem4 else None)
    summary = analysis.RegretSummary(
        regrets=regrets, mean=float(regrets.mean()),
        std_error=float(regrets.std(ddof=1) / math.sqrt(len(regrets)))
        if len(regrets) > 1 else 0.0,
        bound_value=bound)
    stdout.write(f"summary family={dims.family.value} k={dims.k} n={dims.n} "
                 f"d={dims.d} T={args.T} adversary={args.adversary} "
                 f"clipped={str(args.clipped).lower()} learner={spec.describe()} "
                 f"reps={args.reps} seed={args.seed}\n")
    stdout.write(f"mean_regret={_fmt(summary.mean)}\n")
    stdout.write(f"std_error={_fmt(summary.std_error)}\n")
    if bound is not None:
        stdout.write(f"bound_value={_fmt(bound)}\n")
        stdout.write(f"mean_minus_2se={_fmt(summary.mean - 2 * summary.std_error)}\n")
        stdout.write(f"exceeds_bound={str(summary.exceeds_bound()).lower()}\n")
    if args.record_hidden:
        if not args.out:
            raise SystemExit("--record-hidden requires --out")
        with open(args.out + ".transcripts.txt", "w") as f:
            for tr in transcripts:
                f.write("\n".join(tr.to_lines(include_hidden=True)) + "\n")
    return 0


def cmd_sweep(args, stdout) -> int:
    k_values = [int(v) for v in str(args.k).split(",")]
    if len(set(k_values)) < 3:
        raise SystemExit("sweep needs at least 3 distinct k values")
    spec = _learner_spec(args)
    out = open(args.out, "w") if args.out else stdout
    lines = [f"sweep family={args.family} n={args.n} t_mult={args.t_mult} "
             f"learner={spec.describe()} reps={args.reps} seed={args.seed}"]
    exponents = {}
    try:
        out.write(CSV_HEADER + "\n")
        offset = 0
        for mode_name, noise_mode in (("correlated", NoiseMode.CORRELATED),
                                      ("independent", NoiseMode.INDEPENDENT)):
            points = []
            for k in k_values:
                action_set = build_action_set(args.family, k, args.n, args.d)
                dims = action_set.dims
                T = args.t_mult * k * dims.d
                transcripts = _simulate_one(action_set, args, spec, noise_mode,
                                            True, T)
                regrets = _csv_rows(out, transcripts, action_set, args, spec,
                                    mode_name, run_offset=offset)
                offset += len(transcripts)
                mean = float(regrets.mean())
                se = float(regrets.std(ddof=1) / math.sqrt(len(regrets)))
                scale = math.sqrt(dims.d * T)
                points.append((k, mean / scale))
                lines.append(f"k={k} d={dims.d} T={T} adversary={mode_name} "
                             f"mean_regret={_fmt(mean)} std_error={_fmt(se)} "
                             f"normalized={_fmt(mean / scale)}")
            fit = analysis.scaling_fit(points)
            exponents[mode_name] = fit.exponent
            lines.append(f"exponent_{mode_name}={_fmt(fit.exponent)}")
    finally:
        if args.out:
            out.close()
    lines.append(f"exponent_gap={_fmt(exponents['correlated'] - exponents['independent'])}")
    stdout.write("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------


def _suite_cardinalities(seed):
    from .action_sets import (build_layered_path_graph, build_matching,
                              build_multitask)

    checked = 0
    for n in range(2, 9):
        for k in range(1, 9):
            s = build_multitask(k, n)
            if s.cardinality > 10**5:
                continue
            if s.enumerate_actions().shape[0] != n**k:
                return False, f"multitask k={k} n={n}"
            checked += 1
    for k in (2, 4, 6, 8):
        for fan in (2, 3, 4, 5):
            d = k * fan
            if k > d // 2:
                continue
            s = build_layered_path_graph(k, d)
            if s.cardinality > 10**5:
                continue
            if s.enumerate_actions().shape[0] != fan ** (k // 2):
                return False, f"path k={k} d={d}"
            checked += 1
    for n in range(1, 8):
        for k in range(1, n + 1):
            s = build_matching(k, n)
            if s.cardinality > 10**5:
                continue
            expect = math.factorial(n) // math.factorial(n - k)
            if s.enumerate_actions().shape[0] != expect:
                return False, f"matching k={k} n={n}"
            checked += 1
    return True, f"{checked} instances match their closed forms exactly"


def _suite_bijection(seed):
    from . import _kernels
    from .action_sets import build_layered_path_graph
    from .environments import shortest_path_losses

    graph = build_layered_path_graph(4, 16)
    image = graph.multitask_image()
    rng = environments.make_rng(seed)
    paths = graph.enumerate_actions()
    for trial in range(1000):
        mt_loss = rng.random(image.dims.d)
        edge_loss = shortest_path_losses(mt_loss, graph)
        for bits in paths:
            mapped = graph.path_to_multitask(bits)
            if (_kernels.round_loss(edge_loss, bits)
                    != _kernels.round_loss(mt_loss, mapped)):
                return False, f"loss mismatch on trial {trial}"
    return True, "16 paths x 1000 loss vectors, exact equality"


def _suite_variance(seed):
    from .action_sets import build_multitask
    from .engine import AdversaryFactory

    for k in (2, 4, 8):
        action_set = build_multitask(k, 2)
        for mode in (NoiseMode.CORRELATED, NoiseMode.INDEPENDENT):
            config = environments.make_adversary(
                action_set, T=1, seed_seq=seed, noise_mode=mode,
                sigma=0.1, epsilon=0.0)
            rep = analysis.variance_report(
                config, action_set.enumerate_actions()[0], samples=10**5,
                seed=seed + k)
            if rep.relative_error > 0.05:
                return False, (f"k={k} {mode.value}: estimate {rep.estimate:.5f} "
                               f"vs target {rep.target:.5f}")
    return True, "observed-loss variance within 5% of k^2 s^2 / k s^2 targets"


def _suite_kl(seed):
    from scipy.integrate import quad
    from scipy.stats import norm

    for gap in (0.0, 0.01, 0.1, 1.0):
        for var in (0.01, 1.0, 25.0):
            closed = analysis.gaussian_kl(gap, var)
            s = math.sqrt(var)

            def integrand(x):
                return (norm.pdf(x, 0.0, s) *
                        (norm.logpdf(x, 0.0, s) - norm.logpdf(x, gap, s)))

            numeric, _ = quad(integrand, -12 * s, 12 * s + gap, limit=200)
            if abs(closed - numeric) > 1e-6:
                return False, f"gap={gap} var={var}: {closed} vs {numeric}"
    return True, "closed form matches quadrature within 1e-6 on 12 cases"


def _suite_lemma5(seed):
    from .action_sets import build_multitask
    from .learners import round_robin

    action_set = build_multitask(2, 2)
    total, expected = analysis.verify_tj_row_identity(
        lambda s, T: round_robin(), action_set, j=0, T=8, seed=seed)
    if total != expected:
        return False, f"sum {total} != {expected}"
    return True, f"sum of play counts over S = {total} = n^(k-1) T exactly"


def _suite_lemma7(seed):
    from .action_sets import build_matching
    from .learners import round_robin

    action_set = build_matching(2, 4)
    lhs, rhs = analysis.verify_ranking_tj_bound(
        lambda s, T: round_robin(), action_set, j=0, T=8, seed=seed)
    if lhs > rhs + 1e-12:
        return False, f"{lhs} > {rhs}"
    return True, f"averaged play count {lhs:.6f} <= {rhs:.6f}"


def _suite_clip(seed):
    from .action_sets import build_multitask
    from .environments import make_theorem4_adversary

    action_set = build_multitask(4, 2)
    config = make_theorem4_adversary(action_set, T=256, seed_seq=seed)
    report = analysis.verify_clip_event(config, reps=10**4, seed=seed + 1)
    if not report.within_bound:
        return False, (f"event rate {report.frequency} (99% upper "
                       f"{report.upper_conf_99:.2e}) vs epsilon/8 = "
                       f"{report.epsilon_over_8:.2e}")
    for T in (32, 64, 256, 1024, 4096):
        sigma = environments.compute_sigma(T)
        dims = build_multitask(4, 2).dims
        if T >= dims.k * dims.d:
            eps = environments.compute_epsilon(sigma, dims, T)
            if eps > 0.25:
                return False, f"epsilon {eps} > 1/4 at T={T}"
    return True, (f"0.25-exceedance rate {report.frequency:.2e} <= "
                  f"epsilon/8 = {report.epsilon_over_8:.2e} at 99% confidence")


def _suite_estimator(seed):
    from .action_sets import build_multitask
    from .learners import EnumeratedExp2Learner

    action_set = build_multitask(2, 2)
    learner = EnumeratedExp2Learner(eta=0.1, gamma=0.2)
    learner.start(action_set, horizon=4, rng=environments.make_rng(seed))
    probs = learner.probs()
    rng = environments.make_rng(seed + 1)
    loss = rng.random(action_set.dims.d)
    matrix = action_set.enumerate_actions().astype(np.float64)
    expect = np.zeros(matrix.shape[0])
    from . import _kernels

    for a in range(matrix.shape[0]):
        lam = float(np.dot(matrix[a], loss))
        est, ok = _kernels.exp2_estimates(probs, learner.active,
                                          learner.d, a, lam, learner.span_rank)
        if ok == 0:
            return False, "estimator reported singular second moment"
        expect += probs[a] * est
    truth = matrix @ loss
    if not np.allclose(expect, truth, atol=1e-10):
        return False, f"bias {np.abs(expect - truth).max():.2e}"
    return True, "estimator unbiased on span(S) within 1e-10"


SUITE_FUNCS = {
    "cardinalities": _suite_cardinalities,
    "bijection": _suite_bijection,
    "variance": _suite_variance,
    "kl": _suite_kl,
    "lemma5": _suite_lemma5,
    "lemma7": _suite_lemma7,
    "clip": _suite_clip,
    "estimator": _suite_estimator,
}


def cmd_verify(args, stdout) -> int:
    suites = args.suite or list(VERIFY_SUITES)
    for name in suites:
        if name not in SUITE_FUNCS:
            raise SystemExit(f"unknown suite {name!r}; expected one of "
                             f"{', '.join(VERIFY_SUITES)}")
    failures = 0
    for name in suites:
        ok, detail = SUITE_FUNCS[name](args.seed)
        status = "PASS" if ok else "FAIL"
        stdout.write(f"{status} {name}: {detail}\n")
        failures += 0 if ok else 1
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combandit",
        description="bandit combinatorial optimization lower-bound experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_enum = sub.add_parser("enumerate", help="list an action set")
    _add_common_dims(p_enum)

    p_sim = sub.add_parser("simulate", help="replicated games, CSV + summary")
    _add_common_dims(p_sim)
    p_sim.add_argument("--T", type=int, required=True)
    p_sim.add_argument("--adversary", choices=("correlated", "independent"),
                       default="correlated")
    p_sim.add_argument("--clipped", action="store_true")
    p_sim.add_argument("--record-hidden", action="store_true",
                       help="also write full transcripts next to --out")
    _add_run_flags(p_sim)

    p_sweep = sub.add_parser("sweep", help="regret-vs-k scaling exhibit")
    _add_common_dims(p_sweep)
    p_sweep.add_argument("--t-mult", type=int, default=8,
                         help="horizon multiplier: T = t_mult * k * d")
    _add_run_flags(p_sweep)

    p_verify = sub.add_parser("verify", help="numerical verification suites")
    p_verify.add_argument("suite", nargs="*",
                          help=f"suites to run (default: all of "
                               f"{', '.join(VERIFY_SUITES)})")
    p_verify.add_argument("--seed", type=int, default=20260810)
    return parser


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "enumerate":
            return cmd_enumerate(args, stdout)
        if args.command == "simulate":
            if args.reps < 1:
                parser.error("--reps must be >= 1")
            return cmd_simulate(args, stdout)
        if args.command == "sweep":
            if args.reps < 1:
                parser.error("--reps must be >= 1")
            return cmd_sweep(args, stdout)
        return cmd_verify(args, stdout)
    except (ActionSetError, ValueError) as exc:
        parser.exit(2, f"error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
