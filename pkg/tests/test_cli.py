"""CLI surface: subcommands, exact CSV schema, byte determinism, and error
exits."""

import io

import pytest

from combandit.cli import CSV_HEADER, main


def run_cli(argv):
    out = io.StringIO()
    code = main(argv, stdout=out)
    return code, out.getvalue()


def run_cli_expect_exit(argv):
    out = io.StringIO()
    with pytest.raises(SystemExit) as info:
        main(argv, stdout=out)
    return info.value.code


class TestEnumerate:
    def test_multitask_four_lines(self):
        code, text = run_cli(["enumerate", "--family", "multitask",
                              "--k", "2", "--n", "2"])
        assert code == 0
        lines = text.strip().splitlines()
        assert lines[0] == "family=multitask d=4 k=2 n=2 cardinality=4"
        assert lines[1:] == ["1010", "1001", "0110", "0101"]

    def test_matching_six_lines(self):
        code, text = run_cli(["enumerate", "--family", "matching",
                              "--k", "2", "--n", "3"])
        assert code == 0
        assert len(text.strip().splitlines()) == 1 + 6

    def test_path_four_lines_four_ones(self):
        code, text = run_cli(["enumerate", "--family", "path",
                              "--k", "4", "--d", "8"])
        assert code == 0
        action_lines = text.strip().splitlines()[1:]
        assert len(action_lines) == 4
        assert all(line.count("1") == 4 for line in action_lines)

    def test_inadmissible_dims_exit(self):
        assert run_cli_expect_exit(["enumerate", "--family", "path",
                                    "--k", "3", "--d", "12"]) == 2

    def test_over_cap_prints_cardinality_only(self):
        code, text = run_cli(["enumerate", "--family", "multitask",
                              "--k", "10", "--n", "4", "--cap", "1000"])
        assert code == 0
        assert "1048576" in text
        assert len(text.strip().splitlines()) == 2


class TestSimulate:
    BASE = ["simulate", "--family", "multitask", "--k", "2", "--n", "2",
            "--T", "16", "--clipped", "--learner", "uniform",
            "--reps", "4", "--seed", "21"]

    def test_header_and_row_count(self, tmp_path):
        out_file = tmp_path / "runs.csv"
        code, summary = run_cli(self.BASE + ["--out", str(out_file)])
        assert code == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 4
        assert "mean_regret=" in summary
        assert "bound_value=" in summary
        assert "exceeds_bound=" in summary

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        _, sum_a = run_cli(self.BASE + ["--out", str(a)])
        _, sum_b = run_cli(self.BASE + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert sum_a == sum_b

    def test_jobs_do_not_change_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(self.BASE + ["--out", str(a), "--jobs", "1"])
        run_cli(self.BASE + ["--out", str(b), "--jobs", "2"])
        assert a.read_bytes() == b.read_bytes()

    def test_unclipped_independent_has_no_bound(self):
        code, summary = run_cli([
            "simulate", "--family", "multitask", "--k", "2", "--n", "2",
            "--T", "16", "--adversary", "independent", "--learner", "uniform",
            "--reps", "2", "--seed", "3"])
        assert code == 0
        assert "bound_value=" not in summary

    def test_zero_reps_usage_error(self):
        assert run_cli_expect_exit(self.BASE[:-4] + ["--reps", "0", "--seed", "1"]) == 2

    def test_seed_required(self):
        assert run_cli_expect_exit(self.BASE[:-2]) == 2

    def test_record_hidden_transcripts(self, tmp_path):
        out_file = tmp_path / "runs.csv"
        code, _ = run_cli(self.BASE + ["--out", str(out_file), "--record-hidden"])
        assert code == 0
        text = (tmp_path / "runs.csv.transcripts.txt").read_text()
        assert text.count("# combandit transcript") == 4

    def test_exp3_effective_tuning_echoed(self, tmp_path):
        out_file = tmp_path / "runs.csv"
        run_cli(["simulate", "--family", "multitask", "--k", "2", "--n", "2",
                 "--T", "16", "--learner", "exp3", "--baseline", "mean",
                 "--reps", "2", "--seed", "5", "--out", str(out_file)])
        row = out_file.read_text().splitlines()[1].split(",")
        header = CSV_HEADER.split(",")
        assert row[header.index("learner")] == "exp3[b=mean]"
        assert float(row[header.index("eta")]) > 0
        assert float(row[header.index("gamma")]) > 0

    def test_theorem4_requires_long_horizon(self):
        assert run_cli_expect_exit([
            "simulate", "--family", "multitask", "--k", "4", "--n", "2",
            "--T", "16", "--clipped", "--learner", "uniform",
            "--reps", "2", "--seed", "3"]) == 2


class TestSweep:
    def test_single_k_usage_error(self):
        assert run_cli_expect_exit([
            "sweep", "--family", "multitask", "--k", "4", "--n", "2",
            "--learner", "uniform", "--reps", "2", "--seed", "1"]) is not None

    def test_small_sweep_reports_exponents(self, tmp_path):
        out_file = tmp_path / "sweep.csv"
        code, report = run_cli([
            "sweep", "--family", "multitask", "--k", "2,4,8", "--n", "2",
            "--t-mult", "2", "--learner", "uniform", "--reps", "3",
            "--seed", "13", "--out", str(out_file)])
        assert code == 0
        assert "exponent_correlated=" in report
        assert "exponent_independent=" in report
        assert "exponent_gap=" in report
        lines = out_file.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 3 * 3 * 2  # reps x k-values x adversaries

    def test_sweep_determinism(self, tmp_path):
        args = ["sweep", "--family", "multitask", "--k", "2,4,8", "--n", "2",
                "--t-mult", "2", "--learner", "uniform", "--reps", "2",
                "--seed", "13"]
        _, a = run_cli(args)
        _, b = run_cli(args)
        assert a == b


class TestVerify:
    def test_unknown_suite_usage_error(self):
        assert run_cli_expect_exit(["verify", "bogus"]) is not None

    def test_fast_suites_pass(self):
        code, text = run_cli(["verify", "kl", "lemma5", "lemma7", "estimator",
                              "--seed", "7"])
        assert code == 0
        assert text.count("PASS") == 4
        assert "FAIL" not in text
