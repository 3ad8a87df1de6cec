"""Command-line interface, exercised in process through main(argv).

Checks:
  * solve on an identity system recovers the right-hand side (exit 0)
  * leverage on the 3x2 example brackets the true scores in verify mode
  * erm runs the quadratic loss end to end
  * bench emits the fixed CSV column set with one row per (n, method)
  * generate writes files that parse back; bad shapes exit 2
  * reports are byte-identical for identical configuration and seed
  * exit-code mapping for argument, numeric, and invariant failures
"""

import json

import numpy as np
import pytest

from levsolve import cli
from levsolve.errors import InvariantViolation
from levsolve.sparse import (
    identity,
    read_matrix_market,
    read_vector,
    write_matrix_market,
    write_vector,
)


def write_problem(tmp_path, A, b, stem="prob"):
    mtx = tmp_path / f"{stem}.mtx"
    rhs = tmp_path / f"{stem}.rhs"
    write_matrix_market(mtx, A)
    write_vector(rhs, np.asarray(b, dtype=np.float64))
    return str(mtx), str(rhs)


class TestSolve:
    def test_identity_system(self, tmp_path, capsys):
        b = np.linspace(1.0, 2.0, 12)
        mtx, rhs = write_problem(tmp_path, identity(12), b)
        sol = str(tmp_path / "x.vec")
        code = cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                         "--epsilon", "1e-8", "--lambda-min", "1.0",
                         "--solution", sol])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["schema"] == 1
        assert report["subcommand"] == "solve"
        assert report["phases"] >= 1
        assert report["eta_schedule"][-1] == 0.0
        x = read_vector(sol)
        np.testing.assert_allclose(x, b, atol=1e-3)

    def test_missing_lambda_min_in_fast_mode_exits_2(self, tmp_path):
        b = np.ones(6)
        mtx, rhs = write_problem(tmp_path, identity(6), b)
        assert cli.main(["solve", "--matrix", mtx, "--rhs", rhs]) == 2

    def test_rhs_length_mismatch_exits_2(self, tmp_path):
        mtx, _ = write_problem(tmp_path, identity(6), np.ones(6))
        _, rhs = write_problem(tmp_path, identity(4), np.ones(4), stem="other")
        assert cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                         "--lambda-min", "1.0"]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert cli.main(["solve", "--matrix", str(tmp_path / "nope.mtx"),
                         "--rhs", str(tmp_path / "nope.rhs"),
                         "--lambda-min", "1.0"]) == 2

    def test_byte_identical_reports(self, tmp_path):
        rng = np.random.default_rng(0)
        from levsolve.sparse import from_dense

        A = from_dense(rng.standard_normal((40, 5)))
        b = rng.standard_normal(40)
        mtx, rhs = write_problem(tmp_path, A, b)
        outs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            code = cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                             "--seed", "7", "--mode", "verify",
                             "--out", str(out)])
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_rank_deficient_matrix_exits_2(self, tmp_path):
        from levsolve.sparse import from_dense

        A = from_dense([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        mtx, rhs = write_problem(tmp_path, A, np.ones(3))
        assert cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                         "--mode", "verify"]) == 2


class TestLeverage:
    def test_three_by_two_brackets_true_scores(self, tmp_path, capsys):
        from levsolve.sparse import from_dense

        A = from_dense([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mtx = tmp_path / "a.mtx"
        write_matrix_market(mtx, A)
        code = cli.main(["leverage", "--matrix", str(mtx), "--delta", "0.4",
                         "--mode", "verify", "--seed", "1"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["probe_count"] >= 1
        lo = np.array(report["bracket_low"])
        hi = np.array(report["bracket_high"])
        sigma = np.full(3, 2.0 / 3.0)
        assert np.all(lo - 1e-12 <= sigma)
        assert np.all(sigma <= hi + 1e-12)

    def test_delta_below_one_over_n_exits_2(self, tmp_path):
        from levsolve.sparse import from_dense

        A = from_dense([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mtx = tmp_path / "a.mtx"
        write_matrix_market(mtx, A)
        # the default delta = 0.1 is below 1/n = 1/3 for a 3-row matrix
        assert cli.main(["leverage", "--matrix", str(mtx)]) == 2


class TestErm:
    def test_quadratic_loss(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        from levsolve.sparse import from_dense

        A = from_dense(rng.standard_normal((50, 4)))
        b = rng.standard_normal(50)
        mtx, rhs = write_problem(tmp_path, A, b)
        code = cli.main(["erm", "--matrix", mtx, "--rhs", rhs,
                         "--epsilon", "1e-6", "--seed", "3"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["psi"] == "quadratic"
        assert report["final_grad_norm"] < 1.0
        assert report["sampled_rows"] > 0

    def test_logistic_loss_with_hints(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        from levsolve.oracles import oracle_spectral
        from levsolve.sparse import from_dense

        A = from_dense(rng.standard_normal((40, 3)))
        b = rng.standard_normal(40)
        bounds = oracle_spectral(A)
        mtx, rhs = write_problem(tmp_path, A, b)
        code = cli.main(["erm", "--matrix", mtx, "--rhs", rhs,
                         "--psi", "logistic-aug", "--epsilon", "1e-5",
                         "--lambda-min", str(bounds.lambda_min),
                         "--kappa", str(bounds.kappa)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["psi"] == "logistic-aug"


class TestBench:
    def test_csv_schema(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = cli.main(["bench", "--kind", "coherent-rows", "--d", "8",
                         "--n-list", "200,400", "--epsilon", "1e-6",
                         "--seed", "5", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ("n,d,kappa,kappa_sum,method,coordinate_updates,"
                            "sampled_rows,wall_ms,seed")
        assert len(lines) == 1 + 4  # two methods per n
        for line in lines[1:]:
            fields = line.split(",")
            assert fields[4] in ("sampled", "unsampled")
            assert float(fields[5]) > 0.0

    def test_bad_n_list_exits_2(self):
        assert cli.main(["bench", "--n-list", "ten,twenty"]) == 2


class TestVerify:
    def test_small_instance_passes_all_checks(self, tmp_path, capsys):
        rng = np.random.default_rng(6)
        from levsolve.sparse import from_dense

        A = from_dense(rng.standard_normal((60, 5)))
        b = rng.standard_normal(60)
        mtx, rhs = write_problem(tmp_path, A, b)
        code = cli.main(["verify", "--matrix", mtx, "--rhs", rhs,
                         "--epsilon", "1e-6", "--seed", "8"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["checks_passed"] == [
            "per-phase-leverage-bracket", "final-gap", "finite-residual"]


class TestGenerate:
    def test_round_trip(self, tmp_path, capsys):
        prefix = str(tmp_path / "inst")
        code = cli.main(["generate", "--kind", "gaussian", "--n", "30",
                         "--d", "4", "--seed", "9", "--out", prefix])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 30 and report["d"] == 4
        A = read_matrix_market(prefix + ".mtx")
        rhs = read_vector(prefix + ".rhs")
        assert A.shape == (30, 4)
        assert rhs.shape == (30,)

    def test_n_below_d_exits_2(self, tmp_path):
        assert cli.main(["generate", "--kind", "gaussian", "--n", "3",
                         "--d", "5", "--out", str(tmp_path / "bad")]) == 2

    def test_unknown_kind_exits_2(self, tmp_path, capsys):
        # argparse rejects the choice itself
        assert cli.main(["generate", "--kind", "mystery", "--n", "10",
                         "--d", "2", "--out", str(tmp_path / "bad")]) == 2


class TestExitCodeMapping:
    def test_invariant_violation_maps_to_4(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise InvariantViolation("leverage-bracket", "forced failure")

        monkeypatch.setattr(cli, "_cmd_solve", boom)
        mtx, rhs = write_problem(tmp_path, identity(3), np.ones(3))
        assert cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                         "--lambda-min", "1.0"]) == 4

    def test_numeric_failure_maps_to_3(self, tmp_path, monkeypatch):
        from levsolve.errors import ConvergenceError

        def boom(cfg):
            raise ConvergenceError("forced failure", best=None)

        monkeypatch.setattr(cli, "_cmd_solve", boom)
        mtx, rhs = write_problem(tmp_path, identity(3), np.ones(3))
        assert cli.main(["solve", "--matrix", mtx, "--rhs", rhs,
                         "--lambda-min", "1.0"]) == 3

    def test_usage_error_exits_2(self):
        assert cli.main(["solve"]) == 2  # missing required arguments
        assert cli.main([]) == 2  # missing subcommand
