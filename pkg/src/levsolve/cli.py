"""Command-line front end: ingestion, generators, solvers, verification, reports.

Subcommands: solve (sampled regression pipeline), leverage (probe
estimates with brackets), erm (generalized losses), bench (sampled vs
unsampled counter sweep, CSV), verify (dense-oracle invariant audit), and
generate (synthetic families). JSON reports carry ``schema: 1`` and are
byte-identical for identical (config, seed); wall-clock timings are added
only under ``--timings`` to keep the default reports deterministic.

Exit codes: 0 ok; 2 argument/configuration error; 3 numeric or convergence
failure; 4 invariant violation (verify-mode brackets).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .counters import WorkCounter
from .dualreg import dual_regression_solve
from .erm import erm_full_solve, erm_value_grad, logistic_aug_problem, quadratic_problem
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    InvariantViolation,
    NumericError,
    PreconditionerQualityError,
    SamplingFailureError,
)
from .generate import KINDS, generate
from .homotopy import solve as pipeline_solve
from .leverage import (
    DEFAULT_SAMPLE_K,
    LeverageVector,
    compute_ls,
    make_dense_probe_solver,
    plan_jl_config,
    solve_using_ls,
)
from .oracles import (
    RankDeficientError,
    RegressionProblem,
    SpectralBounds,
    oracle_leverage,
    oracle_solve,
    oracle_spectral,
)
from .sparse import (
    MatrixMarketError,
    matvec,
    read_matrix_market,
    read_vector,
    row_norms_sq,
    write_matrix_market,
    write_vector,
)

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4

_ARG_ERRORS = (ConfigurationError, DegenerateProblemError, MatrixMarketError,
               RankDeficientError, FileNotFoundError)
_NUMERIC_ERRORS = (NumericError, ConvergenceError, SamplingFailureError,
                   PreconditionerQualityError)


@dataclass
class RunConfig:
    """Parsed invocation; one pipeline per process."""

    subcommand: str
    matrix: str | None = None
    rhs: str | None = None
    epsilon: float = 1e-6
    delta: float = 0.1
    seed: int = 0
    lambda_min: float | None = None
    kappa: float | None = None
    mode: str = "fast"
    psi: str = "quadratic"
    out: str | None = None
    solution: str | None = None
    timings: bool = False
    kind: str = "coherent-rows"
    n: int = 100
    d: int = 10
    n_list: str = "1000,10000,50000"
    sample_k: float = DEFAULT_SAMPLE_K

    def validate(self) -> None:
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigurationError(
                f"epsilon must be in (0, 1), got {self.epsilon}")
        if not (0.0 < self.delta < 0.5):
            raise ConfigurationError(
                f"delta must be in (0, 1/2), got {self.delta}")
        if self.mode not in ("fast", "paper-faithful", "verify"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.psi not in ("quadratic", "logistic-aug"):
            raise ConfigurationError(f"unknown psi {self.psi!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levsolve",
        description="Sparse regression and ERM via leverage-score sampling.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, needs_input=True):
        if needs_input:
            p.add_argument("--matrix", required=True,
                           help="Matrix Market coordinate file (.mtx)")
            p.add_argument("--rhs", required=True,
                           help="right-hand side, one decimal per line")
        p.add_argument("--epsilon", type=float, default=1e-6,
                       help="relative accuracy target (default 1e-6)")
        p.add_argument("--delta", type=float, default=0.1,
                       help="sampling distortion (default 0.1)")
        p.add_argument("--seed", type=int, default=0,
                       help="deterministic RNG seed (default 0)")
        p.add_argument("--lambda-min", type=float, default=None,
                       dest="lambda_min",
                       help="lower bound on lambda_min(A^T A)")
        p.add_argument("--kappa", type=float, default=None,
                       help="condition-number hint for tolerance sizing")
        p.add_argument("--mode", default="fast",
                       choices=("fast", "paper-faithful", "verify"))
        p.add_argument("--out", default=None, help="report file (default stdout)")
        p.add_argument("--timings", action="store_true",
                       help="include wall-clock timings (report no longer "
                            "byte-reproducible)")

    p_solve = sub.add_parser("solve", help="least squares via the sampled pipeline")
    add_common(p_solve)
    p_solve.add_argument("--solution", default=None,
                         help="write the solution vector here")

    p_lev = sub.add_parser("leverage", help="probe-based leverage estimates")
    p_lev.add_argument("--matrix", required=True)
    add_common(p_lev, needs_input=False)

    p_erm = sub.add_parser("erm", help="generalized losses (ERM)")
    add_common(p_erm)
    p_erm.add_argument("--psi", default="quadratic",
                       choices=("quadratic", "logistic-aug"))
    p_erm.add_argument("--solution", default=None)

    p_bench = sub.add_parser("bench", help="sampled vs unsampled counter sweep")
    add_common(p_bench, needs_input=False)
    p_bench.add_argument("--kind", default="coherent-rows", choices=KINDS)
    p_bench.add_argument("--d", type=int, default=50)
    p_bench.add_argument("--n-list", default="1000,10000,50000", dest="n_list",
                         help="comma-separated row counts")

    p_ver = sub.add_parser("verify", help="dense-oracle invariant audit")
    add_common(p_ver)

    p_gen = sub.add_parser("generate", help="synthetic instance families")
    p_gen.add_argument("--kind", required=True, choices=KINDS)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--kappa", type=float, default=1e4,
                       help="condition target (ill-conditioned kind)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True,
                       help="output prefix: writes <out>.mtx and <out>.rhs")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(subcommand=args.subcommand)
    for name in ("matrix", "rhs", "epsilon", "delta", "seed", "lambda_min",
                 "kappa", "mode", "psi", "out", "solution", "timings",
                 "kind", "n", "d", "n_list"):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    cfg.validate()
    return cfg


def _emit_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_problem(cfg: RunConfig):
    A = read_matrix_market(cfg.matrix)
    b = read_vector(cfg.rhs)
    if b.shape[0] != A.n_rows:
        raise ConfigurationError(
            f"rhs has {b.shape[0]} entries, matrix has {A.n_rows} rows")
    return A, b


def _work_fields(work: WorkCounter) -> dict:
    return {
        "coordinate_updates": float(work.coordinate_updates),
        "sampled_rows": int(work.sampled_rows),
        "probe_solves": int(work.probe_solves),
        "flags": list(work.clamp_flags),
    }


def _base_report(cfg: RunConfig) -> dict:
    return {
        "schema": 1,
        "subcommand": cfg.subcommand,
        "seed": int(cfg.seed),
        "epsilon": float(cfg.epsilon),
        "mode": cfg.mode,
    }


def _kappa_hint(cfg: RunConfig, A) -> float:
    if cfg.kappa is not None:
        return float(cfg.kappa)
    return oracle_spectral(A).kappa


def _cmd_solve(cfg: RunConfig) -> int:
    A, b = _load_problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    work = WorkCounter()
    x0 = np.zeros(A.n_cols)
    t0 = time.perf_counter()
    x, rep = pipeline_solve(A, b, x0, cfg.epsilon, rng,
                            lambda_min=cfg.lambda_min, mode=cfg.mode,
                            sample_delta=cfg.delta, work=work,
                            report_seed=cfg.seed)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    report = _base_report(cfg)
    report.update(rep.as_dict())
    report.update(_work_fields(work))
    if cfg.solution:
        write_vector(cfg.solution, x)
        report["solution_path"] = cfg.solution
    if cfg.timings:
        report["wall_ms"] = wall_ms
    _emit_report(report, cfg.out)
    return EXIT_OK


def _cmd_leverage(cfg: RunConfig) -> int:
    A = read_matrix_market(cfg.matrix)
    rng = np.random.default_rng(cfg.seed)
    work = WorkCounter()
    kappa = _kappa_hint(cfg, A)
    jl = plan_jl_config(A.n_rows, A.n_cols, cfg.delta, kappa,
                        mode=cfg.mode if cfg.mode != "verify" else "fast",
                        work=work)
    t0 = time.perf_counter()
    est = compute_ls(A, cfg.delta, make_dense_probe_solver(A), jl, rng,
                     work=work)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    slack = cfg.delta / (A.n_rows * kappa)
    lo = np.maximum(0.0, (est.values - slack) / (1.0 + cfg.delta))
    hi = est.values
    if cfg.mode == "verify":
        sigma = oracle_leverage(A)
        bad = np.nonzero((sigma < lo - 1e-12) | (sigma > hi + 1e-12))[0]
        if bad.size:
            i = int(bad[0])
            raise InvariantViolation(
                "leverage-bracket",
                f"oracle sigma_i = {sigma[i]} outside [{lo[i]}, {hi[i]}]", i)
    report = _base_report(cfg)
    report.update({
        "delta": float(cfg.delta),
        "probe_count": int(jl.k),
        "estimates": [float(v) for v in est.values],
        "bracket_low": [float(v) for v in lo],
        "bracket_high": [float(v) for v in hi],
    })
    report.update(_work_fields(work))
    if cfg.timings:
        report["wall_ms"] = wall_ms
    _emit_report(report, cfg.out)
    return EXIT_OK


def _spectral_hints(cfg: RunConfig, A) -> SpectralBounds:
    if cfg.lambda_min is not None and cfg.kappa is not None:
        lam = float(cfg.lambda_min)
        kap = float(cfg.kappa)
        if lam <= 0.0:
            raise ConfigurationError(
                f"--lambda-min must be positive, got {lam}")
        if kap < 1.0:
            raise ConfigurationError(f"--kappa must be >= 1, got {kap}")
        trace = float(row_norms_sq(A).sum())
        return SpectralBounds(lambda_min=lam, lambda_max=lam * kap,
                              kappa=kap, kappa_sum=max(trace / lam, kap))
    return oracle_spectral(A)


def _cmd_erm(cfg: RunConfig) -> int:
    A, b = _load_problem(cfg)
    if cfg.psi == "quadratic":
        problem = quadratic_problem(A, b)
    else:
        problem = logistic_aug_problem(A, b)
    spectral = _spectral_hints(cfg, A)
    rng = np.random.default_rng(cfg.seed)
    work = WorkCounter()
    x0 = np.zeros(A.n_cols)
    t0 = time.perf_counter()
    x = erm_full_solve(problem, x0, cfg.epsilon, rng, spectral=spectral,
                       work=work)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    value, grad = erm_value_grad(problem, x)
    report = _base_report(cfg)
    report.update({
        "psi": cfg.psi,
        "final_value": float(value),
        "final_grad_norm": float(np.linalg.norm(grad)),
    })
    report.update(_work_fields(work))
    if cfg.solution:
        write_vector(cfg.solution, x)
        report["solution_path"] = cfg.solution
    if cfg.timings:
        report["wall_ms"] = wall_ms
    _emit_report(report, cfg.out)
    return EXIT_OK


def _cmd_bench(cfg: RunConfig) -> int:
    try:
        n_values = [int(tok) for tok in cfg.n_list.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --n-list: {exc}") from None
    if not n_values:
        raise ConfigurationError("--n-list is empty")
    rows = []
    for n in n_values:
        A, b = generate(cfg.kind, n, cfg.d, kappa_target=cfg.kappa or 1e4,
                        seed=cfg.seed)
        bounds = oracle_spectral(A)
        u = LeverageVector(values=oracle_leverage(A), role="overestimate")
        x0 = np.zeros(A.n_cols)
        for method in ("sampled", "unsampled"):
            work = WorkCounter()
            rng = np.random.default_rng(cfg.seed)
            t0 = time.perf_counter()
            if method == "sampled":
                solve_using_ls(A, u, b, x0, cfg.epsilon, rng,
                               lambda_lb=bounds.lambda_min,
                               sample_delta=cfg.delta, work=work)
            else:
                dual_regression_solve(A, b, x0, cfg.epsilon, rng,
                                      lambda_lb=bounds.lambda_min, work=work)
            wall_ms = 1000.0 * (time.perf_counter() - t0)
            rows.append([n, cfg.d, bounds.kappa, bounds.kappa_sum, method,
                         work.coordinate_updates, work.sampled_rows,
                         wall_ms, cfg.seed])
    header = ["n", "d", "kappa", "kappa_sum", "method", "coordinate_updates",
              "sampled_rows", "wall_ms", "seed"]
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    return EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    A, b = _load_problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    work = WorkCounter()
    x0 = np.zeros(A.n_cols)
    checks = []

    bounds = oracle_spectral(A)
    x, rep = pipeline_solve(A, b, x0, cfg.epsilon, rng,
                            lambda_min=cfg.lambda_min, mode="verify",
                            sample_delta=cfg.delta, work=work,
                            report_seed=cfg.seed)
    checks.append("per-phase-leverage-bracket")

    prob = RegressionProblem(A=A, b=b)
    x_star = oracle_solve(prob)
    f_star = prob.value(x_star)
    gap = prob.value(x) - f_star
    gap0 = prob.value(x0) - f_star
    if gap > cfg.epsilon * gap0 + 1e-12 * max(1.0, abs(f_star)):
        raise InvariantViolation(
            "final-gap", f"f(x) - f* = {gap} > epsilon * (f(x0) - f*) = "
                         f"{cfg.epsilon * gap0}")
    checks.append("final-gap")

    resid = matvec(A, x) - b
    if not np.all(np.isfinite(resid)):
        raise InvariantViolation("finite-residual", "non-finite residual entries")
    checks.append("finite-residual")

    report = _base_report(cfg)
    report.update(rep.as_dict())
    report.update(_work_fields(work))
    report["checks_passed"] = checks
    report["kappa"] = bounds.kappa
    _emit_report(report, cfg.out)
    return EXIT_OK


def _cmd_generate(cfg: RunConfig, args: argparse.Namespace) -> int:
    A, rhs = generate(args.kind, args.n, args.d,
                      kappa_target=args.kappa, seed=args.seed)
    mtx_path = args.out + ".mtx"
    rhs_path = args.out + ".rhs"
    write_matrix_market(mtx_path, A)
    write_vector(rhs_path, rhs)
    report = {
        "schema": 1,
        "subcommand": "generate",
        "kind": args.kind,
        "n": A.n_rows,
        "d": A.n_cols,
        "nnz": int(A.nnz),
        "seed": int(args.seed),
        "matrix_path": mtx_path,
        "rhs_path": rhs_path,
    }
    sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage already; normalize other codes
        return 0 if exc.code in (0, None) else EXIT_ARGS
    try:
        if args.subcommand == "generate":
            return _cmd_generate(RunConfig(subcommand="generate"), args)
        cfg = _config_from_args(args)
        handler = {
            "solve": _cmd_solve,
            "leverage": _cmd_leverage,
            "erm": _cmd_erm,
            "bench": _cmd_bench,
            "verify": _cmd_verify,
        }[cfg.subcommand]
        return handler(cfg)
    except InvariantViolation as exc:
        sys.stderr.write(f"invariant violation: {exc}\n")
        return EXIT_INVARIANT
    except _ARG_ERRORS as exc:
        sys.stderr.write(f"argument error: {exc}\n")
        return EXIT_ARGS
    except _NUMERIC_ERRORS as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
