#!/usr/bin/env python
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import typer
from rich.console import Console
from rich.logging import RichHandler

from exsparse.certificate import certify
from exsparse.core_model import ProblemSpec, dim_quotient, dual_vector, validate_problem
from exsparse.demos import DEFAULT_SEED, run_demo
from exsparse.errors import ExsparseError, MalformedSpec, MaxItersExceeded
from exsparse.io_files import (
    ResultFile,
    format_json,
    load_problem,
    load_result,
    write_certificate_csv,
    write_reconstruction_csv,
    write_result,
    write_trace_csv,
)
from exsparse.oracle import OracleMode, OracleResult, compare, grid_solve_exact, grid_solve_lasso
from exsparse.solver import solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCERTIFIED = 2

app = typer.Typer(pretty_exceptions_enable=False, add_completion=False)


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log solver progress.")) -> None:
    """Sparse solutions of variational inverse problems over extremal atoms."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _emit(document: Dict[str, Any]) -> None:
    typer.echo(format_json(document, color=sys.stdout.isatty()), nl=False)


def _guarded(body: Callable[[], int]) -> None:
    try:
        code = body()
    except (ExsparseError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(EXIT_ERROR)
    raise typer.Exit(code)


@app.command()
def validate(problem: Path) -> None:
    """Check a problem file and report rank, dim H_N and the H0 condition."""

    def body() -> int:
        report = validate_problem(load_problem(problem).spec)
        _emit(
            {
                "n": report.n,
                "rank": report.rank,
                "dim_HN": report.dim_hn,
                "satisfies_h0": report.satisfies_h0,
                "warnings": report.warnings,
            }
        )
        return EXIT_OK

    _guarded(body)


@app.command("solve")
def solve_command(
    problem: Path,
    out: Optional[Path] = typer.Option(None, help="Write the result JSON here instead of stdout."),
    emit_cert: Optional[Path] = typer.Option(None, help="Certificate curve CSV."),
    emit_recon: Optional[Path] = typer.Option(None, help="Reconstruction CSV (spike list for measures)."),
    emit_trace: Optional[Path] = typer.Option(None, help="Per-iteration trace CSV."),
    gap_tol: Optional[float] = typer.Option(None),
    max_iters: Optional[int] = typer.Option(None),
    lmo_grid: Optional[int] = typer.Option(None),
    refine_iters: Optional[int] = typer.Option(None),
) -> None:
    """Solve, prune and certify; exit 0 when certified, 2 when not."""

    def body() -> int:
        parsed = load_problem(problem)
        spec = parsed.spec
        overrides = {
            key: value
            for key, value in {
                "gap_tol": gap_tol,
                "max_iters": max_iters,
                "lmo_grid": lmo_grid,
                "refine_iters": refine_iters,
            }.items()
            if value is not None
        }
        opts = parsed.options().with_overrides(overrides)
        validate_problem(spec)
        solution, certificate, report = solve(spec, opts)
        result = ResultFile.from_solve(spec, solution, certificate, report)
        if out is None:
            _emit(result.to_dict())
        else:
            write_result(out, result)
        if emit_cert is not None:
            write_certificate_csv(emit_cert, spec, dual_vector(spec, solution), lmo_grid=opts.lmo_grid)
        if emit_recon is not None:
            write_reconstruction_csv(emit_recon, spec, solution)
        if emit_trace is not None:
            write_trace_csv(emit_trace, report)
        return EXIT_OK if report.certified else EXIT_UNCERTIFIED

    _guarded(body)


def _run_oracle(problem: Path, grid: int, mode: str) -> Tuple[ProblemSpec, OracleResult]:
    try:
        oracle_mode = OracleMode(mode)
    except ValueError:
        raise MalformedSpec(f"--mode must be one of {[m.value for m in OracleMode]}, got {mode!r}") from None
    spec = load_problem(problem).spec
    try:
        if oracle_mode == OracleMode.EXACT:
            result = grid_solve_exact(spec, grid)
        else:
            result = grid_solve_lasso(spec, grid)
    except MaxItersExceeded as e:
        logger.warning(str(e))
        result = e.best
    return spec, result


@app.command()
def oracle(
    problem: Path,
    grid: int = typer.Option(4096, help="Number of grid nodes m."),
    mode: str = typer.Option("lasso", help="lasso or exact."),
    out: Optional[Path] = typer.Option(None, help="Write the oracle result JSON here instead of stdout."),
) -> None:
    """Solve the grid-discretized problem (support nodes become atoms)."""

    def body() -> int:
        spec, result = _run_oracle(problem, grid, mode)
        record = ResultFile.from_oracle(spec, result, dim_quotient(spec))
        if out is None:
            _emit(record.to_dict())
        else:
            write_result(out, record)
        return EXIT_OK if result.converged else EXIT_UNCERTIFIED

    _guarded(body)


@app.command("compare")
def compare_command(
    problem: Path,
    grid: int = typer.Option(4096, help="Number of grid nodes m."),
    mode: str = typer.Option("lasso", help="lasso or exact."),
    rel_tol: float = typer.Option(1e-4),
    support_steps: float = typer.Option(2.0),
) -> None:
    """Run the solver and the grid oracle and compare them; exit 0 on agreement."""

    def body() -> int:
        parsed = load_problem(problem)
        solution, _, _ = solve(parsed.spec, parsed.options())
        spec, result = _run_oracle(problem, grid, mode)
        report = compare(spec, solution, result, rel_tol=rel_tol, support_steps=support_steps)
        _emit(report.to_dict())
        return EXIT_OK if report.passed else EXIT_UNCERTIFIED

    _guarded(body)


@app.command("certify")
def certify_command(
    problem: Path,
    result: Path,
    grid_factor: int = typer.Option(10),
    tol: float = typer.Option(1e-6),
) -> None:
    """Re-check a stored result against its problem file."""

    def body() -> int:
        parsed = load_problem(problem)
        spec = parsed.spec
        solution = load_result(result).to_solution(spec)
        w = dual_vector(spec, solution)
        report = certify(
            spec, solution, w, grid_factor=grid_factor, tol=tol, lmo_grid=parsed.options().lmo_grid
        )
        _emit(report.to_dict())
        return EXIT_OK if report.passed else EXIT_UNCERTIFIED

    _guarded(body)


@app.command()
def demo(
    name: str,
    seed: int = typer.Option(DEFAULT_SEED),
    out_dir: Path = typer.Option(Path("demo_out"), help="Directory for problem/result/CSV files."),
) -> None:
    """Generate a seeded staircase, spline or spikes instance, solve it and write plot files."""

    def body() -> int:
        outcome = run_demo(name, out_dir, seed=seed)
        return EXIT_OK if outcome.report.certified else EXIT_UNCERTIFIED

    _guarded(body)


if __name__ == "__main__":
    app()
