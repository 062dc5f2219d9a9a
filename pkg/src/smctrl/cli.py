# -*- coding: utf-8 -*-
"""
smctrl command line: simulate, solve, control, evaluate, verify-example. See README.md.

Usage:
    smctrl simulate --model m.json --start x1:0.0 --horizon 1.0 --paths 1000 --seed 42 --out paths.csv
    smctrl solve --model m.json --problem p.json --dt 0.001 --a-max 2.0 --method backward --out field.csv
    smctrl control --model m.json --problem p.json --dt 0.001 --out policy.csv
    smctrl evaluate --model m.json --problem p.json --policy policy.csv --paths 100000 --seed 7 --out estimate.json
    smctrl verify-example --alpha 2.0 --T 1.0 --dt 0.001 --paths 100000 --seed 1

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from smctrl.artifacts import write_estimate, write_manifest, write_rows_csv
from smctrl.config import RUN_CONFIG
from smctrl.control import FeedbackLaw, GridFeedback, extract_feedback, load_problem, solve_hjb, hamiltonian_generator
from smctrl.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, DomainError, SmctrlError
from smctrl.kolmogorov import solve_picard
from smctrl.logger_config import get_logger, setup_logger
from smctrl.model import AgePoint, SemiMarkovModel, load_model
from smctrl.montecarlo import METHODS, estimate_cost
from smctrl.oracle import verify_example
from smctrl.simulate import simulate_paths, write_paths_csv

console = Console()


class UsageError(Exception):
    """Bad command line; argparse has already printed the usage line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# =============================================================================
# Argument parsing
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smctrl", description="Semi-Markov intensity control: simulate, solve, evaluate")
    parser.add_argument("--log-dir", type=Path, default=None, help="Directory for a rotating log file")
    parser.add_argument("--log-level", default="INFO", help="Console log level (default: INFO)")
    parser.add_argument(
        "--workers", type=int, default=RUN_CONFIG["workers"], help="Threads for path batches (default: %(default)s)"
    )
    sub = parser.add_subparsers(dest="command", metavar="{simulate,solve,control,evaluate,verify-example}")
    sub.required = True

    p = sub.add_parser("simulate", help="Sample reference-law trajectories")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--start", required=True, help="Start point as state:age, e.g. x1:0.0")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("solve", help="Solve the HJB equation on the characteristic grid")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--problem", type=Path, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--a-max", type=float, default=0.0)
    p.add_argument("--method", choices=("backward", "picard"), default="backward")
    p.add_argument("--beta", type=float, default=None, help="Picard weight (default: 4 x contraction constant)")
    p.add_argument("--tol", type=float, default=RUN_CONFIG["picard_tol"])
    p.add_argument("--max-iter", type=int, default=RUN_CONFIG["picard_max_iter"])
    p.add_argument("--stride", type=int, default=1, help="Write every stride-th node on each axis")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("control", help="Extract the optimal feedback policy")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--problem", type=Path, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--a-max", type=float, default=0.0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="Monte Carlo cost of a feedback policy")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--problem", type=Path, required=True)
    p.add_argument("--policy", required=True, help="policy.csv or builtin-optimal")
    p.add_argument("--start", default=None, help="Start point as state:age (default: first state, age 0)")
    p.add_argument("--t-offset", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-3, help="Grid step for builtin-optimal")
    p.add_argument("--a-max", type=float, default=None, help="Largest start age for builtin-optimal")
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=METHODS + ("both",), default="both")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("verify-example", help="Check solver and estimators against the closed-form example")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--T", dest="horizon", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--seed", type=int, default=1)
    return parser


def _require_files(*paths: Optional[Path]) -> List[Path]:
    found = []
    for path in paths:
        if path is None:
            continue
        if not path.is_file():
            raise DomainError(f"cannot read {path}")
        found.append(path)
    return found


def _parse_start(text: Optional[str], model: SemiMarkovModel) -> AgePoint:
    if text is None:
        return AgePoint(0, 0.0)
    state, sep, age = text.rpartition(":")
    if not sep:
        state, age = text, "0"
    try:
        age_value = float(age)
    except ValueError:
        raise DomainError(f"bad start {text!r}; expected state:age") from None
    return AgePoint(model.index(state), age_value)


def _arguments(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "log_dir"}


# =============================================================================
# Subcommands
# =============================================================================


def cmd_simulate(args: argparse.Namespace) -> int:
    logger = get_logger()
    inputs = _require_files(args.model)
    model = load_model(args.model)
    start = _parse_start(args.start, model)
    trajectories = simulate_paths(model, start, args.horizon, args.paths, args.seed, workers=args.workers, progress=True)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    rows = write_paths_csv(args.out, trajectories, model.states)
    write_manifest(args.out, "simulate", _arguments(args), inputs, seed=args.seed)
    logger.info(f"Wrote {rows} jump rows for {args.paths} paths to {args.out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    logger = get_logger()
    inputs = _require_files(args.model, args.problem)
    model = load_model(args.model)
    problem = load_problem(args.problem, model)
    if args.method == "backward":
        field = solve_hjb(problem, model, args.dt, args.a_max)
    else:
        field, report = solve_picard(
            model,
            hamiltonian_generator(problem, model),
            problem.terminal_cost,
            problem.horizon,
            args.dt,
            args.a_max,
            beta=args.beta,
            tol=args.tol,
            max_iter=args.max_iter,
        )
        logger.info(f"Picard converged in {report.iterations} iterations (beta={report.beta:.4g})")
    rows = write_rows_csv(args.out, ["t", "state", "a", "v"], field.to_rows(stride=args.stride))
    write_manifest(args.out, "solve", _arguments(args), inputs)
    logger.info(f"Wrote {rows} nodes to {args.out}")
    return EXIT_OK


def cmd_control(args: argparse.Namespace) -> int:
    logger = get_logger()
    inputs = _require_files(args.model, args.problem)
    model = load_model(args.model)
    problem = load_problem(args.problem, model)
    field = solve_hjb(problem, model, args.dt, args.a_max)
    policy = extract_feedback(problem, model, field)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    rows = policy.write_csv(args.out)
    write_manifest(args.out, "control", _arguments(args), inputs)
    logger.info(f"Wrote {rows} policy nodes to {args.out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    logger = get_logger()
    policy_path = None if args.policy == "builtin-optimal" else Path(args.policy)
    inputs = _require_files(args.model, args.problem, policy_path)
    model = load_model(args.model)
    problem = load_problem(args.problem, model)
    start = _parse_start(args.start, model)

    feedback: FeedbackLaw
    if policy_path is None:
        a_max = start.age if args.a_max is None else args.a_max
        feedback = extract_feedback(problem, model, solve_hjb(problem, model, args.dt, a_max))
    else:
        feedback = GridFeedback.from_csv(policy_path, problem, model)

    methods = METHODS if args.method == "both" else (args.method,)
    estimates = []
    for method in methods:
        estimate = estimate_cost(
            method, problem, model, start, args.t_offset, feedback, args.paths, args.seed,
            workers=args.workers, progress=True,
        )
        entry = estimate.to_dict()
        entry["start"] = {"state": model.states[start.state], "age": start.age, "t_offset": args.t_offset}
        estimates.append(entry)
    arguments = _arguments(args)
    write_estimate(args.out, estimates, args.seed, arguments)
    write_manifest(args.out, "evaluate", arguments, inputs, seed=args.seed)
    for entry in estimates:
        logger.info(f"{entry['method']}: {entry['mean']:.6f} ± {entry['std_error']:.2e}")
    return EXIT_OK


def display_report(report) -> None:
    table = Table(show_header=True, box=None, padding=(0, 2))
    table.add_column("Quantity", style="bold cyan")
    table.add_column("Value", style="white")
    table.add_column("Reference", style="white")
    table.add_column("Tolerance", style="white")
    table.add_column("Result")
    table.add_row("oracle y0(0)", f"{report.oracle:.6f}", "", "", "")
    for row in report.rows:
        table.add_row(
            row["quantity"],
            f"{row['value']:.6f}",
            f"{row['reference']:.6f}",
            f"{row['tolerance']:.2e}",
            "[green]pass[/green]" if row["passed"] else "[red]FAIL[/red]",
        )
    title = f"[bold]Example alpha={report.alpha}, T={report.horizon}, dt={report.dt}, paths={report.paths}[/bold]"
    console.print(Panel(table, title=title, border_style="green" if report.passed else "red"))


def cmd_verify_example(args: argparse.Namespace) -> int:
    report = verify_example(args.alpha, args.horizon, args.dt, args.paths, args.seed, workers=args.workers, progress=True)
    display_report(report)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "control": cmd_control,
    "evaluate": cmd_evaluate,
    "verify-example": cmd_verify_example,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    logger = setup_logger(timestamp, args.log_dir, args.log_level)
    logger.debug(f"smctrl {args.command}: {_arguments(args)}")
    try:
        return COMMANDS[args.command](args)
    except SmctrlError as e:
        logger.error(f"{args.command} failed ({e.category}): {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
