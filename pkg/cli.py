#!/usr/bin/env python3
"""
VTM-SIM: Command Line Interface
Run, compare and validate joint-locking simulations

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import asyncio
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from chain_model import DimensionError, energies, gravity_vector, mass_matrix, potential_energy
from config import SimConfig, get_config
from constraint_schedule import RegularityError, ScheduleError, split_at_event, validate_regularity
from logger import SimLogger
from metrics import compare_runs, render_compare, render_summary, summarize
from projection_kernels import RankError
from scenario import Scenario, ScenarioError, builtin_scenarios, load_scenario
from simulate import Formulation, NumericalError, Trajectory, run_scenario, write_csv
from transition import TransitionMethod
from utils import central_difference, file_hash, format_duration, max_abs, safe_json_save

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

DEFAULT_SCENARIO = "3r_locking"

console = Console()


def exit_code_for(error: Exception) -> int:
    """Map an exception onto the exit-code contract"""
    if isinstance(error, (RegularityError, ScenarioError, ScheduleError, DimensionError)):
        return EXIT_VALIDATION
    if isinstance(error, (NumericalError, RankError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    if isinstance(error, ValueError):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL


def _make_logger(config: SimConfig, quiet: bool) -> SimLogger:
    return SimLogger(log_dir=config.output.log_dir, quiet=quiet)


def simulate_scenario(scenario: Scenario, config: SimConfig, logger: Optional[SimLogger] = None) -> Trajectory:
    return run_scenario(
        scenario.model,
        scenario.force_law(),
        scenario.to_schedule(),
        scenario.initial_state(),
        scenario.t_end,
        scenario.dt,
        scenario.formulation,
        scenario.transition,
        impulses=scenario.impulses,
        sample_stride=scenario.sample_stride,
        grid_tolerance=config.integrator.grid_tolerance,
        rank_scale=config.tolerances.rank_scale,
        logger=logger,
        name=scenario.name,
    )


def _load(args, config: SimConfig) -> Scenario:
    scenario = load_scenario(args.scenario, config.integrator)
    return scenario.with_overrides(
        transition=getattr(args, "transition", None),
        formulation=getattr(args, "formulation", None),
        dt=getattr(args, "dt", None),
        sample_stride=getattr(args, "stride", None),
    )


def cmd_run(args, config: SimConfig) -> int:
    """Run one scenario and write its trajectory CSV"""
    scenario = _load(args, config)
    logger = _make_logger(config, args.quiet)
    try:
        traj = simulate_scenario(scenario, config, logger)
    finally:
        if config.output.save_session_log:
            logger.save()

    out = Path(args.out or f"{scenario.name}_{scenario.transition.value}.csv")
    write_csv(traj, out, config.output.float_digits)
    summary = summarize(traj)
    render_summary(summary, console, config.tolerances)
    if args.summary:
        summary.save(args.summary)
    console.print(f"Trajectory written to {out} (sha256 {file_hash(out)[:16]}, {format_duration(traj.wall_time)})")
    return EXIT_OK


async def _run_methods(scenario: Scenario, methods: List[str], config: SimConfig,
                       logger: SimLogger) -> Dict[str, Trajectory]:
    semaphore = asyncio.Semaphore(max(1, config.threads))

    async def run_one(method: str) -> Trajectory:
        async with semaphore:
            return await asyncio.to_thread(
                simulate_scenario, scenario.with_overrides(transition=method), config, logger
            )

    results = await asyncio.gather(*(run_one(m) for m in methods))
    return dict(zip(methods, results))


def parse_methods(text: str) -> List[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    for m in methods:
        TransitionMethod(m)
    if len(set(methods)) != len(methods):
        raise ValueError(f"Duplicate method in {text!r}")
    if len(methods) < 2:
        raise ValueError("compare needs at least two methods")
    return methods


def cmd_compare(args, config: SimConfig) -> int:
    """Run several transition methods on one scenario and report pairwise deviations"""
    methods = parse_methods(args.methods)
    scenario = _load(args, config)
    logger = _make_logger(config, args.quiet)

    trajectories = asyncio.run(_run_methods(scenario, methods, config, logger))

    out_dir = Path(args.out or f"compare_{scenario.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for method, traj in trajectories.items():
        write_csv(traj, out_dir / f"{scenario.name}_{method}.csv", config.output.float_digits)

    report = compare_runs(trajectories, gate=config.tolerances.compare_gate, scenario=scenario.name)
    logger.compare(scenario.name, methods, report.consistent_max, report.passed)
    if config.output.save_session_log:
        logger.save()
    safe_json_save(out_dir / "compare.json", report.to_dict())

    render_compare(report, console)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_validate(args, config: SimConfig) -> int:
    """Dry-run the regularity checks of every event at the initial configuration"""
    scenario = load_scenario(args.scenario, config.integrator)
    sched = scenario.to_schedule()
    M = mass_matrix(scenario.model, scenario.q0)

    table = Table(title=f"{scenario.name}: regularity at q0")
    for col in ("t [s]", "joint", "m1", "m2", "rank J1", "rank J2", "rank (J1;J2)", "ok"):
        table.add_column(col, justify="right")

    ok = True
    for event in sched.events:
        J1, J2 = split_at_event(sched, event)
        report = validate_regularity(J1, J2, M, config.tolerances.rank_scale)
        ok = ok and report.ok
        table.add_row(
            f"{event.time:.4f}", str(event.joint_index), str(report.m1), str(report.m2),
            str(report.rank_J1), str(report.rank_J2), str(report.rank_stacked),
            "[green]yes[/green]" if report.ok else "[red]no[/red]",
        )

    if sched.events:
        console.print(table)
    console.print(f"{scenario.name}: {len(sched.events)} event(s), "
                  f"{'[green]ok[/green]' if ok else '[red]irregular[/red]'}")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_info(args, config: SimConfig) -> int:
    """Print model terms at the initial state"""
    scenario = load_scenario(args.scenario, config.integrator)
    s0 = scenario.initial_state()
    e = energies(scenario.model, s0)
    np.set_printoptions(precision=6, suppress=True)
    console.print(f"[bold]{scenario.name}[/bold]: {scenario.n} links, g = {scenario.model.gravity}")
    console.print(f"q0  = {s0.q}")
    console.print(f"qd0 = {s0.qd}")
    console.print(f"M(q0) =\n{mass_matrix(scenario.model, s0.q)}")
    P = gravity_vector(scenario.model, s0.q)
    P_fd = central_difference(lambda q: potential_energy(scenario.model, q), s0.q, config.integrator.fd_step)
    console.print(f"P(q0) = {P}")
    console.print(f"max |P - dV/dq| (finite difference) = {max_abs(P - P_fd):.3e}")
    console.print(f"E_kin = {e.kinetic:.6f} J, E_pot = {e.potential:.6f} J, E_tot = {e.total:.6f} J")
    console.print(f"bundled scenarios: {', '.join(builtin_scenarios())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtm-sim",
        description="VTM-SIM: forward dynamics of planar chains with scheduled joint locking",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    def scenario_arg(p):
        p.add_argument("--scenario", "-s", default=DEFAULT_SCENARIO,
                       help="Scenario JSON file or bundled scenario name")

    # run
    p_run = subparsers.add_parser("run", help="Run a scenario")
    scenario_arg(p_run)
    p_run.add_argument("--out", "-o", help="Trajectory CSV path")
    p_run.add_argument("--transition", "-t", choices=[m.value for m in TransitionMethod])
    p_run.add_argument("--formulation", "-f", choices=["index1", "projected", "voronets"]
                       + [f.value for f in Formulation])
    p_run.add_argument("--dt", type=float, help="Step size override [s]")
    p_run.add_argument("--stride", type=int, help="Sample stride override")
    p_run.add_argument("--summary", help="Write run summary JSON here")
    p_run.add_argument("--quiet", "-q", action="store_true", help="Suppress event log lines")

    # compare
    p_compare = subparsers.add_parser("compare", help="Compare transition methods")
    scenario_arg(p_compare)
    p_compare.add_argument("--methods", "-m", default="general,partitioned,redundant,minimal",
                           help="Comma-separated transition methods")
    p_compare.add_argument("--out", "-o", help="Output directory")
    p_compare.add_argument("--formulation", "-f", choices=["index1", "projected", "voronets"]
                           + [f.value for f in Formulation])
    p_compare.add_argument("--dt", type=float, help="Step size override [s]")
    p_compare.add_argument("--quiet", "-q", action="store_true", help="Suppress event log lines")

    # validate
    p_validate = subparsers.add_parser("validate", help="Check schedule regularity")
    scenario_arg(p_validate)

    # info
    p_info = subparsers.add_parser("info", help="Show model terms at the initial state")
    scenario_arg(p_info)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_OK

    commands = {
        "run": cmd_run,
        "compare": cmd_compare,
        "validate": cmd_validate,
        "info": cmd_info,
    }

    try:
        config = get_config()
        config.validate()
        return commands[args.command](args, config)
    except Exception as e:
        code = exit_code_for(e)
        label = "validation error" if code == EXIT_VALIDATION else "numerical failure"
        console.print(f"[red]{label}:[/red] {e}", highlight=False)
        return code


if __name__ == "__main__":
    sys.exit(main())
