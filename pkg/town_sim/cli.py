"""
Command line entry point: run scenarios, compare runs, lint scenarios and replay
event logs through the analytics.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from town_sim import config
from town_sim.analytics.reports import (
    promoted_dining_shop,
    read_reports,
    write_comparison,
    write_reports,
)
from town_sim.analytics.substitution import substitution_report
from town_sim.database import RunRegistry
from town_sim.decision.oracle import ScriptedOracle
from town_sim.decision.remote import RemoteLLMBackend, TranscriptWriter
from town_sim.engine.event_log import read_event_log
from town_sim.engine.simulator import SimulationResult, Simulator
from town_sim.exception import (
    BackendConfigurationException,
    BackendRequestException,
    BackendUnavailableException,
    InvariantBreachException,
    MalformedLogException,
    ReportMismatchException,
    ScenarioException,
)
from town_sim.parameters import Parameters
from town_sim.world.loader import Scenario, load_scenario
from town_sim.world.scenario import BackendKind, RunMode

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2
EXIT_BACKEND = 3

EVENTS_FILE = "events.ndjson"
MEMORIES_FILE = "memories.ndjson"
FINAL_STATE_FILE = "final_state.json"
TRANSCRIPT_FILE = "transcripts.ndjson"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="town-sim", description="Multi-agent town promotion simulator"
    )
    subparsers = parser.add_subparsers(
        dest="command", required=True, parser_class=_ArgumentParser
    )

    run = subparsers.add_parser("run", help="Run a scenario")
    run.add_argument("--scenario", required=True, help="Scenario YAML file")
    run.add_argument("--backend", choices=[b.value for b in BackendKind])
    run.add_argument("--mode", choices=[m.value for m in RunMode])
    run.add_argument("--seed", type=int)
    run.add_argument("--days", type=int)
    run.add_argument("--out", default="out", help="Output directory")
    run.add_argument("--database-url", help="Record the run in this database")
    run.add_argument("-v", "--verbose", action="count", default=0)

    compare = subparsers.add_parser("compare", help="Compare a promotion run with its baseline")
    compare.add_argument("baseline", help="Output directory of the baseline run")
    compare.add_argument("treated", help="Output directory of the promotion run")
    compare.add_argument("--out", help="Report directory, by default the treated run's")
    compare.add_argument("--tolerance", type=float)
    compare.add_argument("-v", "--verbose", action="count", default=0)

    validate = subparsers.add_parser("validate", help="Check a scenario file")
    validate.add_argument("--scenario", required=True)
    validate.add_argument("-v", "--verbose", action="count", default=0)

    replay = subparsers.add_parser("replay", help="Fold an event log through the analytics")
    replay.add_argument("--log", required=True, help="Event log file")
    replay.add_argument("--scenario", help="Scenario of the run, for the discount schedule")
    replay.add_argument("--out", help="Report directory, by default the log's")
    replay.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def configure_logging(verbosity: int):
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, str(config.TOWN_SIM_LOG_LEVEL).upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def apply_overrides(
    scenario: Scenario,
    backend: Optional[str] = None,
    mode: Optional[str] = None,
    seed: Optional[int] = None,
    days: Optional[int] = None,
) -> Scenario:
    """
    Apply command line flags over the scenario's `sim` section.

    Raises
    ------
    ScenarioException
        If the number of days is negative.
    """
    update = {}
    if backend is not None:
        update["backend"] = BackendKind(backend)
    if mode is not None:
        update["mode"] = RunMode(mode)
    if seed is not None:
        update["seed"] = seed
    if days is not None:
        if days < 0:
            raise ScenarioException("sim.days", "must not be negative")
        update["days"] = days
    if not update:
        return scenario
    return scenario._replace(sim=scenario.sim.model_copy(update=update))


def _write_outputs(result: SimulationResult, scenario: Scenario, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    result.event_log.write_ndjson(out_dir / EVENTS_FILE)
    with (out_dir / MEMORIES_FILE).open("w", encoding="utf-8", newline="\n") as f:
        for line in result.memory_lines():
            f.write(line + "\n")
    with (out_dir / FINAL_STATE_FILE).open("w", encoding="utf-8", newline="\n") as f:
        document = {"completed": result.completed, "agents": result.final_states()}
        f.write(json.dumps(document, sort_keys=True, indent=2) + "\n")
    write_reports(result.event_log, out_dir, scenario)


def _make_backend(scenario: Scenario, out_dir: Path):
    sim = scenario.sim
    if sim.backend == BackendKind.ORACLE:
        return ScriptedOracle(sim.seed, sim.oracle)

    backend = RemoteLLMBackend.from_config(
        sim.remote, TranscriptWriter(out_dir / TRANSCRIPT_FILE)
    )
    if not backend.health_check():
        raise BackendUnavailableException(f"{backend.endpoint} does not answer")
    return backend


def cmd_run(args: argparse.Namespace) -> int:
    """
    Run a scenario and write the event log, memories, final state and reports to
    the output directory.
    """
    try:
        scenario = apply_overrides(
            load_scenario(args.scenario), args.backend, args.mode, args.seed, args.days
        )
    except ScenarioException as e:
        logger.error("Invalid scenario: %s", e)
        print(f"Invalid scenario: {e}", file=sys.stderr)
        return EXIT_SCENARIO

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        backend = _make_backend(scenario, out_dir)
    except (BackendConfigurationException, BackendUnavailableException) as e:
        print(f"Backend failure: {e}", file=sys.stderr)
        return EXIT_BACKEND

    registry = None
    run_id = None
    database_url = args.database_url or config.SIMULATION_DATABASE_URL
    if database_url:
        registry = RunRegistry(database_url)
        run_id = registry.start_run(
            name=scenario.town_map.name,
            scenario_path=str(args.scenario),
            seed=scenario.sim.seed,
            mode=scenario.sim.mode.value,
            backend=scenario.sim.backend.value,
            start_timestamp=time.time(),
        )

    status = "completed"
    exit_code = EXIT_OK
    result = None
    try:
        result = Simulator(scenario, backend).run()
    except BackendUnavailableException as e:
        print(f"Backend failure: {e}", file=sys.stderr)
        result = e.partial_result
        status = "aborted"
        exit_code = EXIT_BACKEND
    except InvariantBreachException as e:
        print(f"Invariant breach: {e}", file=sys.stderr)
        for event in e.recent_events:
            logger.error("Recent event: %s", event.to_line())
        status = "failed"
        exit_code = EXIT_USAGE

    if result is not None:
        _write_outputs(result, scenario, out_dir)
    if registry is not None:
        if run_id is not None:
            if result is not None:
                registry.store_events(run_id, result.event_log)
            registry.finish_run(run_id, time.time(), status)
        registry.close_connection()
    return exit_code


def cmd_compare(args: argparse.Namespace) -> int:
    """
    Compare the reports of a promotion run with those of its baseline.
    """
    try:
        baseline, _ = read_reports(args.baseline)
        treated, treated_summary = read_reports(args.treated)
        shop, promo_days = promoted_dining_shop(
            treated_summary.get("discount_schedule", []), len(treated)
        )
        tolerance = args.tolerance
        if tolerance is None:
            tolerance = treated_summary.get(
                "substitution_tolerance", Parameters.SUBSTITUTION_TOLERANCE
            )
        report = substitution_report(
            baseline,
            treated,
            tolerance=tolerance,
            discounted_shop=shop,
            discount_days=promo_days,
        )
    except ReportMismatchException as e:
        print(f"Cannot compare: {e}", file=sys.stderr)
        return EXIT_USAGE

    paths = write_comparison(report, args.out or args.treated)
    logger.info("Substitution report written to %s", paths)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    """
    Load a scenario and report whether it is valid.
    """
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioException as e:
        print(f"Invalid scenario: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    print(
        f"{scenario.town_map.name}: {len(scenario.town_map.locations)} locations, "
        f"{len(scenario.town_map.shops)} shops, {len(scenario.personas)} agents"
    )
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    """
    Recompute the reports of an existing event log.
    """
    scenario = None
    if args.scenario:
        try:
            scenario = load_scenario(args.scenario)
        except ScenarioException as e:
            print(f"Invalid scenario: {e}", file=sys.stderr)
            return EXIT_SCENARIO
    try:
        log = read_event_log(args.log)
    except (MalformedLogException, OSError) as e:
        print(f"Cannot read log: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        write_reports(log, args.out or Path(args.log).parent, scenario)
    except MalformedLogException as e:
        print(f"Cannot read log: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "replay": cmd_replay,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except BackendRequestException as e:
        print(f"Backend failure: {e}", file=sys.stderr)
        return EXIT_BACKEND
