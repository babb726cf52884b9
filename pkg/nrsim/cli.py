"""
Command-line surface: run scenarios, validate scenario files and list the
shipped scenario library.

    nrsim run mc_surge --seed 7 --out results/mc --format csv,json
    nrsim run slice_contention --sweep populations.A.count=0,20
    nrsim validate my_scenario.yaml
    nrsim scenarios
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import yaml
from tqdm import tqdm

from .scenario import ScenarioConfig, ScenarioError, apply_override, list_scenarios, load_scenario
from .simulation import run

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.yaml"
OUT_DIR_ENV = "NRSIM_OUT_DIR"
FORMATS = ("csv", "json", "parquet")
DEFAULT_FORMATS = ("csv", "json")

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        stream=sys.stdout,
        force=True,
    )


def load_project_config(path: Path = Path(CONFIG_FILE)) -> Dict:
    """Reads the project defaults from config.yaml; missing file means no defaults."""
    try:
        with open(path, "r") as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError:
        return {}


def default_out_dir(project_config: Dict) -> Path:
    if os.environ.get(OUT_DIR_ENV):
        return Path(os.environ[OUT_DIR_ENV])
    return Path((project_config.get("output") or {}).get("out_dir", "results"))


def parse_formats(value: str) -> List[str]:
    formats = [f.strip() for f in value.split(",") if f.strip()]
    unknown = [f for f in formats if f not in FORMATS]
    if unknown or not formats:
        raise argparse.ArgumentTypeError(f"unknown format(s) {unknown}, choose from {', '.join(FORMATS)}")
    return formats


def parse_sweep(value: str) -> Tuple[str, List[str]]:
    key, sep, values = value.partition("=")
    if not sep or not key or not values:
        raise argparse.ArgumentTypeError(f"expected key=v1,v2,..., got '{value}'")
    return key, values.split(",")


def run_and_report(
    config: ScenarioConfig,
    seed: Optional[int],
    out_dir: Path,
    formats: Sequence[str] = DEFAULT_FORMATS,
) -> Dict[str, Path]:
    """
    Runs a scenario and writes its report.

    Always writes ``summary.txt`` and ``eventlog.hash``; ``metrics.csv``,
    ``metrics.json`` and ``metrics.parquet`` according to ``formats``.

    :param config: The validated scenario.
    :type config: ScenarioConfig
    :param seed: Seed of the run; None uses the scenario's seed.
    :type seed: Optional[int]
    :param out_dir: Directory the files are written to; created if missing.
    :type out_dir: Path
    :param formats: Metrics table formats among ``csv``, ``json``, ``parquet``.
    :return: Paths of the written files by name.
    :rtype: Dict[str, Path]
    :raises OSError: If ``out_dir`` cannot be created or written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run(config, seed=seed, keep_log=False)

    written = {}
    writers = {
        "csv": result.report.to_csv,
        "json": result.report.to_json,
        "parquet": result.report.to_parquet,
    }
    for fmt in formats:
        path = out_dir / f"metrics.{fmt}"
        writers[fmt](path)
        written[path.name] = path

    summary = out_dir / "summary.txt"
    seed_used = config.seed if seed is None else seed
    header = f"scenario: {config.name}\nseed: {seed_used}\nevents: {result.events}\n"
    summary.write_text(header + result.report.summary())
    written[summary.name] = summary

    digest = out_dir / "eventlog.hash"
    digest.write_text(result.digest + "\n")
    written[digest.name] = digest

    logger.info(f"Wrote {', '.join(sorted(written))} to {out_dir}")
    return written


def _run_command(args: argparse.Namespace, project_config: Dict) -> int:
    config = load_scenario(args.scenario)
    out_dir = Path(args.out) if args.out else default_out_dir(project_config)
    formats = args.format or (project_config.get("output") or {}).get("formats") or list(DEFAULT_FORMATS)

    if args.sweep is None:
        run_and_report(config, args.seed, out_dir, formats)
        return 0

    key, values = args.sweep
    # validate every variant before running any of them
    variants = [(value, apply_override(config, key, value)) for value in values]
    for value, variant in tqdm(variants, desc=f"sweep {key}", unit="run"):
        logger.info(f"Sweep step {key}={value}")
        run_and_report(variant, args.seed, out_dir / f"{key}={value}", formats)
    return 0


def _validate_command(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    ues = sum(pop.count for pop in config.populations)
    print(f"{args.scenario}: valid ({len(config.cells)} cell(s), {len(config.populations)} population(s), {ues} UEs)")
    return 0


def _scenarios_command() -> int:
    for name in list_scenarios():
        description = load_scenario(name).description.strip().splitlines()
        print(f"{name:<20}{description[0] if description else ''}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrsim", description="5G SA access control simulator")
    parser.add_argument("--log-level", default=None, help="Logging level (default from config.yaml, else INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Run a scenario and write its metrics")
    run_parser.add_argument("scenario", help="Scenario file, or the name of a shipped scenario")
    run_parser.add_argument("--seed", type=int, default=None, help="Seed (default: the scenario's)")
    run_parser.add_argument("--out", default=None, help=f"Output directory (default: ${OUT_DIR_ENV} or config.yaml)")
    run_parser.add_argument("--format", type=parse_formats, default=None, help="Comma-separated: csv,json,parquet")
    run_parser.add_argument("--sweep", type=parse_sweep, default=None, help="key=v1,v2,... one run per value")

    validate_parser = commands.add_parser("validate", help="Validate a scenario file")
    validate_parser.add_argument("scenario", help="Scenario file, or the name of a shipped scenario")

    commands.add_parser("scenarios", help="List the shipped scenarios")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``nrsim`` command; returns the exit status."""
    args = build_parser().parse_args(argv)
    project_config = load_project_config()
    configure_logging(args.log_level or (project_config.get("logging") or {}).get("level", "INFO"))

    try:
        if args.command == "run":
            return _run_command(args, project_config)
        if args.command == "validate":
            return _validate_command(args)
        return _scenarios_command()
    except ScenarioError as e:
        logger.error(str(e))
        return 1
    except OSError as e:
        logger.error(f"Cannot write results: {e}")
        return 1
