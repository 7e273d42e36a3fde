import logging
from pathlib import Path

import click

from fracneumann.cli.common.utils import config_argument, input_errors, load_setup, output_dir_option
from fracneumann.core.pipeline import run_solve

logger = logging.getLogger(__name__)


@click.command("solve", short_help="Search for distinct critical points by deflated descent.")
@config_argument
@output_dir_option
def solve_command(*, config_path: Path, output_dir: Path | None) -> None:
    """Run the multistart deflated search configured in CONFIG and write solve.json.

    Without solve.lam the problem is certified first and lambda is the geometric mean of the interval.
    Finding fewer points than solve.k_target is reported in the file, not as an error.
    Wall time is logged but never written to solve.json, so a fixed seed reproduces the file byte for byte."""
    with input_errors():
        report = run_solve(load_setup(config_path, output_dir))
    solve = report["solve"]
    logger.info(f"Found {solve['found']} verified critical point(s) of {solve['k_target']} requested")
