import logging
from pathlib import Path

import click

from fracneumann.cli.common.utils import (
    config_argument,
    exit_on_failed_certificate,
    input_errors,
    load_setup,
    output_dir_option,
)
from fracneumann.core.pipeline import run_example31

logger = logging.getLogger(__name__)


@click.command("example31", short_help="Run constants, certify and solve for the plateau nonlinearity.")
@config_argument
@output_dir_option
def example31_command(*, config_path: Path, output_dir: Path | None) -> None:
    """Run the full pipeline for nonlinearity.kind = 'example31': constants.json, certificate.json, then
    solve.json at the geometric mean of the certified interval.

    rho defaults to its admissible lower bound plus nonlinearity.rho_offset."""
    with input_errors():
        outcome = run_example31(load_setup(config_path, output_dir))
    exit_on_failed_certificate(outcome.certified.certificate)
    if outcome.solve is not None and outcome.solve.shortfall:
        logger.warning(f"Only {len(outcome.solve.points)} of {outcome.solve.k_target} critical points were found")
