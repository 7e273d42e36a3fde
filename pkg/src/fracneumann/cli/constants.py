import logging
from pathlib import Path

import click

from fracneumann.cli.common.utils import config_argument, input_errors, load_setup, output_dir_option
from fracneumann.core.pipeline import run_constants

logger = logging.getLogger(__name__)


@click.command("constants", short_help="Estimate the embedding constants c and c_q.")
@config_argument
@output_dir_option
def constants_command(*, config_path: Path, output_dir: Path | None) -> None:
    """Estimate the discrete embedding constants for CONFIG and write constants.json.

    The values are lower estimates on the given mesh; they grow towards the continuum constants under refinement."""
    with input_errors():
        report = run_constants(load_setup(config_path, output_dir))
    if not report["constants"]["converged"]:
        logger.warning("Not every constant estimate converged, see constants.json")
