import logging
from pathlib import Path

import click

from fracneumann.cli.common.utils import config_argument, input_errors, load_setup, output_dir_option
from fracneumann.core.pipeline import run_assemble

logger = logging.getLogger(__name__)


@click.command("assemble", short_help="Build the mesh and quadrature table and report diagnostics.")
@config_argument
@output_dir_option
def assemble_command(*, config_path: Path, output_dir: Path | None) -> None:
    """Build the truncated mesh and the pair quadrature table described by CONFIG.

    Writes assemble.json, plus mesh.csv and pairs.csv when output.write_csv is set."""
    with input_errors():
        setup = load_setup(config_path, output_dir)
        report = run_assemble(setup)
    logger.info(f"Relative kernel tail beyond the box: {report['quadrature']['tail_relative']:.3e}")
