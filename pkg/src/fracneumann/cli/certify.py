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
from fracneumann.core.pipeline import run_certify

logger = logging.getLogger(__name__)


@click.command("certify", short_help="Check the hypotheses and derive the admissible lambda interval.")
@config_argument
@output_dir_option
def certify_command(*, config_path: Path, output_dir: Path | None) -> None:
    """Compute the constants the [certificate] section of CONFIG needs, check its hypotheses and write
    certificate.json.

    Exits with code 2 when a hypothesis fails; the certificate is still written with the failing checks flagged."""
    with input_errors():
        _, certified = run_certify(load_setup(config_path, output_dir))
    exit_on_failed_certificate(certified.certificate)
