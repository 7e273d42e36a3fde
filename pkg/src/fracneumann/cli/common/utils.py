# Click related helpers shared by the commands


import contextlib
import logging
from collections.abc import Iterator
from pathlib import Path

import click

from fracneumann.core.certify import Certificate
from fracneumann.core.constants import ExitCode
from fracneumann.core.pipeline import Setup, prepare
from fracneumann.core.run_config import OutputSection, load_run_config

logger = logging.getLogger(__name__)

config_argument = click.argument(
    "config_path",
    metavar="CONFIG",
    type=click.Path(exists=True, dir_okay=False, resolve_path=True, path_type=Path),
)

output_dir_option = click.option(
    "--output-dir",
    "-o",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory for the reports, overriding output.directory from the config.",
)


class InputError(click.ClickException):
    exit_code = ExitCode.INPUT_ERROR


@contextlib.contextmanager
def input_errors() -> Iterator[None]:
    """Turn the domain errors raised on bad input into an InputError."""
    try:
        yield
    except ValueError as ex:
        logger.debug("Input error", exc_info=True)
        raise InputError(str(ex)) from ex


def load_setup(config_path: Path, output_dir: Path | None) -> Setup:
    config = load_run_config(config_path)
    if output_dir is not None:
        output = OutputSection(directory=str(output_dir), write_csv=config.output.write_csv)
        config = config.model_copy(update={"output": output})
    return prepare(config)


def exit_on_failed_certificate(certificate: Certificate) -> None:
    interval = certificate.interval
    if interval is not None:
        logger.info(f"Certified lambda interval: ({interval[0]:.10g}, {interval[1]:.10g})")
        return
    failed = [result.name for result in certificate.hypotheses if not result.passed]
    if failed:
        logger.error(f"Hypotheses failed: {', '.join(failed)}")
    else:
        logger.error("Every hypothesis passed but the interval endpoints are not ordered")
    raise click.exceptions.Exit(code=ExitCode.HYPOTHESIS_FAILURE)
