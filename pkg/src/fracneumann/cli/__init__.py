import click

from fracneumann.cli.assemble import assemble_command
from fracneumann.cli.certify import certify_command
from fracneumann.cli.constants import constants_command
from fracneumann.cli.example31 import example31_command
from fracneumann.cli.solve import solve_command
from fracneumann.core.conf import PACKAGE_NAME
from fracneumann.core.log_handlers import color_option, verbose_option


@click.group(
    context_settings={
        "help_option_names": ["-h", "--help"],
        "max_content_width": 120,
    },
)
@click.version_option(package_name=PACKAGE_NAME)
@verbose_option
@color_option
def fracneumann() -> None:
    """
    Nonlocal Neumann problems driven by the fractional p-Laplacian.

    Every command reads one TOML run config and writes JSON reports.
    """


fracneumann.add_command(assemble_command)
fracneumann.add_command(constants_command)
fracneumann.add_command(certify_command)
fracneumann.add_command(solve_command)
fracneumann.add_command(example31_command)
