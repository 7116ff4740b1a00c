import logging

import click

from flowmap.cli import bench, bounds, gen_data, predict, simulate, train
from flowmap.config import settings

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_NAME)
def cli():
	"""Learn flow maps of non-autonomous systems and predict with them."""


# Include commands
cli.add_command(simulate.command)
cli.add_command(gen_data.command)
cli.add_command(train.command)
cli.add_command(predict.command)
cli.add_command(bounds.command)
cli.add_command(bench.command)


def main() -> None:
	cli()


if __name__ == "__main__":
	main()
