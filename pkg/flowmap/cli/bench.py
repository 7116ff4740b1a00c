import click

from flowmap.cli.deps import out_option, run_pipeline, seed_option
from flowmap.services.experiment_service import run_bench
from flowmap.services.presets import BENCH, bench_config


@click.command("bench")
@click.argument("example", type=click.Choice(sorted(BENCH)))
@out_option
@seed_option
def command(example, out_dir, seed):
	"""Run a benchmark end to end and write summary.json / summary.csv."""

	def action():
		target = out_dir or bench_config(example).output_dir
		summary = run_bench(example, target, seed)
		for row in summary["rows"]:
			label = f"{example} p={row['degree']}" if "degree" in row else example
			click.echo(f"{label}: linf={row['linf']:.6g} rel_terminal={row['rel_terminal_error']:.6g}")
		return target

	run_pipeline("bench", action)
