import click

from flowmap.cli.deps import common_options, get_experiment, run_pipeline


@click.command("simulate")
@common_options
def command(config_path, out_dir, seed):
	"""Integrate the true system on the scenario grid and write reference.csv."""

	def action():
		svc = get_experiment(config_path, out_dir, seed)
		traj = svc.simulate()
		click.echo(f"reference.csv: {len(traj)} rows in {svc.out_dir}")
		return svc.out_dir

	run_pipeline("simulate", action)
