import click

from flowmap.cli.deps import common_options, get_experiment, run_pipeline


@click.command("predict")
@common_options
def command(config_path, out_dir, seed):
	"""Roll the trained model out over the scenario and compare with the reference."""

	def action():
		svc = get_experiment(config_path, out_dir, seed)
		result = svc.predict()
		click.echo(f"linf={result['linf']:.6g} rel_linf={result['rel_linf']:.6g} truncated={result['truncated']}")
		return svc.out_dir

	run_pipeline("predict", action)
