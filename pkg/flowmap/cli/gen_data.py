import click

from flowmap.cli.deps import common_options, get_experiment, run_pipeline


@click.command("gen-data")
@common_options
def command(config_path, out_dir, seed):
	"""Sample (x, Γ, δ) and write dataset.csv with its dataset.json sidecar."""

	def action():
		svc = get_experiment(config_path, out_dir, seed)
		dataset = svc.gen_data()
		click.echo(f"dataset.csv: {len(dataset)} samples ({dataset.meta.dropped} dropped) in {svc.out_dir}")
		return svc.out_dir

	run_pipeline("gen-data", action)
