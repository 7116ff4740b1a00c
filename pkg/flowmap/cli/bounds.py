import click

from flowmap.cli.deps import common_options, get_experiment, run_pipeline


@click.command("bounds")
@common_options
def command(config_path, out_dir, seed):
	"""Evaluate the bound table and run the configured empirical checks."""

	def action():
		svc = get_experiment(config_path, out_dir, seed)
		report = svc.bounds()
		for name in ("gronwall", "rollout"):
			if name in report:
				click.echo(f"{name}: satisfied (max ratio {report[name]['max_ratio']:.4g})")
		click.echo(f"bounds.json: {len(report['table'])} table row(s) in {svc.out_dir}")
		return svc.out_dir

	run_pipeline("bounds", action)
