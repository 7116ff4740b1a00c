import click

from flowmap.cli.deps import common_options, get_experiment, run_pipeline


@click.command("train")
@common_options
@click.option("--resume", is_flag=True, help="Continue from the network weights in model.json.")
def command(config_path, out_dir, seed, resume):
	"""Train the one-step model on dataset.csv (generated first when missing)."""

	def action():
		svc = get_experiment(config_path, out_dir, seed)
		model = svc.train(resume=resume)
		click.echo(f"model.json: {model.kind} model in {svc.out_dir}")
		return svc.out_dir

	run_pipeline("train", action)
