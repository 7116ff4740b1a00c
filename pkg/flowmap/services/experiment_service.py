"""Pipeline orchestration behind the command line: simulate, generate data,
train, predict, check bounds, and the benchmark runs."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import ConfigError, NumericalError
from flowmap.core.logging import log_event, timed
from flowmap.schemas.analysis import ModelLipschitzReport
from flowmap.schemas.experiment import ExperimentConfig, ScenarioConfig
from flowmap.schemas.model import ModelMeta
from flowmap.services import analysis
from flowmap.services.dataset import (
	TrainingSet,
	assemble_inputs,
	generate_pairs,
	noise_inject,
	sample_inputs,
	substeps_for,
)
from flowmap.services.dynamics import SystemFamily, SystemSpec, Trajectory, heat_grid, heat_profile, integrate
from flowmap.services.flownet import init_params
from flowmap.services.input_param import fit_local
from flowmap.services.poly_model import fit as fit_polynomial
from flowmap.services.presets import (
	POLY_SWEEP_DEGREES,
	bench_config,
	build_system,
	sampling_domains,
	scenario_for,
)
from flowmap.services.rollout import (
	NetworkModel,
	OneStepModel,
	OracleModel,
	PolynomialModel,
	compare,
	predict,
	uniform_grid,
)
from flowmap.services.signals import ExpressionSignal, constant_signal
from flowmap.services.storage_service import StorageService, storage_service
from flowmap.services.trainer import train

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-12


class ExperimentService:
	"""One experiment: a system, a basis, and the artifacts under ``out_dir``"""

	def __init__(
			self,
			config: ExperimentConfig,
			out_dir: Optional[Union[str, Path]] = None,
			storage: Optional[StorageService] = None,
	):
		self.config = config
		self.out_dir = Path(out_dir or config.output_dir)
		self.storage = storage or storage_service
		self.system = build_system(config)
		self.basis = config.basis

	# ----- paths -----

	@property
	def dataset_path(self) -> Path:
		return self.out_dir / "dataset.csv"

	@property
	def model_path(self) -> Path:
		return self.out_dir / "model.json"

	# ----- helpers -----

	def bound_system(self, extras: Optional[Dict[str, float]] = None) -> SystemSpec:
		if isinstance(self.system, SystemFamily):
			return self.system.bind(extras or {})
		return self.system

	def signal_for(self, expressions: List[str]) -> Optional[ExpressionSignal]:
		if self.system.input_arity == 0:
			return None
		if len(expressions) != self.system.input_arity:
			raise ConfigError(
				f"scenario.signal: {self.system.name} takes {self.system.input_arity} input(s), got {len(expressions)}"
			)
		return ExpressionSignal(expressions)

	def reference(self, scenario: ScenarioConfig) -> Trajectory:
		"""RK4 solution of the original system sampled on the prediction grid"""
		grid = uniform_grid(scenario.t_end, scenario.delta)
		system = self.bound_system(scenario.extras)
		micro = substeps_for(system, scenario.delta, self.config.dataset.micro_steps)
		full = integrate(system, scenario.x0, 0.0, scenario.t_end, (len(grid) - 1) * micro, self.signal_for(scenario.signal))
		return Trajectory(times=grid, states=full.states[::micro])

	def _check_domains(self, domains) -> None:
		system = self.system
		extra_names = list(system.extra_names) if isinstance(system, SystemFamily) else []
		if domains.d != system.d or domains.input_arity != system.input_arity:
			raise ConfigError(
				f"domains: shape (d={domains.d}, inputs={domains.input_arity}) does not match "
				f"{system.name} (d={system.d}, inputs={system.input_arity})"
			)
		if system.input_arity and domains.n_b != self.basis.n_b:
			raise ConfigError(f"domains: I_Gamma rows need {self.basis.n_b} intervals for {self.basis.kind.value} degree {self.basis.degree}")
		if domains.extra_names != extra_names:
			raise ConfigError(f"domains: extra_params must be {extra_names}, got {domains.extra_names}")

	# ----- commands -----

	def simulate(self) -> Trajectory:
		traj = self.reference(scenario_for(self.config))
		self.storage.write_trajectory(self.out_dir / "reference.csv", traj)
		return traj

	def gen_data(self) -> TrainingSet:
		cfg = self.config
		domains = sampling_domains(cfg)
		self._check_domains(domains)
		inputs = sample_inputs(domains, cfg.dataset.size, cfg.seed)
		dataset = generate_pairs(self.system, inputs, self.basis, cfg.dataset.micro_steps, cfg.dataset.include_delta)
		dataset = noise_inject(dataset, cfg.dataset.noise_std, cfg.seed)
		self.storage.write_dataset(self.dataset_path, dataset)
		log_event(logger, "dataset generated", samples=len(dataset), dropped=dataset.meta.dropped, path=str(self.dataset_path))
		return dataset

	def load_dataset(self) -> TrainingSet:
		if self.dataset_path.exists():
			return self.storage.read_dataset(self.dataset_path)
		return self.gen_data()

	def model_meta(self, dataset: TrainingSet) -> ModelMeta:
		return ModelMeta(
			system=self.system.name,
			layout=dataset.layout,
			basis=self.basis,
			micro_steps=dataset.meta.micro_steps,
			coverage=dataset.coverage,
			dataset_size=len(dataset),
			seed=self.config.seed,
		)

	def fit_polynomial(self, dataset: TrainingSet, degree: int) -> PolynomialModel:
		model = PolynomialModel(fit_polynomial(dataset, degree), self.model_meta(dataset))
		return model

	def train(self, resume: bool = False) -> OneStepModel:
		cfg = self.config
		dataset = self.load_dataset()
		meta = self.model_meta(dataset)
		if cfg.model.kind == "polynomial":
			model = self.fit_polynomial(dataset, cfg.model.degree)
			self.storage.write_polynomial(self.model_path, model.model, meta)
			return model

		if resume:
			previous = self.storage.read_model(self.model_path)
			if not isinstance(previous, NetworkModel):
				raise ConfigError(f"{self.model_path}: cannot resume network training from a {previous.kind} checkpoint")
			params = previous.params
			meta = previous.meta
		else:
			sizes = [dataset.layout.m, *cfg.model.hidden, dataset.layout.d]
			params = init_params(sizes, cfg.seed, cfg.model.init)
		report = train(params, dataset, cfg.train)
		self.storage.write_network(self.model_path, report.final_params, meta)
		self.storage.write_loss_history(self.out_dir / "loss_history.csv", report)
		return NetworkModel(report.final_params, meta)

	def predict(self, model: Optional[OneStepModel] = None, tag: str = "") -> Dict[str, Any]:
		model = model or self.storage.read_model(self.model_path)
		scenario = scenario_for(self.config)
		grid = uniform_grid(scenario.t_end, scenario.delta)
		run = predict(model, scenario.x0, self.signal_for(scenario.signal), grid, scenario.extras)
		ref = self.reference(scenario)
		n = len(run.predicted)
		comparison = compare(run.predicted, Trajectory(times=ref.times[:n], states=ref.states[:n]))

		suffix = f"_{tag}" if tag else ""
		self.storage.write_trajectory(self.out_dir / f"prediction{suffix}.csv", run.predicted)
		self.storage.write_trajectory(self.out_dir / "reference.csv", ref)
		if isinstance(self.system, SystemFamily) and self.system.name.startswith("heat"):
			self._write_heat_profiles(run.predicted, ref, suffix)

		terminal_scale = max(float(np.max(np.abs(ref.states[n - 1]))), RELATIVE_FLOOR)
		payload = {
			"model": model.kind,
			"system": self.system.name,
			"steps": len(grid) - 1,
			"truncated": run.truncated,
			"failure_index": run.failure_index,
			"out_of_domain_steps": len(run.out_of_domain),
			"rel_terminal_error": comparison.terminal_error / terminal_scale,
			**comparison.to_dict(),
		}
		self.storage.write_json(self.out_dir / f"metrics{suffix}.json", payload)
		log_event(logger, "prediction finished", **{k: payload[k] for k in ("model", "linf", "rel_linf", "truncated")})
		return payload

	def _write_heat_profiles(self, pred: Trajectory, ref: Trajectory, suffix: str) -> None:
		grid = heat_grid(pred.d + 2)
		pred_full, ref_full = heat_profile(pred.states), heat_profile(ref.states[:len(pred)])
		self.storage.write_series(
			self.out_dir / f"profile_x05{suffix}.csv",
			{
				"t": pred.times,
				"predicted": [float(np.interp(0.5, grid, row)) for row in pred_full],
				"reference": [float(np.interp(0.5, grid, row)) for row in ref_full],
			},
		)
		self.storage.write_profiles(
			self.out_dir / f"profile_final{suffix}.csv",
			grid,
			{"predicted": pred_full[-1], "reference": ref_full[-1]},
		)

	def bounds(self) -> Dict[str, Any]:
		cfg = self.config.bounds
		report: Dict[str, Any] = {"table": [analysis.bound_row(row).model_dump(mode="json") for row in cfg.table]}

		if cfg.gronwall is not None:
			g = cfg.gronwall
			scenario_extras = self.config.scenario.extras if self.config.scenario else {}
			gronwall = analysis.check_gronwall(
				self.bound_system(scenario_extras),
				self.signal_for(g.signal),
				g.basis,
				g.T,
				g.delta,
				g.micro_steps,
				x0=g.x0,
			)
			report["gronwall"] = gronwall.model_dump(mode="json")

		if cfg.rollout is not None:
			r = cfg.rollout
			step_map = self.exact_step_map(r.inputs, r.delta, r.extras)
			rollout = analysis.check_rollout_bound(step_map, r.x0, r.n, r.E, r.L_phi, r.noise, self.config.seed)
			report["rollout"] = rollout.model_dump(mode="json")

		if self.model_path.exists():
			model = self.storage.read_model(self.model_path)
			L_phi = analysis.estimate_lipschitz_model(model, sampling_domains(self.config), seed=self.config.seed)
			report["model_lipschitz"] = ModelLipschitzReport(
				model=model.kind, L_phi=L_phi, samples=settings.LIPSCHITZ_SAMPLES, seed=self.config.seed,
			).model_dump(mode="json")

		self.storage.write_json(self.out_dir / "bounds.json", report)
		failed = [name for name in ("gronwall", "rollout") if name in report and not report[name]["satisfied"]]
		if failed:
			raise NumericalError(f"bound check(s) failed: {', '.join(failed)}", checks=failed)
		return report

	def exact_step_map(self, inputs: List[float], delta: float, extras: Optional[Dict[str, float]] = None):
		"""x -> exact one-step map under constant inputs, vectorized over a leading batch axis"""
		oracle = OracleModel(self.system, self.basis, self.config.dataset.micro_steps)
		layout = oracle.layout
		gamma = fit_local(self.basis, constant_signal(inputs), 0.0, delta).gamma if layout.input_arity else np.zeros(0)
		extra = np.asarray([(extras or {})[n] for n in layout.extra_names], dtype=float)

		def step_map(x: np.ndarray) -> np.ndarray:
			x = np.atleast_2d(x)
			B = len(x)
			X = assemble_inputs(layout, x, np.tile(gamma, (B, 1)), np.tile(extra, (B, 1)), delta)
			return oracle.step(X)

		return step_map


# =====================================
# Benchmarks
# =====================================

def _summary_row(example: str, svc: ExperimentService, metrics: Dict[str, Any], **extra: Any) -> Dict[str, Any]:
	return {
		"example": example,
		"system": svc.system.name,
		"model": metrics["model"],
		"dataset_size": svc.config.dataset.size,
		"linf": metrics["linf"],
		"rel_linf": metrics["rel_linf"],
		"terminal_error": metrics["terminal_error"],
		"rel_terminal_error": metrics["rel_terminal_error"],
		"rel_l2_max": metrics["rel_l2_max"],
		**extra,
	}


def run_bench(
		example: str,
		out_dir: Optional[Union[str, Path]] = None,
		seed: Optional[int] = None,
		config: Optional[ExperimentConfig] = None,
) -> Dict[str, Any]:
	cfg = config or bench_config(example)
	if seed is not None:
		cfg = cfg.model_copy(update={"seed": seed})
	svc = ExperimentService(cfg, out_dir)
	rows: List[Dict[str, Any]] = []

	with timed(logger, "bench", example=example):
		dataset = svc.gen_data()
		if example == "ex1_poly":
			for degree in POLY_SWEEP_DEGREES:
				model = svc.fit_polynomial(dataset, degree)
				metrics = svc.predict(model, tag=f"p{degree}")
				rows.append(_summary_row(example, svc, metrics, degree=degree, fit_residual=model.model.residual))
			svc.storage.write_series(
				svc.out_dir / "error_vs_degree.csv",
				{
					"degree": [r["degree"] for r in rows],
					"rel_terminal_error": [r["rel_terminal_error"] for r in rows],
					"fit_residual": [r["fit_residual"] for r in rows],
				},
			)
		else:
			model = svc.train()
			metrics = svc.predict(model)
			row = _summary_row(example, svc, metrics)
			if isinstance(model, NetworkModel):
				history = svc.storage.read_frame(svc.out_dir / "loss_history.csv")
				row["final_train_mse"] = float(history["train_mse"].iloc[-1]) if len(history) else None
			rows.append(row)
			if cfg.bounds.gronwall is not None or cfg.bounds.rollout is not None or cfg.bounds.table:
				svc.bounds()

	summary = {"example": example, "version": settings.APP_VERSION, "seed": cfg.seed, "rows": rows}
	svc.storage.write_json(svc.out_dir / "summary.json", summary)
	svc.storage.write_series(svc.out_dir / "summary.csv", {k: [r.get(k) for r in rows] for k in rows[0]})
	return summary
