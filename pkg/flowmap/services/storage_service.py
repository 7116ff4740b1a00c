"""Artifact persistence: datasets, checkpoints, trajectories and reports.

Floats are written with 17 significant digits (CSV) or shortest repr (JSON) so
every artifact reads back bit-for-bit.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from flowmap.config import settings
from flowmap.core.exceptions import ConfigError
from flowmap.schemas.dataset import DatasetSidecar
from flowmap.schemas.model import ModelMeta, NetworkHeader, PolynomialHeader
from flowmap.services.dataset import TrainingSet
from flowmap.services.dynamics import Trajectory
from flowmap.services.flownet import NetParams
from flowmap.services.poly_model import PolyModel
from flowmap.services.rollout import NetworkModel, OneStepModel, PolynomialModel
from flowmap.services.trainer import TrainReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def dataset_columns(sidecar_layout) -> List[str]:
	lay = sidecar_layout
	return (
		[f"x_{i}" for i in range(lay.d)]
		+ [f"g_{i}" for i in range(lay.n_gamma)]
		+ [f"p_{i}" for i in range(lay.n_extra)]
		+ ["delta"]
		+ [f"y_{i}" for i in range(lay.d)]
	)


class StorageService:
	"""Service pour lire et écrire les artefacts d'une expérience"""

	def __init__(self, version: Optional[str] = None):
		self.version = version or settings.APP_VERSION

	# ----- generic -----

	@staticmethod
	def _prepare(path: PathLike) -> Path:
		path = Path(path)
		path.parent.mkdir(parents=True, exist_ok=True)
		return path

	def write_json(self, path: PathLike, payload: Union[BaseModel, Dict[str, Any]]) -> Path:
		path = self._prepare(path)
		if isinstance(payload, BaseModel):
			payload = payload.model_dump(mode="json")
		path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")
		return path

	@staticmethod
	def read_json(path: PathLike) -> Dict[str, Any]:
		try:
			return json.loads(Path(path).read_text())
		except FileNotFoundError:
			raise ConfigError(f"file not found: {path}") from None
		except json.JSONDecodeError as e:
			raise ConfigError(f"invalid JSON in {path}: {e}") from None

	def write_frame(self, path: PathLike, frame: pd.DataFrame) -> Path:
		path = self._prepare(path)
		frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
		return path

	@staticmethod
	def read_frame(path: PathLike) -> pd.DataFrame:
		try:
			return pd.read_csv(path, float_precision="round_trip")
		except FileNotFoundError:
			raise ConfigError(f"file not found: {path}") from None

	# ----- trajectories -----

	def write_trajectory(self, path: PathLike, traj: Trajectory, prefix: str = "x") -> Path:
		frame = pd.DataFrame(traj.states, columns=[f"{prefix}_{i}" for i in range(traj.d)])
		frame.insert(0, "t", traj.times)
		return self.write_frame(path, frame)

	def read_trajectory(self, path: PathLike) -> Trajectory:
		frame = self.read_frame(path)
		return Trajectory(times=frame["t"].to_numpy(), states=frame.drop(columns="t").to_numpy())

	def write_profiles(self, path: PathLike, grid: np.ndarray, columns: Dict[str, np.ndarray]) -> Path:
		"""Full-grid heat profiles, one column per series"""
		frame = pd.DataFrame({"x": grid, **columns})
		return self.write_frame(path, frame)

	def write_series(self, path: PathLike, columns: Dict[str, Sequence[float]]) -> Path:
		return self.write_frame(path, pd.DataFrame(columns))

	# ----- datasets -----

	def write_dataset(self, path: PathLike, dataset: TrainingSet) -> Path:
		"""dataset.csv plus the dataset.json sidecar next to it"""
		path = Path(path)
		values = np.concatenate(
			[dataset.x_in, dataset.gamma, dataset.extra, dataset.delta[:, None], dataset.x_out], axis=1
		)
		self.write_frame(path, pd.DataFrame(values, columns=dataset_columns(dataset.layout)))
		sidecar = DatasetSidecar(
			version=self.version,
			layout=dataset.layout,
			meta=dataset.meta,
			seed=dataset.seed,
			domains=dataset.domains,
			coverage=dataset.coverage,
			n_samples=len(dataset),
		)
		self.write_json(path.with_suffix(".json"), sidecar)
		logger.info(f"Dataset written: {path} ({len(dataset)} samples)")
		return path

	def read_dataset(self, path: PathLike) -> TrainingSet:
		path = Path(path)
		try:
			sidecar = DatasetSidecar(**self.read_json(path.with_suffix(".json")))
		except ValidationError as e:
			raise ConfigError(f"invalid dataset sidecar for {path}: {e}") from None
		frame = self.read_frame(path)
		lay = sidecar.layout
		expected = dataset_columns(lay)
		if list(frame.columns) != expected:
			raise ConfigError(f"{path}: columns {list(frame.columns)} do not match the sidecar layout {expected}")
		values = frame.to_numpy(dtype=float)
		cut = np.cumsum([lay.d, lay.n_gamma, lay.n_extra, 1])
		return TrainingSet(
			layout=lay,
			x_in=values[:, :cut[0]],
			gamma=values[:, cut[0]:cut[1]],
			extra=values[:, cut[1]:cut[2]],
			delta=values[:, cut[2]],
			x_out=values[:, cut[3]:],
			meta=sidecar.meta,
			seed=sidecar.seed,
			domains=sidecar.domains,
		)

	# ----- checkpoints -----

	def write_network(self, path: PathLike, params: NetParams, meta: ModelMeta) -> Path:
		header = NetworkHeader(
			version=self.version,
			layer_sizes=list(params.layer_sizes),
			meta=meta,
			normalization=params.normalizer,
		)
		return self.write_json(path, {"header": header.model_dump(mode="json"), **params.to_dict()})

	def write_polynomial(self, path: PathLike, model: PolyModel, meta: ModelMeta) -> Path:
		header = PolynomialHeader(
			version=self.version,
			dim=model.dim,
			degree=model.degree,
			n_terms=model.n_terms,
			domain_box=model.domain_box,
			meta=meta,
			rcond=model.rcond,
			effective_rank=model.effective_rank,
			residual=model.residual,
		)
		return self.write_json(path, {"header": header.model_dump(mode="json"), **model.to_dict()})

	def read_model(self, path: PathLike) -> OneStepModel:
		payload = self.read_json(path)
		header = payload.get("header", {})
		try:
			if header.get("format") == "flowmap-network":
				net = NetworkHeader(**header)
				params = NetParams.from_dict(payload, net.layer_sizes, net.normalization)
				return NetworkModel(params, net.meta)
			if header.get("format") == "flowmap-polynomial":
				poly = PolynomialHeader(**header)
				model = PolyModel.from_dict(
					payload,
					dim=poly.dim,
					d=poly.meta.layout.d,
					degree=poly.degree,
					domain_box=poly.domain_box,
					rcond=poly.rcond,
					effective_rank=poly.effective_rank,
					residual=poly.residual,
				)
				return PolynomialModel(model, poly.meta)
		except (ValidationError, KeyError) as e:
			raise ConfigError(f"invalid checkpoint {path}: {e}") from None
		raise ConfigError(f"{path}: unknown checkpoint format {header.get('format')!r}")

	def write_loss_history(self, path: PathLike, report: TrainReport) -> Path:
		return self.write_series(
			path,
			{
				"epoch": np.arange(1, len(report.loss_history) + 1),
				"train_mse": report.loss_history,
				"val_mse": report.val_history,
			},
		)


storage_service = StorageService()
