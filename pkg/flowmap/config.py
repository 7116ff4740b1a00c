from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict

from dotenv import load_dotenv
load_dotenv()


class Settings(BaseSettings):
	# App
	APP_NAME: str = "flowmap"
	APP_VERSION: str = "1.0.0"

	# Workers (0 = physical cores reported by psutil)
	THREADS: int = 0

	# Logging
	LOG_LEVEL: str = "INFO"
	LOG_JSON: bool = True
	SLOW_OPERATION_SECONDS: float = 30.0

	# Reference integration
	REFERENCE_MICRO_STEPS: int = 10

	# Local input parameterization
	TAYLOR_FD_FRACTION: float = 0.1
	LOCAL_TAU_TOLERANCE: float = 1e-12

	# Polynomial model
	POLY_MAX_TERMS: int = 1_000_000
	POLY_RCOND: float = 1e-12

	# Lipschitz estimation of the one-step map
	LIPSCHITZ_SAMPLES: int = 10_000
	LIPSCHITZ_PAIR_DISTANCE: float = 1e-4
	LIPSCHITZ_INFLATION: float = 1.1

	# Monitoring
	EXPOSE_METRICS: bool = False

	model_config = SettingsConfigDict(
		env_prefix="FLOWMAP_",
		env_file=".env",
		env_file_encoding="utf-8",
		case_sensitive=True,
		extra="ignore",
	)


@lru_cache()
def get_settings() -> Settings:
	return Settings()


settings = get_settings()
