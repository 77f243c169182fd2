"""
Per-run configuration: a flat KEY=VALUE file read with python-decouple on top of
the defaults declared in ``settings.ENVELOPES_DEFAULTS``.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from decouple import Config, RepositoryEmpty, RepositoryEnv, UndefinedValueError
from django.conf import settings

from envolventes.services.backends import BACKENDS
from envolventes.services.chance import ChanceLevels
from envolventes.services.problem import OpfSettings
from envolventes.services.solver import STRATEGIES
from escenarios.services.training import TrainConfig

logger = logging.getLogger(__name__)

SERIES_FILENAME = "series.csv"


class ConfigError(ValueError):
    """Raised when the run configuration cannot be read or is inconsistent."""


@dataclass(frozen=True)
class TariffBlock:
    start_h: float
    end_h: float
    cents_per_kwh: float


@dataclass(frozen=True)
class Tariff:
    """Time-of-use consumption tariff plus flat feed-in tariff, in c/kWh. Informational only."""

    tou: Tuple[TariffBlock, ...]
    fit: float

    def as_dict(self) -> Dict[str, Any]:
        return {
            "tou_c_per_kwh": [
                {"start_h": block.start_h, "end_h": block.end_h, "c_per_kwh": block.cents_per_kwh} for block in self.tou
            ],
            "fit_c_per_kwh": self.fit,
        }


def parse_tariff(tou: str, fit: Union[str, float]) -> Tariff:
    """
    Parses ``"0-7:15.96,7-15:25.96,..."``. Blocks must cover 0-24 h without gaps
    or overlaps, in order.
    """

    blocks = []
    try:
        for chunk in (part.strip() for part in str(tou).split(",") if part.strip()):
            span, price = chunk.split(":")
            start, end = span.split("-")
            blocks.append(TariffBlock(float(start), float(end), float(price)))
        fit_value = float(fit)
    except ValueError as exc:
        raise ConfigError(f"Tarifa mal formada '{tou}': {exc}") from exc

    if not blocks:
        raise ConfigError("TOU_TARIFF no puede estar vacía.")
    cursor = 0.0
    for block in blocks:
        if block.start_h != cursor or block.end_h <= block.start_h:
            raise ConfigError(f"Los tramos de TOU_TARIFF deben cubrir 0-24 h de forma contigua (falla en {block.start_h}).")
        if block.cents_per_kwh < 0:
            raise ConfigError("Los precios de la tarifa no pueden ser negativos.")
        cursor = block.end_h
    if cursor != 24.0:
        raise ConfigError(f"Los tramos de TOU_TARIFF terminan en {cursor} h; deben llegar a 24 h.")
    if fit_value < 0:
        raise ConfigError("FIT_TARIFF no puede ser negativa.")
    return Tariff(tou=tuple(blocks), fit=fit_value)


def parse_horizon(value: str) -> Union[int, Tuple[date, ...]]:
    """Either a count of T3 days or a comma list of ISO dates."""
    text = str(value).strip()
    if not text:
        raise ConfigError("HORIZON_DAYS no puede estar vacío.")
    if "-" not in text:
        try:
            count = int(text)
        except ValueError as exc:
            raise ConfigError(f"HORIZON_DAYS inválido: '{text}'.") from exc
        if count < 1:
            raise ConfigError("HORIZON_DAYS debe ser al menos 1.")
        return count
    try:
        days = tuple(date.fromisoformat(part.strip()) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"Fecha inválida en HORIZON_DAYS: {exc}") from exc
    if len(set(days)) != len(days):
        raise ConfigError("HORIZON_DAYS contiene fechas repetidas.")
    return days


@dataclass(frozen=True)
class RunConfig:
    network_path: Path
    series_path: Path
    output_dir: Path
    seed: int
    horizon: Union[int, Tuple[date, ...]]
    scenarios: int
    train: TrainConfig
    levels: ChanceLevels
    opf: OpfSettings
    ridge_alpha: float
    mc_draws: int
    binary_strategy: str
    solver: str
    tariff: Tariff
    source: Optional[Path] = None

    @classmethod
    def from_file(
        cls,
        path: Optional[Union[str, Path]] = None,
        seed: Optional[int] = None,
        out: Optional[Union[str, Path]] = None,
    ) -> "RunConfig":
        """
        Reads ``path`` (optional) and falls back to the project defaults for every
        missing key. ``seed`` and ``out`` come from the command line and win over
        the file.
        """

        if path is None:
            reader = Config(RepositoryEmpty())
            source = None
        else:
            source = Path(path)
            if not source.is_file():
                raise ConfigError(f"No existe el archivo de configuración {source}.")
            try:
                reader = Config(RepositoryEnv(str(source)))
            except (OSError, UnicodeDecodeError) as exc:
                raise ConfigError(f"No se pudo leer {source}: {exc}") from exc

        defaults = settings.ENVELOPES_DEFAULTS

        def value(key: str, cast=str, default=None):
            fallback = defaults.get(key) if default is None else default
            try:
                return reader(key, default=fallback, cast=cast)
            except (ValueError, TypeError, UndefinedValueError) as exc:
                raise ConfigError(f"Valor inválido para {key}: {exc}") from exc

        output_dir = Path(out) if out is not None else Path(value("OUTPUT_DIR", default=settings.ENVELOPES_OUTPUT_DIR))
        run_seed = int(seed) if seed is not None else value("SEED", cast=int, default=settings.ENVELOPES_SEED)
        if run_seed < 0:
            raise ConfigError("La semilla debe ser no negativa.")

        try:
            train = TrainConfig(
                noise_dim=value("NOISE_DIM", cast=int),
                iterations=value("ITERATIONS", cast=int),
                critic_steps_per_gen=value("CRITIC_STEPS", cast=int),
                batch_size=value("BATCH_SIZE", cast=int),
                gp_weight=value("GP_WEIGHT", cast=float),
                mode=value("GAN_MODE"),
                clip_bound=value("CLIP_BOUND", cast=float),
                learning_rate=value("LEARNING_RATE", cast=float),
                log_every=value("LOG_EVERY", cast=int),
                seed=run_seed,
            )
            levels = ChanceLevels(
                xi_v=value("XI_V", cast=float),
                xi_l=value("XI_L", cast=float),
                xi_p=value("XI_P", cast=float),
            )
            opf = OpfSettings(
                export_cap_kw=value("EXPORT_CAP_KW", cast=float),
                delta_t_h=value("DELTA_T_H", cast=float),
                loss_weight=value("LOSS_WEIGHT", cast=float),
                fill_weight=value("FILL_WEIGHT", cast=float),
                terminal_soc=value("TERMINAL_SOC", cast=float),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

        config = cls(
            network_path=Path(value("NETWORK_PATH", default=settings.ENVELOPES_NETWORK_PATH)),
            series_path=Path(value("SERIES_PATH", default=str(output_dir / SERIES_FILENAME))),
            output_dir=output_dir,
            seed=run_seed,
            horizon=parse_horizon(value("HORIZON_DAYS")),
            scenarios=value("SCENARIOS", cast=int),
            train=train,
            levels=levels,
            opf=opf,
            ridge_alpha=value("RIDGE_ALPHA", cast=float),
            mc_draws=value("MC_DRAWS", cast=int),
            binary_strategy=value("BINARY_STRATEGY"),
            solver=value("SOLVER").upper(),
            tariff=parse_tariff(value("TOU_TARIFF"), value("FIT_TARIFF")),
            source=source,
        )
        config.validate()
        logger.info("Configuración %s cargada (hash %s)", source or "por defecto", config.config_hash[:12])
        return config

    def validate(self) -> None:
        if not self.network_path.is_file():
            raise ConfigError(f"No existe la red {self.network_path}.")
        if self.scenarios < 2:
            raise ConfigError("SCENARIOS debe ser al menos 2.")
        if self.mc_draws < 1000:
            raise ConfigError("MC_DRAWS debe ser al menos 1000.")
        if self.ridge_alpha < 0:
            raise ConfigError("RIDGE_ALPHA no puede ser negativo.")
        if self.binary_strategy not in STRATEGIES:
            raise ConfigError(f"BINARY_STRATEGY debe ser una de {', '.join(STRATEGIES)}.")
        if self.solver not in BACKENDS:
            raise ConfigError(f"SOLVER debe ser uno de {', '.join(BACKENDS)}.")

    def require_series(self) -> Path:
        if not self.series_path.is_file():
            raise ConfigError(f"No existe la serie {self.series_path}; ejecute 'synthgen' o defina SERIES_PATH.")
        return self.series_path

    def as_dict(self) -> Dict[str, Any]:
        """Canonical key/value dump; paths other than the network are left out so runs can move."""
        horizon = self.horizon if isinstance(self.horizon, int) else [day.isoformat() for day in self.horizon]
        return {
            "NETWORK": self.network_path.name,
            "SEED": self.seed,
            "HORIZON_DAYS": horizon,
            "SCENARIOS": self.scenarios,
            "XI_V": self.levels.xi_v,
            "XI_L": self.levels.xi_l,
            "XI_P": self.levels.xi_p,
            "TRAIN": self.train.as_dict(),
            "RIDGE_ALPHA": self.ridge_alpha,
            "EXPORT_CAP_KW": self.opf.export_cap_kw,
            "DELTA_T_H": self.opf.delta_t_h,
            "LOSS_WEIGHT": self.opf.loss_weight,
            "FILL_WEIGHT": self.opf.fill_weight,
            "TERMINAL_SOC": self.opf.terminal_soc,
            "MC_DRAWS": self.mc_draws,
            "BINARY_STRATEGY": self.binary_strategy,
            "SOLVER": self.solver,
            "TARIFF": self.tariff.as_dict(),
        }

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


__all__ = ["ConfigError", "RunConfig", "Tariff", "TariffBlock", "parse_horizon", "parse_tariff"]
