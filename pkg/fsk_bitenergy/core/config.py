from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

__all__ = [
    "AppConfig",
    "ExecutionConfig",
    "McDefaults",
    "NumericsConfig",
    "OptimizerConfig",
    "RuntimeLogConfig",
    "config_summary",
    "default_config",
    "load_config",
]


@dataclass(frozen=True)
class NumericsConfig:
    sum_form_max_m: int = 30
    quadrature_epsrel: float = 1e-10
    quadrature_epsabs: float = 1e-15
    quadrature_limit: int = 2000
    expectation_tol: float = 1e-8
    probability_tolerance: float = 1e-12
    sum_precision_digits: int = 40
    marcum_sum_max_m: int = 8


@dataclass(frozen=True)
class OptimizerConfig:
    snr_lo: float = 1e-3
    snr_hi: float = 1e3
    grid_points: int = 200
    width_db: float = 1e-4
    bracket_retries: int = 3
    widen_factor: float = 10.0


@dataclass(frozen=True)
class McDefaults:
    trials_per_input: int = 1_000_000
    seed: int = 42
    block_size: int = 65536
    z_threshold: float = 4.0


@dataclass(frozen=True)
class ExecutionConfig:
    workers: int = 4


@dataclass(frozen=True)
class RuntimeLogConfig:
    enabled: bool = True


@dataclass
class AppConfig:
    workspace_dir: Path = Path("workspace")
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    mc: McDefaults = field(default_factory=McDefaults)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    runtime_log: RuntimeLogConfig = field(default_factory=RuntimeLogConfig)


_ENV_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def default_config() -> AppConfig:
    return AppConfig()


def load_config(path: str | Path, dotenv_path: str | Path | None = ".env") -> AppConfig:
    _load_dotenv_if_exists(dotenv_path)
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"Arquivo de configuracao nao encontrado: {cfg_path}")

    with cfg_path.open("r", encoding="utf-8") as file:
        raw = _resolve_env_in_value(yaml.safe_load(file) or {})

    numerics_raw = raw.get("numerics") or {}
    optimizer_raw = raw.get("optimizer") or {}
    mc_raw = raw.get("mc") or {}
    execution_raw = raw.get("execution") or {}
    log_raw = raw.get("runtime_log") or {}

    defaults = NumericsConfig()
    numerics = NumericsConfig(
        sum_form_max_m=int(numerics_raw.get("sum_form_max_m", defaults.sum_form_max_m)),
        quadrature_epsrel=float(numerics_raw.get("quadrature_epsrel", defaults.quadrature_epsrel)),
        quadrature_epsabs=float(numerics_raw.get("quadrature_epsabs", defaults.quadrature_epsabs)),
        quadrature_limit=int(numerics_raw.get("quadrature_limit", defaults.quadrature_limit)),
        expectation_tol=float(numerics_raw.get("expectation_tol", defaults.expectation_tol)),
        probability_tolerance=float(
            numerics_raw.get("probability_tolerance", defaults.probability_tolerance)
        ),
        sum_precision_digits=int(
            numerics_raw.get("sum_precision_digits", defaults.sum_precision_digits)
        ),
        marcum_sum_max_m=int(numerics_raw.get("marcum_sum_max_m", defaults.marcum_sum_max_m)),
    )

    optimizer_defaults = OptimizerConfig()
    optimizer = OptimizerConfig(
        snr_lo=float(optimizer_raw.get("snr_lo", optimizer_defaults.snr_lo)),
        snr_hi=float(optimizer_raw.get("snr_hi", optimizer_defaults.snr_hi)),
        grid_points=int(optimizer_raw.get("grid_points", optimizer_defaults.grid_points)),
        width_db=float(optimizer_raw.get("width_db", optimizer_defaults.width_db)),
        bracket_retries=int(optimizer_raw.get("bracket_retries", optimizer_defaults.bracket_retries)),
        widen_factor=float(optimizer_raw.get("widen_factor", optimizer_defaults.widen_factor)),
    )

    mc_defaults = McDefaults()
    mc = McDefaults(
        trials_per_input=int(mc_raw.get("trials_per_input", mc_defaults.trials_per_input)),
        seed=int(mc_raw.get("seed", mc_defaults.seed)),
        block_size=int(mc_raw.get("block_size", mc_defaults.block_size)),
        z_threshold=float(mc_raw.get("z_threshold", mc_defaults.z_threshold)),
    )

    execution = ExecutionConfig(workers=int(execution_raw.get("workers", ExecutionConfig().workers)))
    runtime_log = RuntimeLogConfig(enabled=bool(log_raw.get("enabled", True)))

    config = AppConfig(
        workspace_dir=Path(raw.get("workspace_dir", "workspace")),
        numerics=numerics,
        optimizer=optimizer,
        mc=mc,
        execution=execution,
        runtime_log=runtime_log,
    )
    _validate_config(config)
    return config


def _validate_config(config: AppConfig) -> None:
    if config.numerics.sum_form_max_m < 2:
        raise ValueError("numerics.sum_form_max_m deve ser >= 2.")
    if config.numerics.marcum_sum_max_m < 2:
        raise ValueError("numerics.marcum_sum_max_m deve ser >= 2.")
    if not 0 < config.numerics.quadrature_epsrel < 1:
        raise ValueError("numerics.quadrature_epsrel deve estar em (0, 1).")
    if config.optimizer.grid_points < 200:
        raise ValueError("optimizer.grid_points deve ser >= 200.")
    if not 0 < config.optimizer.snr_lo < config.optimizer.snr_hi:
        raise ValueError("optimizer exige 0 < snr_lo < snr_hi.")
    if config.optimizer.widen_factor <= 1:
        raise ValueError("optimizer.widen_factor deve ser > 1.")
    if config.mc.block_size < 1:
        raise ValueError("mc.block_size deve ser >= 1.")
    if config.execution.workers < 1:
        raise ValueError("execution.workers deve ser >= 1.")


def _load_dotenv_if_exists(dotenv_path: str | Path | None) -> None:
    if dotenv_path is None:
        return
    env_path = Path(dotenv_path)
    if env_path.exists():
        load_dotenv(dotenv_path=env_path, override=False)


def _resolve_env_in_value(value: Any) -> Any:
    if isinstance(value, str):
        return _resolve_env_in_text(value)
    if isinstance(value, list):
        return [_resolve_env_in_value(item) for item in value]
    if isinstance(value, dict):
        return {key: _resolve_env_in_value(item) for key, item in value.items()}
    return value


def _resolve_env_in_text(text: str) -> str:
    def replace(match: re.Match[str]) -> str:
        env_name = match.group(1)
        env_value = os.environ.get(env_name)
        if env_value is None:
            raise ValueError(f"Variavel de ambiente nao definida: {env_name}")
        return env_value

    return _ENV_VAR_RE.sub(replace, text)


def config_summary(config: AppConfig) -> Dict[str, Optional[object]]:
    return {
        "workspace_dir": str(config.workspace_dir),
        "sum_form_max_m": config.numerics.sum_form_max_m,
        "marcum_sum_max_m": config.numerics.marcum_sum_max_m,
        "grid_points": config.optimizer.grid_points,
        "workers": config.execution.workers,
    }
