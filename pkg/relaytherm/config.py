# relaytherm/config.py - numerical tolerances and runtime configuration
from dotenv import load_dotenv

load_dotenv()
from contextlib import contextmanager
from contextvars import ContextVar
from functools import lru_cache
from typing import Iterator, Literal, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

TOLERANCE_FIELDS = (
    "event_tol", "graze_tol", "dwell_factor", "construction_tol", "verify_tol",
    "bifurcation_tol", "classification_tol", "eigen_residual_tol",
    "near_bifurcation_window", "fd_eps",
)


class Settings(BaseSettings):
    """Runtime settings with validation and environment variable support (RELAYTHERM_* / .env)."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="RELAYTHERM_",
        extra="ignore",
        case_sensitive=False,
    )

    # Application
    app_name: str = "Relay Thermocontrol Periodic Orbit Analyzer"
    environment: str = Field(default="development")
    log_level: str = Field(default="INFO")
    log_format: Literal["console", "json"] = Field(default="console")

    # Event detection (dynamics)
    event_tol: float = Field(default=1e-12, description="Absolute time tolerance for switching moments.")
    graze_tol: float = Field(default=1e-8, description="|dv/dt| below this at a switching flags grazing.")
    dwell_factor: float = Field(default=1e-9, description="dwell_floor = dwell_factor * horizon.")

    # Periodic construction and verification
    construction_tol: float = Field(default=1e-12)
    verify_tol: float = Field(default=1e-8)
    h_grid_points: int = Field(default=512, ge=16)

    # Bifurcation / stability
    bifurcation_tol: float = Field(default=1e-8)
    classification_tol: float = Field(default=1e-9)
    eigen_residual_tol: float = Field(default=1e-10)
    near_bifurcation_window: float = Field(default=1e-4)

    # Poincare finite differences
    fd_eps: float = Field(default=1e-6)

    # Runs
    output_dir: str = Field(default="runs")
    workers: int = Field(default=1, ge=1)

    # --- Pydantic V2 Validators ---
    @field_validator(*TOLERANCE_FIELDS)
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError("tolerances must be strictly positive")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        level = str(v).upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return level

    @property
    def is_production(self) -> bool:
        return self.environment.lower() == "production"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


_override: ContextVar[Optional[Settings]] = ContextVar("relaytherm_settings_override", default=None)


def current_settings() -> Settings:
    return _override.get() or get_settings()


@contextmanager
def settings_override(**updates) -> Iterator[Settings]:
    """Run a block with some Settings fields replaced; validators still apply."""
    unknown = sorted(set(updates) - set(Settings.model_fields))
    if unknown:
        raise ValueError(f"unknown setting(s): {', '.join(unknown)}")
    merged = Settings(**{**current_settings().model_dump(), **updates})
    token = _override.set(merged)
    try:
        yield merged
    finally:
        _override.reset(token)


def setting_or(value, name: str):
    """Return `value`, or the named Settings field when `value` is None."""
    return getattr(current_settings(), name) if value is None else value


# Note: Do not instantiate settings at import time; library functions resolve
# their tolerance defaults through `setting_or()` when called.
