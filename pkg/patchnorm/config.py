"""
Configuration management using pydantic-settings.
Loads from environment variables (PATCHNORM_*) and an optional .env file.
"""
from typing import Literal

import numpy as np
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables"""

    # Scalar precision for tensors created without an explicit dtype
    precision: Literal["f32", "f64"] = "f32"

    # Where CLI runs write artifacts unless --out is given
    output_dir: str = "runs"

    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="PATCHNORM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    @property
    def dtype(self) -> np.dtype:
        """Numpy dtype matching the configured precision"""
        return np.dtype(np.float64 if self.precision == "f64" else np.float32)


# Singleton instance - import this in other modules
settings = Settings()


def get_settings() -> Settings:
    """Return the process settings singleton"""
    return settings


def reload_settings() -> Settings:
    """Re-read the environment (used by the CLI after flags change env vars)"""
    global settings
    settings = Settings()
    return settings
