"""
Application configuration management using Pydantic Settings.

This module defines the process-wide configuration for the ids-lab numerical
laboratory. It uses Pydantic Settings to read environment variables (prefix
``IDSLAB_``) and an optional ``.env`` file, providing type-safe defaults for
parallelism, logging, output locations and the numerical constants shared by
every service.

Scenario-specific parameters (grids, slice specs, thresholds) do not live here;
they are read from TOML scenario files into ``src.models.scenario``.
"""
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings with environment variable support.

    Attributes:
        app_name (str): Application display name.
        app_version (str): Current application version.
        log_level (str): Root logging level used by the CLI.
        threads (int): Worker cap for data-parallel work (IDSLAB_THREADS).
        output_dir (Path): Default directory for report files.
        det_threshold (float): Pointwise |det g| below which a metric is singular.
        boundary_layer (int): Nodes excluded at the box boundary for diagnostics.
        chunk_nodes (int): Slab thickness (nodes) for curvature evaluation.
        block_bytes (int): Memory budget of one curvature slab (4-index array).
        quadrature_theta (int): Gauss-Legendre nodes in cos(theta).
        quadrature_phi (int): Trapezoid nodes in phi.
        dec_tolerance_coefficient (float): C in the DEC tolerance C*h^2.
        adm_residual_floor (float): Absolute floor for the extrapolation check.
    """

    model_config = SettingsConfigDict(
        env_prefix="IDSLAB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = Field(default="ids-lab")
    app_version: str = Field(default="0.1.0")
    log_level: str = Field(default="INFO")

    # Execution
    threads: int = Field(default=1, ge=1)
    output_dir: Path = Field(default=Path("results"))

    # Numerics
    det_threshold: float = Field(default=1e-12, gt=0)
    boundary_layer: int = Field(default=3, ge=1)
    chunk_nodes: int = Field(default=8, ge=1)
    block_bytes: int = Field(default=128 * 2 ** 20, ge=2 ** 20)
    quadrature_theta: int = Field(default=24, ge=2)
    quadrature_phi: int = Field(default=48, ge=3)
    dec_tolerance_coefficient: float = Field(default=10.0, gt=0)
    adm_residual_floor: float = Field(default=1e-4, ge=0)

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()


# Global settings instance
settings = Settings()
