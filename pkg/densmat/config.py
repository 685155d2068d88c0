import os
from typing import Literal, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Library settings loaded from DENSMAT_* environment variables or a .env file
    """

    # Application Settings
    app_name: str = Field(default="densmat", description="Name reported by the CLI and the API")
    app_version: str = Field(default="1.0.0")
    environment: str = Field(default="development")
    log_level: str = Field(default="INFO")

    # Worker pools (DENSMAT_THREADS)
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Eigensolver Configuration
    eigensolver: Literal["lapack", "jacobi"] = Field(default="lapack")
    jacobi_tol: float = Field(default=1e-10, gt=0.0)
    jacobi_max_sweeps: int = Field(default=100, ge=1)

    # Estimation Configuration
    dense_dim_limit: int = Field(
        default=2048,
        ge=1,
        description="Embedding dimensions up to this size are accumulated as dense D x D sums",
    )
    working_rank: int = Field(
        default=512,
        ge=1,
        description="Rank budget kept by the incremental factorizer between merges",
    )
    estimation_chunk_size: int = Field(default=4096, ge=1)

    # Training Configuration
    learning_rate_max: float = Field(default=1e-3, gt=0.0)

    # Serving Configuration
    model_path: Optional[str] = Field(default=None)
    api_host: str = Field(default="127.0.0.1")
    api_port: int = Field(default=8000)

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().upper()
        return v

    model_config = SettingsConfigDict(
        env_prefix="DENSMAT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
        protected_namespaces=(),
    )


# Create global settings instance
settings = Settings()
