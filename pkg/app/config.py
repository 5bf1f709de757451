"""
Configuration management using Pydantic Settings
"""
import logging
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional


LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application
    APP_NAME: str = "Quadratic Kernel AMP"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Experiments
    OUTPUT_DIR: str = "runs"
    WORKERS: int = 1

    # AMP
    AMP_MAX_ITERS: int = 300
    AMP_DAMPING: float = 0.7
    AMP_TOL: float = 1e-8
    AMP_VARIANT: str = "sweep"

    # Empirical Bayes
    EB_EM_STEPS: int = 5

    # LASSO
    LASSO_MAX_ITERS: int = 10000
    LASSO_TOL: float = 1e-9
    CV_FOLDS: int = 5
    CV_GRID_SIZE: int = 20
    CV_TOL: float = 1e-5
    CV_MAX_ITERS: int = 200

    # Spectral analysis
    SPECTRUM_TRIALS: int = 20

    # CORS
    CORS_ORIGINS: str = "http://localhost:3000"

    @property
    def cors_origins_list(self) -> List[str]:
        """Parse CORS origins string into list"""
        return [origin.strip() for origin in self.CORS_ORIGINS.split(",")]


def configure_logging(level: Optional[str] = None) -> None:
    """Install the package log handler (idempotent)"""
    if level is None:
        level = "DEBUG" if settings.DEBUG else settings.LOG_LEVEL
    logging.basicConfig(format=LOG_FORMAT, level=level.upper())
    logging.getLogger("app").setLevel(level.upper())


# Global settings instance
settings = Settings()
