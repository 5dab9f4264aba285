"""
Global configuration for the compression engine using Pydantic for validation.

Environment variables (or a .env file) only steer ambient behaviour such as
logging and debug checks. Model and training semantics live in the typed run
configuration (see models/config.py and training/config.py).
"""
import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings."""

    # Logging settings
    PPCD_LOG_FILE: str = os.getenv("PPCD_LOG_FILE", "ppcd_logs.log")
    PPCD_CONSOLE_LEVEL: str = os.getenv("PPCD_CONSOLE_LEVEL", "INFO")
    PPCD_FILE_LEVEL: str = os.getenv("PPCD_FILE_LEVEL", "DEBUG")
    PPCD_LOG_ROTATION: str = os.getenv("PPCD_LOG_ROTATION", "10 MB")
    PPCD_LOG_RETENTION: int = int(os.getenv("PPCD_LOG_RETENTION", "3"))

    # Numerical settings
    PPCD_DEBUG_CHECKS: bool = os.getenv("PPCD_DEBUG_CHECKS", "false").lower() in ("1", "true", "yes")

    # Run settings
    PPCD_OUTPUT_DIR: str = os.getenv("PPCD_OUTPUT_DIR", "runs")
    PPCD_SEED: int = int(os.getenv("PPCD_SEED", "0"))

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        extra = "ignore"


# Create global settings instance
settings = Settings()
