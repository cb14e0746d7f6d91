"""
Configuration settings for the local-attention laboratory
"""
import os
from pathlib import Path
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env (real environment wins)
load_dotenv(override=False)

class Settings(BaseSettings):
    """Application settings"""

    # Parallelism
    threads: int = int(os.getenv("LOCATTN_THREADS", "1"))
    blas_threads: int = int(os.getenv("LOCATTN_BLAS_THREADS", "1"))

    # Reproducibility
    seed: int = int(os.getenv("LOCATTN_SEED", "7"))

    # Directory paths
    project_root: Path = Path(__file__).parent.parent
    output_dir: Path = project_root / os.getenv("OUTPUT_DIR", "output")

    # Logging / console
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    progress: bool = os.getenv("LOCATTN_PROGRESS", "false").lower() in ("1", "true", "yes")

    class Config:
        env_file = ".env"
        env_prefix = "LOCATTN_"
        case_sensitive = False
        extra = "ignore"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        # Create output directory if it doesn't exist
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def apply_thread_limits(self) -> None:
        """
        Export BLAS thread caps. Only effective before numpy loads its BLAS,
        so the CLI calls this before importing the numeric modules.
        """
        value = str(max(1, self.blas_threads))
        for env_name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(env_name, value)

# Global settings instance
settings = Settings()
