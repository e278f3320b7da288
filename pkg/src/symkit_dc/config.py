import os
from functools import lru_cache
from pathlib import Path

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, model_validator

# --- Core Paths ---
PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
CONFIG_DIR = PROJECT_ROOT / "config"
DOCS_DIR = PROJECT_ROOT / "docs"
DATA_DIR = PROJECT_ROOT / "data"
DEFAULT_RUN_DIR = DATA_DIR / "runs"
DOTENV_PATH = PROJECT_ROOT / ".env"
DEFAULTS_FILE = CONFIG_DIR / "defaults.yml"
CATALOG_FILE = CONFIG_DIR / "catalog.yml"
CATALOG_SCHEMA = DOCS_DIR / "catalog.schema.json"
TRANSFORM_SPEC_SCHEMA = DOCS_DIR / "transform-spec.schema.json"
REPORT_SCHEMA = DOCS_DIR / "report.schema.json"

RUN_DIR_ENV = "SYMKIT_RUN_DIR"

load_dotenv(dotenv_path=DOTENV_PATH)


class VerificationSettings(BaseModel):
    trials: int = Field(200, ge=1)
    rtol: float = Field(1e-9, gt=0)
    atol: float = Field(1e-11, ge=0)
    parameter_samples: int = Field(5, ge=1)
    symmetry_pass: float = Field(1e-8, gt=0)
    symmetry_fail: float = Field(1e-4, gt=0)
    solution_pass: float = Field(1e-10, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _ordered_thresholds(self):
        if self.symmetry_pass >= self.symmetry_fail:
            raise ValueError("symmetry_pass must be smaller than symmetry_fail")
        return self


class Settings(BaseModel):
    verification: VerificationSettings = VerificationSettings()
    # symbol name (or "jet" / "parameter") -> [lower, upper]
    sampling: dict[str, tuple[float, float]] = Field(default_factory=dict)


@lru_cache(maxsize=None)
def load_settings(path: Path = DEFAULTS_FILE) -> Settings:
    """Read the YAML defaults; missing file means built-in defaults."""
    if not path.exists():
        return Settings()
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    return Settings.model_validate(data)


def get_run_dir() -> Path:
    """Run directory, overridable through SYMKIT_RUN_DIR (environment or .env)."""
    override = os.environ.get(RUN_DIR_ENV)
    return Path(override).expanduser() if override else DEFAULT_RUN_DIR
