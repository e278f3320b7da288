import datetime
import hashlib
import logging
from pathlib import Path

from . import config

LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
NOISY_LOGGERS = ("matplotlib", "asyncio")


def setup_logging(verbose: bool = False) -> None:
    """Configure the root logger once; --verbose switches to DEBUG."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)
    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def derive_seed(run_seed: int, item_id: str) -> int:
    """Per-item seed from the run seed and the item id; independent of scheduling order."""
    digest = hashlib.sha256(f"{run_seed}:{item_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def run_timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime(r"%Y%m%dT%H%M%S%f")


def ensure_run_dir(directory: Path | None = None) -> Path:
    """Run directory (SYMKIT_RUN_DIR or data/runs), created on first use."""
    directory = directory or config.get_run_dir()
    if not directory.exists():
        LOGGER.info(f"Creating run directory {directory}")
        directory.mkdir(parents=True, exist_ok=True)
    return directory


def list_runs(directory: Path | None = None) -> list[Path]:
    """Saved reports, oldest first (names start with a sortable UTC timestamp)."""
    directory = directory or config.get_run_dir()
    if not directory.exists():
        LOGGER.warning(f"Run directory not found: {directory}")
        return []
    return sorted(directory.glob("*.json"))
