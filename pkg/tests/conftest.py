import numpy as np
import pytest

from symkit_dc import config
from symkit_dc.catalog import load_catalog
from symkit_dc.campaigns import CampaignOptions


# --- Shared fixtures --- #
@pytest.fixture(scope="session")
def catalog():
    """The built-in catalog from config/catalog.yml."""
    return load_catalog()


@pytest.fixture
def rng():
    """Fixed generator so sampled checks are repeatable."""
    return np.random.default_rng(7)


@pytest.fixture
def run_dir(tmp_path, monkeypatch):
    """Empty run directory wired in through SYMKIT_RUN_DIR."""
    directory = tmp_path / "runs"
    monkeypatch.setenv(config.RUN_DIR_ENV, str(directory))
    return directory


@pytest.fixture
def fast_options():
    """Campaign options with few trials for quick end-to-end checks."""
    return CampaignOptions.from_settings(seed=1234, trials=30, jobs=2)
