import pytest

from otafl.config import SystemConfig


@pytest.fixture(scope="session")
def default_cfg():
    """Default system config with the quadratic task (certified constants)."""
    return SystemConfig()


@pytest.fixture(scope="session")
def default_ocfg(default_cfg):
    return default_cfg.optimizer_config(default_cfg.build_task())


@pytest.fixture(scope="session")
def plain_ocfg():
    """Optimizer constants without a task: M = mu = G = 1, a = 4."""
    return SystemConfig().optimizer_config()
