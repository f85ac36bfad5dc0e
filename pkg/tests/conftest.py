import numpy as np
import pytest

from bdris_isac.scattering import ScatteringMatrix
from bdris_isac.scenario import SystemConfig, generate_channels


def small_config(**kw):
    base = dict(n_tx=2, n_rx=2, n_ue=2, m_elements=4, n_groups=2)
    base.update(kw)
    return SystemConfig(**base)


def random_w(rng, n_tx, k, power):
    w = rng.standard_normal((n_tx, k)) + 1j * rng.standard_normal((n_tx, k))
    return w * np.sqrt(power) / np.linalg.norm(w)


def central_diff(f, x, e, step=1e-6):
    return (f(x + step * e) - f(x - step * e)) / (2.0 * step)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def default_channels(default_cfg):
    return generate_channels(default_cfg)


@pytest.fixture
def small_instance():
    cfg = small_config(seed=11)
    ch = generate_channels(cfg)
    rng = np.random.default_rng(5)
    phi = ScatteringMatrix.random(cfg.m_elements, cfg.n_groups, rng)
    w = random_w(rng, cfg.n_tx, cfg.n_ue, cfg.p_max)
    return cfg, ch, phi, w


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
