import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdris_isac.errors import ConfigError
from bdris_isac.scenario import (BarrierSchedule, StepSchedule, SystemConfig, dbm_to_watts,
                                 generate_channels, path_loss, steering_pair, watts_to_dbm)


def test_steering_broadside():
    a, a_dot = steering_pair(0.0, 4)
    assert np.allclose(a, 1.0)
    assert np.allclose(a_dot, 1j * np.pi * np.arange(4))


def test_steering_single_element():
    a, a_dot = steering_pair(0.7, 1)
    assert a.shape == (1,)
    assert a[0] == 1.0 and a_dot[0] == 0.0


def test_steering_thirty_degrees():
    theta = math.pi / 6
    a, a_dot = steering_pair(theta, 3)
    assert abs(a[1] - 1j) < 1e-15
    h = 1e-6
    fd = (steering_pair(theta + h, 3)[0] - steering_pair(theta - h, 3)[0]) / (2 * h)
    assert np.linalg.norm(fd - a_dot) / np.linalg.norm(a_dot) < 1e-6


def test_steering_derivative_random():
    rng = np.random.default_rng(0)
    worst = 0.0
    h = 1e-6
    for _ in range(100):
        theta = rng.uniform(-1.4, 1.4)
        m = int(rng.integers(2, 33))
        _, a_dot = steering_pair(theta, m)
        fd = (steering_pair(theta + h, m)[0] - steering_pair(theta - h, m)[0]) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - a_dot) / np.linalg.norm(a_dot))
    assert worst < 1e-6


@given(st.floats(-1.5, 1.5), st.integers(1, 64))
def test_steering_unit_modulus(theta, m):
    a, _ = steering_pair(theta, m)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert abs(np.vdot(a, a).real - m) < 1e-9 * m


def test_unit_conversions():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(-90.0) == pytest.approx(1e-12)
    assert watts_to_dbm(dbm_to_watts(25.0)) == pytest.approx(25.0)


def test_channel_shapes(default_cfg, default_channels):
    ch = default_channels
    c = default_cfg
    assert ch.g_tx.shape == (c.n_tx, c.m_elements)
    assert ch.g_rx.shape == (c.n_rx, c.m_elements)
    assert ch.d_bu.shape == (c.n_ue, c.n_tx)
    assert ch.r_ue.shape == (c.n_ue, c.m_elements)
    assert ch.d_tu.shape == (c.n_ue,)
    assert abs(ch.beta) > 0
    assert abs(abs(ch.beta) ** 2 - path_loss(c.pl_ref, c.dist_ris_tar, c.alpha_ris_tar)) < 1e-15


def test_channels_read_only(default_channels):
    with pytest.raises(ValueError):
        default_channels.g_tx[0, 0] = 1.0


def test_channels_deterministic():
    cfg = SystemConfig(seed=42)
    a, b = generate_channels(cfg), generate_channels(cfg)
    for name in ("g_tx", "g_rx", "d_bu", "r_ue", "d_tu"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.beta == b.beta
    assert a.digest() == b.digest()


def test_channels_distinct_seeds():
    digests = {generate_channels(SystemConfig(seed=s)).digest() for s in range(10)}
    assert len(digests) == 10


def test_tied_and_untied_bs_ris():
    tied = generate_channels(SystemConfig(seed=3))
    assert np.array_equal(tied.g_tx, tied.g_rx)
    untied = generate_channels(SystemConfig(seed=3, tie_bs_ris_channels=False))
    assert np.array_equal(untied.g_tx, tied.g_tx)
    assert not np.allclose(untied.g_rx, tied.g_rx)
    # the untied draw consumes the same stream, so later links agree
    assert np.array_equal(untied.d_bu, tied.d_bu)
    odd = generate_channels(SystemConfig(seed=3, n_rx=5))
    assert odd.g_rx.shape == (5, 16)


def test_rician_los_limit():
    big = 1e12
    cfg = SystemConfig(seed=9, kappa_bs_ris=big, kappa_ris_ue=big, kappa_bs_ue=big)
    ch = generate_channels(cfg)
    # a LoS link is a rank-one outer product of steering vectors
    s = np.linalg.svd(ch.g_tx, compute_uv=False)
    assert s[1] / s[0] < 1e-5
    for row in (ch.r_ue[0], ch.d_bu[1]):
        mags = np.abs(row)
        assert np.ptp(mags) / mags.mean() < 1e-5
    # NLoS share relative to the LoS-only (kappa = inf) channel
    los = generate_channels(cfg.replace(kappa_bs_ris=math.inf, kappa_ris_ue=math.inf,
                                        kappa_bs_ue=math.inf))
    for name in ("g_tx", "r_ue", "d_bu"):
        x, y = getattr(ch, name), getattr(los, name)
        assert np.linalg.norm(x - y) / np.linalg.norm(y) < 1e-5


def test_direct_link_second_moment():
    cfg = SystemConfig(n_ue=1, n_tx=1, m_elements=1, n_groups=1)
    samples = np.array([generate_channels(cfg.replace(seed=s)).d_bu[0, 0] for s in range(10_000)])
    expected = path_loss(cfg.pl_ref, cfg.dist_bs_ue, cfg.alpha_bs_ue)
    assert abs(np.mean(np.abs(samples) ** 2) / expected - 1.0) < 0.05


@pytest.mark.parametrize("changes, field", [
    (dict(m_elements=16, n_groups=3), "n_groups"),
    (dict(dist_bs_ris=0.0), "dist_bs_ris"),
    (dict(dist_ris_ue=-1.0), "dist_ris_ue"),
    (dict(n_ue=0), "n_ue"),
    (dict(delta_max=0.0), "delta_max"),
    (dict(theta_true=math.pi / 2), "theta_true"),
    (dict(sigma2_ue=(1e-12, 1e-12)), "sigma2_ue"),
    (dict(p_max=-1.0), "p_max"),
])
def test_invalid_config(changes, field):
    with pytest.raises(ConfigError) as info:
        SystemConfig(**changes)
    assert info.value.field == field


def test_per_ue_noise():
    cfg = SystemConfig(n_ue=2, sigma2_ue=[1e-12, 2e-12])
    assert np.allclose(cfg.sigma2_ue_vec, [1e-12, 2e-12])
    assert SystemConfig().sigma2_ue_vec.shape == (4,)


def test_schedules():
    b = BarrierSchedule(tau=3.0, nu=2.0, tau_cap=10.0)
    assert b.advanced().tau == 6.0
    assert b.advanced().advanced().tau == 10.0
    s = StepSchedule()
    assert s.clamp(1e3) == s.mu_max and s.clamp(0.0) == s.mu_min
    with pytest.raises(ValueError):
        BarrierSchedule(nu=1.0)


def test_digest_tracks_fields():
    assert SystemConfig().digest() == SystemConfig().digest()
    assert SystemConfig().digest() != SystemConfig(seed=1).digest()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([(4, 1), (4, 2), (8, 4), (6, 3)]),
       st.integers(1, 3))
def test_channels_finite_any_seed(seed, mx, k):
    m, x = mx
    ch = generate_channels(SystemConfig(seed=seed, m_elements=m, n_groups=x, n_ue=k))
    for name in ("g_tx", "g_rx", "d_bu", "r_ue", "d_tu"):
        assert np.all(np.isfinite(getattr(ch, name)))
    assert ch.r_ue.shape == (k, m)
