import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdris_isac.comms import (BeamformingMatrix, effective_channel, effective_channels, sinr,
                              sinr_all, sum_rate, target_leakage)
from bdris_isac.scattering import ScatteringMatrix
from bdris_isac.scenario import SystemConfig, generate_channels, steering_pair

from conftest import random_w


def instance(seed, k=3, m=4, x=2, n_tx=3, **kw):
    cfg = SystemConfig(seed=seed, n_ue=k, m_elements=m, n_groups=x, n_tx=n_tx, n_rx=n_tx, **kw)
    ch = generate_channels(cfg)
    rng = np.random.default_rng([seed, 5])
    phi = ScatteringMatrix.random(m, x, rng)
    w = random_w(rng, n_tx, k, cfg.p_max)
    return cfg, ch, phi, w


def brute_sinr(w, phi, ch, cfg, k):
    full = phi.full()
    n_t, m = ch.g_tx.shape
    h = np.array([ch.d_bu[k][n] + sum(ch.g_tx[n, p] * full[p, q] * ch.r_ue[k][q]
                                      for p in range(m) for q in range(m)) for n in range(n_t)])
    gains = [abs(sum(h[n].conjugate() * w[n, i] for n in range(n_t))) ** 2 for i in range(w.shape[1])]
    a, _ = steering_pair(ch.theta, m)
    leak = ch.d_tu[k] + sum(ch.r_ue[k][p].conjugate() * full[p, q] * ch.beta * a[q]
                            for p in range(m) for q in range(m))
    interference = sum(g for i, g in enumerate(gains) if i != k)
    return gains[k] / (interference + abs(leak) ** 2 * cfg.p_tar + cfg.sigma2_ue_vec[k])


def test_no_ris_path():
    cfg, ch, phi, _ = instance(1)
    r = ch.r_ue.copy()
    r[1] = 0
    ch2 = ch.replace(r_ue=r)
    assert np.array_equal(effective_channel(phi, ch2, 1), ch.d_bu[1])


def test_identity_path():
    cfg = SystemConfig(n_tx=4, n_rx=4, m_elements=4, n_groups=2, n_ue=2, seed=2)
    ch = generate_channels(cfg)
    ch2 = ch.replace(g_tx=np.eye(4), d_bu=np.zeros((2, 4)))
    out = effective_channel(ScatteringMatrix.identity(4, 2), ch2, 0)
    assert np.allclose(out, ch.r_ue[0], rtol=0, atol=1e-16)


def test_effective_channel_superposition():
    cfg, ch, phi, _ = instance(3)
    rng = np.random.default_rng(0)
    phi2 = ScatteringMatrix.random(4, 2, rng)
    base = effective_channels(np.zeros((4, 4)), ch)
    combined = effective_channels(phi.full() + 0.3 * phi2.full(), ch)
    expected = (effective_channels(phi, ch) + 0.3 * effective_channels(phi2, ch)
                - 0.3 * base)
    assert np.allclose(combined, expected, rtol=0, atol=1e-14 * np.abs(combined).max())
    for k in range(3):
        assert np.allclose(effective_channel(phi, ch, k), effective_channels(phi, ch)[k])


def test_target_leakage_cases():
    cfg, ch, phi, _ = instance(4)
    assert target_leakage(phi, ch.replace(beta=0.0), 2) == ch.d_tu[2]
    ident = ScatteringMatrix.identity(4, 2)
    ch0 = ch.replace(d_tu=np.zeros(3))
    a, _ = steering_pair(ch.theta, 4)
    assert target_leakage(ident, ch0, 1) == pytest.approx(ch.beta * np.vdot(ch.r_ue[1], a), rel=1e-12)
    full = phi.full()
    brute = ch.d_tu[0] + sum(ch.r_ue[0][p].conjugate() * full[p, q] * ch.beta * a[q]
                             for p in range(4) for q in range(4))
    assert target_leakage(phi, ch, 0) == pytest.approx(brute, rel=1e-12)


def test_sinr_brute_force():
    for seed in range(5):
        cfg, ch, phi, w = instance(seed, k=3)
        for k in range(3):
            assert sinr(w, phi, ch, cfg, k) == pytest.approx(brute_sinr(w, phi, ch, cfg, k), rel=1e-10)


def test_single_user_no_target():
    cfg, ch, phi, w = instance(6, k=1, p_tar=0.0)
    h = effective_channel(phi, ch, 0)
    assert sinr(w, phi, ch, cfg, 0) == pytest.approx(abs(np.vdot(h, w[:, 0])) ** 2 / cfg.sigma2_ue_vec[0])
    mrt = (np.sqrt(cfg.p_max) * h / np.linalg.norm(h))[:, None]
    expected = math.log2(1 + cfg.p_max * np.vdot(h, h).real / cfg.sigma2_ue_vec[0])
    assert sum_rate(mrt, phi, ch, cfg) == pytest.approx(expected, rel=1e-12)


def test_zero_beamformers():
    cfg, ch, phi, w = instance(7)
    w0 = w.copy()
    w0[:, 1] = 0
    assert sinr(w0, phi, ch, cfg, 1) == 0.0
    assert sum_rate(np.zeros_like(w), phi, ch, cfg) == 0.0


def test_rate_monotone_in_scale():
    cfg, ch, phi, w = instance(8, k=1)
    rates = [sum_rate(t * w, phi, ch, cfg) for t in np.linspace(0.01, 1.0, 50)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_rate_independent_of_phi_without_ris_paths():
    cfg, ch, _, w = instance(9, p_tar=0.0)
    ch0 = ch.replace(r_ue=np.zeros_like(ch.r_ue))
    rng = np.random.default_rng(1)
    ref = sum_rate(w, ScatteringMatrix.random(4, 2, rng), ch0, cfg)
    for _ in range(10):
        r = sum_rate(w, ScatteringMatrix.random(4, 2, rng), ch0, cfg)
        assert abs(r - ref) <= 1e-12 * ref


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
def test_rate_phase_invariant(seed, angle):
    cfg, ch, phi, w = instance(seed)
    r = sum_rate(w, phi, ch, cfg)
    assert sum_rate(w * cmath.exp(1j * angle), phi, ch, cfg) == pytest.approx(r, rel=1e-12)
    assert np.all(sinr_all(w, phi, ch, cfg) >= 0) and r >= 0


def test_target_cancellation_flag():
    cfg, ch, phi, w = instance(10, p_tar=10.0)
    plain = sinr_all(w, phi, ch, cfg)
    cancel = sinr_all(w, phi, ch, cfg.replace(cancel_target_interference=True))
    assert np.all(cancel >= plain)
    # with a strong target every UE meets the decoding condition
    cfg2 = cfg.replace(cancel_target_interference=True)
    full = phi.full()
    h = effective_channels(full, ch)
    p = np.abs(h.conj() @ w) ** 2
    expected = np.diagonal(p) / (p.sum(axis=1) - np.diagonal(p) + cfg.sigma2_ue_vec)
    leak = np.array([target_leakage(phi, ch, k) for k in range(3)])
    strong = np.abs(leak) ** 2 * cfg.p_tar > p.sum(axis=1) + cfg.sigma2_ue_vec
    assert strong.any()
    assert np.allclose(sinr_all(w, phi, ch, cfg2)[strong], expected[strong])


def test_beamforming_matrix():
    w = BeamformingMatrix(np.ones((2, 2)))
    assert w.power == 4.0
    assert w.is_feasible(4.0) and w.is_feasible(4.0 * (1 - 1e-10)) and not w.is_feasible(3.9)
    with pytest.raises(ValueError):
        BeamformingMatrix(np.ones(3))
