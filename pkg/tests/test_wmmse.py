import math

import numpy as np
import pytest
from scipy.optimize import minimize

from bdris_isac.comms import BeamformingMatrix, effective_channels, sinr_all, sum_rate
from bdris_isac.errors import DegenerateWeight
from bdris_isac.scattering import ScatteringMatrix
from bdris_isac.scenario import SystemConfig, generate_channels
from bdris_isac.wmmse import (_PowerCurve, initial_beamformers, solve_dual, update_beamformers,
                              update_receivers, update_weights, wmmse_solve)

from conftest import random_w


def instance(seed, k=3, n_tx=4, m=4, x=2, **kw):
    cfg = SystemConfig(seed=seed, n_ue=k, n_tx=n_tx, n_rx=n_tx, m_elements=m, n_groups=x, **kw)
    ch = generate_channels(cfg)
    rng = np.random.default_rng([seed, 3])
    phi = ScatteringMatrix.random(m, x, rng)
    return cfg, ch, phi, random_w(rng, n_tx, k, cfg.p_max)


def test_receivers_zero_beamformer():
    cfg, ch, phi, w = instance(1)
    assert not np.any(update_receivers(np.zeros_like(w), phi, ch, cfg))


def test_receiver_scalar_mmse():
    cfg, ch, phi, _ = instance(2, k=1, p_tar=0.0)
    h = effective_channels(phi, ch)[0]
    s = 3e-5
    w = (s * h / np.vdot(h, h).real)[:, None]  # h^H w = s
    u = update_receivers(w, phi, ch, cfg)[0]
    assert u == pytest.approx(s / (s ** 2 + cfg.sigma2_ue_vec[0]), rel=1e-12)


def test_receiver_minimizes_mse():
    cfg, ch, phi, w = instance(3)
    h = effective_channels(phi, ch)
    u = update_receivers(w, phi, ch, cfg)
    a = h.conj() @ w
    for k in range(3):
        total = 1.0 / (a[k, k] / u[k]).real  # 1 / Lambda_k

        def mse(z):
            return abs(z) ** 2 / total - 2 * (np.conj(z) * a[k, k]).real + 1.0

        # coarse grid, then shrinking local grids
        center, half = 0j, 2 * abs(a[k, k]) * total + 1e-30
        for _ in range(40):
            grid = center + half * (np.linspace(-1, 1, 21)[:, None] + 1j * np.linspace(-1, 1, 21)[None, :])
            vals = np.vectorize(mse)(grid)
            center = grid.flat[np.argmin(vals)]
            half *= 0.3
        assert abs(center - u[k]) / abs(u[k]) < 1e-6


def test_weight_cases():
    cfg, ch, phi, w = instance(4)
    assert np.all(update_weights(np.zeros(3), w, phi, ch, cfg) == 1.0)
    h = effective_channels(phi, ch)
    a = np.diagonal(h.conj() @ w)
    u = 0.5 / np.conj(a)  # conj(u) a = 1/2
    assert np.allclose(update_weights(u, w, phi, ch, cfg), 2.0)
    with pytest.raises(DegenerateWeight):
        update_weights(1.0 / np.conj(a), w, phi, ch, cfg)


def test_wmmse_rate_identity():
    for seed in range(10):
        cfg, ch, phi, w = instance(seed)
        u = update_receivers(w, phi, ch, cfg)
        z = update_weights(u, w, phi, ch, cfg)
        assert np.all(z >= 1.0)
        gamma = sinr_all(w, phi, ch, cfg)
        assert np.allclose(np.log2(z), np.log2(1 + gamma), rtol=0, atol=1e-9)


def test_beamformers_zero_receivers():
    cfg, ch, phi, _ = instance(5)
    w, omega = update_beamformers(np.zeros(3, complex), np.ones(3), phi, ch, cfg)
    assert not np.any(w.w) and omega == 0.0


def test_single_user_beamformer_colinear():
    cfg, ch, phi, w = instance(6, k=1)
    u = update_receivers(w, phi, ch, cfg)
    z = update_weights(u, w, phi, ch, cfg)
    out, omega = update_beamformers(u, z, phi, ch, cfg)
    h = effective_channels(phi, ch)[0]
    v = out.w[:, 0]
    assert abs(np.vdot(h, v)) / (np.linalg.norm(h) * np.linalg.norm(v)) > 1 - 1e-12
    if omega > 0:
        assert out.power == pytest.approx(cfg.p_max, rel=1e-10)


def test_power_curve_monotone_and_root():
    cfg, ch, phi, w = instance(7, k=3)
    h = effective_channels(phi, ch)
    u = update_receivers(w, phi, ch, cfg)
    z = update_weights(u, w, phi, ch, cfg)
    curve = _PowerCurve(u, z, h)

    def direct(omega):
        a = sum(abs(u[i]) ** 2 * z[i] * np.outer(h[i], h[i].conj()) for i in range(3))
        cols = [u[k] * z[k] * np.linalg.solve(omega * np.eye(4) + a, h[k]) for k in range(3)]
        return float(sum(np.vdot(c, c).real for c in cols))

    p = [direct(o) for o in (0.0, 0.1, 1.0, 10.0)]
    assert all(b < a for a, b in zip(p, p[1:]))
    for omega in (0.1, 1.0, 10.0):
        assert curve.power(omega) == pytest.approx(direct(omega), rel=1e-9)
    # budget that makes the constraint active
    p_max = 0.5 * curve.power(0.0)
    root = solve_dual(curve, p_max)
    grid = np.linspace(0.0, 2 * root + 1.0, 200_001)
    powers = np.array([curve.power(o) for o in grid[::1000]])
    assert np.all(np.diff(powers) < 0)
    # fine scan: bracket the crossing, then refine it
    lo, hi = 0.0, 2 * root + 1.0
    for _ in range(8):
        scan = np.linspace(lo, hi, 1001)
        vals = np.array([curve.power(o) for o in scan])
        i = int(np.argmax(vals <= p_max))
        lo, hi = scan[max(i - 1, 0)], scan[i]
    assert abs(root - hi) <= 1e-8 * max(1.0, root)
    assert curve.power(root) == pytest.approx(p_max, rel=1e-10)


def test_slack_budget_gives_zero_dual():
    cfg, ch, phi, w = instance(8, k=2)
    h = effective_channels(phi, ch)
    u = update_receivers(w, phi, ch, cfg)
    z = update_weights(u, w, phi, ch, cfg)
    curve = _PowerCurve(u, z, h)
    assert solve_dual(curve, 2 * curve.power(0.0)) == 0.0


def test_rate_trace_monotone_many_runs():
    worst = 0.0
    for seed in range(100):
        cfg, ch, phi, w = instance(seed, k=3)
        res = wmmse_solve(phi, ch, cfg, w_init=w)
        diffs = np.diff(res.state.rate_trace)
        worst = min(worst, diffs.min(initial=0.0))
        assert res.w.is_feasible(cfg.p_max)
        assert sum_rate(res.w, phi, ch, cfg) >= sum_rate(w, phi, ch, cfg) - 1e-9
        assert not res.non_monotone
    assert worst >= -1e-9


def test_single_user_reaches_matched_filter():
    for seed in range(20):
        cfg, ch, phi, w = instance(seed, k=1, p_tar=0.0)
        res = wmmse_solve(phi, ch, cfg, w_init=w, tol=1e-12)
        h = effective_channels(phi, ch)[0]
        v = res.w.w[:, 0]
        assert abs(np.vdot(h, v)) / (np.linalg.norm(h) * np.linalg.norm(v)) > 1 - 1e-6
        assert res.w.power == pytest.approx(cfg.p_max, rel=1e-9)
        target = math.log2(1 + cfg.p_max * np.vdot(h, h).real / cfg.sigma2_ue_vec[0])
        assert abs(sum_rate(res.w, phi, ch, cfg) - target) < 1e-9


def test_zero_init_replaced(caplog):
    cfg, ch, phi, w = instance(9)
    with caplog.at_level("DEBUG", logger="bdris_isac.wmmse"):
        res = wmmse_solve(phi, ch, cfg, w_init=np.zeros_like(w))
    assert "fixed point" in caplog.text
    assert sum_rate(res.w, phi, ch, cfg) > 0


def test_infeasible_init_scaled():
    cfg, ch, phi, w = instance(10)
    res = wmmse_solve(phi, ch, cfg, w_init=10 * w, tol=1e-3)
    assert res.w.is_feasible(cfg.p_max)


def test_fixed_point():
    cfg, ch, phi, w = instance(11)
    res = wmmse_solve(phi, ch, cfg, w_init=w)
    assert res.converged
    again = wmmse_solve(phi, ch, cfg.replace(max_wmmse_iter=1), w_init=res.w)
    r0 = sum_rate(res.w, phi, ch, cfg)
    assert abs(again.state.rate_trace[-1] - r0) / r0 < cfg.tol_wmmse


def test_two_user_multistart_oracle():
    cfg, ch, phi, _ = instance(12, k=2, n_tx=2)
    h = effective_channels(phi, ch)
    res = wmmse_solve(phi, ch, cfg, tol=1e-12)
    rate = sum_rate(res.w, phi, ch, cfg)

    def neg_rate(x):
        v = (x[:4] + 1j * x[4:]).reshape(2, 2)
        v = v * np.sqrt(cfg.p_max) / np.linalg.norm(v)   # full power is optimal
        return -sum_rate(v, phi, ch, cfg)

    rng = np.random.default_rng(0)
    best = -math.inf
    for _ in range(20):
        out = minimize(neg_rate, rng.standard_normal(8), method="BFGS", options={"gtol": 1e-10})
        best = max(best, -out.fun)
    assert h.shape == (2, 2)
    assert rate >= best - 1e-3


def test_initial_beamformers_split_budget():
    cfg, ch, phi, _ = instance(13)
    w0 = initial_beamformers(phi, ch, cfg)
    assert isinstance(w0, BeamformingMatrix)
    assert np.allclose(np.linalg.norm(w0.w, axis=0) ** 2, cfg.p_max / 3)
