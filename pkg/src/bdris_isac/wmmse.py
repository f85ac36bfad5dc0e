"""Beamformer design for a fixed scattering matrix via WMMSE.

The sum-rate problem is solved by cycling the closed-form receiver, weight
and beamformer updates. The power budget is enforced through the dual
variable ``omega``, located by bisection on the (strictly decreasing)
transmit power ``P(omega)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .comms import BeamformingMatrix, effective_channels
from .errors import DegenerateWeight, SingularSystem
from .scenario import ChannelSet, SystemConfig

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12
NONMONOTONE_SLACK = 1e-6
POWER_REL_TOL = 1e-12


@dataclass
class WmmseState:
    u: np.ndarray
    z: np.ndarray
    omega: float
    rate_trace: list = field(default_factory=list)


@dataclass
class WmmseResult:
    w: BeamformingMatrix
    state: WmmseState
    iterations: int
    converged: bool
    non_monotone: bool


def _link_terms(phi, ch, cfg):
    """Effective channels (K x N_T) and the W-independent part of each Lambda_k."""
    full = phi.full() if hasattr(phi, "full") else np.asarray(phi)
    h = effective_channels(full, ch)
    r_tar, _ = ch.target_vectors()
    leak = ch.d_tu + ch.r_ue.conj() @ (full @ r_tar)
    return h, cfg.p_tar * np.abs(leak) ** 2 + cfg.sigma2_ue_vec


def _as_array(w):
    return w.w if isinstance(w, BeamformingMatrix) else np.asarray(w, dtype=complex)


def _gains(h, w):
    """``a[k, i] = h_k^H w_i``."""
    return h.conj() @ w


def _rate(h, extra, w):
    p = np.abs(_gains(h, w)) ** 2
    sig = np.diagonal(p).copy()
    np.fill_diagonal(p, 0.0)
    return float(np.sum(np.log1p(sig / (p.sum(axis=1) + extra))) / np.log(2.0))


def _receivers(h, extra, w):
    a = _gains(h, w)
    total = np.sum(np.abs(a) ** 2, axis=1) + extra
    return np.diagonal(a) / total


def _weights(u, h, w):
    e = 1.0 - np.real(np.conj(u) * np.diagonal(_gains(h, w)))
    if np.any(e < WEIGHT_FLOOR):
        raise DegenerateWeight(f"MSE {e.min():.3g} below {WEIGHT_FLOOR}")
    return 1.0 / e


class _PowerCurve:
    """``P(omega)`` for the beamformer of the regularized WMMSE system."""

    def __init__(self, u, z, h):
        c = np.abs(u) ** 2 * z
        a = h.T @ (c[:, np.newaxis] * h.conj())          # sum_i c_i h_i h_i^H
        a = 0.5 * (a + a.conj().T)
        lam, vecs = np.linalg.eigh(a)
        lam = np.clip(lam, 0.0, None)
        self.lam = lam
        self.vecs = vecs
        coeff = vecs.conj().T @ (h.T * (u * z)[np.newaxis, :])   # N_T x K
        null = lam <= 1e-12 * max(lam.max(), 0.0)
        # h_k lies in range(A) whenever u_k != 0, so null components are roundoff
        coeff[null] = 0.0
        self.coeff = coeff
        self.live = ~null
        self.energy = np.sum(np.abs(coeff) ** 2, axis=1)

    def power(self, omega):
        if omega == 0.0:
            lam = self.lam[self.live]
            if np.any(lam <= 0):
                raise SingularSystem("regularized system singular at omega = 0")
            return float(np.sum(self.energy[self.live] / lam ** 2))
        return float(np.sum(self.energy / (self.lam + omega) ** 2))

    def beamformer(self, omega):
        scale = np.zeros_like(self.lam)
        if omega == 0.0:
            scale[self.live] = 1.0 / self.lam[self.live]
        else:
            scale = 1.0 / (self.lam + omega)
        return self.vecs @ (scale[:, np.newaxis] * self.coeff)


def solve_dual(curve: _PowerCurve, p_max, max_iter=400):
    """Smallest ``omega >= 0`` with ``P(omega) <= p_max``."""
    if not np.any(curve.energy > 0):
        return 0.0
    if curve.power(0.0) <= p_max:
        return 0.0
    lo, hi = 0.0, 1.0
    while curve.power(hi) > p_max:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SingularSystem("dual variable bracket diverged")
    for _ in range(max_iter):
        p_hi = curve.power(hi)
        if p_hi >= p_max * (1.0 - POWER_REL_TOL) or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        mid = 0.5 * (lo + hi)
        if curve.power(mid) > p_max:
            lo = mid
        else:
            hi = mid
    return hi


def _fill_budget(w, p_max):
    """Scale ``w`` up to the full budget.

    A common scaling never lowers any SINR, so this keeps the rate monotone.
    Without it the slack case ``omega = 0`` (rank-deficient system, K < N_T)
    creeps towards full power by tiny steps at high SNR.
    """
    power = float(np.sum(np.abs(w) ** 2))
    if 0.0 < power < p_max:
        w = w * np.sqrt(p_max / power)
    return w


def update_receivers(w, phi, ch: ChannelSet, cfg: SystemConfig):
    """MMSE receive coefficients ``u_k = h_k^H w_k / Lambda_k``."""
    h, extra = _link_terms(phi, ch, cfg)
    return _receivers(h, extra, _as_array(w))


def update_weights(u, w, phi, ch: ChannelSet, cfg: SystemConfig):
    """``z_k = 1 / (1 - Re{conj(u_k) h_k^H w_k})``."""
    h, _ = _link_terms(phi, ch, cfg)
    return _weights(np.asarray(u), h, _as_array(w))


def update_beamformers(u, z, phi, ch: ChannelSet, cfg: SystemConfig):
    """Return ``(W, omega)`` minimizing the weighted MSE under the power budget."""
    h, _ = _link_terms(phi, ch, cfg)
    curve = _PowerCurve(np.asarray(u), np.asarray(z, dtype=float), h)
    omega = solve_dual(curve, cfg.p_max)
    return BeamformingMatrix(curve.beamformer(omega)), omega


def initial_beamformers(phi, ch: ChannelSet, cfg: SystemConfig) -> BeamformingMatrix:
    """Matched filters ``h_k / ||h_k||`` sharing the budget equally."""
    h, _ = _link_terms(phi, ch, cfg)
    norms = np.linalg.norm(h, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    w = (h / norms[:, np.newaxis]).T * np.sqrt(cfg.p_max / h.shape[0])
    return BeamformingMatrix(w)


def wmmse_solve(phi, ch: ChannelSet, cfg: SystemConfig, w_init=None, tol=None) -> WmmseResult:
    """Cycle receiver -> weight -> beamformer updates until the rate settles.

    Each beamformer update is rescaled to use the whole power budget. Stops
    when the relative rate change drops below ``tol`` (default
    ``cfg.tol_wmmse``) or after ``cfg.max_wmmse_iter`` cycles. An all-zero or
    missing ``w_init`` is a fixed point of the updates and is replaced by
    matched filters.
    """
    tol = cfg.tol_wmmse if tol is None else tol
    h, extra = _link_terms(phi, ch, cfg)
    w = None if w_init is None else _as_array(w_init).copy()
    if w is None or not np.any(w):
        if w is not None:
            log.debug("zero w_init is a WMMSE fixed point; using matched filters")
        w = initial_beamformers(phi, ch, cfg).w.copy()
    power = float(np.sum(np.abs(w) ** 2))
    if power > cfg.p_max:
        w *= np.sqrt(cfg.p_max / power)

    rate = _rate(h, extra, w)
    best_w, best_rate = w, rate
    trace = [rate]
    u = np.zeros(h.shape[0], dtype=complex)
    z = np.ones(h.shape[0])
    omega = 0.0
    converged = non_monotone = False
    it = 0
    for it in range(1, cfg.max_wmmse_iter + 1):
        u = _receivers(h, extra, w)
        z = _weights(u, h, w)
        curve = _PowerCurve(u, z, h)
        omega = solve_dual(curve, cfg.p_max)
        w = _fill_budget(curve.beamformer(omega), cfg.p_max)
        new_rate = _rate(h, extra, w)
        if new_rate < rate - NONMONOTONE_SLACK:
            non_monotone = True
            log.warning("WMMSE rate decreased %.3g -> %.3g", rate, new_rate)
        trace.append(new_rate)
        if new_rate >= best_rate:
            best_w, best_rate = w, new_rate
        done = abs(new_rate - rate) / max(rate, 1e-12) < tol
        rate = new_rate
        if done:
            converged = True
            break

    state = WmmseState(u=u, z=z, omega=omega, rate_trace=trace)
    return WmmseResult(w=BeamformingMatrix(best_w), state=state, iterations=it,
                       converged=converged, non_monotone=non_monotone)
