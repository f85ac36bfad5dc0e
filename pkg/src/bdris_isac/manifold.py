"""Log-barrier objective and Riemannian steepest ascent on unitary blocks.

For a fixed beamformer ``W`` the scattering matrix maximizes

    f(Phi) = R(W, Phi) + (1/tau) * ln(delta_max - CRB(Phi))

over block-diagonal unitary ``Phi``. Each block moves along the geodesic
``exp(mu * Psi) Phi_chi`` where ``Psi = Sigma Phi_chi^H - Phi_chi Sigma^H``
and ``Sigma = df/d(conj Phi_chi)``; ``mu`` adapts by Armijo-style halving
and doubling.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .comms import BeamformingMatrix
from .errors import Infeasible, SingularFim, StepStalled
from .scattering import ScatteringMatrix, polar_unitary
from .scenario import BarrierSchedule, ChannelSet, StepSchedule, SystemConfig
from .sensing import xi_value

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
RENORMALIZE_EVERY = 50
SKEW_TOL = 1e-10

__all__ = [
    "BarrierSchedule", "StepSchedule", "BarrierObjective", "LogCrbObjective",
    "GradientWorkspace", "gradient_workspace", "barrier_objective",
    "euclidean_gradient_block", "riemannian_gradient", "geodesic_rotation",
    "adaptive_block_step", "ascent_step", "optimize_scattering", "StepResult",
    "ScatteringResult",
]


def _full(phi):
    return phi.full() if hasattr(phi, "full") else np.array(phi, dtype=complex)


def _w_array(w):
    return w.w if isinstance(w, BeamformingMatrix) else np.asarray(w, dtype=complex)


class _Problem:
    """Channel arrays laid out once for the kernels."""

    def __init__(self, ch: ChannelSet, cfg: SystemConfig, backend=None):
        self.cfg = cfg
        self.backend = backend or kernels.active
        r_tar, r_tar_dot = ch.target_vectors()
        self.g_tx = np.ascontiguousarray(ch.g_tx)
        self.g_rx = np.ascontiguousarray(ch.g_rx)
        self.d_bu = np.ascontiguousarray(ch.d_bu)
        self.r_ue = np.ascontiguousarray(ch.r_ue)
        self.d_tu = np.ascontiguousarray(ch.d_tu)
        self.r_tar = np.ascontiguousarray(r_tar)
        self.r_tar_dot = np.ascontiguousarray(r_tar_dot)
        self.sigma2_ue = np.ascontiguousarray(cfg.sigma2_ue_vec)
        denom = 2.0 * cfg.l_slots * cfg.p_tar
        self.crb_scale = cfg.sigma2_bs / denom if denom > 0 else math.inf

    def rate(self, full, w):
        return self.backend.rate(full, self.g_tx, self.d_bu, self.r_ue, self.d_tu,
                                 self.r_tar, w, self.cfg.p_tar, self.sigma2_ue)

    def rate_gradient(self, full, w):
        return self.backend.rate_gradient(full, self.g_tx, self.d_bu, self.r_ue, self.d_tu,
                                          self.r_tar, w, self.cfg.p_tar, self.sigma2_ue)

    def xi(self, full):
        xi1, c, v = self.backend.sensing(full, self.g_rx, self.r_tar, self.r_tar_dot)
        if v <= 0.0:
            return 0.0, xi1
        return xi_value(xi1, c, v), xi1

    def crb(self, full):
        """CRB, or ``inf`` where the angle is unidentifiable."""
        xi, xi1 = self.xi(full)
        if xi <= 1e-15 * xi1 or xi <= 0.0:
            return math.inf
        return self.crb_scale / xi

    def xi_gradient(self, full):
        xi1, c, v, grad = self.backend.xi_gradient(full, self.g_rx, self.r_tar, self.r_tar_dot)
        if v <= 0.0:
            raise SingularFim("cascaded target channel is zero")
        xi = xi_value(xi1, c, v)
        if xi <= 1e-15 * xi1 or xi <= 0.0:
            raise SingularFim("xi vanished")
        return xi, grad


class BarrierObjective:
    """``f = R + (1/tau) ln(delta_max - CRB)``; ``-inf`` outside the feasible set."""

    def __init__(self, w, ch: ChannelSet, cfg: SystemConfig, tau, backend=None, problem=None):
        self.problem = problem or _Problem(ch, cfg, backend)
        self.w = np.ascontiguousarray(_w_array(w))
        self.tau = float(tau)
        self.delta_max = cfg.delta_max

    def with_tau(self, tau):
        other = object.__new__(BarrierObjective)
        other.__dict__.update(self.__dict__)
        other.tau = float(tau)
        return other

    def rate(self, full):
        return self.problem.rate(full, self.w)

    def crb(self, full):
        return self.problem.crb(full)

    def value(self, full):
        slack = self.delta_max - self.problem.crb(full)
        if not slack > 0.0:
            return -math.inf
        return self.problem.rate(full, self.w) + math.log(slack) / self.tau

    def gradient(self, full):
        xi, dxi = self.problem.xi_gradient(full)
        crb = self.problem.crb_scale / xi
        slack = self.delta_max - crb
        if not slack > 0.0:
            raise Infeasible(f"CRB {crb:.6g} >= delta_max {self.delta_max:.6g}")
        grad = self.problem.rate_gradient(full, self.w)
        grad += (crb / (xi * slack * self.tau)) * dxi
        return grad


class LogCrbObjective:
    """``-ln CRB``: the sensing-only objective used to reach feasibility."""

    def __init__(self, ch: ChannelSet, cfg: SystemConfig, backend=None, problem=None):
        self.problem = problem or _Problem(ch, cfg, backend)

    def crb(self, full):
        return self.problem.crb(full)

    def value(self, full):
        crb = self.problem.crb(full)
        return -math.log(crb) if math.isfinite(crb) else -math.inf

    def gradient(self, full):
        xi, dxi = self.problem.xi_gradient(full)
        return dxi / xi


def barrier_objective(phi, w, ch: ChannelSet, cfg: SystemConfig, sched: BarrierSchedule):
    """Evaluate the barrier objective; raises Infeasible when CRB >= delta_max."""
    obj = BarrierObjective(w, ch, cfg, sched.tau)
    full = _full(phi)
    crb = obj.crb(full)
    if not crb < cfg.delta_max:
        raise Infeasible(f"CRB {crb:.6g} >= delta_max {cfg.delta_max:.6g}")
    return obj.value(full)


def euclidean_gradient_block(phi, w, ch: ChannelSet, cfg: SystemConfig,
                             sched: BarrierSchedule, chi):
    """``df/d(conj Phi_chi)`` for block ``chi`` (0-based)."""
    phi = phi if isinstance(phi, ScatteringMatrix) else ScatteringMatrix.from_full(
        np.asarray(phi), cfg.n_groups)
    sl = phi.block_slice(chi)
    return BarrierObjective(w, ch, cfg, sched.tau).gradient(phi.full())[sl, sl]


@dataclass
class GradientWorkspace:
    """Every intermediate of the closed-form gradient, assembled term by term.

    Matrices are stored in the ``d/d(conj Phi)`` orientation (no transposes).
    ``m1``/``m3``/``m5`` are stacked over UEs.
    """

    u_mat: np.ndarray
    v_mat: np.ndarray
    xi: float
    xi1: float
    xi2: float
    xi3: float
    a1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    omega: np.ndarray
    m1: np.ndarray
    m3: np.ndarray
    m5: np.ndarray
    lam: np.ndarray
    lam_minus: np.ndarray
    crb: float
    barrier_prefactor: float
    sigma_rate: np.ndarray = field(repr=False)
    sigma_barrier: np.ndarray = field(repr=False)

    @property
    def sigma(self):
        return self.sigma_rate + self.sigma_barrier


def gradient_workspace(phi, w, ch: ChannelSet, cfg: SystemConfig, tau) -> GradientWorkspace:
    """Reference gradient built UE by UE from the named intermediate matrices.

    Slow and explicit; the kernels are checked against it.
    """
    full = _full(phi)
    w = _w_array(w)
    g, g_r = ch.g_tx, ch.g_rx
    r_tar, r_dot = ch.target_vectors()
    h_tb = g_r @ full @ r_tar
    hd_tb = g_r @ full @ r_dot
    u_mat = np.outer(hd_tb, h_tb.conj())
    v_mat = np.outer(h_tb, h_tb.conj())
    tr_u = np.trace(u_mat)
    tr_v = np.trace(v_mat).real
    xi1 = float(np.vdot(hd_tb, hd_tb).real)
    xi3 = float(abs(tr_u) ** 2)
    xi2 = xi3 / tr_v
    xi = xi1 - xi2
    grg = g_r.conj().T @ g_r
    a2 = grg @ full @ np.outer(r_dot, r_dot.conj())
    a1 = np.outer(r_dot, r_dot.conj()) @ full.conj().T @ grg
    d2 = grg @ full @ np.outer(r_tar, r_tar.conj())
    d1 = np.outer(r_tar, r_tar.conj()) @ full.conj().T @ grg
    omega = tr_u * np.outer(r_tar, r_dot.conj()) + np.conj(tr_u) * np.outer(r_dot, r_tar.conj())
    b2 = grg @ full @ omega
    crb = cfg.sigma2_bs / (2.0 * cfg.l_slots * cfg.p_tar * xi)
    prefactor = cfg.sigma2_bs / (2.0 * cfg.l_slots * cfg.p_tar * xi ** 2 * tau * (cfg.delta_max - crb))
    sigma_barrier = prefactor * (a2 - b2 / tr_v + xi3 * d2 / tr_v ** 2)

    k_ue = ch.n_ue
    m = full.shape[0]
    s_all = w @ w.conj().T
    noise = cfg.sigma2_ue_vec
    m1 = np.empty((k_ue, m, m), dtype=complex)
    m3 = np.empty_like(m1)
    m5 = np.empty_like(m1)
    lam = np.empty(k_ue)
    lam_minus = np.empty(k_ue)
    sigma_rate = np.zeros((m, m), dtype=complex)
    for k in range(k_ue):
        h_k = ch.d_bu[k] + g @ full @ ch.r_ue[k]
        leak = ch.d_tu[k] + np.vdot(ch.r_ue[k], full @ r_tar)
        gains = np.abs(h_k.conj() @ w) ** 2
        lam[k] = gains.sum() + cfg.p_tar * abs(leak) ** 2 + noise[k]
        lam_minus[k] = np.delete(gains, k).sum() + cfg.p_tar * abs(leak) ** 2 + noise[k]
        s_minus = s_all - np.outer(w[:, k], w[:, k].conj())
        m1[k] = cfg.p_tar * leak * np.outer(ch.r_ue[k], r_tar.conj())
        m3[k] = np.outer(g.conj().T @ s_all @ h_k, ch.r_ue[k].conj())
        m5[k] = np.outer(g.conj().T @ s_minus @ h_k, ch.r_ue[k].conj())
        sigma_rate += ((m1[k] + m3[k]) / lam[k] - (m1[k] + m5[k]) / lam_minus[k]) / LN2

    return GradientWorkspace(
        u_mat=u_mat, v_mat=v_mat, xi=xi, xi1=xi1, xi2=xi2, xi3=xi3,
        a1=a1, a2=a2, b2=b2, d1=d1, d2=d2, omega=omega, m1=m1, m3=m3, m5=m5,
        lam=lam, lam_minus=lam_minus, crb=crb, barrier_prefactor=prefactor,
        sigma_rate=sigma_rate, sigma_barrier=sigma_barrier)


def riemannian_gradient(sigma, phi_chi):
    """``Psi = Sigma Phi^H - Phi Sigma^H`` (skew-Hermitian by construction)."""
    a = sigma @ phi_chi.conj().T
    return a - a.conj().T


class _Rotation:
    """``mu -> exp(mu Psi)`` from one eigendecomposition of the Hermitian ``j Psi``."""

    def __init__(self, psi):
        lam, vecs = np.linalg.eigh(1j * psi)
        self.lam = lam
        self.vecs = vecs
        self.vecs_h = vecs.conj().T

    def __call__(self, mu):
        return (self.vecs * np.exp(-1j * mu * self.lam)[np.newaxis, :]) @ self.vecs_h


def geodesic_rotation(psi, mu):
    """``exp(mu Psi)`` for skew-Hermitian ``Psi``, unitary to machine precision."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if np.linalg.norm(psi + psi.conj().T) > SKEW_TOL * max(norm, np.finfo(float).tiny):
        raise ValueError("psi is not skew-Hermitian")
    return _Rotation(psi)(mu)


@dataclass
class StepResult:
    """Outcome of one block update. ``mu_used`` certifies the step:
    ``f_new - f_old >= mu_used / 2 * delta``."""

    phi_full: np.ndarray
    mu: float
    mu_used: float
    f_old: float
    f_new: float
    delta: float
    moved: bool


def ascent_step(obj, full, sl, mu, step: StepSchedule, f0=None) -> StepResult:
    """One adaptive geodesic step on the block ``full[sl, sl]`` of ``obj``."""
    if f0 is None:
        f0 = obj.value(full)
    blk = full[sl, sl]
    sigma = obj.gradient(full)[sl, sl]
    psi = riemannian_gradient(sigma, blk)
    delta = 0.5 * float(np.vdot(psi, psi).real)
    # the best certified gain is below the resolution of f: block is stationary
    if step.mu_max * delta <= 64 * np.finfo(float).eps * max(1.0, abs(f0)):
        return StepResult(full, mu, 0.0, f0, f0, delta, False)

    rot = _Rotation(psi)

    def trial(m):
        cand = full.copy()
        cand[sl, sl] = rot(m) @ blk
        return cand, obj.value(cand)

    mu = step.clamp(mu)
    cand, f = trial(mu)
    halvings = 0
    while not f - f0 >= 0.5 * mu * delta:
        halvings += 1
        if halvings > step.max_halvings:
            raise StepStalled(f"no sufficient increase after {step.max_halvings} halvings")
        mu *= 0.5
        cand, f = trial(mu)
    # Q(2 mu) equals Q(mu) @ Q(mu) exactly for the exponential map
    while 2.0 * mu <= step.mu_max:
        cand2, f2 = trial(2.0 * mu)
        if not f2 - f0 >= mu * delta:
            break
        mu *= 2.0
        cand, f = cand2, f2
    return StepResult(cand, step.clamp(mu), mu, f0, f, delta, True)


def adaptive_block_step(phi, w, ch: ChannelSet, cfg: SystemConfig, sched: BarrierSchedule,
                        step: StepSchedule, chi):
    """Update block ``chi`` of ``phi`` once; returns ``(phi', mu')``."""
    obj = BarrierObjective(w, ch, cfg, sched.tau)
    full = phi.full()
    if not obj.crb(full) < cfg.delta_max:
        raise Infeasible("adaptive_block_step needs a strictly feasible phi")
    res = ascent_step(obj, full, phi.block_slice(chi), step.mu, step)
    if not res.moved:
        return phi, step.mu
    sl = phi.block_slice(chi)
    return phi.with_block(chi, res.phi_full[sl, sl]), res.mu


@dataclass
class ScatteringResult:
    phi: ScatteringMatrix
    barrier: BarrierSchedule
    mu: float
    f_trace: list
    tau_trace: list
    sweeps: int
    converged: bool
    stall_events: int
    updates: int


def _repair(full, n_groups):
    g = full.shape[0] // n_groups
    for chi in range(n_groups):
        sl = slice(chi * g, (chi + 1) * g)
        full[sl, sl] = polar_unitary(full[sl, sl])


def run_block_ascent(obj, phi0: ScatteringMatrix, step: StepSchedule, eps,
                     max_sweeps, barrier: BarrierSchedule | None = None,
                     stop=None, on_step=None, repair_every=RENORMALIZE_EVERY):
    """Sweep all blocks until the relative change of ``obj`` drops below ``eps``.

    When ``barrier`` is given, ``obj`` is re-weighted with its ``tau`` each
    sweep and ``tau`` grows after every sweep. ``stop(full)`` may end the run
    early. ``repair_every=None`` disables the polar-factor drift repair.
    """
    full = phi0.full()
    n_groups = phi0.n_groups
    g = phi0.group_size
    slices = [slice(chi * g, (chi + 1) * g) for chi in range(n_groups)]
    mu = step.mu
    if barrier is not None:
        obj = obj.with_tau(barrier.tau)
    f_prev = obj.value(full)
    f_trace, tau_trace = [], []
    stalls = updates = 0
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        moved = 0
        f_cur = obj.value(full)
        for sl in slices:
            try:
                res = ascent_step(obj, full, sl, mu, step, f0=f_cur)
            except StepStalled:
                stalls += 1
                continue
            if on_step is not None:
                on_step(res)
            if res.moved:
                moved += 1
                updates += 1
                full, mu, f_cur = res.phi_full, res.mu, res.f_new
                if repair_every and updates % repair_every == 0:
                    _repair(full, n_groups)
                    f_cur = obj.value(full)
        f_trace.append(f_cur)
        tau_trace.append(obj.tau if barrier is not None else None)
        if barrier is not None:
            barrier = barrier.advanced()
            obj = obj.with_tau(barrier.tau)
        rel = abs(f_cur - f_prev) / max(abs(f_prev), 1e-300)
        f_prev = f_cur
        if stop is not None and stop(full):
            converged = True
            break
        if rel <= eps or moved == 0:
            converged = True
            break
    if repair_every:
        _repair(full, n_groups)
    phi = ScatteringMatrix.from_full(full, n_groups)
    return ScatteringResult(phi=phi, barrier=barrier, mu=mu, f_trace=f_trace,
                            tau_trace=tau_trace, sweeps=sweep, converged=converged,
                            stall_events=stalls, updates=updates)


def optimize_scattering(phi0: ScatteringMatrix, w, ch: ChannelSet, cfg: SystemConfig,
                        sched: BarrierSchedule | None = None, step: StepSchedule | None = None,
                        eps_inner=None, on_step=None, problem=None) -> ScatteringResult:
    """Maximize the barrier objective over ``Phi`` for fixed ``W``.

    ``phi0`` must be strictly feasible. The returned schedule carries the
    grown ``tau`` so an outer loop can continue from it.
    """
    sched = sched or cfg.barrier
    step = step or cfg.step
    eps_inner = cfg.tol_inner if eps_inner is None else eps_inner
    obj = BarrierObjective(w, ch, cfg, sched.tau, problem=problem)
    crb0 = obj.crb(phi0.full())
    if not crb0 < cfg.delta_max:
        raise Infeasible(f"initial CRB {crb0:.6g} >= delta_max {cfg.delta_max:.6g}")
    return run_block_ascent(obj, phi0, step, eps_inner, cfg.max_sweeps,
                            barrier=sched, on_step=on_step)
