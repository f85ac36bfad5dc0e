"""System constants and seeded Rician channel generation.

All quantities here are linear (watts, radians). Unit conversion from
dBm/degrees happens only at the config-file / CLI boundary.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class BarrierSchedule:
    """Log-barrier weight schedule: ``tau`` grows by ``nu`` up to ``tau_cap``."""

    tau: float = 1.0
    nu: float = 2.0
    tau_cap: float = 1e4

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("must be > 0", field="barrier.tau")
        if not self.nu > 1:
            raise ConfigError("must be > 1", field="barrier.nu")
        if not self.tau_cap > 0:
            raise ConfigError("must be > 0", field="barrier.tau_cap")

    def advanced(self):
        """Return the schedule after one growth step, clamped at the cap."""
        if self.tau >= self.tau_cap:
            return self
        return dataclasses.replace(self, tau=min(self.tau * self.nu, self.tau_cap))


@dataclass(frozen=True)
class StepSchedule:
    """Geodesic step size and the clamps used by the adaptive line search."""

    mu: float = 0.01
    mu_min: float = 1e-12
    mu_max: float = 10.0
    max_halvings: int = 60

    def __post_init__(self):
        if not (0 < self.mu_min <= self.mu_max):
            raise ConfigError("need 0 < mu_min <= mu_max", field="step.mu_min")
        if not self.mu > 0:
            raise ConfigError("must be > 0", field="step.mu")
        if self.max_halvings < 1:
            raise ConfigError("must be >= 1", field="step.max_halvings")

    def clamp(self, mu):
        return min(max(mu, self.mu_min), self.mu_max)


_COUNT_FIELDS = ("n_tx", "n_rx", "n_ue", "m_elements", "n_groups", "l_slots")
_POSITIVE_FIELDS = (
    "p_max", "sigma2_bs", "delta_max",
    "dist_bs_ris", "dist_ris_ue", "dist_ris_tar", "dist_bs_ue", "dist_tar_ue",
    "alpha_bs_ris", "alpha_ris_ue", "alpha_ris_tar", "alpha_bs_ue", "alpha_tar_ue",
    "pl_ref",
)
# tolerances may be inf (stop after one pass)
_TOL_FIELDS = ("tol_outer", "tol_inner", "tol_wmmse")
_NONNEG_FIELDS = ("p_tar", "kappa_bs_ris", "kappa_ris_ue", "kappa_bs_ue", "kappa_tar_ue")


@dataclass(frozen=True)
class SystemConfig:
    """Every scalar constant of the scenario and of the solver.

    Defaults follow the desk-scale reproduction scenario: 8 BS antennas,
    16 RIS elements in 4 groups, 25 dBm budget, CRB threshold 1e-3 rad^2,
    -80/-90 dBm noise at the BS/UEs, 40/15/18 m BS-RIS/RIS-UE/RIS-target
    distances with exponents 2/2/2 and a BS-UE exponent of 3.
    """

    n_tx: int = 8
    n_rx: int = 8
    n_ue: int = 4
    m_elements: int = 16
    n_groups: int = 4
    l_slots: int = 64
    p_max: float = dbm_to_watts(25.0)
    p_tar: float = dbm_to_watts(10.0)
    sigma2_bs: float = dbm_to_watts(-80.0)
    sigma2_ue: float | tuple = dbm_to_watts(-90.0)
    delta_max: float = 1e-3
    dist_bs_ris: float = 40.0
    dist_ris_ue: float = 15.0
    dist_ris_tar: float = 18.0
    dist_bs_ue: float = 45.0
    dist_tar_ue: float = 30.0
    alpha_bs_ris: float = 2.0
    alpha_ris_ue: float = 2.0
    alpha_ris_tar: float = 2.0
    alpha_bs_ue: float = 3.0
    alpha_tar_ue: float = 3.0
    kappa_bs_ris: float = 10.0
    kappa_ris_ue: float = 10.0
    kappa_bs_ue: float = 0.0
    kappa_tar_ue: float = 0.0
    pl_ref: float = db_to_linear(-30.0)
    theta_true: float = math.pi / 6
    barrier: BarrierSchedule = field(default_factory=BarrierSchedule)
    step: StepSchedule = field(default_factory=StepSchedule)
    tol_outer: float = 1e-4
    tol_inner: float = 1e-4
    tol_wmmse: float = 1e-6
    max_outer: int = 100
    max_sweeps: int = 1000
    max_wmmse_iter: int = 500
    seed: int = 0
    tie_bs_ris_channels: bool = True
    cancel_target_interference: bool = False

    def __post_init__(self):
        if isinstance(self.sigma2_ue, (list, np.ndarray)):
            object.__setattr__(self, "sigma2_ue", tuple(float(s) for s in self.sigma2_ue))
        self.validate()

    def validate(self):
        for name in _COUNT_FIELDS:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError("must be an integer >= 1", field=name)
        for name in _POSITIVE_FIELDS:
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"must be > 0 (got {value!r})", field=name)
        for name in _TOL_FIELDS:
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", field=name)
        for name in _NONNEG_FIELDS:
            if not getattr(self, name) >= 0:
                raise ConfigError("must be >= 0", field=name)
        if self.m_elements % self.n_groups:
            raise ConfigError(
                f"n_groups={self.n_groups} does not divide m_elements={self.m_elements}",
                field="n_groups")
        if not (-math.pi / 2 < self.theta_true < math.pi / 2):
            raise ConfigError("must lie in (-pi/2, pi/2)", field="theta_true")
        s = np.atleast_1d(np.asarray(self.sigma2_ue, dtype=float))
        if s.size not in (1, self.n_ue) or np.any(s <= 0):
            raise ConfigError("must be > 0, scalar or one per UE", field="sigma2_ue")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("must be a 64-bit unsigned integer", field="seed")
        for name in ("max_outer", "max_sweeps", "max_wmmse_iter"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", field=name)

    @property
    def group_size(self):
        return self.m_elements // self.n_groups

    @property
    def sigma2_ue_vec(self):
        return np.broadcast_to(np.asarray(self.sigma2_ue, dtype=float), (self.n_ue,)).copy()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        """Stable short hash of every field, used to tag output files."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def steering_pair(theta, m):
    """Half-wavelength ULA steering vector and its derivative in ``theta``."""
    idx = np.arange(m, dtype=float)
    a = np.exp(1j * np.pi * idx * np.sin(theta))
    a_dot = 1j * np.pi * idx * np.cos(theta) * a
    return a, a_dot


def path_loss(pl_ref, dist, alpha):
    return pl_ref * dist ** (-alpha)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One channel realization. Arrays are read-only.

    Shapes: ``g_tx`` (N_T, M), ``g_rx`` (N_R, M), ``d_bu`` (K, N_T),
    ``r_ue`` (K, M), ``d_tu`` (K,). ``beta`` is the complex target gain and
    ``theta`` the true angle of arrival at the RIS.
    """

    g_tx: np.ndarray
    g_rx: np.ndarray
    d_bu: np.ndarray
    r_ue: np.ndarray
    d_tu: np.ndarray
    beta: complex
    theta: float

    def __post_init__(self):
        for name in ("g_tx", "g_rx", "d_bu", "r_ue", "d_tu"):
            arr = np.array(getattr(self, name), dtype=complex, order="C")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def n_ue(self):
        return self.d_bu.shape[0]

    @property
    def m_elements(self):
        return self.r_ue.shape[1]

    def target_vectors(self):
        """Return ``(r_tar, r_tar_dot)`` = ``beta * (a, a_dot)``."""
        a, a_dot = steering_pair(self.theta, self.m_elements)
        return self.beta * a, self.beta * a_dot

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def digest(self):
        h = hashlib.sha256()
        for name in ("g_tx", "g_rx", "d_bu", "r_ue", "d_tu"):
            h.update(getattr(self, name).tobytes())
        h.update(np.array([self.beta.real, self.beta.imag, self.theta]).tobytes())
        return h.hexdigest()


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _rician(pl, kappa, los, nlos):
    if np.isinf(kappa):
        w_los, w_nlos = 1.0, 0.0
    else:
        w_los, w_nlos = np.sqrt(kappa / (1.0 + kappa)), np.sqrt(1.0 / (1.0 + kappa))
    return np.sqrt(pl) * (w_los * los + w_nlos * nlos)


def generate_channels(cfg: SystemConfig) -> ChannelSet:
    """Draw all links for ``cfg`` from the stream seeded by ``cfg.seed``.

    Each link is ``sqrt(PL) * (sqrt(k/(1+k)) LoS + sqrt(1/(1+k)) NLoS)`` with
    ``PL = pl_ref * d**-alpha``. LoS parts are outer products of ULA steering
    vectors at angles drawn once per link; NLoS parts are unit-variance CN.
    """
    cfg.validate()
    n_t, n_r, k, m = cfg.n_tx, cfg.n_rx, cfg.n_ue, cfg.m_elements
    rng = np.random.default_rng([cfg.seed, 0])
    half = np.pi / 2

    # the draw order below is part of the determinism contract
    ang_bs, ang_ris = rng.uniform(-half, half, size=2)
    ang_ue_ris = rng.uniform(-half, half, size=k)
    ang_ue_bs = rng.uniform(-half, half, size=k)
    phase_tu = rng.uniform(0, 2 * np.pi, size=k)
    phase_beta = rng.uniform(0, 2 * np.pi)

    pl_g = path_loss(cfg.pl_ref, cfg.dist_bs_ris, cfg.alpha_bs_ris)
    a_ris = steering_pair(ang_ris, m)[0]
    los_tx = np.outer(steering_pair(ang_bs, n_t)[0], a_ris.conj())
    g_tx = _rician(pl_g, cfg.kappa_bs_ris, los_tx, _cn(rng, (n_t, m)))
    nlos_rx = _cn(rng, (n_r, m))
    if cfg.tie_bs_ris_channels and n_t == n_r:
        g_rx = g_tx
    else:
        los_rx = np.outer(steering_pair(ang_bs, n_r)[0], a_ris.conj())
        g_rx = _rician(pl_g, cfg.kappa_bs_ris, los_rx, nlos_rx)

    pl_bu = path_loss(cfg.pl_ref, cfg.dist_bs_ue, cfg.alpha_bs_ue)
    los_bu = np.stack([steering_pair(t, n_t)[0] for t in ang_ue_bs])
    d_bu = _rician(pl_bu, cfg.kappa_bs_ue, los_bu, _cn(rng, (k, n_t)))

    pl_ru = path_loss(cfg.pl_ref, cfg.dist_ris_ue, cfg.alpha_ris_ue)
    los_ru = np.stack([steering_pair(t, m)[0] for t in ang_ue_ris])
    r_ue = _rician(pl_ru, cfg.kappa_ris_ue, los_ru, _cn(rng, (k, m)))

    pl_tu = path_loss(cfg.pl_ref, cfg.dist_tar_ue, cfg.alpha_tar_ue)
    d_tu = _rician(pl_tu, cfg.kappa_tar_ue, np.exp(1j * phase_tu), _cn(rng, k))

    beta = np.sqrt(path_loss(cfg.pl_ref, cfg.dist_ris_tar, cfg.alpha_ris_tar)) * np.exp(1j * phase_beta)
    return ChannelSet(g_tx=g_tx, g_rx=g_rx, d_bu=d_bu, r_ue=r_ue, d_tu=d_tu,
                      beta=beta, theta=cfg.theta_true)
