"""Finite-difference audit of the block gradient on small random instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import BarrierObjective, _Problem
from .scattering import ScatteringMatrix
from .scenario import SystemConfig, generate_channels

FD_STEP = 1e-6
DIRECTIONS_PER_BLOCK = 4


@dataclass(frozen=True)
class InstanceCheck:
    seed: int
    m_elements: int
    n_groups: int
    n_ue: int
    max_rel_err: float

    def line(self):
        return (f"seed={self.seed} M={self.m_elements} X={self.n_groups} K={self.n_ue} "
                f"max_rel_err={self.max_rel_err:.3e}")


def instance_config(base: SystemConfig, seed) -> SystemConfig:
    """Small random dimensions drawn from the seed stream ``(seed, 7)``."""
    rng = np.random.default_rng([seed, 7])
    m = int(rng.choice([2, 4]))
    x = int(rng.choice([1, 2, m]))
    k = int(rng.choice([1, 2]))
    return base.replace(n_tx=2, n_rx=2, n_ue=k, m_elements=m, n_groups=x, seed=seed,
                        sigma2_ue=float(base.sigma2_ue_vec[0]))


def check_instance(base: SystemConfig, seed, step=FD_STEP, n_dirs=DIRECTIONS_PER_BLOCK):
    """Worst relative error between ``2 Re<grad, E>`` and central differences.

    The CRB threshold is set to twice the CRB at the random point so both
    objective terms are active and well conditioned.
    """
    cfg = instance_config(base, seed)
    ch = generate_channels(cfg)
    rng = np.random.default_rng([seed, 8])
    phi = ScatteringMatrix.random(cfg.m_elements, cfg.n_groups, rng)
    full = phi.full()
    w = rng.standard_normal((cfg.n_tx, cfg.n_ue)) + 1j * rng.standard_normal((cfg.n_tx, cfg.n_ue))
    w *= np.sqrt(cfg.p_max) / np.linalg.norm(w)
    crb = _Problem(ch, cfg).crb(full)
    cfg = cfg.replace(delta_max=2.0 * crb)
    obj = BarrierObjective(w, ch, cfg, cfg.barrier.tau)
    grad = obj.gradient(full)

    worst = 0.0
    for chi in range(cfg.n_groups):
        sl = phi.block_slice(chi)
        b = cfg.group_size
        for _ in range(n_dirs):
            raw = rng.standard_normal((b, b)) + 1j * rng.standard_normal((b, b))
            for part in (raw.real, 1j * raw.imag):
                e = np.zeros_like(full)
                e[sl, sl] = part / np.linalg.norm(part)
                fd = (obj.value(full + step * e) - obj.value(full - step * e)) / (2.0 * step)
                analytic = 2.0 * np.real(np.vdot(grad, e))
                worst = max(worst, abs(analytic - fd) / abs(fd))
    return InstanceCheck(seed, cfg.m_elements, cfg.n_groups, cfg.n_ue, float(worst))


def run_gradcheck(base: SystemConfig, n_instances, seed=None):
    """Checks for instances with seeds ``seed, seed + 1, ...`` (default ``base.seed``)."""
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    seed = base.seed if seed is None else seed
    return [check_instance(base, seed + i) for i in range(n_instances)]
