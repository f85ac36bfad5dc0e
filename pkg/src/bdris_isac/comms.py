"""Downlink effective channels, SINR and sum rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet, SystemConfig

POWER_SLACK = 1e-9


def _full(phi):
    return phi.full() if hasattr(phi, "full") else np.asarray(phi)


@dataclass(frozen=True, eq=False)
class BeamformingMatrix:
    """``N_T x K`` beamformer; column ``k`` serves UE ``k``."""

    w: np.ndarray

    def __post_init__(self):
        arr = np.array(self.w, dtype=complex, order="C")
        if arr.ndim != 2:
            raise ValueError("beamforming matrix must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "w", arr)

    @property
    def power(self):
        return float(np.sum(np.abs(self.w) ** 2))

    def is_feasible(self, p_max):
        return self.power <= p_max * (1.0 + POWER_SLACK)


def _as_w(w):
    return w.w if isinstance(w, BeamformingMatrix) else np.asarray(w, dtype=complex)


def effective_channel(phi, ch: ChannelSet, k):
    """``d_bu[k] + g_tx Phi r_ue[k]`` (0-based ``k``)."""
    return ch.d_bu[k] + ch.g_tx @ (_full(phi) @ ch.r_ue[k])


def effective_channels(phi, ch: ChannelSet):
    """All effective channels stacked as rows, shape ``(K, N_T)``."""
    return ch.d_bu + (ch.g_tx @ (_full(phi) @ ch.r_ue.T)).T


def target_leakage(phi, ch: ChannelSet, k):
    r_tar, _ = ch.target_vectors()
    return ch.d_tu[k] + np.vdot(ch.r_ue[k], _full(phi) @ r_tar)


def _received_powers(w, phi, ch, cfg):
    """Per-UE (signal, interference-from-UEs, target-interference, noise)."""
    full = _full(phi)
    h = effective_channels(full, ch)
    p = np.abs(h.conj() @ _as_w(w)) ** 2
    sig = np.diagonal(p).copy()
    np.fill_diagonal(p, 0.0)
    r_tar, _ = ch.target_vectors()
    leak = ch.d_tu + ch.r_ue.conj() @ (full @ r_tar)
    tar = np.abs(leak) ** 2 * cfg.p_tar
    return sig, p.sum(axis=1), tar, cfg.sigma2_ue_vec


def sinr_all(w, phi, ch: ChannelSet, cfg: SystemConfig):
    sig, mui, tar, noise = _received_powers(w, phi, ch, cfg)
    if cfg.cancel_target_interference:
        # a UE whose target interference exceeds everything else decodes and removes it
        cancel = tar > sig + mui + noise
        tar = np.where(cancel, 0.0, tar)
    return sig / (mui + tar + noise)


def sinr(w, phi, ch: ChannelSet, cfg: SystemConfig, k):
    return float(sinr_all(w, phi, ch, cfg)[k])


def sum_rate(w, phi, ch: ChannelSet, cfg: SystemConfig):
    """Sum of ``log2(1 + SINR_k)`` in bit/s/Hz."""
    return float(np.sum(np.log1p(sinr_all(w, phi, ch, cfg))) / np.log(2.0))
