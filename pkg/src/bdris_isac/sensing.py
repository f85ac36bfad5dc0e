"""Target-RIS-BS cascade, Fisher information and the angle CRB."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularFim
from .scenario import ChannelSet, SystemConfig

XI_REL_TOL = 1e-15
FIM_COND_MAX = 1e12


def _full(phi):
    return phi.full() if hasattr(phi, "full") else np.asarray(phi)


def cascaded_pair(phi, ch: ChannelSet):
    """Return ``(h, h_dot)``: ``g_rx Phi beta a(theta)`` and its theta-derivative."""
    r_tar, r_tar_dot = ch.target_vectors()
    gp = ch.g_rx @ _full(phi)
    return gp @ r_tar, gp @ r_tar_dot


def fim_scale(cfg: SystemConfig):
    """``2 L P_tar / sigma2_bs``, the common factor of every FIM entry."""
    return 2.0 * cfg.l_slots * cfg.p_tar / cfg.sigma2_bs


@dataclass(frozen=True)
class FimEta:
    """Fisher information over ``[theta, Re beta, Im beta]``."""

    j_theta_theta: float
    j_theta_beta: np.ndarray
    j_beta_beta: np.ndarray

    @property
    def matrix(self):
        out = np.empty((3, 3))
        out[0, 0] = self.j_theta_theta
        out[0, 1:] = self.j_theta_beta
        out[1:, 0] = self.j_theta_beta
        out[1:, 1:] = self.j_beta_beta
        return out


def fim(phi, ch: ChannelSet, cfg: SystemConfig) -> FimEta:
    h, hd = cascaded_pair(phi, ch)
    if ch.beta == 0:
        return FimEta(0.0, np.zeros(2), np.zeros((2, 2)))
    c = fim_scale(cfg)
    # mean derivative w.r.t. Re(beta) is h / beta, w.r.t. Im(beta) is j h / beta
    z = np.vdot(hd, h) / ch.beta
    j_tb = c * np.array([z.real, (1j * z).real])
    j_bb = c * (np.vdot(h, h).real / abs(ch.beta) ** 2) * np.eye(2)
    return FimEta(c * np.vdot(hd, hd).real, j_tb, j_bb)


def xi_value(xi1, c, v):
    """``||h_dot||^2 - |h_dot^H h|^2 / ||h||^2`` from its three parts."""
    return xi1 - (c.real ** 2 + c.imag ** 2) / v


def crb_from_terms(xi1, c, v, cfg: SystemConfig):
    """CRB from the sensing kernel outputs; raises SingularFim when unidentifiable."""
    if v <= 0.0:
        raise SingularFim("cascaded target channel is zero")
    if cfg.p_tar <= 0.0:
        raise SingularFim("target transmits no power")
    xi = xi_value(xi1, c, v)
    if xi <= XI_REL_TOL * xi1:
        raise SingularFim(f"xi={xi:.3g} is numerically zero relative to ||h_dot||^2={xi1:.3g}")
    return cfg.sigma2_bs / (2.0 * cfg.l_slots * cfg.p_tar * xi)


def crb_closed_form(phi, ch: ChannelSet, cfg: SystemConfig) -> float:
    h, hd = cascaded_pair(phi, ch)
    return crb_from_terms(np.vdot(hd, hd).real, complex(np.vdot(hd, h)), np.vdot(h, h).real, cfg)


def crb_from_fim(f: FimEta) -> float:
    """``[J^-1]_{1,1}`` via the full 3 x 3 inverse."""
    j = f.matrix
    if not np.all(np.isfinite(j)) or np.count_nonzero(j) == 0:
        raise SingularFim("FIM is zero or non-finite")
    cond = np.linalg.cond(j)
    if not cond < FIM_COND_MAX:
        raise SingularFim(f"FIM condition number {cond:.3g}")
    return float(np.linalg.inv(j)[0, 0])
