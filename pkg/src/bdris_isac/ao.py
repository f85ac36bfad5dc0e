"""Alternating optimization of the beamformer and the scattering matrix."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .comms import BeamformingMatrix, sum_rate
from .errors import NoFeasiblePoint
from .manifold import LogCrbObjective, _Problem, optimize_scattering, run_block_ascent
from .scattering import ScatteringMatrix
from .scenario import ChannelSet, SystemConfig
from .wmmse import initial_beamformers, wmmse_solve

log = logging.getLogger(__name__)

FEASIBLE_MARGIN = 0.9
FEASIBLE_RETRIES = 10
FEASIBLE_SWEEPS = 200
RATE_SLACK = 1e-6


def find_feasible_init(ch: ChannelSet, cfg: SystemConfig, retries=FEASIBLE_RETRIES,
                       sweeps=FEASIBLE_SWEEPS) -> ScatteringMatrix:
    """Haar-random start pushed below ``0.9 * delta_max`` by CRB-only ascent.

    Each retry draws fresh blocks from the seed stream ``(seed, 1, attempt)``.
    Raises NoFeasiblePoint with the best CRB reached when all retries fail.
    """
    target = FEASIBLE_MARGIN * cfg.delta_max
    problem = _Problem(ch, cfg)
    obj = LogCrbObjective(ch, cfg, problem=problem)
    best = math.inf
    for attempt in range(retries):
        rng = np.random.default_rng([cfg.seed, 1, attempt])
        phi = ScatteringMatrix.random(cfg.m_elements, cfg.n_groups, rng)
        crb = problem.crb(phi.full())
        if crb <= target:
            return phi
        res = run_block_ascent(obj, phi, cfg.step, eps=1e-10, max_sweeps=sweeps,
                               stop=lambda full: problem.crb(full) <= target)
        crb = problem.crb(res.phi.full())
        if crb <= target:
            return res.phi
        log.debug("feasibility attempt %d stalled at CRB %.4g", attempt, crb)
        best = min(best, crb)
    raise NoFeasiblePoint(f"CRB threshold {cfg.delta_max:.4g} not reached after {retries} attempts",
                          best)


@dataclass
class SolveReport:
    rate_trace: list
    crb_trace: list
    f_trace: list
    outer_f: list
    mu_trace: list
    final_phi: ScatteringMatrix
    final_w: BeamformingMatrix
    outer_iters: int
    converged: bool
    stall_events: int
    wall_time: float
    seed: int
    config_digest: str
    inner_sweeps: list = field(default_factory=list)

    @property
    def final_rate(self):
        return self.rate_trace[-1]

    @property
    def final_crb(self):
        return self.crb_trace[-1]

    def to_csv(self):
        """Per-outer-iteration table; contains no timing so reruns are byte-identical."""
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.config_digest} seed={self.seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "rate", "crb", "f", "mu"])
        for i, row in enumerate(zip(self.rate_trace, self.crb_trace, self.outer_f, self.mu_trace), 1):
            writer.writerow([i] + [repr(float(x)) for x in row])
        return buf.getvalue()

    def to_text(self):
        """Field-per-line summary."""
        def fmt(xs):
            return " ".join(repr(float(x)) for x in xs)

        lines = [
            f"config_sha256: {self.config_digest}",
            f"seed: {self.seed}",
            f"converged: {str(self.converged).lower()}",
            f"outer_iters: {self.outer_iters}",
            f"final_rate: {float(self.final_rate)!r}",
            f"final_crb: {float(self.final_crb)!r}",
            f"final_power: {float(self.final_w.power)!r}",
            f"stall_events: {self.stall_events}",
            f"wall_time: {self.wall_time:.6f}",
            f"rate_trace: {fmt(self.rate_trace)}",
            f"crb_trace: {fmt(self.crb_trace)}",
            f"f_trace: {fmt(self.f_trace)}",
            f"inner_sweeps: {' '.join(str(s) for s in self.inner_sweeps)}",
        ]
        return "\n".join(lines) + "\n"


def solve_joint(ch: ChannelSet, cfg: SystemConfig, phi0: ScatteringMatrix | None = None,
                single_wmmse_cycle=False) -> SolveReport:
    """Alternate WMMSE beamforming and barrier-constrained manifold ascent.

    Stops when the relative sum-rate change between outer passes is at most
    ``cfg.tol_outer`` or after ``cfg.max_outer`` passes. With
    ``single_wmmse_cycle`` each pass runs one WMMSE cycle instead of
    iterating WMMSE to its own tolerance.
    """
    start = time.perf_counter()
    phi = phi0 if phi0 is not None else find_feasible_init(ch, cfg)
    problem = _Problem(ch, cfg)
    w = initial_beamformers(phi, ch, cfg)
    wcfg = cfg.replace(max_wmmse_iter=1) if single_wmmse_cycle else cfg
    rate_prev = sum_rate(w, phi, ch, cfg)
    sched, step = cfg.barrier, cfg.step
    rates, crbs, f_all, f_outer, mus, sweeps = [], [], [], [], [], []
    stalls = 0
    converged = False
    t = 0
    for t in range(1, cfg.max_outer + 1):
        w = wmmse_solve(phi, ch, wcfg, w_init=w).w
        res = optimize_scattering(phi, w, ch, cfg, sched, step, problem=problem)
        phi, sched = res.phi, res.barrier
        step = dataclasses.replace(step, mu=res.mu)
        rate = sum_rate(w, phi, ch, cfg)
        rates.append(rate)
        crbs.append(problem.crb(phi.full()))
        f_all.extend(res.f_trace)
        f_outer.append(res.f_trace[-1] if res.f_trace else math.nan)
        mus.append(res.mu)
        sweeps.append(res.sweeps)
        stalls += res.stall_events
        if rate < rate_prev - RATE_SLACK:
            log.warning("outer pass %d lowered the rate %.6g -> %.6g", t, rate_prev, rate)
        if abs(rate - rate_prev) / max(rate_prev, 1e-12) <= cfg.tol_outer:
            converged = True
            break
        rate_prev = rate
    return SolveReport(
        rate_trace=rates, crb_trace=crbs, f_trace=f_all, outer_f=f_outer, mu_trace=mus,
        final_phi=phi, final_w=w, outer_iters=t, converged=converged, stall_events=stalls,
        wall_time=time.perf_counter() - start, seed=cfg.seed, config_digest=cfg.digest(),
        inner_sweeps=sweeps)
