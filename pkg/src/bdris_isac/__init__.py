"""Joint beamforming and BD-RIS scattering design for sensing-aided downlinks."""
from .ao import SolveReport, find_feasible_init, solve_joint
from .comms import BeamformingMatrix, sum_rate
from .configio import load_config, load_sweep
from .errors import (BdrisError, ConfigError, DegenerateWeight, Infeasible, NoFeasiblePoint,
                     NonRepairable, SingularFim, SingularSystem, StepStalled)
from .scattering import ScatteringMatrix
from .scenario import BarrierSchedule, ChannelSet, StepSchedule, SystemConfig, generate_channels
from .sensing import crb_closed_form, crb_from_fim, fim
from .wmmse import wmmse_solve

__version__ = "0.1.0"
