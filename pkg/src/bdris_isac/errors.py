"""Exception types raised by the solver stack."""


class BdrisError(Exception):
    """Base class for all package errors."""


class ConfigError(BdrisError, ValueError):
    """Invalid configuration value or malformed config file."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class NonRepairable(BdrisError):
    """A scattering block is too far from unitary to be repaired."""


class SingularFim(BdrisError):
    """The angle is not identifiable: the Fisher information is singular."""


class DegenerateWeight(BdrisError):
    """WMMSE weight denominator collapsed to zero."""


class SingularSystem(BdrisError):
    """Regularized beamformer system cannot be solved."""


class Infeasible(BdrisError):
    """CRB at or above the threshold; the log-barrier is undefined there."""


class StepStalled(BdrisError):
    """Line search exhausted its halvings without sufficient increase."""


class NoFeasiblePoint(BdrisError):
    """No scattering matrix meeting the CRB threshold was found."""

    def __init__(self, message, best_crb):
        self.best_crb = best_crb
        super().__init__(f"{message} (best CRB {best_crb:.6g})")
