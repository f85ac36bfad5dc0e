"""YAML config files for solves and sweeps.

Config files use the field names of :class:`SystemConfig`, except that
powers are given in dBm (``p_max_dbm``, ``p_tar_dbm``, ``sigma2_bs_dbm``,
``sigma2_ue_dbm``), the reference path loss in dB (``pl_ref_db``) and the
target angle in degrees (``theta_deg``). See ``configs/README.md``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .scenario import BarrierSchedule, StepSchedule, SystemConfig, db_to_linear, dbm_to_watts

REQUIRED = (
    "n_tx", "n_rx", "n_ue", "m_elements", "n_groups", "l_slots",
    "p_max_dbm", "p_tar_dbm", "sigma2_bs_dbm", "sigma2_ue_dbm", "delta_max",
    "dist_bs_ris", "dist_ris_ue", "dist_ris_tar", "dist_bs_ue",
    "alpha_bs_ris", "alpha_ris_ue", "alpha_ris_tar", "alpha_bs_ue",
)

_INT = int
_FLOAT = float
_BOOL = bool

# file key -> (SystemConfig field, parser)
_PLAIN = {
    "n_tx": _INT, "n_rx": _INT, "n_ue": _INT, "m_elements": _INT, "n_groups": _INT,
    "l_slots": _INT, "delta_max": _FLOAT,
    "dist_bs_ris": _FLOAT, "dist_ris_ue": _FLOAT, "dist_ris_tar": _FLOAT,
    "dist_bs_ue": _FLOAT, "dist_tar_ue": _FLOAT,
    "alpha_bs_ris": _FLOAT, "alpha_ris_ue": _FLOAT, "alpha_ris_tar": _FLOAT,
    "alpha_bs_ue": _FLOAT, "alpha_tar_ue": _FLOAT,
    "kappa_bs_ris": _FLOAT, "kappa_ris_ue": _FLOAT, "kappa_bs_ue": _FLOAT,
    "kappa_tar_ue": _FLOAT,
    "tol_outer": _FLOAT, "tol_inner": _FLOAT, "tol_wmmse": _FLOAT,
    "max_outer": _INT, "max_sweeps": _INT, "max_wmmse_iter": _INT,
    "seed": _INT, "tie_bs_ris_channels": _BOOL, "cancel_target_interference": _BOOL,
}
_DBM = {"p_max_dbm": "p_max", "p_tar_dbm": "p_tar", "sigma2_bs_dbm": "sigma2_bs",
        "sigma2_ue_dbm": "sigma2_ue"}
_NESTED = {"barrier": BarrierSchedule, "step": StepSchedule}
KNOWN = set(_PLAIN) | set(_DBM) | set(_NESTED) | {"pl_ref_db", "theta_deg"}


def _key_lines(text):
    """Map top-level keys to their 1-based line numbers."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _load_yaml(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise ConfigError(f"YAML parse error: {exc}", line=None if line is None else line + 1)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of field: value")
    return data


def _convert(parser, value, key, line):
    if parser is _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", field=key, line=line)
        return value
    if isinstance(value, str):
        # YAML 1.1 leaves forms like 1e4 unresolved
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=key, line=line)
    if parser is _INT:
        if int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", field=key, line=line)
        return int(value)
    return float(value)


def config_from_mapping(data, lines=None, require=True) -> SystemConfig:
    """Build a SystemConfig from a parsed file mapping."""
    lines = lines or {}
    unknown = sorted(set(data) - KNOWN)
    if unknown:
        raise ConfigError("unknown field", field=unknown[0], line=lines.get(unknown[0]))
    if require:
        for key in REQUIRED:
            if key not in data:
                raise ConfigError("missing required field", field=key)
    kwargs = {}
    for key, value in data.items():
        line = lines.get(key)
        if key in _PLAIN:
            kwargs[key] = _convert(_PLAIN[key], value, key, line)
        elif key in _DBM:
            if key == "sigma2_ue_dbm" and isinstance(value, list):
                kwargs["sigma2_ue"] = tuple(dbm_to_watts(_convert(_FLOAT, v, key, line)) for v in value)
            else:
                kwargs[_DBM[key]] = dbm_to_watts(_convert(_FLOAT, value, key, line))
        elif key == "pl_ref_db":
            kwargs["pl_ref"] = db_to_linear(_convert(_FLOAT, value, key, line))
        elif key == "theta_deg":
            kwargs["theta_true"] = math.radians(_convert(_FLOAT, value, key, line))
        else:
            cls = _NESTED[key]
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", field=key, line=line)
            names = {f.name: f.type for f in dataclasses.fields(cls)}
            sub = {}
            for name, v in value.items():
                if name not in names:
                    raise ConfigError("unknown field", field=f"{key}.{name}", line=line)
                sub[name] = _convert(_INT if name == "max_halvings" else _FLOAT, v,
                                     f"{key}.{name}", line)
            kwargs[key] = cls(**sub)
    if "barrier" not in kwargs and "tol_inner" in kwargs:
        kwargs["barrier"] = BarrierSchedule(tau_cap=1.0 / kwargs["tol_inner"])
    try:
        return SystemConfig(**kwargs)
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            file_key = next((k for k, v in _DBM.items() if v == exc.field), exc.field)
            raise ConfigError(str(exc).split("] ", 1)[-1], field=exc.field,
                              line=lines.get(file_key)) from None
        raise


def load_config(path) -> SystemConfig:
    text = Path(path).read_text()
    return config_from_mapping(_load_yaml(text), _key_lines(text))


def config_to_mapping(cfg: SystemConfig):
    """Inverse of :func:`config_from_mapping` (file units)."""
    from .scenario import watts_to_dbm

    out = {}
    for key in _PLAIN:
        out[key] = getattr(cfg, key)
    for key, name in _DBM.items():
        value = getattr(cfg, name)
        out[key] = [watts_to_dbm(v) for v in value] if isinstance(value, tuple) else watts_to_dbm(value)
    out["pl_ref_db"] = 10.0 * math.log10(cfg.pl_ref)
    out["theta_deg"] = math.degrees(cfg.theta_true)
    out["barrier"] = dataclasses.asdict(cfg.barrier)
    out["step"] = dataclasses.asdict(cfg.step)
    return out


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(config_to_mapping(cfg), sort_keys=False)


AXES = ("p_max_dbm", "m_elements", "n_groups", "delta_max", "seed")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    trials_per_value: int
    base: SystemConfig
    output_path: Path

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}", field="axis")
        if not self.values:
            raise ConfigError("must be nonempty", field="values")
        if self.axis != "seed" and any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("must be strictly increasing", field="values")
        if self.trials_per_value < 1:
            raise ConfigError("must be >= 1", field="trials_per_value")

    def trial_config(self, value, trial) -> SystemConfig:
        """Config for one ``(value, trial)`` cell; trial seeds match across values."""
        cfg = self.base
        if self.axis == "seed":
            return cfg.replace(seed=int(value) + trial)
        cfg = cfg.replace(seed=cfg.seed + trial)
        if self.axis == "p_max_dbm":
            return cfg.replace(p_max=dbm_to_watts(float(value)))
        if self.axis == "delta_max":
            return cfg.replace(delta_max=float(value))
        if self.axis == "m_elements":
            return cfg.replace(m_elements=int(value))
        return cfg.replace(n_groups=int(value))


def load_sweep(path) -> SweepSpec:
    """Read a sweep file: ``axis``, ``values``, ``trials_per_value``,
    ``output_path`` and either ``base_config`` (a path relative to the sweep
    file) or an inline ``base`` mapping."""
    path = Path(path)
    text = path.read_text()
    data = _load_yaml(text)
    lines = _key_lines(text)
    allowed = {"axis", "values", "trials_per_value", "base_config", "base", "output_path"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError("unknown field", field=unknown[0], line=lines.get(unknown[0]))
    for key in ("axis", "values"):
        if key not in data:
            raise ConfigError("missing required field", field=key)
    if "base_config" in data:
        base = load_config(path.parent / data["base_config"])
    elif "base" in data:
        base = config_from_mapping(data["base"] or {}, require=False)
    else:
        raise ConfigError("missing required field", field="base_config")
    values = data["values"]
    if not isinstance(values, list):
        raise ConfigError("expected a list", field="values", line=lines.get("values"))
    for v in values:
        _convert(_FLOAT, v, "values", lines.get("values"))
    trials = _convert(_INT, data.get("trials_per_value", 1), "trials_per_value",
                      lines.get("trials_per_value"))
    out = Path(data.get("output_path", path.with_suffix(".csv").name))
    if not out.is_absolute():
        out = path.parent / out
    return SweepSpec(axis=data["axis"], values=tuple(values), trials_per_value=trials,
                     base=base, output_path=out)
