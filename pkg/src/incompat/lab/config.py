"""Experiment configuration: a JSON document mapped onto frozen dataclasses.

Unknown keys are rejected at every level.  Example::

    {
      "ambient": "sphere",
      "grid": {"n_u": 64, "n_v": 64},
      "h_spec": {"name": "trig", "seed": 1, "params": {"amplitude": 0.4}},
      "eps_list": [0.2, 0.1, 0.05, 0.025],
      "mode": "recovery"
    }
"""
from dataclasses import asdict, dataclass, field, fields, is_dataclass
import json
import math

from ..exceptions import ConfigError, DomainError
from ..generators import H_GENERATORS
from ..grid import PLANE, SPHERE, ChartGrid
from ..optimize import DescentOptions

DEFAULT_RANGES = {
    SPHERE: ((0.5, math.pi - 0.5), (0.0, 1.5)),
    PLANE: ((0.0, 1.0), (0.0, 1.0)),
}


@dataclass(frozen=True)
class GridSpec:
    n_u: int = 48
    n_v: int = 48
    u_range: tuple = None
    v_range: tuple = None
    order: int = 4

    def __post_init__(self):
        for name in ("n_u", "n_v", "order"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"grid.{name} must be an integer")
        for name in ("u_range", "v_range"):
            val = getattr(self, name)
            if val is not None:
                if len(val) != 2:
                    raise ConfigError(f"grid.{name} must have two entries")
                object.__setattr__(self, name, tuple(float(x) for x in val))

    def build(self, ambient):
        u_def, v_def = DEFAULT_RANGES[ambient]
        try:
            return ChartGrid(ambient, self.u_range or u_def, self.v_range or v_def, self.n_u, self.n_v, self.order)
        except DomainError as exc:
            raise ConfigError(f"invalid grid: {exc}") from None


@dataclass(frozen=True)
class HSpec:
    name: str = "trig"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in H_GENERATORS:
            raise ConfigError(f"unknown h generator {self.name!r}; expected one of {', '.join(H_GENERATORS)}")
        if not isinstance(self.params, dict):
            raise ConfigError("h_spec.params must be an object")


@dataclass(frozen=True)
class RigiditySpec:
    trials: int = 20
    amplitudes: tuple = (0.05, 0.1, 0.2)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.trials <= 0 or not all(0 <= a <= 0.5 for a in self.amplitudes):
            raise ConfigError("rigidity needs a positive trial count and amplitudes in [0, 0.5]")


@dataclass(frozen=True)
class FamilySpec:
    size: int = 12
    amplitude: float = 0.4
    max_modes: int = 3

    def __post_init__(self):
        if self.size <= 0 or self.max_modes <= 0 or self.amplitude <= 0:
            raise ConfigError("family size, amplitude and max_modes must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    ambient: str = SPHERE
    grid: GridSpec = GridSpec()
    h_spec: HSpec = HSpec()
    eps_list: tuple = (0.2, 0.1, 0.05, 0.025)
    mode: str = "recovery"
    displacement: str = "minimizer"
    optimizer: DescentOptions = DescentOptions()
    solver_tol: float = 1e-12
    rigidity: RigiditySpec = RigiditySpec()
    family: FamilySpec = FamilySpec()
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        if self.ambient not in (SPHERE, PLANE):
            raise ConfigError(f"ambient must be 'sphere' or 'plane', got {self.ambient!r}")
        if not self.eps_list:
            raise ConfigError("eps_list must not be empty")
        if any(not 0 < e <= 0.5 for e in self.eps_list):
            raise ConfigError("every eps must lie in (0, 0.5]")
        if any(a <= b for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
        if self.mode not in ("recovery", "minimize"):
            raise ConfigError("mode must be 'recovery' or 'minimize'")
        if self.displacement not in ("minimizer", "zero"):
            raise ConfigError("displacement must be 'minimizer' or 'zero'")
        if not self.solver_tol > 0:
            raise ConfigError("solver_tol must be positive")

    def build_grid(self):
        return self.grid.build(self.ambient)

    def with_seed(self, seed):
        """Copy with the experiment seed (``h_spec`` and optimizer) replaced."""
        h = HSpec(self.h_spec.name, seed, dict(self.h_spec.params))
        opt = DescentOptions(**{**asdict(self.optimizer), "seed": seed})
        return _replace(self, h_spec=h, optimizer=opt)

    def to_dict(self):
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data):
        return _build(cls, data, "config")


def _replace(obj, **changes):
    vals = {f.name: getattr(obj, f.name) for f in fields(obj)}
    vals.update(changes)
    return type(obj)(**vals)


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


_NESTED = {"grid": GridSpec, "h_spec": HSpec, "optimizer": DescentOptions, "rigidity": RigiditySpec,
           "family": FamilySpec}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for key, val in data.items():
        if key in _NESTED and cls is ExperimentConfig:
            val = _build(_NESTED[key], val, f"{where}.{key}")
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def parse_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


def serialize_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
