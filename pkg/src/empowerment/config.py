"""Strict JSON run configuration: one scenario per file."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, model_validator

SCENARIOS = (
    "maze", "box", "horizon-sweep", "context", "impoverished", "channel",
    "mimo", "pendulum-map", "pendulum-control", "pendulum-scan", "correlation",
)


FILE_KEYS = ("world_file", "channel_csv", "channel_file", "model_file")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds one human-readable line per problem."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Solver(_Strict):
    epsilon: float = Field(1e-8, gt=0)
    max_iter: int = Field(500, ge=1)
    budget: int = Field(1_000_000, ge=1, description="action-sequence enumeration limit")


Method = Literal["deterministic", "ba", "impoverished"]


class _Grid(_Strict):
    horizon: int = Field(5, ge=1)
    method: Method = "deterministic"
    noise: float = Field(0.0, ge=0, lt=1)
    budget: int = Field(8, ge=1, description="kept sequences per impoverished stage")
    segments: int = Field(1, ge=1)
    solver: Solver = Solver()

    @model_validator(mode="after")
    def _method_fits_noise(self):
        if self.method == "deterministic" and self.noise > 0:
            raise ValueError("method 'deterministic' needs noise == 0; use 'ba' or 'impoverished'")
        return self


class MazeParams(_Grid):
    size: int = Field(10, ge=3)
    maze_seed: Optional[int] = Field(None, ge=0, description="defaults to the run seed")
    openness: float = Field(0.4, ge=0, le=1)
    world_file: Optional[str] = None


class BoxParams(_Grid):
    pushable: bool = False
    perceivable: bool = False
    view_radius: int = Field(7, ge=1)
    box: tuple[int, int] = (0, 0)
    bounded_size: Optional[int] = Field(None, ge=2, description="square bounded world instead of the plane")


class HorizonSweepParams(MazeParams):
    horizons: list[int] = Field(default_factory=lambda: [1, 2, 5, 10], min_length=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must all be >= 1")
        return self


class ContextParams(_Strict):
    model_file: Optional[str] = None
    random_states: int = Field(4, ge=1, le=12)
    random_actions: int = Field(2, ge=1)
    random_sensors: int = Field(2, ge=1)
    random_support: int = Field(2, ge=1, description="successors per random transition row")
    horizon: int = Field(1, ge=1)
    prior: Optional[list[float]] = None
    partition: Optional[list[int]] = None
    tol: float = Field(1e-6, ge=0)
    solver: Solver = Solver()


class ImpoverishedParams(MazeParams):
    method: Literal["impoverished"] = "impoverished"
    horizon: int = Field(3, ge=1, description="segment length")
    segments: int = Field(2, ge=1)
    start: Optional[tuple[int, int]] = None


class ChannelParams(_Strict):
    channel_csv: str
    epsilon: float = Field(1e-8, gt=0)
    max_iter: int = Field(500, ge=1)


class MCBlock(_Strict):
    n_mc: int = Field(1000, ge=1)
    epsilon: float = Field(1e-6, gt=0)
    max_iter: int = Field(500, ge=1)
    points_per_axis: int = Field(5, ge=2)


class MimoParams(_Strict):
    channel_file: Optional[str] = None
    transform: Optional[list[list[float]]] = None
    noise_cov: Optional[list[list[float]]] = None
    power: Optional[float] = Field(None, gt=0)
    mc: Optional[MCBlock] = None

    @model_validator(mode="after")
    def _source(self):
        inline = self.transform is not None
        if inline == (self.channel_file is not None):
            raise ValueError("give exactly one of channel_file or transform/noise_cov/power")
        if inline and (self.noise_cov is None or self.power is None):
            raise ValueError("inline channels need transform, noise_cov and power")
        return self


class Pendulum(_Strict):
    gravity: float = Field(9.81, gt=0)
    length: float = Field(1.0, gt=0)
    delta_t: float = Field(0.5, gt=0)
    horizon: int = Field(3, ge=1)
    power: float = Field(1.0, gt=0)
    noise_std: float = Field(0.01, gt=0)
    a_grid: int = Field(5, ge=2)
    substep: Optional[float] = Field(None, gt=0, description="integrator step, defaults to delta_t/10")


class _PGrid(_Strict):
    pendulum: Pendulum = Pendulum()
    phi_cells: int = Field(64, ge=1)
    phidot_cells: int = Field(64, ge=1)
    phidot_range: float = Field(8.0, gt=0)


class PendulumMapParams(_PGrid):
    pass


class PendulumControlParams(_Strict):
    pendulum: Pendulum = Pendulum()
    start_phi: float = 0.0
    start_phidot: float = 0.0
    steps: int = Field(300, ge=0)
    mc_rollouts: int = Field(8, ge=1)


class PendulumScanParams(_PGrid):
    delta_ts: list[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5], min_length=1)
    powers: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0, 5.0], min_length=1)
    control_steps: int = Field(300, ge=0, description="greedy run per setting; 0 disables")
    mc_rollouts: int = Field(8, ge=1)
    hold_steps: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(v <= 0 for v in self.delta_ts + self.powers):
            raise ValueError("delta_ts and powers must be > 0")
        return self


class CorrelationParams(_Strict):
    size: int = Field(10, ge=3)
    openness: float = Field(0.4, ge=0, le=1)
    horizon: int = Field(5, ge=1)
    maze_seeds: Optional[list[int]] = Field(None, description="defaults to seed .. seed+9")
    solver: Solver = Solver()


PARAMS: dict[str, type[_Strict]] = {
    "maze": MazeParams,
    "box": BoxParams,
    "horizon-sweep": HorizonSweepParams,
    "context": ContextParams,
    "impoverished": ImpoverishedParams,
    "channel": ChannelParams,
    "mimo": MimoParams,
    "pendulum-map": PendulumMapParams,
    "pendulum-control": PendulumControlParams,
    "pendulum-scan": PendulumScanParams,
    "correlation": CorrelationParams,
}


class RunConfig(_Strict):
    scenario: Literal[SCENARIOS]  # type: ignore[valid-type]
    params: dict = Field(default_factory=dict)
    output_dir: str = "out"
    seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)

    def resolved(self) -> _Strict:
        return PARAMS[self.scenario].model_validate(self.params)

    def echo(self) -> dict:
        """Full parameter set with every default filled in."""
        doc = self.model_dump(mode="json")
        doc["params"] = self.resolved().model_dump(mode="json")
        return doc


def _format(err: PydanticError, prefix: tuple = ()) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in prefix + tuple(e["loc"])) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def parse_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError([f"<root>: expected a JSON object, got {type(doc).__name__}"])
    try:
        cfg = RunConfig.model_validate(doc)
    except PydanticError as exc:
        raise ConfigError(_format(exc)) from None
    try:
        params = cfg.resolved()
    except PydanticError as exc:
        raise ConfigError(_format(exc, ("params",))) from None
    # keep the validated block so downstream code sees one canonical form
    return cfg.model_copy(update={"params": params.model_dump(mode="json")})


def load_config(path, **overrides) -> RunConfig:
    """Read, parse and validate a config file; ``overrides`` replace top-level keys."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
    if not text.strip():
        raise ConfigError([f"{path}: config file is empty"])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    if isinstance(doc, dict):
        doc.update({k: v for k, v in overrides.items() if v is not None})
        params = doc.get("params")
        if isinstance(params, dict):
            # input files are resolved relative to the config file
            for key in FILE_KEYS:
                if isinstance(params.get(key), str) and not Path(params[key]).is_absolute():
                    params[key] = str(path.parent / params[key])
    try:
        return parse_config(doc)
    except ConfigError as exc:
        raise ConfigError([_with_line(text, e, path) for e in exc.errors]) from None


def _with_line(text: str, error: str, path: Path) -> str:
    """Prefix a field error with the line of the offending key when it can be found."""
    loc = error.split(": ", 1)[0]
    keys = [k for k in loc.split(".") if not k.isdigit() and k != "<root>"]
    lines = text.splitlines()
    start = 0
    found = None
    # walk the key path so nested keys resolve below their parent
    for key in keys:
        needle = f'"{key}"'
        hit = next((i for i in range(start, len(lines)) if needle in lines[i]), None)
        if hit is None:
            break
        found = start = hit
    return f"{path}:{found + 1}: {error}" if found is not None else f"{path}: {error}"
