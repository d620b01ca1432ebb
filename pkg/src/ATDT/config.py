"""
Run configuration

All constants of the simulation, the learner models and the teaching
algorithms live here, with the defaults of the reference run.
"""

import json
import logging
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

Vector5 = Tuple[float, float, float, float, float]

# The hyperparameter grid {10^-5, ..., 10^5}
DEFAULT_GRID: Tuple[float, ...] = tuple(10.0**e for e in range(-5, 6))


class SimulationConfig(BaseModel):
    """Road geometry and vehicle dynamics constants"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dt: float = Field(0.1, gt=0)
    horizon: int = Field(50, gt=0)
    axle_length: float = Field(3.0, gt=0)
    alpha_max: float = Field(0.5, gt=0)
    u1_max: float = Field(2.0, gt=0)
    u2_max: float = Field(10.0, gt=0)
    lane_width: float = Field(4.0, gt=0)
    robot_v0: float = Field(50.0, ge=0)
    # Distance ahead of the start line at which the drive-forward goal sits
    goal_lead: float = Field(1000.0, gt=0)


class FeatureConfig(BaseModel):
    """Reward feature constants"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(1.0, gt=0, le=1)
    # Standard deviations of the proximity kernel, default 2w and w/2
    sigma_major: Optional[float] = Field(None, gt=0)
    sigma_minor: Optional[float] = Field(None, gt=0)
    # Per-dimension weights of the Euclidean state distance
    euclid_scale: Vector5 = (1.0, 1.0, 1.0, 1.0, 1.0)

    def sigmas(self, lane_width: float) -> Tuple[float, float]:
        major = self.sigma_major if self.sigma_major else 2 * lane_width
        minor = self.sigma_minor if self.sigma_minor else lane_width / 2
        return major, minor


# Constant acceleration of each speed profile kind
SPEED_KINDS: Dict[str, float] = {
    "strong-brake": -10.0,
    "brake": -6.0,
    "mild-brake": -3.0,
    "ease-off": -1.5,
    "ease-on": 1.5,
    "mild-accel": 3.0,
    "accel": 6.0,
    "strong-accel": 10.0,
}
# Seconds during which a speed profile accelerates, the last spans the horizon
SPEED_DURATIONS: Tuple[float, ...] = (1.5, 3.0, 5.0)


def default_speed_profiles() -> Dict[str, Tuple[float, float]]:
    """Every speed profile kind for every duration, plus holding the speed

    >>> profiles = default_speed_profiles()
    >>> len(profiles)
    25
    >>> profiles["strong-accel-5s"]
    (10.0, 5.0)
    """
    profiles: Dict[str, Tuple[float, float]] = dict()
    for kind, acceleration in SPEED_KINDS.items():
        if acceleration > 0 and "hold" not in profiles:
            profiles["hold"] = (0.0, 0.0)
        for duration in SPEED_DURATIONS:
            profiles[f"{kind}-{duration:g}s"] = (acceleration, duration)
    return profiles


class ManeuverConfig(BaseModel):
    """Maneuver template grid and the lane tracking controller"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Lane change start, as a fraction of the horizon
    lane_change_timings: Dict[str, float] = {
        "early": 0.0,
        "soon": 0.15,
        "mid": 0.3,
        "late": 0.45,
        "last": 0.6,
    }
    # Piecewise-constant acceleration: (acceleration, duration in seconds)
    speed_profiles: Dict[str, Tuple[float, float]] = Field(
        default_factory=default_speed_profiles
    )
    lateral_gain: float = Field(1.0, gt=0)
    heading_gain: float = Field(3.0, gt=0)
    max_heading_offset: float = Field(0.3, gt=0)
    refine: bool = False
    refine_knots: int = Field(5, gt=0)
    refine_iterations: int = Field(20, ge=0)
    refine_step: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def valid_grid(self) -> "ManeuverConfig":
        if not self.speed_profiles:
            raise ValueError("The maneuver grid needs at least one speed profile")
        for name, fraction in self.lane_change_timings.items():
            if not 0 <= fraction < 1:
                msg = f"Lane change timing {name}={fraction} outside of [0, 1)"
                raise ValueError(msg)
        return self


class RunConfig(BaseModel):
    """Complete configuration of a run"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    candidate_theta_count: int = Field(100, gt=0)
    theta_lower: Vector5 = (-128.0, -1.0, -2.0, -1.0, -1.0)
    theta_upper: Vector5 = (0.0, 0.0, 0.0, 0.0, 0.0)
    pool_mode: str = Field("sample", pattern="^(sample|full)$")
    pool_per_class: int = Field(100, gt=0)
    hyperparameter_grid: Tuple[float, ...] = DEFAULT_GRID
    # Fixed tau/lambda per model id, calibrated when missing
    hyperparameters: Dict[str, float] = {}
    min_increase: float = Field(0.1, ge=0)
    epsilon: float = Field(0.01, ge=0)
    max_examples: int = Field(10, gt=0, le=10)
    baseline_samples: int = Field(1000, gt=0)
    baseline_length: int = Field(8, gt=0)
    reward_gap_factor: float = Field(0.5, gt=0)
    reward_gap_threshold: Optional[float] = Field(None, gt=0)
    test_budget: Optional[int] = Field(None, gt=0)
    # Look for test environments outside of the pool when the pool has none
    test_catalog_fallback: bool = True
    coverage_model: str = "det-euclid"
    out_dir: str = "atdt-out"
    simulation: SimulationConfig = SimulationConfig()
    features: FeatureConfig = FeatureConfig()
    maneuvers: ManeuverConfig = ManeuverConfig()

    @model_validator(mode="after")
    def valid_run(self) -> "RunConfig":
        for low, high in zip(self.theta_lower, self.theta_upper):
            if low > high:
                raise ValueError(f"theta bounds out of order: {low} > {high}")
        if not self.hyperparameter_grid:
            raise ValueError("The hyperparameter grid is empty")
        if any(value <= 0 for value in self.hyperparameter_grid):
            raise ValueError("Hyperparameter grid values must be positive")
        if any(value < 0 for value in self.hyperparameters.values()):
            raise ValueError("Hyperparameters must not be negative")
        return self


def _parse_value(raw: str) -> Any:
    """Interpret a config value as JSON, falling back to a plain string

    >>> _parse_value("0.5")
    0.5
    >>> _parse_value("[1, 2]")
    [1, 2]
    >>> _parse_value("sample")
    'sample'
    """
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> Dict[str, Any]:
    """Parse flat 'key = value' lines into a nested dictionary

    Dotted keys address the nested sections, e.g. 'simulation.dt = 0.05'.
    Lines starting with '#' are comments.

    >>> parse_config_text("seed = 3\\nsimulation.dt = 0.05")
    {'seed': 3, 'simulation': {'dt': 0.05}}
    """
    fields: Dict[str, Any] = dict()
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"Line {number} is not a 'key = value' pair: {line}")
        key, value = (part.strip() for part in line.split("=", 1))
        section = fields
        *parents, name = key.split(".")
        for parent in parents:
            section = section.setdefault(parent, dict())
        section[name] = _parse_value(value)
    return fields


def load_config(
    path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None
) -> RunConfig:
    """Load the run configuration

    Values come from the defaults, then the config file, then the
    ATDT_SEED and ATDT_OUT environment variables.
    """
    fields: Dict[str, Any] = dict()
    if path is not None:
        with open(path) as fin:
            fields = parse_config_text(fin.read())
        logger.debug(f"Read config from {path=}")

    env = os.environ if environ is None else environ
    if "ATDT_SEED" in env:
        fields["seed"] = int(env["ATDT_SEED"])
    if "ATDT_OUT" in env:
        fields["out_dir"] = env["ATDT_OUT"]

    return RunConfig(**fields)
