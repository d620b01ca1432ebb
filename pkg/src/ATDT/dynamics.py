"""Bicycle vehicle model and trajectory roll-outs"""

import logging
import math
from typing import Iterator, List, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

# Cars drive along +y, so a car driving straight has this heading
HEADING_FORWARD = math.pi / 2


class DynamicsError(ValueError):
    """Raised on physically meaningless input to the vehicle model"""


class VehicleState(NamedTuple):
    x: float
    y: float
    heading: float
    v: float
    alpha: float


class ControlInput(NamedTuple):
    # Steering angle rate
    u1: float
    # Acceleration
    u2: float


class Bounds(NamedTuple):
    alpha_max: float = 0.5
    u1_max: float = 2.0
    u2_max: float = 10.0


def _check_finite(values: Sequence[float], what: str) -> None:
    if not all(math.isfinite(value) for value in values):
        raise DynamicsError(f"Non-finite {what}: {values}")


def step(
    state: VehicleState,
    control: ControlInput,
    dt: float,
    L: float,
    bounds: Bounds = Bounds(),
) -> VehicleState:
    """Advance a car by one explicit Euler step

    The steering angle is clamped to the steering limit, and the speed can
    not become negative.

    >>> step(VehicleState(0, 0, 0, 10, 0), ControlInput(0, 0), dt=0.1, L=3)
    VehicleState(x=1.0, y=0.0, heading=0.0, v=10.0, alpha=0.0)
    """
    _check_finite(state, "state")
    _check_finite(control, "control")
    if dt <= 0:
        raise DynamicsError(f"Timestep must be positive: {dt=}")
    if L <= 0:
        raise DynamicsError(f"Axle distance must be positive: {L=}")
    if abs(control.u1) > bounds.u1_max or abs(control.u2) > bounds.u2_max:
        raise DynamicsError(f"Control outside of the bounds: {control}")

    x, y, heading, v, alpha = state

    x_next = x + v * math.cos(heading) * dt
    y_next = y + v * math.sin(heading) * dt
    heading_next = heading + v / L * math.tan(alpha) * dt
    v_next = max(0.0, v + control.u2 * dt)
    alpha_next = alpha + control.u1 * dt
    alpha_next = min(bounds.alpha_max, max(-bounds.alpha_max, alpha_next))

    return VehicleState(x_next, y_next, heading_next, v_next, alpha_next)


def step_batch(
    states: Array,
    controls: Array,
    dt: float,
    L: float,
    bounds: Bounds = Bounds(),
) -> Array:
    """Advance many cars at once, rows of `states` are x, y, heading, v, alpha

    Follows the same update and clamps as `step`.

    >>> step_batch(np.array([[0.0, 0, 0, 10, 0]]), np.zeros((1, 2)), 0.1, 3).tolist()
    [[1.0, 0.0, 0.0, 10.0, 0.0]]
    """
    states = np.asarray(states, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != 5:
        raise DynamicsError(f"States must have 5 columns: {states.shape=}")
    if controls.shape != (len(states), 2):
        raise DynamicsError(f"Expected one control per state: {controls.shape=}")
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(controls))):
        raise DynamicsError("Non-finite states or controls")
    if dt <= 0:
        raise DynamicsError(f"Timestep must be positive: {dt=}")
    if L <= 0:
        raise DynamicsError(f"Axle distance must be positive: {L=}")
    if np.any(np.abs(controls[:, 0]) > bounds.u1_max) or np.any(
        np.abs(controls[:, 1]) > bounds.u2_max
    ):
        raise DynamicsError("Control outside of the bounds")

    x, y, heading, v, alpha = states.T
    u1, u2 = controls.T

    result = np.empty_like(states)
    result[:, 0] = x + v * np.cos(heading) * dt
    result[:, 1] = y + v * np.sin(heading) * dt
    result[:, 2] = heading + v / L * np.tan(alpha) * dt
    result[:, 3] = np.maximum(0.0, v + u2 * dt)
    result[:, 4] = np.clip(alpha + u1 * dt, -bounds.alpha_max, bounds.alpha_max)
    return result


class Trajectory:
    """A time indexed sequence of car states and the controls between them

    states has shape (T+1, 5) with columns x, y, heading, v, alpha, and
    controls has shape (T, 2) with columns u1, u2.
    """

    def __init__(self, dt: float, states: Array, controls: Array) -> None:
        self.dt = float(dt)
        self.states = np.array(states, dtype=np.float64)
        self.controls = np.array(controls, dtype=np.float64)

        # Trajectories are values, nobody gets to change them
        self.states.setflags(write=False)
        self.controls.setflags(write=False)

        self.validate()

    def validate(self) -> None:
        """Validate the shape of the trajectory"""
        if self.dt <= 0:
            raise DynamicsError(f"Timestep must be positive: {self.dt=}")
        if self.states.ndim != 2 or self.states.shape[1] != 5:
            raise DynamicsError(f"States must have 5 columns: {self.states.shape=}")
        if self.controls.ndim != 2 or self.controls.shape[1] != 2:
            msg = f"Controls must have 2 columns: {self.controls.shape=}"
            raise DynamicsError(msg)
        if len(self.states) != len(self.controls) + 1:
            msg = f"Expected one more state than controls: {len(self.states)=}, {len(self.controls)=}"
            raise DynamicsError(msg)
        if not np.all(np.isfinite(self.states)):
            raise DynamicsError("Trajectory contains non-finite states")

    @classmethod
    def from_steps(
        cls,
        dt: float,
        states: Sequence[VehicleState],
        controls: Sequence[ControlInput],
    ) -> "Trajectory":
        return cls(
            dt,
            np.array(states, dtype=np.float64).reshape(-1, 5),
            np.array(controls, dtype=np.float64).reshape(-1, 2),
        )

    @property
    def horizon(self) -> int:
        return len(self.controls)

    @property
    def x(self) -> Array:
        return self.states[:, 0]

    @property
    def y(self) -> Array:
        return self.states[:, 1]

    @property
    def heading(self) -> Array:
        return self.states[:, 2]

    @property
    def v(self) -> Array:
        return self.states[:, 3]

    @property
    def alpha(self) -> Array:
        return self.states[:, 4]

    def state(self, t: int) -> VehicleState:
        return VehicleState(*(float(value) for value in self.states[t]))

    def control(self, t: int) -> ControlInput:
        return ControlInput(*(float(value) for value in self.controls[t]))

    def steps(self) -> Iterator[VehicleState]:
        for t in range(len(self.states)):
            yield self.state(t)

    def is_feasible(
        self, L: float, bounds: Bounds = Bounds(), atol: float = 1e-9
    ) -> bool:
        """Check that every state follows from the previous one"""
        for t in range(self.horizon):
            try:
                expected = step(self.state(t), self.control(t), self.dt, L, bounds)
            except DynamicsError:
                return False
            if not np.allclose(expected, self.states[t + 1], rtol=0, atol=atol):
                return False
        return True

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            msg = f"Unsupported comparison between Trajectory and {type(other)}"
            raise NotImplementedError(msg)
        return (
            self.dt == other.dt
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.controls, other.controls)
        )

    def __hash__(self) -> int:
        return hash((self.dt, self.states.tobytes(), self.controls.tobytes()))

    def __repr__(self) -> str:
        start = self.state(0)
        end = self.state(self.horizon)
        return f"Trajectory(dt={self.dt}, T={self.horizon}, start={start}, end={end})"


def rollout(
    s0: VehicleState,
    controls: Sequence[ControlInput],
    dt: float,
    L: float,
    bounds: Bounds = Bounds(),
) -> Trajectory:
    """Apply a control sequence to a starting state"""
    if not controls:
        raise DynamicsError("A roll-out needs at least one control input")

    states: List[VehicleState] = [VehicleState(*s0)]
    for control in controls:
        states.append(step(states[-1], control, dt, L, bounds))

    return Trajectory.from_steps(dt, states, controls)


def reference_step(
    state: VehicleState,
    control: ControlInput,
    dt: float,
    L: float,
    substeps: Optional[int] = None,
) -> VehicleState:
    """Integrate one step of the model with many small Euler sub-steps

    Used to check the accuracy of `step`; no clamping is applied.
    """
    n = substeps if substeps else max(1, int(round(dt / 1e-4)))
    h = dt / n
    x, y, heading, v, alpha = state
    for _ in range(n):
        x, y, heading, v, alpha = (
            x + v * math.cos(heading) * h,
            y + v * math.sin(heading) * h,
            heading + v / L * math.tan(alpha) * h,
            v + control.u2 * h,
            alpha + control.u1 * h,
        )
    return VehicleState(x, y, heading, v, alpha)
