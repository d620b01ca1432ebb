from pydantic import BaseModel, model_validator
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .dynamics import Trajectory
from .environment import EnvClass, EnvironmentSpec, Goal, Lane, Variant
from .learner import Belief
from .optimizer import StrategyLabel
from .teaching import SequenceEntry, TeachingSequence


class EnvironmentSpecModel(BaseModel):
    """Pydantic wrapper around EnvironmentSpec"""

    goal: Goal
    offset: int
    lane: Lane
    v0: int
    accel_time: float = 0.0
    vf: Optional[int] = None

    @model_validator(mode="after")
    def valid_spec(self) -> "EnvironmentSpecModel":
        """Validate that the environment lies on the parameter grid"""
        self.to_spec().validate()
        return self

    @classmethod
    def from_spec(cls, spec: EnvironmentSpec) -> "EnvironmentSpecModel":
        return cls(**spec._asdict())

    def to_spec(self) -> EnvironmentSpec:
        return EnvironmentSpec(**self.model_dump())


class TrajectoryModel(BaseModel):
    """Pydantic wrapper around Trajectory"""

    dt: float
    states: List[Tuple[float, float, float, float, float]]
    controls: List[Tuple[float, float]]

    @model_validator(mode="after")
    def valid_trajectory(self) -> "TrajectoryModel":
        self.to_trajectory()
        return self

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "TrajectoryModel":
        return cls(
            dt=traj.dt,
            states=traj.states.tolist(),
            controls=traj.controls.tolist(),
        )

    def to_trajectory(self) -> Trajectory:
        return Trajectory(
            self.dt,
            np.array(self.states, dtype=np.float64).reshape(-1, 5),
            np.array(self.controls, dtype=np.float64).reshape(-1, 2),
        )


class StrategyLabelModel(BaseModel):
    env_class: EnvClass
    variant: Variant
    fallback: bool = False

    @classmethod
    def from_label(cls, label: StrategyLabel) -> "StrategyLabelModel":
        return cls(**label._asdict())

    def to_label(self) -> StrategyLabel:
        return StrategyLabel(self.env_class, self.variant, self.fallback)


class SequenceEntryModel(BaseModel):
    environment: EnvironmentSpecModel
    trajectory: TrajectoryModel
    label: StrategyLabelModel

    @classmethod
    def from_entry(cls, entry: SequenceEntry) -> "SequenceEntryModel":
        return cls(
            environment=EnvironmentSpecModel.from_spec(entry.spec),
            trajectory=TrajectoryModel.from_trajectory(entry.trajectory),
            label=StrategyLabelModel.from_label(entry.label),
        )

    def to_entry(self) -> SequenceEntry:
        return SequenceEntry(
            self.environment.to_spec(),
            self.trajectory.to_trajectory(),
            self.label.to_label(),
        )


class TeachingSequenceModel(BaseModel):
    """Pydantic wrapper around TeachingSequence"""

    generator: str
    trace_model: str
    hyperparameter: Optional[float] = None
    flagged: bool = False
    posterior_trace: List[float]
    entries: List[SequenceEntryModel]
    uncovered: List[Tuple[EnvClass, Variant]] = list()

    @model_validator(mode="after")
    def valid_sequence(self) -> "TeachingSequenceModel":
        self.to_sequence()
        return self

    @classmethod
    def from_sequence(cls, sequence: TeachingSequence) -> "TeachingSequenceModel":
        return cls(
            generator=sequence.generator,
            trace_model=sequence.trace_model,
            hyperparameter=sequence.hyperparameter,
            flagged=sequence.flagged,
            posterior_trace=sequence.posterior_trace,
            entries=[SequenceEntryModel.from_entry(e) for e in sequence.entries],
            uncovered=sequence.uncovered,
        )

    def to_sequence(self) -> TeachingSequence:
        return TeachingSequence(
            [entry.to_entry() for entry in self.entries],
            generator=self.generator,
            posterior_trace=self.posterior_trace,
            trace_model=self.trace_model,
            hyperparameter=self.hyperparameter,
            uncovered=self.uncovered,
            flagged=self.flagged,
        )


class BeliefRowModel(BaseModel):
    theta: Tuple[float, float, float, float, float]
    mass: float
    target: bool = False

    @classmethod
    def from_belief(cls, belief: Belief) -> List["BeliefRowModel"]:
        return [
            cls(theta=theta, mass=mass, target=i == belief.target)
            for i, (theta, mass) in enumerate(belief.rows())
        ]


class TrajectoryBundleModel(BaseModel):
    """Trajectories shown together in one environment"""

    environment: EnvironmentSpecModel
    trajectories: List[TrajectoryModel]
    labels: List[StrategyLabelModel]
    # Position of the optimal trajectory of theta*, when known
    correct: Optional[int] = None

    @model_validator(mode="after")
    def valid_bundle(self) -> "TrajectoryBundleModel":
        if len(self.labels) != len(self.trajectories):
            raise ValueError("Every trajectory in a bundle needs a label")
        if self.correct is not None and not 0 <= self.correct < len(self.trajectories):
            raise ValueError(f"Correct option out of range: {self.correct}")
        return self


class RunManifest(BaseModel):
    """Configuration and content digests of every output of a run"""

    version: str
    config: RunConfig
    # command -> file name -> sha256 digest
    outputs: Dict[str, Dict[str, str]] = dict()
