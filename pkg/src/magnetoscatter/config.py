"""
Scenario files.

A scenario is one JSON document; every block is validated here so the
numerical modules can assume their preconditions.
"""
from __future__ import annotations

import json
from typing import Any, List, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from twisted.python.filepath import FilePath

from .errors import ConfigError, FieldError
from .grid import Grid, SigmaParams, makeGrid
from .potentials import Bump, PotentialSet, buildPotentials

EXPERIMENTS = (
    "free_identity",
    "conservation",
    "splitting_order",
    "scattering",
    "thm13_sweep",
    "high_velocity",
    "recover_a",
    "recover_av",
)

Experiment = Literal[
    "free_identity",
    "conservation",
    "splitting_order",
    "scattering",
    "thm13_sweep",
    "high_velocity",
    "recover_a",
    "recover_av",
]


class Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridBlock(Block):
    n: Literal[1, 2]
    N: int = Field(ge=8)
    L: float = Field(gt=0)

    @field_validator("N")
    @classmethod
    def evenPoints(cls, value: int) -> int:
        if value % 2:
            raise ValueError("points per axis must be even")
        return value

    def build(self) -> Grid:
        return makeGrid(self.n, self.N, self.L)


class BumpBlock(Block):
    component: Literal["A1", "A2", "V"]
    center: List[float]
    amplitude: float
    widths: List[float]
    derivative: Optional[int] = Field(default=None, ge=1, le=2)

    @model_validator(mode="after")
    def matchingDimensions(self) -> BumpBlock:
        if len(self.center) != len(self.widths):
            raise ValueError("center and widths differ in length")
        if min(self.widths, default=0.0) <= 0:
            raise ValueError("widths must be positive")
        return self

    def build(self) -> Bump:
        return Bump(self.component, tuple(self.center), self.amplitude,
                    tuple(self.widths), self.derivative)


class GaugeBlock(Block):
    """
    M{chi} for a pure-gauge comparison run, M{A = grad chi}.
    """

    center: List[float]
    amplitude: float
    widths: List[float]


class PotentialBlock(Block):
    bumps: List[BumpBlock] = []
    decayRate: float = Field(default=1.0, gt=0)
    gauge: Optional[GaugeBlock] = None

    def build(self, grid: Grid) -> PotentialSet:
        return buildPotentials([b.build() for b in self.bumps], grid,
                               self.decayRate)


class InitialBlock(Block):
    """
    A Gaussian wave packet M{a exp(-|x - c|^2 / 2w^2 + i k.x)}.
    """

    amplitude: float = Field(default=1.0, gt=0)
    width: float = Field(default=1.0, gt=0)
    center: Optional[List[float]] = None
    momentum: Optional[List[float]] = None


class DynamicsBlock(Block):
    p: float = Field(default=3.0, gt=1)
    nonlinearity: float = Field(default=1.0, ge=0)
    dt: float = Field(default=1e-3, gt=0)
    T: float = Field(default=1.0, ge=0)
    Tscat: float = Field(default=5.0, gt=0)
    includeV: bool = True
    checkpointStride: int = Field(default=0, ge=0)
    recordStride: int = Field(default=100, ge=1)
    orderSteps: List[float] = [4e-3, 2e-3, 1e-3]
    decayTimes: List[float] = []

    @field_validator("orderSteps")
    @classmethod
    def decreasingSteps(cls, value: List[float]) -> List[float]:
        if len(value) < 2 or any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("need at least two strictly decreasing steps")
        return value


class ScatteringBlock(Block):
    amplitude: float = Field(default=1e-2, gt=0)
    normAmplitude: float = Field(default=1e-3, gt=0)
    picardStep: Optional[float] = Field(default=None, gt=0)
    maxIterations: int = Field(default=50, ge=1)
    tolerance: float = Field(default=1e-13, gt=0)
    smallness: Optional[float] = Field(default=None, gt=0)


class ProbesBlock(Block):
    angles: int = Field(default=32, ge=1)
    offsets: int = Field(default=65, ge=3)
    offsetRange: float = Field(default=6.0, gt=0)
    xiLadder: List[float] = [8.0, 16.0, 32.0]
    epsLadder: List[float] = [0.1, 0.05, 0.025, 0.0125, 0.00625]
    sigma: float = Field(default=0.4, gt=0)
    frame: Literal["comoving", "lab"] = "comoving"
    asymptoticTime: Optional[float] = Field(default=None, gt=0)
    timeStep: Optional[float] = Field(default=None, gt=0)
    rays: List[Tuple[float, float]] = [(0.0, 0.5), (0.7853981633974483, 0.0)]
    probePairs: int = Field(default=5, ge=1)

    @field_validator("offsets")
    @classmethod
    def oddOffsets(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("offset count must be odd")
        return value

    @field_validator("xiLadder")
    @classmethod
    def increasingSpeeds(cls, value: List[float]) -> List[float]:
        if not value or min(value) <= 0:
            raise ValueError("speeds must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("speeds must increase")
        return value

    @field_validator("epsLadder")
    @classmethod
    def decreasingAmplitudes(cls, value: List[float]) -> List[float]:
        if len(value) < 2:
            raise ValueError("need at least two amplitudes")
        if min(value) <= 0 or any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("amplitudes must be positive and decrease")
        return value


class ReconstructionBlock(Block):
    angles: int = Field(default=90, ge=1)
    offsets: int = Field(default=129, ge=3)
    offsetRange: float = Field(default=6.0, gt=0)

    @field_validator("offsets")
    @classmethod
    def oddOffsets(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("offset count must be odd")
        return value


class SigmaBlock(Block):
    s: float
    s1: float
    s2: float


class VerifyBlock(Block):
    suites: Optional[List[str]] = None
    fault: Optional[Literal["propagator-sign"]] = None


class ScenarioConfig(Block):
    grid: GridBlock
    potential: PotentialBlock = PotentialBlock()
    initial: InitialBlock = InitialBlock()
    dynamics: DynamicsBlock = DynamicsBlock()
    scattering: ScatteringBlock = ScatteringBlock()
    probes: ProbesBlock = ProbesBlock()
    reconstruction: ReconstructionBlock = ReconstructionBlock()
    weights: Optional[SigmaBlock] = None
    verify: VerifyBlock = VerifyBlock()
    experiment: Optional[Experiment] = None
    output: Optional[str] = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def consistentDimensions(self) -> ScenarioConfig:
        n = self.grid.n
        for index, bump in enumerate(self.potential.bumps):
            if len(bump.center) != n:
                raise ValueError(
                    f"potential.bumps.{index} is {len(bump.center)}-"
                    f"dimensional on an {n}-dimensional grid"
                )
            if bump.component == "A2" and n == 1:
                raise ValueError(f"potential.bumps.{index}: no A2 when n=1")
        for name in ("center", "momentum"):
            value = getattr(self.initial, name)
            if value is not None and len(value) != n:
                raise ValueError(f"initial.{name} must have {n} entries")
        if self.weights is not None:
            try:
                SigmaParams(self.weights.s, self.weights.s1,
                            self.weights.s2).validate(n)
            except FieldError as error:
                raise ValueError(f"weights: {error}") from error
        return self

    def buildGrid(self) -> Grid:
        return self.grid.build()

    def sigmaParams(self) -> SigmaParams:
        if self.weights is None:
            return SigmaParams.forDimension(self.grid.n)
        return SigmaParams(self.weights.s, self.weights.s1, self.weights.s2)


def _problems(error: ValidationError) -> List[str]:
    return [
        ".".join(str(part) for part in each["loc"]) + ": " + each["msg"]
        if each["loc"] else each["msg"]
        for each in error.errors()
    ]


def parseConfig(document: Any) -> ScenarioConfig:
    """
    Validate an already-decoded scenario.

    @raise ConfigError: listing every problem with its dotted field path.
    """
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as error:
        raise ConfigError(_problems(error)) from error


def loadConfig(path: FilePath) -> ScenarioConfig:
    try:
        document = json.loads(path.getContent())
    except (OSError, ValueError) as error:
        raise ConfigError([f"{path.path}: {error}"]) from error
    return parseConfig(document)
