"""
Time evolution for M{i d_t u + (H + V) u = lambda |u|^(p-1) u}.

With M{H = (grad + iA)^2} the flow is M{d_t u = i(H + V)u - i lambda
|u|^(p-1) u}.  L{evolve} uses Strang splitting: a half step of the exact free
flow M{exp(-i dt/2 |k|^2)}, one classical fourth-order Runge-Kutta step of the
remainder (magnetic, electric and nonlinear terms), and another free half
step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from twisted.logger import Logger

from .errors import GridMismatch, NumericalBlowup, ResolutionError
from .grid import Grid, Wavefunction
from .potentials import (
    Bump,
    PotentialSet,
    evaluateComponent,
    uniformPotentials,
    vectorPotentialAt,
)

log = Logger()

CFL_WARNING = 2.0
CFL_LIMIT = 10.0

Fields = Tuple[Tuple[np.ndarray, ...], Optional[np.ndarray]]


@dataclass(frozen=True)
class EvolutionSpec:
    """
    How to integrate one trajectory.
    """

    timeStep: float
    totalTime: float
    exponent: float = 3.0
    "The nonlinearity exponent p."
    nonlinearity: float = 1.0
    "Coupling lambda in front of M{|u|^(p-1) u}."
    includeNonlinearity: bool = True
    includeElectric: bool = True
    checkpointStride: int = 0
    "Keep every this many steps in the trajectory; 0 keeps only the ends."
    order: int = 2

    def __post_init__(self) -> None:
        if not self.timeStep > 0:
            raise ValueError(
                f"time step must be positive, not {self.timeStep}"
            )
        if not self.totalTime >= 0:
            raise ValueError(f"total time must be >= 0, not {self.totalTime}")
        if not self.exponent > 1:
            raise ValueError(f"exponent must exceed 1, not {self.exponent}")
        if self.order != 2:
            raise ValueError("only second-order splitting is provided")
        if self.checkpointStride < 0:
            raise ValueError("checkpoint stride must be >= 0")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.totalTime / self.timeStep - 1e-9))

    @property
    def isNonlinear(self) -> bool:
        return self.includeNonlinearity and self.nonlinearity != 0.0

    def linear(self) -> EvolutionSpec:
        return replace(self, includeNonlinearity=False)

    def lasting(self, totalTime: float) -> EvolutionSpec:
        return replace(self, totalTime=abs(totalTime))

    def stepping(self, timeStep: float) -> EvolutionSpec:
        return replace(self, timeStep=timeStep)


@dataclass(eq=False)
class HamiltonianOp:
    """
    The magnetic Schroedinger operator M{H} on a grid, plus M{V}.

    The first-order magnetic part M{2iA.grad + i div A} is evaluated in the
    symmetric form M{i(A.grad u + div(A u))}, which is Hermitian on the grid.
    """

    potentials: PotentialSet
    divergenceSign: float = 1.0
    "Fault-injection hook; anything but 1 breaks self-adjointness."

    @property
    def grid(self) -> Grid:
        return self.potentials.grid

    @property
    def isTimeDependent(self) -> bool:
        return False

    @cached_property
    def _vector(self) -> Tuple[np.ndarray, ...]:
        if not self.potentials.isMagnetic:
            return ()
        return self.potentials.vector

    @cached_property
    def _magneticScalar(self) -> np.ndarray:
        return -sum(a * a for a in self.potentials.vector)

    def fieldsAt(self, time: float, electric: bool) -> Fields:
        """
        Vector potential components and the scalar multiplier at C{time}.
        """
        scalar: Optional[np.ndarray] = None
        if self._vector:
            scalar = self._magneticScalar
        if electric and self.potentials.isElectric:
            scalar = self.potentials.scalar if scalar is None else (
                scalar + self.potentials.scalar
            )
        return self._vector, scalar

    def magneticTerm(
        self, values: np.ndarray, vector: Sequence[np.ndarray]
    ) -> np.ndarray:
        """
        M{A.grad u + div(A u)}, spectrally.
        """
        grid = self.grid
        spectrum = grid.forward(values)
        advection = np.zeros_like(values)
        divergence = np.zeros_like(spectrum)
        for k, a in zip(grid.kVectors, vector):
            advection += a * grid.inverse(1j * k * spectrum)
            divergence += 1j * k * grid.forward(a * values)
        return advection + self.divergenceSign * grid.inverse(divergence)


@dataclass(eq=False)
class ComovingHamiltonian(HamiltonianOp):
    """
    M{H + V} seen from a frame moving with momentum C{momentum}.

    For M{u = exp(i(k0.x - |k0|^2 t)) w(x - 2 k0 t, t)} the envelope obeys
    M{d_t w = i Delta w + i P(t) w} with
    M{P(t) = -2 k0.A + i(A.grad + div A) - |A|^2 + V}, all potentials taken at
    M{y + 2 k0 t} straight from the analytic descriptors.
    """

    momentum: Tuple[float, ...] = ()

    @property
    def isTimeDependent(self) -> bool:
        return True

    @cached_property
    def _velocity(self) -> np.ndarray:
        return 2.0 * np.asarray(self.momentum, dtype=float)

    @cached_property
    def _bumps(self) -> Tuple[Bump, ...]:
        return self.potentials.bumps

    def fieldsAt(self, time: float, electric: bool) -> Fields:
        grid = self.grid
        shape = grid.shape
        coords = tuple(
            x + v * time for x, v in zip(grid.coordinates, self._velocity)
        )
        scalar: Optional[np.ndarray] = None
        vector: Tuple[np.ndarray, ...] = ()
        if self.potentials.isMagnetic:
            vector = tuple(
                a * np.ones(shape) for a in vectorPotentialAt(self._bumps,
                                                              coords)
            )
            scalar = -sum(a * a for a in vector) - 2.0 * sum(
                k0 * a for k0, a in zip(self.momentum, vector)
            )
        if electric and self.potentials.isElectric:
            electricField = evaluateComponent(self._bumps, "V", coords)
            if scalar is not None:
                electricField = scalar + electricField
            scalar = electricField
        return vector, scalar


def _sameGrid(u: Wavefunction, ham: HamiltonianOp) -> None:
    if u.grid != ham.grid:
        raise GridMismatch(f"field on {u.grid}, operator on {ham.grid}")


def freePropagate(u: Wavefunction, time: float) -> Wavefunction:
    """
    Exact free flow M{exp(it Delta)}: the multiplier M{exp(-it|k|^2)}.
    """
    if time == 0:
        return u
    multiplier = np.exp(-1j * time * u.grid.kSquared)
    return u.withValues(u.grid.inverse(multiplier * u.spectrum))


def applyH(
    u: Wavefunction,
    ham: HamiltonianOp,
    electric: bool = False,
    time: float = 0.0,
) -> Wavefunction:
    """
    Apply M{H} (and M{V} when C{electric}) to C{u}.
    """
    _sameGrid(u, ham)
    grid = u.grid
    result = grid.inverse(-grid.kSquared * u.spectrum)
    vector, scalar = ham.fieldsAt(time, electric)
    if vector:
        result = result + 1j * ham.magneticTerm(u.values, vector)
    if scalar is not None:
        result = result + scalar * u.values
    return u.withValues(result)


class EvolutionObserver(Protocol):
    """
    Things that want to watch a trajectory as it is integrated.
    """

    def stepCompleted(self, step: int, time: float, u: Wavefunction) -> None:
        """
        Step C{step} finished; the field is now C{u} at C{time}.
        """


@dataclass
class Trajectory:
    """
    The result of L{evolve}.
    """

    times: List[float]
    states: List[Wavefunction]
    timeStep: float
    steps: int

    @property
    def final(self) -> Wavefunction:
        return self.states[-1]

    @property
    def initial(self) -> Wavefunction:
        return self.states[0]


def nonlinearTerm(values: np.ndarray, exponent: float) -> np.ndarray:
    if exponent == 3.0:
        return (values.real**2 + values.imag**2) * values
    return np.abs(values) ** (exponent - 1.0) * values


@dataclass
class SplitStepper:
    ham: HamiltonianOp
    spec: EvolutionSpec
    timeStep: float

    def __post_init__(self) -> None:
        grid = self.ham.grid
        self.halfKinetic = np.exp(-0.5j * self.timeStep * grid.kSquared)
        self.static: Optional[Fields] = None
        if not self.ham.isTimeDependent:
            self.static = self.ham.fieldsAt(0.0, self.spec.includeElectric)
        self.coupling = (
            self.spec.nonlinearity if self.spec.isNonlinear else 0.0
        )

    def remainder(self, values: np.ndarray, time: float) -> np.ndarray:
        vector, scalar = self.static or self.ham.fieldsAt(
            time, self.spec.includeElectric
        )
        result = np.zeros_like(values)
        if vector:
            result -= self.ham.magneticTerm(values, vector)
        if scalar is not None:
            result += 1j * scalar * values
        if self.coupling:
            result -= (
                1j * self.coupling * nonlinearTerm(values, self.spec.exponent)
            )
        return result

    @property
    def isTrivial(self) -> bool:
        if self.static is None:
            return False
        vector, scalar = self.static
        return not vector and scalar is None and not self.coupling

    def kinetic(self, values: np.ndarray) -> np.ndarray:
        grid = self.ham.grid
        return grid.inverse(self.halfKinetic * grid.forward(values))

    def step(self, values: np.ndarray, time: float) -> np.ndarray:
        values = self.kinetic(values)
        if not self.isTrivial:
            dt = self.timeStep
            k1 = self.remainder(values, time)
            k2 = self.remainder(values + 0.5 * dt * k1, time + 0.5 * dt)
            k3 = self.remainder(values + 0.5 * dt * k2, time + 0.5 * dt)
            k4 = self.remainder(values + dt * k3, time + dt)
            values = values + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return self.kinetic(values)


def checkTimeStep(grid: Grid, timeStep: float) -> None:
    """
    Warn when M{dt max|k|^2} exceeds 2, refuse above 10.
    """
    courant = abs(timeStep) * float(np.max(grid.kSquared))
    if courant > CFL_LIMIT:
        raise ResolutionError(
            f"dt*max|k|^2 = {courant:.3g} exceeds {CFL_LIMIT}"
        )
    if courant > CFL_WARNING:
        log.warn(
            "dt*max|k|^2 = {courant:.3g} is above {limit}; fast modes are "
            "poorly resolved in time",
            courant=courant,
            limit=CFL_WARNING,
        )


def evolve(
    u0: Wavefunction,
    ham: HamiltonianOp,
    spec: EvolutionSpec,
    observer: Optional[EvolutionObserver] = None,
    startTime: float = 0.0,
    backward: bool = False,
) -> Trajectory:
    """
    Integrate from C{startTime} over C{spec.totalTime}, forward or backward.

    @raise NumericalBlowup: when a step produces a non-finite sample.
    @raise ResolutionError: when the time step is hopeless for the grid.
    """
    _sameGrid(u0, ham)
    grid = u0.grid
    steps = spec.steps
    timeStep = spec.totalTime / steps if steps else 0.0
    if backward:
        timeStep = -timeStep
    checkTimeStep(grid, timeStep)
    if spec.isNonlinear and spec.exponent <= 1.0 + 2.0 / grid.dimension:
        log.warn(
            "p={p} is not above 1 + 2/n = {bound}; the weighted-space "
            "small-data regime does not apply",
            p=spec.exponent,
            bound=1.0 + 2.0 / grid.dimension,
        )
    stepper = SplitStepper(ham, spec, timeStep)
    values = u0.values.copy()
    time = startTime
    times = [time]
    states = [u0]
    for step in range(1, steps + 1):
        values = stepper.step(values, time)
        time = startTime + step * timeStep
        if not np.isfinite(values).all():
            raise NumericalBlowup(step, time)
        keep = spec.checkpointStride and step % spec.checkpointStride == 0
        if observer is not None or keep or step == steps:
            state = u0.withValues(values)
            if observer is not None:
                observer.stepCompleted(step, time, state)
            if keep or step == steps:
                times.append(time)
                states.append(state)
    log.debug("evolved {steps} steps of {dt:.3g}", steps=steps, dt=timeStep)
    return Trajectory(times, states, timeStep, steps)


def linearPropagate(
    u: Wavefunction,
    ham: HamiltonianOp,
    time: float,
    spec: EvolutionSpec,
    startTime: float = 0.0,
) -> Wavefunction:
    """
    M{exp(i t (H + V)) u} for either sign of C{time}, by linear splitting.
    """
    if time == 0:
        return u
    linear = spec.linear().lasting(time)
    return evolve(u, ham, linear, startTime=startTime,
                  backward=time < 0).final


@dataclass(frozen=True)
class ConservedQuantities:
    mass: float
    energy: float


def conservedQuantities(
    u: Wavefunction,
    ham: HamiltonianOp,
    exponent: float,
    nonlinearity: float = 1.0,
    electric: bool = True,
    time: float = 0.0,
) -> ConservedQuantities:
    """
    Mass M{int |u|^2} and energy
    M{int 1/2 |(grad + iA)u|^2 - 1/2 V|u|^2 + lambda/(p+1) |u|^(p+1)}.
    """
    _sameGrid(u, ham)
    grid = u.grid
    density = np.abs(u.values) ** 2
    mass = grid.weight * float(density.sum())
    vector, _ = ham.fieldsAt(time, False)
    gradient = grid.gradient(u.values)
    kinetic = 0.0
    for axis, derivative in enumerate(gradient):
        covariant = derivative
        if vector:
            covariant = derivative + 1j * vector[axis] * u.values
        kinetic += float(np.sum(np.abs(covariant) ** 2))
    energy = 0.5 * grid.weight * kinetic
    if electric and ham.potentials.isElectric:
        energy -= 0.5 * grid.weight * float(
            np.sum(ham.potentials.scalar * density)
        )
    energy += (
        nonlinearity
        / (exponent + 1.0)
        * grid.weight
        * float(np.sum(density ** ((exponent + 1.0) / 2.0)))
    )
    return ConservedQuantities(mass, energy)


@dataclass
class ConservationRecorder:
    """
    An L{EvolutionObserver} that samples mass and energy every C{stride}
    steps.
    """

    ham: HamiltonianOp
    spec: EvolutionSpec
    stride: int = 1
    rows: List[Tuple[float, float, float]] = field(default_factory=list)

    def record(self, time: float, u: Wavefunction) -> None:
        quantities = conservedQuantities(
            u,
            self.ham,
            self.spec.exponent,
            self.spec.nonlinearity if self.spec.isNonlinear else 0.0,
            self.spec.includeElectric,
        )
        self.rows.append((time, quantities.mass, quantities.energy))

    def stepCompleted(self, step: int, time: float, u: Wavefunction) -> None:
        if step % self.stride == 0:
            self.record(time, u)

    def drifts(self) -> Tuple[float, float]:
        """
        Largest relative departure of mass and energy from their first value.
        """
        masses = np.array([row[1] for row in self.rows])
        energies = np.array([row[2] for row in self.rows])

        def drift(series: np.ndarray) -> float:
            scale = abs(series[0]) or 1.0
            return float(np.max(np.abs(series - series[0]))) / scale

        return drift(masses), drift(energies)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float


def fitPowerLaw(abscissae: Sequence[float],
                values: Sequence[float]) -> PowerLawFit:
    """
    Least-squares line through M{(log x, log y)}.
    """
    slope, intercept = np.polyfit(np.log(abscissae), np.log(values), 1)
    return PowerLawFit(float(slope), float(math.exp(intercept)))


def measureDispersiveDecay(
    phi: Wavefunction,
    ham: HamiltonianOp,
    times: Sequence[float],
    spec: EvolutionSpec,
) -> PowerLawFit:
    """
    Fit M{|exp(itH) phi|_inf ~ C t^a}; the dispersive estimate predicts
    M{a = -n/2}.
    """
    previous = 0.0
    current = phi
    supNorms = []
    for time in sorted(times):
        current = linearPropagate(current, ham, time - previous, spec)
        previous = time
        supNorms.append(current.supNorm())
    fit = fitPowerLaw(sorted(times), supNorms)
    log.info(
        "sup-norm decay exponent {exponent:.3f} (dispersive prediction "
        "{predicted})",
        exponent=fit.exponent,
        predicted=-phi.grid.dimension / 2.0,
    )
    return fit


def observedOrder(
    u0: Wavefunction,
    ham: HamiltonianOp,
    spec: EvolutionSpec,
    timeSteps: Sequence[float] = (4e-3, 2e-3, 1e-3),
) -> List[float]:
    """
    Convergence orders between successive entries of C{timeSteps}, each
    measured against a reference run at an eighth of the finest step.
    """
    finest = min(timeSteps) / 8.0
    reference = evolve(u0, ham, spec.stepping(finest)).final
    errors = [
        (evolve(u0, ham, spec.stepping(dt)).final - reference).norm()
        for dt in timeSteps
    ]
    return [
        math.log(errors[i] / errors[i + 1]) / math.log(
            timeSteps[i] / timeSteps[i + 1]
        )
        for i in range(len(errors) - 1)
    ]


def planeWaveError(
    grid: Grid,
    vector: Sequence[float],
    spec: EvolutionSpec,
    time: float = 1.0,
    mode: int = 3,
) -> float:
    """
    Largest deviation of the split flow from the exact multiplier
    M{exp(-it|k + a|^2)} for a plane wave in the constant vector potential
    C{vector}; the split flows commute here, so only round-off remains.
    """
    ham = HamiltonianOp(uniformPotentials(grid, vector))
    k = float(grid.wavenumbers[mode])
    u0 = Wavefunction(
        grid, np.exp(1j * k * grid.coordinates[0]) * np.ones(grid.shape)
    )
    final = evolve(u0, ham, spec.linear().lasting(time)).final
    shifted = (k + vector[0]) ** 2 + sum(a * a for a in vector[1:])
    exact = u0.values * np.exp(-1j * time * shifted)
    return float(np.max(np.abs(final.values - exact)))
