"""
Wave operators and scattering operators, computed in the time domain and,
for the nonlinear map, independently by fixed-point iteration on the Duhamel
equation.

Asymptotic limits are replaced by a finite time M{T}; every result is
recomputed at M{1.25 T} and flagged when it moves by more than the stability
tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence

import numpy as np
from twisted.logger import Logger

from .errors import PicardDivergence, ScatterFlag
from .grid import Wavefunction, relativeDistance
from .potentials import PotentialSet
from .propagators import (
    EvolutionSpec,
    HamiltonianOp,
    nonlinearTerm,
    SplitStepper,
    evolve,
    freePropagate,
    linearPropagate,
)

log = Logger()

STABILITY_TOLERANCE = 1e-6
STABILITY_FACTOR = 1.25


class ScatterMode(Enum):
    """
    What the nonlinear flow is compared against at M{t = -T} and M{t = T}.
    """

    LINEAR = "linear"
    # Linear scattering operator, no nonlinearity at all.
    NONLINEAR_VS_H = "nonlinear_vs_H"
    # Compare with the magnetic group exp(itH).
    NONLINEAR_VS_FREE = "nonlinear_vs_free"
    # Compare with the free group exp(it Delta).


@dataclass(frozen=True)
class ScatterSpec:
    asymptoticTime: float
    "M{T}, standing in for M{t -> +/- infinity}."
    evolution: EvolutionSpec
    mode: ScatterMode = ScatterMode.LINEAR
    stabilityTolerance: float = STABILITY_TOLERANCE
    checkStability: bool = True
    smallness: Optional[float] = None
    "Radius M{delta} of the H1 ball incoming data is expected in."

    def __post_init__(self) -> None:
        if not self.asymptoticTime > 0:
            raise ValueError("asymptotic time must be positive")

    def at(self, asymptoticTime: float) -> ScatterSpec:
        return replace(self, asymptoticTime=asymptoticTime)

    def using(self, mode: ScatterMode) -> ScatterSpec:
        return replace(self, mode=mode)


@dataclass(frozen=True, eq=False)
class ScatterResult:
    output: Wavefunction
    asymptoticTime: float
    mode: ScatterMode
    stabilityChange: Optional[float] = None
    "Relative change when the asymptotic time is stretched by 1.25."
    flags: FrozenSet[ScatterFlag] = frozenset()

    @property
    def isStable(self) -> bool:
        return ScatterFlag.UNSTABLE_IN_TIME not in self.flags

    def asJSON(self, inputId: str, dumpName: str) -> Dict:
        return {
            "inputId": inputId,
            "mode": self.mode.value,
            "asymptoticTime": self.asymptoticTime,
            "output": dumpName,
            "diagnostics": {
                "stabilityChange": self.stabilityChange,
                "outputNorm": self.output.norm(),
                "flags": sorted(flag.value for flag in self.flags),
            },
        }


def defaultAsymptoticTime(speed: float, potentials: PotentialSet,
                          widthsPast: float = 5.0) -> float:
    """
    Time for a packet moving at C{speed} to clear every bump by
    C{widthsPast} widths.
    """
    if not potentials.bumps:
        return 1.0
    reach = max(
        math.hypot(*each.center) + widthsPast * max(each.widths)
        for each in potentials.bumps
    )
    return reach / speed


def stabilized(
    compute: Callable[[float], Wavefunction],
    spec: ScatterSpec,
    flags: FrozenSet[ScatterFlag] = frozenset(),
) -> ScatterResult:
    """
    Run C{compute} at the asymptotic time and, if asked, at 1.25 times it.
    """
    output = compute(spec.asymptoticTime)
    change = None
    if spec.checkStability:
        stretched = compute(STABILITY_FACTOR * spec.asymptoticTime)
        change = relativeDistance(stretched, output)
        if change > spec.stabilityTolerance:
            log.warn(
                "result moved by {change:.3e} when T went from {T} to "
                "{stretched}",
                change=change,
                T=spec.asymptoticTime,
                stretched=STABILITY_FACTOR * spec.asymptoticTime,
            )
            flags = flags | {ScatterFlag.UNSTABLE_IN_TIME}
    return ScatterResult(output, spec.asymptoticTime, spec.mode, change,
                         frozenset(flags))


def _waveOperatorAt(
    phi: Wavefunction,
    sign: int,
    ham: HamiltonianOp,
    evolution: EvolutionSpec,
    T: float,
    adjoint: bool,
) -> Wavefunction:
    if sign < 0 and not adjoint:
        # exp(iTH) exp(-iT H0)
        return linearPropagate(freePropagate(phi, -T), ham, T, evolution,
                               startTime=-T)
    if sign < 0:
        # exp(iT H0) exp(-iTH)
        return freePropagate(linearPropagate(phi, ham, -T, evolution), T)
    if not adjoint:
        # exp(-iTH) exp(iT H0)
        return linearPropagate(freePropagate(phi, T), ham, -T, evolution,
                               startTime=T)
    # exp(-iT H0) exp(iTH)
    return freePropagate(linearPropagate(phi, ham, T, evolution), -T)


def waveOperator(
    phi: Wavefunction,
    sign: int,
    ham: HamiltonianOp,
    spec: ScatterSpec,
    adjoint: bool = False,
) -> ScatterResult:
    """
    M{W_-} (C{sign=-1}) or M{W_+} (C{sign=+1}), or with C{adjoint} their
    adjoints, at finite asymptotic time.
    """
    if sign not in (-1, 1):
        raise ValueError(f"sign must be -1 or +1, not {sign}")
    return stabilized(
        lambda T: _waveOperatorAt(phi, sign, ham, spec.evolution, T, adjoint),
        spec,
    )


def _linearSAt(phi: Wavefunction, ham: HamiltonianOp,
               evolution: EvolutionSpec, T: float) -> Wavefunction:
    incoming = freePropagate(phi, -T)
    interacting = linearPropagate(incoming, ham, 2 * T, evolution,
                                  startTime=-T)
    return freePropagate(interacting, -T)


def linearS(phi: Wavefunction, ham: HamiltonianOp,
            spec: ScatterSpec) -> ScatterResult:
    """
    M{S_L = W_+^* W_-}, realised as M{exp(-iT H0) U(T, -T) exp(-iT H0)}.
    """
    return stabilized(
        lambda T: _linearSAt(phi, ham, spec.evolution, T),
        replace(spec, mode=ScatterMode.LINEAR),
    )


def _compare(u: Wavefunction, ham: HamiltonianOp, evolution: EvolutionSpec,
             mode: ScatterMode, time: float,
             startTime: float) -> Wavefunction:
    """
    Apply the comparison group M{exp(i time G)}.
    """
    if mode is ScatterMode.NONLINEAR_VS_FREE:
        return freePropagate(u, time)
    return linearPropagate(u, ham, time, evolution, startTime=startTime)


def _checkSmallness(phi: Wavefunction,
                    spec: ScatterSpec) -> FrozenSet[ScatterFlag]:
    if spec.smallness is None:
        return frozenset()
    size = phi.h1Norm()
    if size > spec.smallness:
        log.warn(
            "incoming H1 norm {size:.3e} exceeds the smallness radius "
            "{delta:.3e}; the fixed point may not contract",
            size=size,
            delta=spec.smallness,
        )
        return frozenset({ScatterFlag.SMALLNESS_VIOLATED})
    return frozenset()


def _nonlinearSAt(phi: Wavefunction, ham: HamiltonianOp, spec: ScatterSpec,
                  T: float) -> Wavefunction:
    evolution = spec.evolution
    incoming = _compare(phi, ham, evolution, spec.mode, -T, 0.0)
    final = evolve(incoming, ham, evolution.lasting(2 * T),
                   startTime=-T).final
    return _compare(final, ham, evolution, spec.mode, -T, T)


def nonlinearS(phi: Wavefunction, ham: HamiltonianOp,
               spec: ScatterSpec) -> ScatterResult:
    """
    The nonlinear scattering map M{phi_- -> phi_+}.

    In C{NONLINEAR_VS_H} mode the comparison dynamics is M{exp(itH)} (the
    operator M{S_A}); in C{NONLINEAR_VS_FREE} it is the free flow (the full
    M{S}).  C{LINEAR} mode is L{linearS}.
    """
    if spec.mode is ScatterMode.LINEAR:
        return linearS(phi, ham, spec)
    return stabilized(
        lambda T: _nonlinearSAt(phi, ham, spec, T),
        spec,
        _checkSmallness(phi, spec),
    )


def _inverseAt(phiPlus: Wavefunction, ham: HamiltonianOp, spec: ScatterSpec,
               T: float) -> Wavefunction:
    evolution = spec.evolution
    if spec.mode is ScatterMode.LINEAR:
        evolution = evolution.linear()
        mode = ScatterMode.NONLINEAR_VS_FREE
    else:
        mode = spec.mode
    final = _compare(phiPlus, ham, evolution, mode, T, 0.0)
    initial = evolve(final, ham, evolution.lasting(2 * T), startTime=T,
                     backward=True).final
    return _compare(initial, ham, evolution, mode, T, -T)


def inverseNonlinearS(phiPlus: Wavefunction, ham: HamiltonianOp,
                      spec: ScatterSpec) -> ScatterResult:
    """
    Undo L{nonlinearS} by running the same construction backwards in time.
    """
    return stabilized(lambda T: _inverseAt(phiPlus, ham, spec, T), spec)


@dataclass(frozen=True)
class PicardSpec:
    asymptoticTime: float
    timeStep: float
    "Spacing of the uniform Duhamel quadrature nodes."
    maxIterations: int = 50
    tolerance: float = 1e-13
    "Stop once successive iterates differ by this much relative to the data."
    smallness: Optional[float] = None
    exponent: float = 3.0
    nonlinearity: float = 1.0
    includeElectric: bool = True

    def __post_init__(self) -> None:
        if not (self.asymptoticTime > 0 and self.timeStep > 0):
            raise ValueError("asymptotic time and node spacing must be "
                             "positive")
        if self.maxIterations < 1:
            raise ValueError("need at least one iteration")

    @property
    def halfNodes(self) -> int:
        return int(math.ceil(self.asymptoticTime / self.timeStep - 1e-9))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.asymptoticTime, self.asymptoticTime,
                           2 * self.halfNodes + 1)

    @property
    def evolution(self) -> EvolutionSpec:
        return EvolutionSpec(
            timeStep=self.timeStep,
            totalTime=self.asymptoticTime,
            exponent=self.exponent,
            nonlinearity=self.nonlinearity,
            includeElectric=self.includeElectric,
        )


@dataclass(eq=False)
class PicardResult:
    times: np.ndarray
    trajectory: List[np.ndarray]
    outgoing: Wavefunction
    ratios: List[float]
    "Successive-difference ratios, one per iteration after the first."
    differences: List[float]
    residual: float
    "Largest L2 defect of the integral equation over the nodes."
    flags: FrozenSet[ScatterFlag] = frozenset()

    @property
    def iterations(self) -> int:
        return len(self.differences)

    @property
    def contractionRatio(self) -> float:
        """
        The first observed ratio, before round-off sets the pace.
        """
        return self.ratios[0] if self.ratios else 0.0


def _duhamel(
    trajectory: Sequence[np.ndarray],
    stepper: SplitStepper,
    pic: PicardSpec,
) -> List[np.ndarray]:
    """
    Trapezoidal M{int_{-T}^{t_j} exp(i(t_j - tau)H) N(u(tau)) dtau} on the
    nodes, marched with one linear step per interval.
    """
    dt = stepper.timeStep
    nodes = pic.nodes
    previous = nonlinearTerm(trajectory[0], pic.exponent)
    integral = np.zeros_like(trajectory[0])
    integrals = [integral]
    for j in range(1, len(trajectory)):
        current = nonlinearTerm(trajectory[j], pic.exponent)
        integral = stepper.step(integral + 0.5 * dt * previous,
                                nodes[j - 1]) + 0.5 * dt * current
        integrals.append(integral)
        previous = current
    return integrals


def _supDistance(grid, first: Sequence[np.ndarray],
                 second: Sequence[np.ndarray]) -> float:
    return max(
        math.sqrt(grid.weight * float(np.sum(np.abs(a - b) ** 2)))
        for a, b in zip(first, second)
    )


def picardSolve(phi: Wavefunction, ham: HamiltonianOp,
                pic: PicardSpec) -> PicardResult:
    """
    Solve M{u(t) = exp(itH) phi_- - i lambda int_{-T}^t exp(i(t - tau)H)
    |u|^(p-1) u(tau) dtau} by fixed-point iteration, then read off
    M{phi_+ = exp(-iTH) u(T)}.

    @raise PicardDivergence: after three consecutive non-contracting
        iterations.
    """
    flags = set()
    if pic.smallness is not None and phi.h1Norm() > pic.smallness:
        log.warn("incoming H1 norm {size:.3e} exceeds delta={delta:.3e}",
                 size=phi.h1Norm(), delta=pic.smallness)
        flags.add(ScatterFlag.SMALLNESS_VIOLATED)

    grid = phi.grid
    T = pic.asymptoticTime
    nodes = pic.nodes
    linear = pic.evolution.linear()
    stepper = SplitStepper(ham, linear, float(nodes[1] - nodes[0]))
    free = [linearPropagate(phi, ham, -T, linear).values]
    for j in range(1, len(nodes)):
        free.append(stepper.step(free[-1], nodes[j - 1]))

    coupling = -1j * pic.nonlinearity
    scale = max(phi.norm(), 1e-300)
    current = free
    differences: List[float] = []
    ratios: List[float] = []
    expanding = 0
    for iteration in range(1, pic.maxIterations + 1):
        if pic.nonlinearity:
            integrals = _duhamel(current, stepper, pic)
            updated = [u0 + coupling * d for u0, d in zip(free, integrals)]
        else:
            updated = list(free)
        difference = _supDistance(grid, updated, current)
        current = updated
        if differences and differences[-1] > 0:
            ratio = difference / differences[-1]
            ratios.append(ratio)
            expanding = expanding + 1 if ratio >= 1.0 else 0
            if ratio >= 1.0:
                flags.add(ScatterFlag.NOT_CONTRACTING)
            if expanding >= 3:
                raise PicardDivergence(ratios)
        differences.append(difference)
        log.debug("Picard iteration {iteration}: difference {difference:.3e}",
                  iteration=iteration, difference=difference)
        if difference <= pic.tolerance * scale:
            break
    else:
        log.warn("Picard iteration stopped after {count} iterations",
                 count=pic.maxIterations)

    if pic.nonlinearity:
        integrals = _duhamel(current, stepper, pic)
        implied = [u0 + coupling * d for u0, d in zip(free, integrals)]
        residual = _supDistance(grid, implied, current)
    else:
        residual = _supDistance(grid, free, current)
    outgoing = linearPropagate(phi.withValues(current[-1]), ham, -T, linear,
                               startTime=T)
    return PicardResult(nodes, current, outgoing, ratios, differences,
                        residual, frozenset(flags))


def magneticH1Norm(u: Wavefunction, ham: HamiltonianOp) -> float:
    """
    M{(|u|^2 + |(grad + iA)u|^2)^(1/2)}.
    """
    grid = u.grid
    vector, _ = ham.fieldsAt(0.0, False)
    total = float(np.sum(np.abs(u.values) ** 2))
    for axis, derivative in enumerate(grid.gradient(u.values)):
        if vector:
            derivative = derivative + 1j * vector[axis] * u.values
        total += float(np.sum(np.abs(derivative) ** 2))
    return math.sqrt(grid.weight * total)


@dataclass(frozen=True)
class NormReport:
    ratio: float
    "Flat H1 norm of the outgoing state over that of the incoming one."
    magneticRatio: float
    incoming: float
    outgoing: float

    def asJSON(self) -> Dict:
        return {
            "ratio": self.ratio,
            "magneticRatio": self.magneticRatio,
            "incomingH1": self.incoming,
            "outgoingH1": self.outgoing,
        }


def normEquivalenceCheck(phiMinus: Wavefunction, phiPlus: Wavefunction,
                         ham: HamiltonianOp) -> NormReport:
    incoming = phiMinus.h1Norm()
    outgoing = phiPlus.h1Norm()
    magneticIn = magneticH1Norm(phiMinus, ham)
    magneticOut = magneticH1Norm(phiPlus, ham)
    return NormReport(
        ratio=outgoing / incoming if incoming else 1.0,
        magneticRatio=magneticOut / magneticIn if magneticIn else 1.0,
        incoming=incoming,
        outgoing=outgoing,
    )


@dataclass(frozen=True)
class ContractionRadius:
    amplitude: float
    "Largest tried multiple of the data with a small enough ratio."
    radius: float
    "The H1 norm of that multiple, used as M{delta}."
    ratio: float
    tried: Dict[float, float] = field(default_factory=dict)


def contractionRadius(
    phi: Wavefunction,
    ham: HamiltonianOp,
    pic: PicardSpec,
    start: float = 1.0,
    levels: int = 8,
    target: float = 0.5,
) -> ContractionRadius:
    """
    Walk down the ladder C{start}, C{start/2}, ... and stop at the first
    amplitude whose observed contraction ratio is at most C{target}.
    """
    probe = replace(pic, maxIterations=3, smallness=None)
    tried: Dict[float, float] = {}
    amplitude = start
    for level in range(levels):
        amplitude = start / 2**level
        try:
            ratio = picardSolve(amplitude * phi, ham, probe).contractionRatio
        except PicardDivergence as divergence:
            ratio = max(divergence.ratios)
        tried[amplitude] = ratio
        if ratio <= target:
            log.info("contraction ratio {ratio:.3g} at amplitude "
                     "{amplitude:.3g}", ratio=ratio, amplitude=amplitude)
            return ContractionRadius(amplitude,
                                     amplitude * phi.h1Norm(), ratio, tried)
    log.warn("no amplitude down to {amplitude:.3g} contracts below "
             "{target}", amplitude=amplitude, target=target)
    return ContractionRadius(0.0, 0.0, float("nan"), tried)
