"""
The invariant suite: small, fast checks of the properties every module
promises, runnable from the command line against a fresh build.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from twisted.logger import Logger

from .amplitude import EpsSweep, fitOrder, linearPairing, sweep
from .errors import MagnetoscatterError, VerificationError
from .grid import (
    Grid,
    SigmaParams,
    Wavefunction,
    gaussianPacket,
    innerProduct,
    makeGrid,
    relativeDistance,
    sigmaNorm,
)
from .potentials import (
    Bump,
    PotentialSet,
    buildPotentials,
    curlAt,
    freePotentials,
    gaugeBumps,
)
from .propagators import (
    EvolutionSpec,
    HamiltonianOp,
    evolve,
    observedOrder,
    planeWaveError,
)
from .scattering import (
    STABILITY_TOLERANCE,
    PicardSpec,
    ScatterMode,
    ScatterSpec,
    inverseNonlinearS,
    linearS,
    nonlinearS,
    picardSolve,
)
from .tomography import (
    TANGENTIAL,
    SampledField,
    bFieldFromTangential,
    directions,
    fbpInvert,
    reproject,
    uniformAngles,
    uniformOffsets,
    xrayForward,
)
from .velocity import (
    IMAGINARY_LIMIT,
    REMAINDER_SLOPE,
    Frame,
    ProbeSpec,
    RaySample,
    Target,
    pairing,
    probeRay,
    smearedLineIntegral,
)

log = Logger()

FAULTS = ("propagator-sign",)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    value: float
    limit: float
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.value <= self.limit


@dataclass
class VerificationResult:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def table(self) -> str:
        """
        A fixed-width table, one row per check.
        """
        rows = [("suite", "check", "value", "limit", "status")]
        for check in self.checks:
            rows.append((
                check.suite,
                check.name,
                f"{check.value:.3e}",
                f"{check.limit:.1e}",
                "ok" if check.passed else (check.error or "FAIL"),
            ))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        return "\n".join(
            "  ".join(cell.ljust(width) for cell, width in zip(row, widths))
            + "  " + row[4]
            for row in rows
        )


@dataclass
class SuiteContext:
    """
    Grids, potentials and a random generator shared by the checks.
    """

    rng: np.random.Generator
    divergenceSign: float = 1.0

    @cached_property
    def line(self) -> Grid:
        return makeGrid(1, 256, 20.0)

    @cached_property
    def plane(self) -> Grid:
        return makeGrid(2, 128, 10.0)

    def hamiltonian(self, potentials: PotentialSet) -> HamiltonianOp:
        return HamiltonianOp(potentials, self.divergenceSign)

    @cached_property
    def lineBumps(self) -> Tuple[Bump, ...]:
        return (Bump("A1", (0.0,), 0.5, (1.5,)),)

    @cached_property
    def planeBumps(self) -> Tuple[Bump, ...]:
        return (
            Bump("A1", (0.5, 0.0), 0.4, (1.0, 1.5)),
            Bump("A2", (-0.5, 0.5), -0.3, (1.5, 1.0)),
            Bump("V", (0.0, -0.5), 0.5, (1.0, 1.0)),
        )

    @cached_property
    def lineMagnetic(self) -> HamiltonianOp:
        return self.hamiltonian(buildPotentials(self.lineBumps, self.line))

    @cached_property
    def planeMagnetic(self) -> HamiltonianOp:
        return self.hamiltonian(buildPotentials(self.planeBumps, self.plane))

    def packet(self, grid: Grid, center: Sequence[float] = (),
               momentum: Sequence[float] = (),
               amplitude: float = 1.0) -> Wavefunction:
        return gaussianPacket(grid, amplitude, 1.0, center or None,
                              momentum or None)

    def randomPacket(self, grid: Grid) -> Wavefunction:
        n = grid.dimension
        return gaussianPacket(
            grid,
            float(self.rng.uniform(0.5, 1.5)),
            float(self.rng.uniform(0.8, 1.5)),
            tuple(self.rng.uniform(-2.0, 2.0, n)),
            tuple(self.rng.uniform(-2.0, 2.0, n)),
        )

    def evolution(self, totalTime: float, **changes) -> EvolutionSpec:
        return replace(EvolutionSpec(1e-3, totalTime), **changes)

    @cached_property
    def weakBumps(self) -> Tuple[Bump, ...]:
        """
        A vector potential weak enough for pairings to be linear in it, and
        an electric bump whose M{1/|xi|} term leads the remainder.
        """
        return (
            Bump("A1", (0.3, 0.0), 0.02, (1.0, 1.0)),
            Bump("A2", (-0.4, 0.5), 0.015, (1.0, 1.2)),
            Bump("V", (0.0, 0.0), 0.3, (1.0, 1.0)),
        )

    def planeHamiltonian(self, bumps: Sequence[Bump]) -> HamiltonianOp:
        return self.hamiltonian(buildPotentials(bumps, self.plane))

    @cached_property
    def probeSpec(self) -> ProbeSpec:
        return ProbeSpec(width=0.8, speeds=(8.0, 16.0, 32.0))

    @cached_property
    def probedRay(self) -> RaySample:
        return probeRay(self.planeHamiltonian(self.weakBumps), 0.0, 0.0,
                        self.probeSpec)


Check = Callable[[SuiteContext], Tuple[float, float]]
SUITES: Dict[str, List[Tuple[str, Check]]] = {}


def check(suite: str, name: str) -> Callable[[Check], Check]:
    """
    Register a check returning C{(value, limit)}; it passes when the value is
    at most the limit.
    """

    def register(function: Check) -> Check:
        SUITES.setdefault(suite, []).append((name, function))
        return function

    return register


@check("grid", "Parseval")
def parseval(context: SuiteContext) -> Tuple[float, float]:
    u = context.randomPacket(context.plane)
    return abs(u.norm() - u.spectralNorm()) / u.norm(), 1e-12


@check("grid", "spectral derivative")
def spectralDerivative(context: SuiteContext) -> Tuple[float, float]:
    grid = context.line
    (x,) = grid.coordinates
    values = np.exp(-(x**2))
    exact = -2.0 * x * values
    return float(np.max(np.abs(grid.derivative(values, 0) - exact))), 1e-10


@check("grid", "spectral field against analytic curl")
def fieldAgainstCurl(context: SuiteContext) -> Tuple[float, float]:
    potentials = context.planeMagnetic.potentials
    exact = curlAt(context.planeBumps, context.plane.coordinates)
    return float(np.max(np.abs(potentials.magneticField(1, 2) - exact))), 1e-8


@check("grid", "derivative of a lattice mode")
def latticeMode(context: SuiteContext) -> Tuple[float, float]:
    """
    M{exp(ik.x)} on the lattice is differentiated to M{ik exp(ik.x)} up to
    round-off.
    """
    grid = context.plane
    k = (grid.wavenumbers[5], grid.wavenumbers[-3])
    x, y = grid.coordinates
    mode = np.exp(1j * (k[0] * x + k[1] * y))
    errors = [
        np.max(np.abs(grid.derivative(mode, axis) - 1j * k[axis] * mode))
        for axis in (0, 1)
    ]
    return float(max(errors)), 1e-11


@check("grid", "field antisymmetry")
def fieldAntisymmetry(context: SuiteContext) -> Tuple[float, float]:
    potentials = context.planeMagnetic.potentials
    return float(
        np.max(np.abs(potentials.magneticField(1, 2)
                      + potentials.magneticField(2, 1)))
        + np.max(np.abs(potentials.magneticField(1, 1)))
    ), 0.0


@check("grid", "no field on a line")
def lineHasNoField(context: SuiteContext) -> Tuple[float, float]:
    return float(len(context.lineMagnetic.potentials.fieldStrength)), 0.0


@check("grid", "Sigma norm triangle inequality")
def sigmaTriangle(context: SuiteContext) -> Tuple[float, float]:
    grid = context.plane
    params = SigmaParams.forDimension(grid.dimension)
    u, v = context.randomPacket(grid), context.randomPacket(grid)
    excess = sigmaNorm(u + v, params) - sigmaNorm(u, params) - sigmaNorm(
        v, params
    )
    return excess, 1e-12


@check("propagators", "unitarity")
def unitarity(context: SuiteContext) -> Tuple[float, float]:
    u0 = context.packet(context.line, (1.0,), (1.0,))
    final = evolve(u0, context.lineMagnetic,
                   context.evolution(1.0).linear()).final
    return abs(final.norm() - u0.norm()) / u0.norm(), 1e-10


@check("propagators", "time reversibility")
def reversibility(context: SuiteContext) -> Tuple[float, float]:
    u0 = context.packet(context.line, (1.0,), (1.0,))
    spec = context.evolution(0.5)
    ham = context.lineMagnetic
    there = evolve(u0, ham, spec).final
    back = evolve(there, ham, spec, startTime=0.5, backward=True).final
    return relativeDistance(back, u0), 1e-9


@check("propagators", "Strang order")
def strangOrder(context: SuiteContext) -> Tuple[float, float]:
    u0 = context.packet(context.line, (0.5,), (2.0,))
    orders = observedOrder(u0, context.lineMagnetic, context.evolution(0.5))
    return max(abs(order - 2.0) for order in orders), 0.2


@check("propagators", "constant-A plane wave")
def planeWave(context: SuiteContext) -> Tuple[float, float]:
    return planeWaveError(context.line, (0.3,), context.evolution(1.0)), 1e-11


@check("propagators", "gauge covariance")
def gaugeCovariance(context: SuiteContext) -> Tuple[float, float]:
    """
    Evolving M{exp(-i chi) u} under M{A + grad chi} gives M{exp(-i chi)}
    times the evolution of M{u} under M{A}.
    """
    grid = context.line
    center, amplitude, widths = (0.5,), 0.7, (1.5,)
    chi = Bump("V", center, amplitude, widths).evaluate(grid.coordinates)
    phase = np.exp(-1j * chi)
    shifted = context.hamiltonian(buildPotentials(
        context.lineBumps + tuple(gaugeBumps(center, amplitude, widths)),
        grid,
    ))
    u0 = context.packet(grid, (1.0,), (1.0,))
    spec = context.evolution(0.5)
    plain = evolve(u0, context.lineMagnetic, spec).final
    gauged = evolve(u0.withValues(phase * u0.values), shifted, spec).final
    return relativeDistance(gauged, plain.withValues(phase * plain.values)), (
        1e-4
    )


def _scatterSpec(T: float, context: SuiteContext,
                 **changes) -> ScatterSpec:
    return ScatterSpec(T, context.evolution(T, **changes),
                       checkStability=False)


@check("scattering", "free scattering is the identity")
def freeIdentity(context: SuiteContext) -> Tuple[float, float]:
    ham = context.hamiltonian(freePotentials(context.line))
    u = context.randomPacket(context.line)
    result = linearS(u, ham, _scatterSpec(2.0, context))
    return relativeDistance(result.output, u), 1e-10


@check("scattering", "linearity of S_L")
def linearity(context: SuiteContext) -> Tuple[float, float]:
    ham = context.lineMagnetic
    spec = _scatterSpec(2.0, context)
    u, v = context.randomPacket(context.line), context.randomPacket(
        context.line
    )
    a, b = complex(*context.rng.normal(size=2)), complex(
        *context.rng.normal(size=2)
    )
    combined = linearS(a * u + b * v, ham, spec).output
    separate = a * linearS(u, ham, spec).output + b * linearS(
        v, ham, spec
    ).output
    return relativeDistance(combined, separate), 1e-10


@check("scattering", "S_L preserves the norm")
def linearUnitarity(context: SuiteContext) -> Tuple[float, float]:
    u = context.packet(context.line, (), (1.5,))
    output = linearS(u, context.lineMagnetic,
                     _scatterSpec(3.0, context)).output
    return abs(output.norm() - u.norm()) / u.norm(), 1e-8


@check("scattering", "inverse scattering round trip")
def inverseRoundTrip(context: SuiteContext) -> Tuple[float, float]:
    u = context.packet(context.line, (), (1.5,), amplitude=0.1)
    spec = _scatterSpec(2.0, context).using(ScatterMode.NONLINEAR_VS_FREE)
    ham = context.lineMagnetic
    forward = nonlinearS(u, ham, spec).output
    return relativeDistance(inverseNonlinearS(forward, ham, spec).output,
                            u), 1e-6


@check("scattering", "Picard without nonlinearity")
def linearPicard(context: SuiteContext) -> Tuple[float, float]:
    u = context.packet(context.line, (), (1.5,))
    pic = PicardSpec(2.0, 1e-3, nonlinearity=0.0)
    result = picardSolve(u, context.lineMagnetic, pic)
    return float(result.iterations - 1) + relativeDistance(
        result.outgoing, u
    ), 1e-9


@check("scattering", "S_L stable when T grows by a quarter")
def asymptoticStability(context: SuiteContext) -> Tuple[float, float]:
    """
    A fast, wide packet has cleared the bump by M{T} and has not come back
    round the box by M{1.25 T}.
    """
    u = gaussianPacket(context.line, 1.0, 2.0, (0.0,), (5.0,))
    result = linearS(u, context.lineMagnetic,
                     ScatterSpec(1.6, context.evolution(1.6).linear()))
    return result.stabilityChange, STABILITY_TOLERANCE


@check("scattering", "Duhamel residual of the Picard fixed point")
def picardResidual(context: SuiteContext) -> Tuple[float, float]:
    u = context.packet(context.line, (), (1.5,), amplitude=0.1)
    result = picardSolve(u, context.lineMagnetic, PicardSpec(1.0, 1e-3))
    return result.residual, 1e-6


@check("amplitude", "fitted order of synthetic residuals")
def syntheticOrder(context: SuiteContext) -> Tuple[float, float]:
    ladder = tuple(0.1 * 0.5**level for level in range(5))
    reference = complex(0.3, -0.2)
    values = tuple(reference + 0.7 * eps**2 for eps in ladder)
    fit = fitOrder(EpsSweep(ladder, values), reference)
    return abs(fit.order - 2.0) + fit.extrapolationError, 1e-8


@check("amplitude", "phase invariance")
def phaseInvariance(context: SuiteContext) -> Tuple[float, float]:
    grid = context.line
    phi = context.packet(grid, (), (1.5,))
    psi = context.packet(grid, (0.5,), (1.5,))
    spec = _scatterSpec(2.0, context)
    ham = context.lineMagnetic
    ladder = (0.2, 0.1)
    rotation = complex(math.cos(0.7), math.sin(0.7))
    plain = sweep(phi, psi, ham, ladder, spec)
    rotated = sweep(rotation * phi, rotation * psi, ham, ladder, spec)
    scale = max(abs(q) for q in plain.values)
    return max(
        abs(a - b) for a, b in zip(plain.values, rotated.values)
    ) / scale, 1e-10


@check("amplitude", "residuals fall along the ladder")
def monotoneResiduals(context: SuiteContext) -> Tuple[float, float]:
    grid = context.line
    phi = context.packet(grid, (), (1.5,))
    psi = context.packet(grid, (0.5,), (1.5,))
    spec = _scatterSpec(1.0, context)
    ham = context.lineMagnetic
    reference = linearPairing(phi, psi, ham, spec)
    result = sweep(phi, psi, ham, (0.08, 0.04, 0.02, 0.01), spec)
    return float(fitOrder(result, reference).increases), 0.0


@check("amplitude", "pairing conjugate symmetry")
def conjugateSymmetry(context: SuiteContext) -> Tuple[float, float]:
    """
    Swapping the two states of a pairing conjugates it.
    """
    grid = context.line
    phi = linearS(context.randomPacket(grid), context.lineMagnetic,
                  _scatterSpec(1.0, context)).output
    psi = context.randomPacket(grid)
    swapped = innerProduct(psi, phi).conjugate()
    return abs(innerProduct(phi, psi) - swapped) / (
        phi.norm() * psi.norm()
    ), 1e-14


@check("velocity", "direction reversal flips the tangential oracle")
def oracleSignFlip(context: SuiteContext) -> Tuple[float, float]:
    bumps = context.planeBumps
    angle, offset = float(context.rng.uniform(0.0, math.pi)), 0.3
    forward = smearedLineIntegral(bumps, Target.TANGENTIAL, angle, offset,
                                  0.4)
    backward = smearedLineIntegral(bumps, Target.TANGENTIAL,
                                   angle + math.pi, -offset, 0.4)
    return abs(forward + backward), 1e-12


@check("velocity", "comoving frame matches the lab frame")
def framesAgree(context: SuiteContext) -> Tuple[float, float]:
    ham = context.planeMagnetic
    spec = ProbeSpec(width=0.8, speeds=(2.0,), asymptoticTime=1.0)
    comoving = pairing(0.3, 0.2, 2.0, ham, spec).raw
    lab = pairing(0.3, 0.2, 2.0, ham, replace(spec, frame=Frame.LAB)).raw
    return abs(comoving - lab) / abs(lab), 1e-3


@check("velocity", "pairing is linear in the potential")
def pairingSuperposition(context: SuiteContext) -> Tuple[float, float]:
    """
    Two weak vector potentials probed together give the sum of their
    separate pairings, up to the product of their line integrals.
    """
    first, second, _ = context.weakBumps
    spec = context.probeSpec

    def probed(bumps: Sequence[Bump]) -> complex:
        return pairing(0.7, 0.2, 16.0, context.planeHamiltonian(bumps),
                       spec).value

    together = probed((first, second))
    return abs(together - probed((first,)) - probed((second,))) / abs(
        together
    ), 0.05


@check("velocity", "translation covariance")
def pairingTranslation(context: SuiteContext) -> Tuple[float, float]:
    """
    Moving the potential by a lattice vector M{d} moves the pairing from
    offset M{s} to M{s + theta_perp.d}.
    """
    spec = replace(context.probeSpec, asymptoticTime=0.4)
    shift = (0.0, 2 * context.plane.spacing)
    bumps = context.weakBumps
    moved = tuple(bump.translated(shift) for bump in bumps)
    _, normal = directions(0.0)
    before = pairing(0.0, 0.25, 16.0, context.planeHamiltonian(bumps),
                     spec).value
    after = pairing(0.0, 0.25 + float(np.dot(normal, shift)), 16.0,
                    context.planeHamiltonian(moved), spec).value
    return abs(after - before) / abs(before), 1e-8


@check("velocity", "remainder decays like 1/|xi|")
def remainderSlope(context: SuiteContext) -> Tuple[float, float]:
    low, high = REMAINDER_SLOPE
    exponent = context.probedRay.remainderFit().exponent
    return abs(exponent - 0.5 * (low + high)), 0.5 * (high - low)


@check("velocity", "imaginary part at the fastest probe")
def imaginaryPart(context: SuiteContext) -> Tuple[float, float]:
    value = context.probedRay.values[-1]
    return abs(value.imag) / abs(value.real), IMAGINARY_LIMIT


def _phantom(context: SuiteContext) -> Tuple[Bump, ...]:
    return (Bump("V", (0.6, -0.3), 1.0, (1.2, 0.9)),)


@check("tomography", "rotation covariance")
def rotationCovariance(context: SuiteContext) -> Tuple[float, float]:
    """
    Reconstructing a field turned by a quarter turn gives the turned
    reconstruction.
    """
    grid = context.plane
    (bump,) = _phantom(context)
    turned = Bump("V", (-bump.center[1], bump.center[0]), bump.amplitude,
                  (bump.widths[1], bump.widths[0]))
    angles, offsets = uniformAngles(32), uniformOffsets(129, 6.0)
    original = fbpInvert(xrayForward([bump], angles, offsets), grid).values
    rotated = fbpInvert(xrayForward([turned], angles, offsets), grid).values
    index = (-np.arange(grid.points)) % grid.points
    mapped = original.T[index, :]
    # The first row maps to x = L, which is not a grid point.
    difference = np.max(np.abs(mapped[1:] - rotated[1:]))
    return float(difference / np.max(np.abs(rotated))), 1e-10


@check("tomography", "reprojection consistency")
def reprojection(context: SuiteContext) -> Tuple[float, float]:
    angles, offsets = uniformAngles(90), uniformOffsets(129, 6.0)
    sino = xrayForward(_phantom(context), angles, offsets)
    again = reproject(fbpInvert(sino, context.plane), angles, offsets)
    return float(np.linalg.norm(again.values - sino.values)
                 / np.linalg.norm(sino.values)), 0.05


@check("tomography", "quadrature against closed form")
def quadrature(context: SuiteContext) -> Tuple[float, float]:
    grid = makeGrid(2, 256, 8.0)
    bumps = (Bump("V", (0.3, -0.2), 1.0, (1.5, 1.5)),)
    angles, offsets = uniformAngles(8), uniformOffsets(65, 7.0)
    exact = xrayForward(bumps, angles, offsets)
    sampled = SampledField(grid, bumps[0].evaluate(grid.coordinates)
                           * np.ones(grid.shape))
    numeric = xrayForward(sampled, angles, offsets, order=5)
    return float(np.max(np.abs(numeric.values - exact.values))
                 / np.max(np.abs(exact.values))), 1e-6


@check("tomography", "error falls over an (angles, offsets) ladder")
def refinementLadder(context: SuiteContext) -> Tuple[float, float]:
    """
    The largest ratio of successive errors as angles and offsets double
    together.
    """
    grid = context.plane
    bumps = _phantom(context)
    truth = bumps[0].evaluate(grid.coordinates)

    def error(angles: int, offsets: int) -> float:
        sino = xrayForward(bumps, uniformAngles(angles),
                           uniformOffsets(offsets, 6.0))
        recon = fbpInvert(sino, grid)
        return float(np.linalg.norm(recon.values - truth)
                     / np.linalg.norm(truth))

    errors = [error(22, 33), error(45, 65), error(90, 129)]
    return max(b / a for a, b in zip(errors, errors[1:])), 1.0 - 1e-12


@check("tomography", "field recovery is linear")
def fieldSuperposition(context: SuiteContext) -> Tuple[float, float]:
    grid = context.plane
    angles, offsets = uniformAngles(32), uniformOffsets(129, 6.0)
    first, second = context.planeBumps[:1], context.planeBumps[1:2]
    a = xrayForward(first, angles, offsets, TANGENTIAL)
    b = xrayForward(second, angles, offsets, TANGENTIAL)
    both = a.withValues(a.values + b.values)
    combined = bFieldFromTangential(both, grid).values
    separate = (bFieldFromTangential(a, grid).values
                + bFieldFromTangential(b, grid).values)
    return float(np.max(np.abs(combined - separate))
                 / np.max(np.abs(combined))), 1e-12


def runVerification(
    suites: Optional[Sequence[str]] = None,
    fault: Optional[str] = None,
    seed: int = 0,
) -> VerificationResult:
    """
    Run the named suites (all of them by default).

    @param fault: C{"propagator-sign"} flips the sign of the divergence part
        of the magnetic term in every operator the checks build, which must
        make the unitarity check fail.

    @raise VerificationError: for an empty or unknown selection, or an
        unknown fault.
    """
    names = list(SUITES) if suites is None else list(suites)
    if not names:
        raise VerificationError("no suites selected")
    unknown = sorted(set(names) - set(SUITES))
    if unknown:
        raise VerificationError(
            f"unknown suites {unknown}; choose from {sorted(SUITES)}"
        )
    if fault is not None and fault not in FAULTS:
        raise VerificationError(f"unknown fault {fault!r}")
    context = SuiteContext(
        np.random.default_rng(seed),
        divergenceSign=-1.0 if fault == "propagator-sign" else 1.0,
    )
    result = VerificationResult()
    for suite in names:
        for name, function in SUITES[suite]:
            try:
                value, limit = function(context)
            except (MagnetoscatterError, ValueError) as error:
                log.failure("{suite}: {name} raised", suite=suite,
                            name=name)
                result.checks.append(CheckResult(
                    suite, name, math.nan, math.nan,
                    type(error).__name__,
                ))
                continue
            outcome = CheckResult(suite, name, float(value), float(limit))
            log.info(
                "{suite}: {name}: {value:.3e} (limit {limit:.1e})",
                suite=suite,
                name=name,
                value=outcome.value,
                limit=outcome.limit,
            )
            result.checks.append(outcome)
    return result
