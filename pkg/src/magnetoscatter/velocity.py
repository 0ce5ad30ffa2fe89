"""
High-velocity probing of the linear scattering operator.

A Gaussian envelope M{phi_0} of width M{sigma} centred on the line
M{{s theta_perp + tau theta}} is boosted to M{phi_xi = exp(i m xi.x) phi_0}
with M{xi = |xi| theta}.  As M{|xi|} grows, M{i((S_L - I) phi_xi, phi_xi)}
tends to the tangential line integral M{int theta.A} smeared by
M{|phi_0|^2}, and M{-2m|xi|} times it to the line integral of M{V}.

Pairings are computed in the frame moving with the packet by default: the
Galilean boost intertwines the two dynamics exactly, so nothing needs to
resolve the carrier M{exp(i m xi.x)} and the packet never leaves the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from twisted.logger import Logger

from .errors import ResolutionError, ScatterFlag
from .grid import Grid, Wavefunction, innerProduct
from .jobs import JobPool
from .potentials import (
    ELECTRIC,
    Bump,
    PotentialSet,
    lineIntegrals,
    tangentialLineIntegrals,
)
from .propagators import (
    ComovingHamiltonian,
    EvolutionSpec,
    HamiltonianOp,
    PowerLawFit,
    evolve,
    fitPowerLaw,
    freePropagate,
)
from .scattering import (
    ScatterSpec,
    defaultAsymptoticTime,
    linearS,
    stabilized,
)
from .tomography import TANGENTIAL, Provenance, Sinogram, directions

log = Logger()

MASS = 1.0
BAND_FRACTION = 0.8
BAND_WARNING = 0.7
EXTENT_LEVEL = math.exp(-9.0)
"Spectral power, relative to the peak, that marks the edge of a packet."
STEP_FRACTION = 0.05
"Largest fraction of a bump width the potential may move per time step."
EXTRAPOLATION_AGREEMENT = 0.1
IMAGINARY_LIMIT = 0.1
REMAINDER_SLOPE = (-1.2, -0.8)
"Accepted log-log slope of the remainder against M{|xi|}, around M{-1}."
DEVIATION_LIMIT = 0.05
ORACLE_NODES = 24


class Target(Enum):
    TANGENTIAL = TANGENTIAL
    ELECTRIC = ELECTRIC


class Frame(Enum):
    COMOVING = "comoving"
    # Evolve the envelope in the frame travelling with the packet.
    LAB = "lab"
    # Put the boosted packet on the grid as it is.


def envelope(grid: Grid, center: Sequence[float],
             width: float) -> Wavefunction:
    """
    The unit-norm Gaussian M{(pi sigma^2)^(-n/4) exp(-|x - c|^2 / 2 sigma^2)}.
    """
    exponent = sum((x - c) ** 2 for x, c in zip(grid.coordinates, center))
    values = (math.pi * width**2) ** (-grid.dimension / 4.0) * np.exp(
        -exponent / (2.0 * width**2)
    )
    return Wavefunction(grid, values * np.ones(grid.shape))


def spectralExtent(u: Wavefunction) -> float:
    """
    Largest M{|k|} at which the power spectrum is still above M{e^-9} of its
    peak; for a Gaussian of width M{sigma} this is M{3/sigma}.
    """
    power = np.abs(u.spectrum) ** 2
    peak = float(power.max())
    if peak == 0.0:
        return 0.0
    centroid = [
        float(np.sum(k * power) / np.sum(power)) for k in u.grid.kVectors
    ]
    distance = np.sqrt(
        sum((k - c) ** 2 for k, c in zip(u.grid.kVectors, centroid))
    )
    return float(np.max(distance[power >= EXTENT_LEVEL * peak]))


def requiredPoints(grid: Grid, reach: float) -> int:
    """
    Smallest even M{N} whose band holds wavenumbers up to C{reach}.
    """
    points = math.ceil(2.0 * grid.halfWidth * reach
                       / (BAND_FRACTION * math.pi))
    return points + points % 2


def checkBand(grid: Grid, reach: float) -> None:
    """
    @raise ResolutionError: if C{reach} exceeds 0.8 of the grid's Nyquist
        wavenumber.
    """
    if reach > BAND_FRACTION * grid.nyquist:
        raise ResolutionError(
            f"boosted packet reaches |k| = {reach:.3g}, beyond "
            f"{BAND_FRACTION} of Nyquist {grid.nyquist:.3g}",
            requiredPoints(grid, reach),
        )


def boost(phi0: Wavefunction, xi: Sequence[float],
          mass: float = MASS) -> Wavefunction:
    """
    Multiply by M{exp(i m xi.x)}, shifting the spectrum by M{m xi}.

    @raise ResolutionError: if the shifted spectrum leaves the resolved band.
    """
    speed = math.sqrt(sum(v * v for v in xi))
    if speed == 0.0:
        return phi0
    checkBand(phi0.grid, mass * speed + spectralExtent(phi0))
    phase = sum(mass * v * x for v, x in zip(xi, phi0.grid.coordinates))
    return phi0.withValues(phi0.values * np.exp(1j * phase))


def rayGeometry(dimension: int, angle: float,
                offset: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Travel direction and envelope centre for the ray (C{angle}, C{offset}).

    On a line the only directions are M{+1} (angle 0) and M{-1} (angle pi)
    and the offset must vanish.
    """
    if dimension == 2:
        theta, normal = directions(angle)
        return theta, offset * normal
    if offset:
        raise ValueError("a one-dimensional ray has no offset")
    return np.array([1.0 if math.cos(angle) > 0 else -1.0]), np.zeros(1)


@dataclass(frozen=True)
class ProbeState:
    """
    An envelope and the boost applied to it.
    """

    grid: Grid
    width: float
    center: Tuple[float, ...]
    xi: Tuple[float, ...]
    mass: float = MASS

    @classmethod
    def forRay(cls, grid: Grid, angle: float, offset: float, speed: float,
               width: float, mass: float = MASS) -> ProbeState:
        theta, center = rayGeometry(grid.dimension, angle, offset)
        return cls(grid, width, tuple(center), tuple(speed * theta), mass)

    @property
    def speed(self) -> float:
        return math.sqrt(sum(v * v for v in self.xi))

    @property
    def momentum(self) -> Tuple[float, ...]:
        return tuple(self.mass * v for v in self.xi)

    @property
    def bandEdge(self) -> float:
        return self.mass * self.speed + 3.0 / self.width

    def bandUsage(self) -> float:
        return self.bandEdge / self.grid.nyquist

    def checkBand(self) -> None:
        checkBand(self.grid, self.bandEdge)

    def envelope(self) -> Wavefunction:
        return envelope(self.grid, self.center, self.width)

    def boosted(self) -> Wavefunction:
        self.checkBand()
        return boost(self.envelope(), self.xi, self.mass)


@dataclass(frozen=True)
class ProbeSpec:
    width: float
    "Envelope width M{sigma}."
    speeds: Tuple[float, ...] = (8.0, 16.0, 32.0)
    mass: float = MASS
    frame: Frame = Frame.COMOVING
    asymptoticTime: Optional[float] = None
    "Fixed M{T}; by default long enough for the packet to clear every bump."
    timeStep: Optional[float] = None
    "Upper bound on the time step."
    checkStability: bool = False
    stabilityTolerance: float = 1e-6

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise ValueError("envelope width must be positive")
        if not self.speeds or min(self.speeds) <= 0:
            raise ValueError("probe speeds must be positive")


def probeTime(potentials: PotentialSet, speed: float,
              spec: ProbeSpec) -> float:
    if spec.asymptoticTime is not None:
        return spec.asymptoticTime
    return defaultAsymptoticTime(2.0 * spec.mass * speed, potentials)


def probeStep(potentials: PotentialSet, speed: float,
              spec: ProbeSpec) -> float:
    """
    A time step short enough for the potential to move at most 5% of its
    narrowest bump width per step in the packet's frame.
    """
    grid = potentials.grid
    candidates = [1.0 / float(np.max(grid.kSquared))]
    if spec.timeStep is not None:
        candidates.append(spec.timeStep)
    if potentials.bumps:
        narrowest = min(min(each.widths) for each in potentials.bumps)
        candidates.append(STEP_FRACTION * narrowest
                          / (2.0 * spec.mass * speed))
    return min(candidates)


def _comovingOutput(ham: HamiltonianOp, state: ProbeState,
                    evolution: EvolutionSpec, T: float) -> Wavefunction:
    """
    M{exp(-iT Delta) U~(T, -T) exp(-iT Delta) phi_0}, the boosted-back image
    of M{S_L phi_xi}.
    """
    moving = ComovingHamiltonian(ham.potentials, ham.divergenceSign,
                                 momentum=state.momentum)
    incoming = freePropagate(state.envelope(), -T)
    final = evolve(incoming, moving, evolution.lasting(2 * T),
                   startTime=-T).final
    return freePropagate(final, -T)


@dataclass(frozen=True)
class ProbePairing:
    raw: complex
    "M{i((S_L - I) phi_xi, phi_xi)}."
    value: complex
    "The raw pairing scaled for its target."
    flags: FrozenSet[ScatterFlag] = frozenset()


def pairing(
    angle: float,
    offset: float,
    speed: float,
    ham: HamiltonianOp,
    spec: ProbeSpec,
    target: Target = Target.TANGENTIAL,
) -> ProbePairing:
    """
    The high-velocity pairing for one ray at one speed.

    For the tangential target this is M{i((S_L - I) phi_xi, phi_xi)}; for
    the electric target it is multiplied by M{-2m|xi|}.
    """
    grid = ham.grid
    state = ProbeState.forRay(grid, angle, offset, speed, spec.width,
                              spec.mass)
    T = probeTime(ham.potentials, speed, spec)
    evolution = EvolutionSpec(
        timeStep=probeStep(ham.potentials, speed, spec),
        totalTime=T,
        includeNonlinearity=False,
    )
    scatter = ScatterSpec(T, evolution, checkStability=spec.checkStability,
                          stabilityTolerance=spec.stabilityTolerance)
    flags = set()
    if spec.frame is Frame.COMOVING:
        reference = state.envelope()
        result = stabilized(
            lambda time: _comovingOutput(ham, state, evolution, time),
            scatter,
        )
    else:
        if state.bandUsage() > BAND_WARNING:
            flags.add(ScatterFlag.BAND_LIMITED)
        reference = state.boosted()
        result = linearS(reference, ham, scatter)
    flags |= result.flags
    raw = 1j * (
        innerProduct(result.output, reference)
        - innerProduct(reference, reference)
    )
    value = raw
    if target is Target.ELECTRIC:
        value = -2.0 * spec.mass * speed * raw
    log.debug(
        "pairing at angle {angle:.4f}, offset {offset:.4f}, speed {speed}: "
        "{value}",
        angle=angle,
        offset=offset,
        speed=speed,
        value=value,
    )
    return ProbePairing(raw, value, frozenset(flags))


def smearedLineIntegral(
    bumps: Sequence[Bump],
    target: Target,
    angle: float,
    offset: float,
    width: float,
    nodes: int = ORACLE_NODES,
) -> float:
    """
    The limit of L{pairing}: the line integral of the target averaged over
    offsets with the density of M{|phi_0|^2}, by Gauss-Hermite quadrature.
    """
    z, weights = hermgauss(nodes)
    theta, _ = directions(angle)
    offsets = offset + width * z
    if target is Target.TANGENTIAL:
        values = tangentialLineIntegrals(bumps, theta, offsets)
    else:
        values = lineIntegrals(bumps, ELECTRIC, theta, offsets)
    return float(np.sum(weights * values) / math.sqrt(math.pi))


@dataclass(frozen=True)
class RaySample:
    angle: float
    offset: float
    target: Target
    speeds: Tuple[float, ...]
    values: Tuple[complex, ...]
    oracle: Optional[float] = None
    flags: FrozenSet[ScatterFlag] = frozenset()

    @property
    def isExtrapolated(self) -> bool:
        if len(self.values) < 2:
            return False
        first, second = self.values[-2], self.values[-1]
        scale = max(abs(first), abs(second))
        return scale > 0 and abs(second - first) < (
            EXTRAPOLATION_AGREEMENT * scale
        )

    @property
    def estimate(self) -> complex:
        """
        Linear extrapolation in M{1/|xi|} from the two fastest probes when
        they agree to 10%, otherwise the fastest probe alone.
        """
        if not self.isExtrapolated:
            return self.values[-1]
        (slow, fast), (q1, q2) = self.speeds[-2:], self.values[-2:]
        return (fast * q2 - slow * q1) / (fast - slow)

    def remainders(self) -> List[float]:
        if self.oracle is None:
            raise ValueError("no oracle to compare against")
        return [abs(value - self.oracle) for value in self.values]

    def remainderFit(self) -> PowerLawFit:
        return fitPowerLaw(self.speeds, self.remainders())

    def relativeDeviation(self) -> float:
        """
        Deviation of the fastest probe from the oracle, relative to it.
        """
        remainder = self.remainders()[-1]
        return remainder / abs(self.oracle) if self.oracle else remainder

    def asRows(self) -> List[tuple]:
        return [
            (self.angle, self.offset, speed, value.real, value.imag,
             "" if self.oracle is None else self.oracle)
            for speed, value in zip(self.speeds, self.values)
        ]


def _imaginaryFlag(value: complex) -> FrozenSet[ScatterFlag]:
    if abs(value.real) > 1e-12 and abs(value.imag) > IMAGINARY_LIMIT * abs(
        value.real
    ):
        log.warn("pairing {value} has a large imaginary part", value=value)
        return frozenset({ScatterFlag.IMAGINARY_RESIDUE})
    return frozenset()


def probeRay(
    ham: HamiltonianOp,
    angle: float,
    offset: float,
    spec: ProbeSpec,
    target: Target = Target.TANGENTIAL,
    pool: Optional[JobPool] = None,
) -> RaySample:
    """
    Pair one ray at every speed in C{spec.speeds} and compare with the
    oracle when the potential has a planar bump description.
    """
    pool = pool or JobPool()
    results = pool.run({
        speed: (lambda speed=speed: pairing(angle, offset, speed, ham, spec,
                                            target))
        for speed in spec.speeds
    })
    values = tuple(results[speed].value for speed in spec.speeds)
    flags: FrozenSet[ScatterFlag] = frozenset()
    for each in results.values():
        flags = flags | each.flags
    oracle = None
    if ham.grid.dimension == 2 and ham.potentials.bumps:
        oracle = smearedLineIntegral(ham.potentials.bumps, target, angle,
                                     offset, spec.width)
    elif not ham.potentials.bumps:
        oracle = 0.0
    if target is Target.TANGENTIAL:
        flags = flags | _imaginaryFlag(values[-1])
    return RaySample(angle, offset, target, tuple(spec.speeds), values,
                     oracle, flags)


def remainderBudget(potentials: PotentialSet, speed: float, width: float,
                    mass: float = MASS) -> float:
    """
    Rough size of the M{O(1/|xi|) + O(sigma^2)} gap between scattering and
    oracle sinograms.
    """
    if not potentials.bumps:
        return 0.0
    scale = sum(
        abs(each.amplitude) * math.sqrt(math.pi) * max(each.widths)
        for each in potentials.bumps
    )
    narrowest = min(min(each.widths) for each in potentials.bumps)
    return scale * (1.0 / (2.0 * mass * speed * narrowest)
                    + (width / narrowest) ** 2)


def _checkAllBands(grid: Grid, angles: Sequence[float],
                   offsets: Sequence[float], speed: float,
                   spec: ProbeSpec) -> None:
    failing = []
    for angle in angles:
        for offset in offsets:
            state = ProbeState.forRay(grid, angle, offset, speed, spec.width,
                                      spec.mass)
            if state.bandEdge > BAND_FRACTION * grid.nyquist:
                failing.append((angle, offset))
    if failing:
        shown = ", ".join(f"({a:.4f}, {s:.4f})" for a, s in failing[:10])
        more = f" and {len(failing) - 10} more" if len(failing) > 10 else ""
        reach = spec.mass * speed + 3.0 / spec.width
        raise ResolutionError(
            f"{len(failing)} probes leave the band at |xi| = {speed}: "
            f"{shown}{more}",
            requiredPoints(grid, reach),
        )


def assembleSinogram(
    ham: HamiltonianOp,
    angles: Sequence[float],
    offsets: Sequence[float],
    speed: float,
    target: Target,
    source: Provenance,
    spec: ProbeSpec,
    pool: Optional[JobPool] = None,
) -> Sinogram:
    """
    Sample every (angle, offset) ray, either by scattering at speed
    C{speed} or from the smeared oracle.
    """
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    bumps = ham.potentials.bumps
    if source is Provenance.ORACLE:
        values = np.array([
            [smearedLineIntegral(bumps, target, a, s, spec.width)
             for s in offsets]
            for a in angles
        ])
        return Sinogram(angles, offsets, values, source, target.value)
    if source is not Provenance.SCATTERING:
        raise ValueError(f"cannot assemble a {source.value} sinogram")
    if spec.frame is Frame.LAB:
        _checkAllBands(ham.grid, angles, offsets, speed, spec)
    pool = pool or JobPool()
    jobs = {
        (i, j): (lambda a=a, s=s: pairing(a, s, speed, ham, spec, target))
        for i, a in enumerate(angles)
        for j, s in enumerate(offsets)
    }
    results = pool.run(jobs)
    values = np.array([
        [results[(i, j)].value for j in range(len(offsets))]
        for i in range(len(angles))
    ])
    flags: FrozenSet[ScatterFlag] = frozenset()
    for each in results.values():
        flags = flags | each.flags
    budget = remainderBudget(ham.potentials, speed, spec.width, spec.mass)
    log.info("assembled {count} {target} probes at |xi|={speed}",
             count=len(jobs), target=target.value, speed=speed)
    return Sinogram(angles, offsets, values, source, target.value, speed,
                    budget, flags)


def symmetrisedPairings(
    ham: HamiltonianOp,
    angle: float,
    offset: float,
    speed: float,
    spec: ProbeSpec,
) -> Tuple[complex, complex, FrozenSet[ScatterFlag]]:
    """
    Split one line's data into its magnetic and electric parts by probing it
    in both directions.

    Reversing the direction (M{theta -> theta + pi}, M{s -> -s}) flips the
    sign of M{theta.A} but not of M{V}; the odd part is the tangential
    estimate and M{-2m|xi|} times the even part the electric one.
    """
    forward = pairing(angle, offset, speed, ham, spec)
    backward = pairing(angle + math.pi, -offset, speed, ham, spec)
    tangential = 0.5 * (forward.raw - backward.raw)
    electric = -spec.mass * speed * (forward.raw + backward.raw)
    return tangential, electric, forward.flags | backward.flags


def assembleJointSinograms(
    ham: HamiltonianOp,
    angles: Sequence[float],
    offsets: Sequence[float],
    speed: float,
    spec: ProbeSpec,
    pool: Optional[JobPool] = None,
) -> Tuple[Sinogram, Sinogram]:
    """
    Tangential and electric sinograms from symmetrised probing.
    """
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if spec.frame is Frame.LAB:
        _checkAllBands(ham.grid, angles, offsets, speed, spec)
    pool = pool or JobPool()
    results = pool.run({
        (i, j): (lambda a=a, s=s: symmetrisedPairings(ham, a, s, speed,
                                                      spec))
        for i, a in enumerate(angles)
        for j, s in enumerate(offsets)
    })
    shape = (len(angles), len(offsets))
    tangential = np.zeros(shape, dtype=complex)
    electric = np.zeros(shape, dtype=complex)
    flags: FrozenSet[ScatterFlag] = frozenset()
    for (i, j), (a, v, f) in results.items():
        tangential[i, j] = a
        electric[i, j] = v
        flags = flags | f
    budget = remainderBudget(ham.potentials, speed, spec.width, spec.mass)
    return (
        Sinogram(angles, offsets, tangential, Provenance.SCATTERING,
                 TANGENTIAL, speed, budget, flags),
        Sinogram(angles, offsets, electric, Provenance.SCATTERING, ELECTRIC,
                 speed, budget, flags),
    )


def probeManifest(angles: Sequence[float], offsets: Sequence[float],
                  speed: float, spec: ProbeSpec,
                  target: Target) -> Dict:
    return {
        "angles": [float(a) for a in angles],
        "offsets": [float(s) for s in offsets],
        "speed": speed,
        "width": spec.width,
        "mass": spec.mass,
        "frame": spec.frame.value,
        "target": target.value,
        "asymptoticTime": spec.asymptoticTime,
        "timeStep": spec.timeStep,
    }
