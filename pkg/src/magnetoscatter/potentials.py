"""
Magnetic and electric potentials built from Gaussian bumps.

Each bump is M{a exp(-sum_j ((x_j - c_j)/w_j)^2)}, optionally differentiated
once along one axis so that pure-gauge fields M{A = grad chi} can be written
down exactly.  Everything here is evaluated analytically from the descriptors;
L{buildPotentials} additionally samples them on a grid and derives the field
strength M{B_jk = d_j A_k - d_k A_j} spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from twisted.logger import Logger

from .errors import PotentialError
from .grid import Grid

log = Logger()

BOUNDARY_TOLERANCE = 1e-10
"Largest boundary-to-peak ratio of a sampled potential."

MAGNETIC = ("A1", "A2")
ELECTRIC = "V"

Coordinates = Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Bump:
    """
    One anisotropic Gaussian contribution to a potential component.
    """

    component: str
    "One of C{A1}, C{A2} or C{V}."
    center: Tuple[float, ...]
    amplitude: float
    "Inverse length for A components, inverse length squared for V."
    widths: Tuple[float, ...]
    derivative: Optional[int] = None
    "If set, the bump is differentiated along this axis (1-based)."

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(map(float, self.center)))
        object.__setattr__(self, "widths", tuple(map(float, self.widths)))
        if self.component not in MAGNETIC + (ELECTRIC,):
            raise PotentialError(f"unknown component {self.component!r}")
        if len(self.center) != len(self.widths):
            raise PotentialError("center and widths differ in dimension")
        if min(self.widths) <= 0:
            raise PotentialError("bump widths must be positive")
        if self.derivative is not None and not (
            1 <= self.derivative <= len(self.center)
        ):
            raise PotentialError(f"no axis {self.derivative} to differentiate")

    @classmethod
    def fromJSON(cls, description: Mapping) -> Bump:
        return cls(
            component=description["component"],
            center=tuple(description["center"]),
            amplitude=float(description["amplitude"]),
            widths=tuple(description["widths"]),
            derivative=description.get("derivative"),
        )

    def asJSON(self) -> Dict:
        result: Dict = {
            "component": self.component,
            "center": list(self.center),
            "amplitude": self.amplitude,
            "widths": list(self.widths),
        }
        if self.derivative is not None:
            result["derivative"] = self.derivative
        return result

    @property
    def dimension(self) -> int:
        return len(self.center)

    def translated(self, offset: Sequence[float]) -> Bump:
        return Bump(
            self.component,
            tuple(c + d for c, d in zip(self.center, offset)),
            self.amplitude,
            self.widths,
            self.derivative,
        )

    def scaled(self, factor: float) -> Bump:
        return Bump(self.component, self.center, self.amplitude * factor,
                    self.widths, self.derivative)

    def _gaussian(self, coords: Coordinates) -> np.ndarray:
        exponent = sum(
            ((x - c) / w) ** 2
            for x, c, w in zip(coords, self.center, self.widths)
        )
        return self.amplitude * np.exp(-exponent)

    def _slope(self, coords: Coordinates, axis: int) -> np.ndarray:
        return -2.0 * (coords[axis] - self.center[axis]) / (
            self.widths[axis] ** 2
        )

    def evaluate(self, coords: Coordinates) -> np.ndarray:
        value = self._gaussian(coords)
        if self.derivative is not None:
            value = self._slope(coords, self.derivative - 1) * value
        return value

    def partial(self, coords: Coordinates, axis: int) -> np.ndarray:
        """
        Analytic derivative of this bump along C{axis} (0-based).
        """
        gaussian = self._gaussian(coords)
        if self.derivative is None:
            return self._slope(coords, axis) * gaussian
        d = self.derivative - 1
        result = self._slope(coords, d) * self._slope(coords, axis) * gaussian
        if axis == d:
            result = result - 2.0 / self.widths[d] ** 2 * gaussian
        return result

    def lineIntegral(
        self, direction: np.ndarray, offsets: np.ndarray
    ) -> np.ndarray:
        """
        Closed-form M{int f(s theta_perp + tau theta) dtau} for a planar bump.
        """
        theta = np.asarray(direction, dtype=float)
        normal = np.array([-theta[1], theta[0]])
        widths = np.asarray(self.widths)
        offsets = np.asarray(offsets, dtype=float)
        base = offsets[..., None] * normal - np.asarray(self.center)
        alpha = float(np.sum(theta**2 / widths**2))
        beta = 2.0 * np.sum(base * theta / widths**2, axis=-1)
        gamma = np.sum(base**2 / widths**2, axis=-1)
        value = (
            self.amplitude
            * math.sqrt(math.pi / alpha)
            * np.exp(beta**2 / (4.0 * alpha) - gamma)
        )
        if self.derivative is not None:
            d = self.derivative - 1
            value = value * (2.0 / widths[d] ** 2) * (
                beta * theta[d] / (2.0 * alpha) - base[..., d]
            )
        return value


def gaugeBumps(
    center: Sequence[float], amplitude: float, widths: Sequence[float]
) -> List[Bump]:
    """
    Bumps for M{A = grad chi} with M{chi} a single Gaussian.
    """
    return [
        Bump(f"A{axis}", tuple(center), amplitude, tuple(widths), axis)
        for axis in range(1, len(center) + 1)
    ]


def parseBumps(descriptions: Iterable[Mapping]) -> List[Bump]:
    return [Bump.fromJSON(each) for each in descriptions]


def componentBumps(bumps: Iterable[Bump], component: str) -> List[Bump]:
    return [each for each in bumps if each.component == component]


def evaluateComponent(
    bumps: Iterable[Bump], component: str, coords: Coordinates
) -> np.ndarray:
    total = np.zeros(np.broadcast_shapes(*(x.shape for x in coords)))
    for each in componentBumps(bumps, component):
        total = total + each.evaluate(coords)
    return total


def vectorPotentialAt(
    bumps: Sequence[Bump], coords: Coordinates
) -> Tuple[np.ndarray, ...]:
    return tuple(
        evaluateComponent(bumps, MAGNETIC[axis], coords)
        for axis in range(len(coords))
    )


def divergenceAt(bumps: Sequence[Bump], coords: Coordinates) -> np.ndarray:
    total = np.zeros(np.broadcast_shapes(*(x.shape for x in coords)))
    for axis in range(len(coords)):
        for each in componentBumps(bumps, MAGNETIC[axis]):
            total = total + each.partial(coords, axis)
    return total


def curlAt(bumps: Sequence[Bump], coords: Coordinates) -> np.ndarray:
    """
    Analytic M{B_12 = d_1 A_2 - d_2 A_1} for planar potentials.
    """
    total = np.zeros(np.broadcast_shapes(*(x.shape for x in coords)))
    for each in componentBumps(bumps, "A2"):
        total = total + each.partial(coords, 0)
    for each in componentBumps(bumps, "A1"):
        total = total - each.partial(coords, 1)
    return total


def lineIntegrals(
    bumps: Iterable[Bump],
    component: str,
    direction: np.ndarray,
    offsets: np.ndarray,
) -> np.ndarray:
    total = np.zeros(np.shape(offsets))
    for each in componentBumps(bumps, component):
        total = total + each.lineIntegral(direction, offsets)
    return total


def tangentialLineIntegrals(
    bumps: Sequence[Bump], direction: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    """
    M{int theta . A} along each line.
    """
    return sum(
        direction[axis] * lineIntegrals(bumps, MAGNETIC[axis], direction,
                                        offsets)
        for axis in range(2)
    )


def _innerOuterRatio(grid: Grid, values: np.ndarray) -> float:
    """
    Largest magnitude on the outer tenth of the box relative to the peak.
    """
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return 0.0
    outer = np.zeros(grid.shape, dtype=bool)
    for x in grid.coordinates:
        outer |= np.abs(x) * np.ones(grid.shape) > 0.9 * grid.halfWidth
    return float(np.max(np.abs(values[outer]))) / peak


def _boundaryRatio(grid: Grid, values: np.ndarray) -> float:
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return 0.0
    edge = 0.0
    for axis in range(grid.dimension):
        for index in (0, -1):
            edge = max(edge,
                       float(np.max(np.abs(np.take(values, index, axis)))))
    return edge / peak


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """
    Analytic descriptors of M{A} and M{V} together with their grid samples.
    """

    grid: Grid
    bumps: Tuple[Bump, ...]
    decayRate: float
    "M{gamma_0} of the exponential decay assumption."
    vector: Tuple[np.ndarray, ...]
    "Real samples of M{A_1 ... A_n}."
    scalar: np.ndarray
    "Samples of M{V}."
    fieldStrength: Dict[Tuple[int, int], np.ndarray]
    "Independent components M{B_jk}, M{j < k}, 1-based keys."
    checks: Dict[str, bool] = field(default_factory=dict)
    "Admissibility checks by name."
    notes: Tuple[str, ...] = ()

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def isMagnetic(self) -> bool:
        return any(bool(np.any(a)) for a in self.vector)

    @property
    def isElectric(self) -> bool:
        return bool(np.any(self.scalar))

    def magneticField(self, j: int, k: int) -> np.ndarray:
        """
        M{B_jk}, antisymmetric in its indices.
        """
        if j == k:
            return np.zeros(self.grid.shape)
        if j < k:
            return self.fieldStrength[(j, k)]
        return -self.fieldStrength[(k, j)]

    def magneticMagnitude(self) -> float:
        return max(
            (float(np.max(np.abs(a))) for a in self.vector), default=0.0
        )

    def withoutElectric(self) -> PotentialSet:
        return buildPotentials(
            [b for b in self.bumps if b.component != ELECTRIC],
            self.grid,
            self.decayRate,
        )

    def withoutMagnetic(self) -> PotentialSet:
        return buildPotentials(
            [b for b in self.bumps if b.component == ELECTRIC],
            self.grid,
            self.decayRate,
        )

    @property
    def allChecksPass(self) -> bool:
        return all(self.checks.values())


def buildPotentials(
    bumps: Iterable[Bump], grid: Grid, decayRate: float = 1.0
) -> PotentialSet:
    """
    Sample the described potentials on C{grid} and check admissibility.

    @raise PotentialError: if a bump is narrower than three grid spacings, is
        not negligible at the box boundary, or lives in the wrong dimension.
    """
    bumps = tuple(bumps)
    if not decayRate > 0:
        raise PotentialError("decay rate must be positive")
    n = grid.dimension
    for each in bumps:
        if each.dimension != n:
            raise PotentialError(
                f"{each.component} bump is {each.dimension}-dimensional on "
                f"a {n}-dimensional grid"
            )
        if each.component in MAGNETIC and int(each.component[1]) > n:
            raise PotentialError(f"{each.component} does not exist for n={n}")
        if min(each.widths) < 3 * grid.spacing:
            raise PotentialError(
                f"{each.component} bump width {min(each.widths)} is below "
                f"3h = {3 * grid.spacing}"
            )
        ratio = _boundaryRatio(grid, each.evaluate(grid.coordinates))
        if ratio >= BOUNDARY_TOLERANCE:
            raise PotentialError(
                f"{each.component} bump at {each.center} reaches the box "
                f"boundary ({ratio:.2e} of its peak)"
            )

    coords = grid.coordinates
    vector = tuple(
        evaluateComponent(bumps, MAGNETIC[axis], coords) * np.ones(grid.shape)
        for axis in range(n)
    )
    scalar = evaluateComponent(bumps, ELECTRIC, coords) * np.ones(grid.shape)
    fieldStrength: Dict[Tuple[int, int], np.ndarray] = {}
    for j in range(n):
        for k in range(j + 1, n):
            fieldStrength[(j + 1, k + 1)] = np.real(
                grid.derivative(vector[k], j) - grid.derivative(vector[j], k)
            )

    bracket = np.sqrt(1.0 + grid.radiusSquared)
    magnitude = np.sqrt(sum(a * a for a in vector))
    checks = {
        "realVector": all(np.isrealobj(a) for a in vector),
        "exponentialDecay": _innerOuterRatio(
            grid, magnitude * np.exp(decayRate * bracket)
        ) <= 1e-3,
        "negligibleAtBoundary": all(
            _boundaryRatio(grid, f) < BOUNDARY_TOLERANCE
            for f in vector + (scalar,)
        ),
        "fieldDecay": all(
            _innerOuterRatio(grid, (1.0 + np.sqrt(grid.radiusSquared))
                             ** (n + 0.1) * np.abs(b)) <= 1e-3
            for b in fieldStrength.values()
        ),
        "fieldGradientDecay": all(
            _innerOuterRatio(
                grid,
                (1.0 + np.sqrt(grid.radiusSquared)) ** (n + 0.1)
                * np.sqrt(sum(np.abs(g) ** 2 for g in grid.gradient(b))),
            ) <= 1e-3
            for b in fieldStrength.values()
        ),
    }
    notes: Tuple[str, ...] = ()
    if any(each.component == ELECTRIC for each in bumps):
        notes = (
            "V decays instead of staying above a positive floor; the "
            "lower-bound assumption on V is not met by construction.",
        )
    failed = sorted(name for name, ok in checks.items() if not ok)
    if failed:
        log.warn("potential admissibility checks failed: {failed}",
                 failed=failed)
    return PotentialSet(
        grid=grid,
        bumps=bumps,
        decayRate=decayRate,
        vector=vector,
        scalar=scalar,
        fieldStrength=fieldStrength,
        checks=checks,
        notes=notes,
    )


def freePotentials(grid: Grid) -> PotentialSet:
    return buildPotentials((), grid)


def uniformPotentials(grid: Grid, vector: Sequence[float]) -> PotentialSet:
    """
    A constant vector potential and no electric part.

    Such a potential does not decay, so it has no bump description and skips
    the admissibility checks; it exists for exact plane-wave comparisons.
    """
    if len(vector) != grid.dimension:
        raise PotentialError("constant vector has the wrong dimension")
    return PotentialSet(
        grid=grid,
        bumps=(),
        decayRate=1.0,
        vector=tuple(np.full(grid.shape, float(a)) for a in vector),
        scalar=np.zeros(grid.shape),
        fieldStrength={
            (j + 1, k + 1): np.zeros(grid.shape)
            for j in range(grid.dimension)
            for k in range(j + 1, grid.dimension)
        },
        notes=("constant vector potential",),
    )
