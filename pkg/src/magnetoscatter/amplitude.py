"""
Recovering linear scattering pairings from the small-amplitude limit of the
nonlinear scattering operator: M{(1/eps)(S(eps phi), psi) -> (S_L phi, psi)}.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermval
from twisted.logger import Logger

from .errors import DegenerateFit, ScatterFlag
from .grid import Grid, Wavefunction, innerProduct
from .jobs import JobPool
from .propagators import HamiltonianOp
from .scattering import ScatterMode, ScatterSpec, linearS, nonlinearS

log = Logger()

RESIDUAL_FLOOR = 1e-10
MIN_FIT_POINTS = 4


def geometricLadder(first: float, count: int = 5,
                    ratio: float = 0.5) -> Tuple[float, ...]:
    return tuple(first * ratio**level for level in range(count))


def hermiteMode(grid: Grid, order: Sequence[int], center: Sequence[float],
                width: float) -> Wavefunction:
    """
    An L2-normalised Hermite function of the given per-axis C{order}.
    """
    values = np.ones(grid.shape, dtype=complex)
    for x, degree, c in zip(grid.coordinates, order, center):
        y = (x - c) / width
        coefficients = np.zeros(degree + 1)
        coefficients[degree] = 1.0
        values = values * hermval(y, coefficients) * np.exp(-0.5 * y * y)
    mode = Wavefunction(grid, values)
    return mode * (1.0 / mode.norm())


def probeFamily(grid: Grid, center: Sequence[float], width: float,
                count: int = 5) -> List[Wavefunction]:
    """
    Gaussians and low Hermite modes to pair against.
    """
    orders: List[Tuple[int, ...]] = []
    degree = 0
    while len(orders) < count:
        if grid.dimension == 1:
            orders.append((degree,))
        else:
            orders.extend(
                (a, degree - a) for a in range(degree + 1)
            )
        degree += 1
    return [hermiteMode(grid, order, center, width)
            for order in orders[:count]]


@dataclass(frozen=True)
class EpsSweep:
    """
    Scaled pairings M{q(eps) = (1/eps)(S(eps phi), psi)} along a ladder.
    """

    ladder: Tuple[float, ...]
    values: Tuple[complex, ...]
    flags: FrozenSet[ScatterFlag] = frozenset()

    def __post_init__(self) -> None:
        if len(self.ladder) != len(self.values):
            raise ValueError("one pairing per amplitude")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("amplitude ladder must be strictly decreasing")
        if min(self.ladder, default=1.0) <= 0:
            raise ValueError("amplitudes must be positive")

    def residuals(self, reference: complex) -> List[float]:
        return [abs(q - reference) for q in self.values]

    def rows(self, reference: complex) -> List[tuple]:
        """
        CSV rows M{(eps, Re q, Im q, residual)}.
        """
        return [
            (eps, q.real, q.imag, abs(q - reference))
            for eps, q in zip(self.ladder, self.values)
        ]


def sweepFamily(
    phi: Wavefunction,
    psis: Sequence[Wavefunction],
    ham: HamiltonianOp,
    ladder: Sequence[float],
    spec: ScatterSpec,
    pool: Optional[JobPool] = None,
) -> List[EpsSweep]:
    """
    Run the full nonlinear scattering map on every C{eps * phi} once and
    pair the outputs with each of C{psis}.

    @raise DegenerateFit: for a ladder of fewer than two amplitudes.
    """
    ladder = tuple(float(eps) for eps in ladder)
    if len(ladder) < 2:
        raise DegenerateFit("cannot extrapolate from a single amplitude")
    spec = spec.using(ScatterMode.NONLINEAR_VS_FREE)
    pool = pool or JobPool()
    results = pool.run({
        eps: (lambda eps=eps: nonlinearS(eps * phi, ham, spec))
        for eps in ladder
    })
    flags: FrozenSet[ScatterFlag] = frozenset()
    for each in results.values():
        flags = flags | each.flags
    if flags:
        log.warn("amplitude sweep flagged: {flags}",
                 flags=sorted(flag.value for flag in flags))
    return [
        EpsSweep(
            ladder,
            tuple(innerProduct(results[eps].output, psi) / eps
                  for eps in ladder),
            flags,
        )
        for psi in psis
    ]


def sweep(
    phi: Wavefunction,
    psi: Wavefunction,
    ham: HamiltonianOp,
    ladder: Sequence[float],
    spec: ScatterSpec,
    pool: Optional[JobPool] = None,
) -> EpsSweep:
    return sweepFamily(phi, [psi], ham, ladder, spec, pool)[0]


def linearPairing(phi: Wavefunction, psi: Wavefunction, ham: HamiltonianOp,
                  spec: ScatterSpec) -> complex:
    """
    M{(S_L phi, psi)}, the limit the sweep should approach.
    """
    linear = replace(spec, evolution=spec.evolution.linear())
    return innerProduct(linearS(phi, ham, linear).output, psi)


@dataclass(frozen=True)
class OrderFit:
    order: float
    "Fitted exponent of the residual against the amplitude."
    extrapolated: complex
    reference: complex
    residuals: Tuple[float, ...]

    @property
    def increases(self) -> int:
        """
        How often the residual grows from one amplitude to the next smaller
        one, ignoring residuals at the numerical floor.
        """
        return sum(
            1 for a, b in zip(self.residuals, self.residuals[1:])
            if b > a and b > RESIDUAL_FLOOR
        )

    @property
    def extrapolationError(self) -> float:
        scale = abs(self.reference)
        distance = abs(self.extrapolated - self.reference)
        return distance / scale if scale else distance

    def asJSON(self) -> dict:
        return {
            "fittedOrder": self.order,
            "extrapolatedValue": self.extrapolated,
            "reference": self.reference,
            "extrapolationError": self.extrapolationError,
            "residualIncreases": self.increases,
        }


def fitOrder(result: EpsSweep, reference: complex) -> OrderFit:
    """
    Least-squares slope of M{log|q(eps) - reference|} against M{log eps},
    and Richardson extrapolation of the last two pairings at that order.

    @raise DegenerateFit: with fewer than four residuals above the numerical
        floor.
    """
    residuals = result.residuals(reference)
    usable = [
        (eps, r) for eps, r in zip(result.ladder, residuals)
        if r > RESIDUAL_FLOOR
    ]
    if len(usable) < MIN_FIT_POINTS:
        raise DegenerateFit(
            f"only {len(usable)} residuals above {RESIDUAL_FLOOR}; the "
            f"potential is too weak or the amplitudes too small"
        )
    amplitudes, values = zip(*usable)
    order, _ = np.polyfit(np.log(amplitudes), np.log(values), 1)
    (e1, e2), (q1, q2) = result.ladder[-2:], result.values[-2:]
    shrink = (e2 / e1) ** order
    extrapolated = (q2 - shrink * q1) / (1.0 - shrink)
    fit = OrderFit(float(order), complex(extrapolated), complex(reference),
                   tuple(residuals))
    if fit.increases:
        log.warn("residuals do not decrease along the ladder: {residuals}",
                 residuals=residuals)
    log.info("fitted order {order:.3f}", order=fit.order)
    return fit
