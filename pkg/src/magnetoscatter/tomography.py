"""
The planar X-ray transform and its inversion.

Lines are parametrised by an angle M{alpha} in M{[0, pi)} and a signed offset
M{s}: with M{theta = (cos alpha, sin alpha)} and
M{theta_perp = (-sin alpha, cos alpha)} the line is
M{{s theta_perp + tau theta}}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates
from twisted.logger import Logger

from .errors import GridMismatch, ScatterFlag, SinogramError
from .grid import Grid
from .potentials import (
    ELECTRIC,
    Bump,
    PotentialSet,
    lineIntegrals,
    tangentialLineIntegrals,
)

log = Logger()

TANGENTIAL = "A_tangential"
FIELD = "B12"
MIN_ANGLES = 16
MIN_DERIVATIVE_OFFSETS = 65
SUPPORT_TOLERANCE = 1e-6
IMAGINARY_DISCARD = 1e-6
IMAGINARY_FLAG = 0.1
NOISE_LIMIT = 10.0


class Provenance(Enum):
    ORACLE = "oracle"
    # Closed-form line integrals of the bump descriptors.
    QUADRATURE = "quadrature"
    # Interpolated quadrature of grid samples.
    SCATTERING = "scattering"
    # High-velocity scattering pairings.
    DERIVED = "derived"
    # Computed from another sinogram.


def uniformAngles(count: int) -> np.ndarray:
    return math.pi * np.arange(count) / count


def uniformOffsets(count: int, halfRange: float) -> np.ndarray:
    return np.linspace(-halfRange, halfRange, count)


def directions(angle: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    M{theta} and M{theta_perp} for C{angle}.
    """
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c, s]), np.array([-s, c])


def _uniform(values: np.ndarray) -> bool:
    if len(values) < 2:
        return True
    steps = np.diff(values)
    return bool(np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12))


@dataclass(frozen=True, eq=False)
class Sinogram:
    """
    Line data on a uniform (angle, offset) grid; rows are angles.
    """

    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    provenance: Provenance
    target: str
    speed: Optional[float] = None
    budget: Optional[float] = None
    "Expected deviation from the exact line integrals, when known."
    flags: FrozenSet[ScatterFlag] = frozenset()

    def __post_init__(self) -> None:
        angles = np.asarray(self.angles, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (len(angles), len(offsets)):
            raise SinogramError(
                f"values of shape {values.shape} for {len(angles)} angles "
                f"and {len(offsets)} offsets"
            )
        if not (_uniform(angles) and _uniform(offsets)):
            raise SinogramError("angles and offsets must be uniform")
        if len(angles) and (angles[0] < 0 or angles[-1] >= math.pi):
            raise SinogramError("angles must lie in [0, pi)")
        if len(offsets) % 2 == 0:
            raise SinogramError("need an odd number of offsets")
        if abs(offsets[len(offsets) // 2]) > 1e-12 * max(1.0, offsets[-1]):
            raise SinogramError("the middle offset must be zero")
        if not np.isfinite(values).all():
            raise SinogramError("sinogram holds non-finite values")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "values", values)

    @property
    def offsetStep(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    @property
    def halfRange(self) -> float:
        return float(self.offsets[-1])

    def withValues(self, values: np.ndarray, **changes) -> Sinogram:
        return replace(self, values=values, **changes)

    def imaginaryRatio(self) -> float:
        real = float(np.max(np.abs(self.values.real), initial=0.0))
        imaginary = float(np.max(np.abs(self.values.imag), initial=0.0))
        if real == 0.0:
            return 0.0 if imaginary == 0.0 else math.inf
        return imaginary / real

    def rows(self) -> Iterable[tuple]:
        """
        CSV rows M{(angle index, angle, offset, Re, Im, source, speed)}.
        """
        speed = "" if self.speed is None else self.speed
        for i, angle in enumerate(self.angles):
            for j, offset in enumerate(self.offsets):
                value = self.values[i, j]
                yield (i, float(angle), float(offset), float(value.real),
                       float(value.imag), self.provenance.value, speed)

    CSV_HEADER = ("theta_index", "theta", "s", "re", "im", "source", "xi")


@dataclass(frozen=True, eq=False)
class SampledField:
    """
    A real scalar field given only by its samples on a planar grid.
    """

    grid: Grid
    values: np.ndarray
    target: str = ELECTRIC

    def __post_init__(self) -> None:
        if self.grid.dimension != 2:
            raise SinogramError("line integrals need a planar grid")
        if np.shape(self.values) != self.grid.shape:
            raise GridMismatch("samples do not match their grid")


def _checkSupport(values: np.ndarray) -> None:
    peak = float(np.max(np.abs(values), initial=0.0))
    edge = float(
        max(np.max(np.abs(values[:, 0])), np.max(np.abs(values[:, -1])))
    )
    if edge > SUPPORT_TOLERANCE * peak and edge > 1e-12:
        raise SinogramError(
            f"field reaches the outermost offsets ({edge:.2e} against a "
            f"peak of {peak:.2e}); widen the offset range"
        )


def _closedForm(bumps: Sequence[Bump], target: str, angles: np.ndarray,
                offsets: np.ndarray) -> np.ndarray:
    rows = []
    for angle in angles:
        theta, _ = directions(angle)
        if target == TANGENTIAL:
            rows.append(tangentialLineIntegrals(bumps, theta, offsets))
        else:
            rows.append(lineIntegrals(bumps, target, theta, offsets))
    return np.array(rows)


def _quadrature(sampled: SampledField, angles: np.ndarray,
                offsets: np.ndarray, order: int) -> np.ndarray:
    grid = sampled.grid
    step = grid.spacing / 2.0
    reach = math.sqrt(2.0) * grid.halfWidth
    taus = np.arange(-reach, reach + step / 2, step)
    rows = []
    for angle in angles:
        theta, normal = directions(angle)
        points = (offsets[:, None, None] * normal
                  + taus[None, :, None] * theta)
        indices = (points + grid.halfWidth) / grid.spacing
        samples = map_coordinates(
            np.asarray(sampled.values, dtype=float),
            [indices[..., 0], indices[..., 1]],
            order=order,
            mode="grid-constant",
            cval=0.0,
        )
        rows.append(trapezoid(samples, dx=step, axis=-1))
    return np.array(rows)


def xrayForward(
    source: Union[Sequence[Bump], SampledField],
    angles: Sequence[float],
    offsets: Sequence[float],
    target: str = ELECTRIC,
    order: int = 1,
) -> Sinogram:
    """
    Line integrals of a field over every (angle, offset) pair.

    Bump descriptors are integrated in closed form; grid samples by
    trapezoidal quadrature at half the grid spacing, interpolating with
    splines of the given C{order}.  C{target} names the component
    (C{V}, C{A1}, C{A2}, or L{TANGENTIAL} for M{theta . A}) for descriptors.

    @raise SinogramError: if the field is not negligible at the outermost
        offsets.
    """
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if isinstance(source, SampledField):
        values = _quadrature(source, angles, offsets, order)
        provenance, target = Provenance.QUADRATURE, source.target
    else:
        values = _closedForm(tuple(source), target, angles, offsets)
        provenance = Provenance.ORACLE
    _checkSupport(values)
    return Sinogram(angles, offsets, values, provenance, target)


def rampFilter(count: int, offsetStep: float) -> Tuple[int, np.ndarray]:
    """
    Hann-apodised ramp response on a zero-padded offset axis of length M.

    The ramp is the transform of the band-limited (Ram-Lak) kernel rather than
    a sampled M{|omega|}, which avoids the DC offset of the naive ramp.
    """
    padded = max(64, 2 ** int(math.ceil(math.log2(2 * count))))
    n = np.concatenate([np.arange(0, padded // 2 + 1),
                        np.arange(-(padded // 2) + 1, 0)])
    kernel = np.zeros(padded)
    kernel[0] = math.pi / (2.0 * offsetStep**2)
    odd = n % 2 == 1
    kernel[odd] = -2.0 / (math.pi * n[odd] ** 2 * offsetStep**2)
    ramp = offsetStep * np.real(fft.fft(kernel))
    omega = 2.0 * math.pi * fft.fftfreq(padded, d=offsetStep)
    cutoff = math.pi / offsetStep
    window = 0.5 * (1.0 + np.cos(math.pi * omega / cutoff))
    return padded, ramp * window


def filterProjections(sino: Sinogram) -> np.ndarray:
    count = len(sino.offsets)
    padded, response = rampFilter(count, sino.offsetStep)
    spectra = fft.fft(sino.values.real, n=padded, axis=1)
    return np.real(fft.ifft(spectra * response, axis=1))[:, :count]


@dataclass(frozen=True, eq=False)
class ReconGrid:
    grid: Grid
    values: np.ndarray
    target: str
    provenance: Provenance
    flags: FrozenSet[ScatterFlag] = frozenset()


def _backproject(filtered: np.ndarray, sino: Sinogram,
                 grid: Grid) -> np.ndarray:
    x, y = grid.coordinates
    result = np.zeros(grid.shape)
    for angle, row in zip(sino.angles, filtered):
        _, normal = directions(angle)
        t = normal[0] * x + normal[1] * y
        result += np.interp(t, sino.offsets, row, left=0.0, right=0.0)
    return result / (2.0 * len(sino.angles))


def fbpInvert(sino: Sinogram, grid: Grid) -> ReconGrid:
    """
    Filtered backprojection of the real part of C{sino} onto C{grid}.
    """
    if grid.dimension != 2:
        raise GridMismatch("backprojection needs a planar grid")
    flags = set(sino.flags)
    count = len(sino.angles)
    if count < MIN_ANGLES:
        log.warn(
            "only {count} angles; streaks expected beyond radius {radius:.3g}",
            count=count,
            radius=count * sino.offsetStep / math.pi,
        )
    ratio = sino.imaginaryRatio()
    if ratio > IMAGINARY_FLAG:
        log.warn("{target} sinogram has imaginary part {ratio:.2%} of its "
                 "real part", target=sino.target, ratio=ratio)
        flags.add(ScatterFlag.IMAGINARY_RESIDUE)
    elif ratio > IMAGINARY_DISCARD:
        log.info("discarding imaginary part ({ratio:.2e} of real) of the "
                 "{target} sinogram", ratio=ratio, target=sino.target)
    values = _backproject(filterProjections(sino), sino, grid)
    return ReconGrid(grid, values, sino.target, sino.provenance,
                     frozenset(flags))


def offsetDerivative(sino: Sinogram, windowed: bool = False) -> np.ndarray:
    """
    Spectral derivative of every row along the offset axis.
    """
    count = len(sino.offsets)
    k = 2.0 * math.pi * fft.fftfreq(count, d=sino.offsetStep)
    symbol = 1j * k
    if windowed:
        symbol = symbol * 0.5 * (1.0 + np.cos(k * sino.offsetStep))
    return np.real(fft.ifft(symbol * fft.fft(sino.values.real, axis=1),
                            axis=1))


def noiseAmplification(sino: Sinogram) -> float:
    """
    How much the bare derivative exceeds its Hann-windowed counterpart.
    """
    bare = float(np.linalg.norm(offsetDerivative(sino)))
    smooth = float(np.linalg.norm(offsetDerivative(sino, windowed=True)))
    if smooth == 0.0:
        return 1.0 if bare == 0.0 else math.inf
    return bare / smooth


def bFieldFromTangential(sino: Sinogram, grid: Grid) -> ReconGrid:
    """
    Recover M{B_12} from tangential data: the offset derivative of the
    tangential sinogram is minus the X-ray transform of M{B_12}.

    @raise SinogramError: with fewer than 65 offsets, or when the
        derivative amplifies high-frequency content more than tenfold.
    """
    if len(sino.offsets) < MIN_DERIVATIVE_OFFSETS:
        raise SinogramError(
            f"need at least {MIN_DERIVATIVE_OFFSETS} offsets to "
            f"differentiate, got {len(sino.offsets)}"
        )
    amplification = noiseAmplification(sino)
    log.info("offset derivative amplification {factor:.3g}",
             factor=amplification)
    if amplification > NOISE_LIMIT:
        raise SinogramError(
            f"offset derivative amplifies noise by {amplification:.3g}"
        )
    derived = sino.withValues(-offsetDerivative(sino).astype(complex),
                              target=FIELD, provenance=Provenance.DERIVED)
    recon = fbpInvert(derived, grid)
    return replace(recon, provenance=sino.provenance)


def reproject(recon: ReconGrid, angles: Sequence[float],
              offsets: Sequence[float], order: int = 1) -> Sinogram:
    """
    Line integrals of a reconstruction, kept to the disc strictly inside the
    outermost offsets; outside it the reconstruction holds only artifacts.
    """
    grid = recon.grid
    radius = float(np.max(np.abs(offsets))) - 2.0 * grid.spacing
    inside = grid.radiusSquared <= radius**2
    return xrayForward(
        SampledField(grid, np.where(inside, recon.values, 0.0), recon.target),
        angles,
        offsets,
        order=order,
    )


def truthFor(truth: PotentialSet, target: str) -> np.ndarray:
    if target == ELECTRIC:
        return truth.scalar
    if target in ("A1", "A2"):
        return truth.vector[int(target[1]) - 1]
    if target == FIELD:
        return truth.magneticField(1, 2)
    raise KeyError(f"no ground truth for target {target!r}")


@dataclass(frozen=True)
class TargetError:
    target: str
    relativeL2: float
    maxAbs: float
    provenance: str

    def asJSON(self) -> Dict:
        return {
            "target": self.target,
            "relativeL2": self.relativeL2,
            "maxAbs": self.maxAbs,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class ReconstructionReport:
    errors: List[TargetError] = field(default_factory=list)
    flags: FrozenSet[ScatterFlag] = frozenset()

    def error(self, target: str,
              provenance: Optional[str] = None) -> TargetError:
        for each in self.errors:
            if each.target == target and provenance in (None,
                                                        each.provenance):
                return each
        raise KeyError(target)

    def asJSON(self) -> Dict:
        return {
            "targets": [each.asJSON() for each in self.errors],
            "flags": sorted(flag.value for flag in self.flags),
        }


def reconstructionReport(truth: PotentialSet,
                         recons: Sequence[ReconGrid]) -> ReconstructionReport:
    """
    Relative L2 and largest absolute error of each reconstruction against
    the sampled ground truth.

    @raise GridMismatch: if a reconstruction lives on another grid.
    """
    errors = []
    flags: FrozenSet[ScatterFlag] = frozenset()
    for recon in recons:
        if recon.grid != truth.grid:
            raise GridMismatch(
                f"{recon.target} reconstructed on {recon.grid}, truth on "
                f"{truth.grid}"
            )
        expected = truthFor(truth, recon.target)
        difference = recon.values - expected
        scale = float(np.linalg.norm(expected))
        distance = float(np.linalg.norm(difference))
        errors.append(TargetError(
            recon.target,
            distance / scale if scale else distance,
            float(np.max(np.abs(difference))),
            recon.provenance.value,
        ))
        flags = flags | recon.flags
    return ReconstructionReport(errors, flags)
