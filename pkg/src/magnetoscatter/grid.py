"""
Periodic grids, complex fields on them, and the norms the rest of the package
measures things with.

A L{Grid} samples the box M{[-L, L)^n} at M{N} points per axis; its wavenumber
lattice is laid out in the usual FFT ordering so that C{scipy.fft} output can
be multiplied by it directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import fft
from twisted.logger import Logger

from .errors import FieldError, GridError, GridMismatch, UnresolvedField

log = Logger()

RESOLVED_TAIL = 1e-8
"Largest energy fraction allowed in the outer third of the spectrum."


@dataclass(frozen=True)
class Grid:
    """
    A uniform periodic sampling of M{[-L, L)^n}.
    """

    dimension: int
    "Spatial dimension, 1 or 2."
    points: int
    "Samples per axis; even and at least 8."
    halfWidth: float
    "Half the box edge, L."

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, not {self.dimension}")
        if self.points % 2 or self.points < 8:
            raise GridError(
                f"points per axis must be even and >= 8, not {self.points}"
            )
        if not self.halfWidth > 0:
            raise GridError(
                f"half-width must be positive, not {self.halfWidth}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.halfWidth / self.points

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points,) * self.dimension

    @property
    def weight(self) -> float:
        """
        Quadrature weight M{h^n} of one sample.
        """
        return self.spacing**self.dimension

    @property
    def size(self) -> int:
        return self.points**self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.halfWidth + self.spacing * np.arange(self.points)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """
        One axis of the wavenumber lattice, M{(pi/L) m} in FFT order.
        """
        return 2.0 * np.pi * fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """
        Broadcastable coordinate arrays, one per axis.
        """
        return tuple(
            np.meshgrid(*([self.axis] * self.dimension), indexing="ij",
                        sparse=True)
        )

    @cached_property
    def kVectors(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            np.meshgrid(*([self.wavenumbers] * self.dimension),
                        indexing="ij", sparse=True)
        )

    @cached_property
    def kSquared(self) -> np.ndarray:
        return sum(k * k for k in self.kVectors) * np.ones(self.shape)

    @cached_property
    def radiusSquared(self) -> np.ndarray:
        return sum(x * x for x in self.coordinates) * np.ones(self.shape)

    @property
    def nyquist(self) -> float:
        """
        Largest magnitude on one axis of the lattice, M{pi/h}.
        """
        return math.pi / self.spacing

    @cached_property
    def outerBand(self) -> np.ndarray:
        """
        Mask of modes whose largest component exceeds two thirds of Nyquist.
        """
        cutoff = (2.0 / 3.0) * self.nyquist
        mask = np.zeros(self.shape, dtype=bool)
        for k in self.kVectors:
            mask |= np.abs(k) > cutoff
        return mask

    def forward(self, values: np.ndarray) -> np.ndarray:
        return fft.fftn(values)

    def inverse(self, spectrum: np.ndarray) -> np.ndarray:
        return fft.ifftn(spectrum)

    def derivative(self, values: np.ndarray, axis: int) -> np.ndarray:
        """
        Spectral derivative along C{axis}.
        """
        return self.inverse(1j * self.kVectors[axis] * self.forward(values))

    def gradient(self, values: np.ndarray) -> Tuple[np.ndarray, ...]:
        spectrum = self.forward(values)
        return tuple(self.inverse(1j * k * spectrum) for k in self.kVectors)

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.inverse(-self.kSquared * self.forward(values))

    def describe(self) -> dict:
        return {"n": self.dimension, "N": self.points, "L": self.halfWidth}


def makeGrid(n: int, N: int, L: float) -> Grid:
    """
    Build a grid; see L{Grid} for the accepted shapes.
    """
    return Grid(int(n), int(N), float(L))


@dataclass(frozen=True, eq=False)
class Wavefunction:
    """
    A complex field sampled on a L{Grid}.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise GridMismatch(
                f"field of shape {values.shape} on a grid of shape "
                f"{self.grid.shape}"
            )
        if not np.isfinite(values).all():
            raise FieldError("wavefunction holds non-finite samples")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> Wavefunction:
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return self.grid.forward(self.values)

    def withValues(self, values: np.ndarray) -> Wavefunction:
        return Wavefunction(self.grid, values)

    def norm(self) -> float:
        """
        Spatial L2 norm.
        """
        return math.sqrt(
            self.grid.weight * float(np.sum(np.abs(self.values) ** 2))
        )

    def spectralNorm(self) -> float:
        """
        L2 norm computed on the Fourier side (Parseval).
        """
        return math.sqrt(
            self.grid.weight
            / self.grid.size
            * float(np.sum(np.abs(self.spectrum) ** 2))
        )

    def h1Norm(self) -> float:
        """
        Flat Sobolev norm with symbol M{(1 + |k|^2)^(1/2)}.
        """
        return math.sqrt(
            self.grid.weight
            / self.grid.size
            * float(np.sum((1.0 + self.grid.kSquared)
                           * np.abs(self.spectrum) ** 2))
        )

    def supNorm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def tailFraction(self) -> float:
        """
        Fraction of spectral energy beyond two thirds of Nyquist.
        """
        power = np.abs(self.spectrum) ** 2
        total = float(power.sum())
        if total == 0.0:
            return 0.0
        return float(power[self.grid.outerBand].sum()) / total

    def requireResolved(self, threshold: float = RESOLVED_TAIL) -> None:
        tail = self.tailFraction()
        if tail > threshold:
            raise UnresolvedField(tail, threshold)

    def __add__(self, other: Wavefunction) -> Wavefunction:
        _sameGrid(self, other)
        return self.withValues(self.values + other.values)

    def __sub__(self, other: Wavefunction) -> Wavefunction:
        _sameGrid(self, other)
        return self.withValues(self.values - other.values)

    def __mul__(self, scalar: complex) -> Wavefunction:
        return self.withValues(self.values * scalar)

    __rmul__ = __mul__


def gaussianPacket(
    grid: Grid,
    amplitude: float = 1.0,
    width: float = 1.0,
    center: Optional[Sequence[float]] = None,
    momentum: Optional[Sequence[float]] = None,
) -> Wavefunction:
    """
    M{a exp(-|x - c|^2 / 2w^2 + i k.x)}, centred at the origin and at rest
    unless told otherwise.
    """
    center = center or (0.0,) * grid.dimension
    momentum = momentum or (0.0,) * grid.dimension
    exponent = np.zeros(grid.shape, dtype=complex)
    for x, c, k in zip(grid.coordinates, center, momentum):
        exponent = exponent - (x - c) ** 2 / (2.0 * width**2) + 1j * k * x
    return Wavefunction(grid, amplitude * np.exp(exponent))


def _sameGrid(u: Wavefunction, v: Wavefunction) -> None:
    if u.grid != v.grid:
        raise GridMismatch(f"{u.grid} is not {v.grid}")


def innerProduct(u: Wavefunction, v: Wavefunction) -> complex:
    """
    L2 pairing M{h^n sum u conj(v)}, conjugate-linear in C{v}.
    """
    _sameGrid(u, v)
    return complex(u.grid.weight * np.vdot(v.values, u.values))


def relativeDistance(u: Wavefunction, v: Wavefunction) -> float:
    """
    M{|u - v| / |v|}, or the plain distance when C{v} vanishes.
    """
    scale = v.norm()
    distance = (u - v).norm()
    return distance / scale if scale else distance


@dataclass(frozen=True)
class SigmaParams:
    """
    Exponents of the weighted space M{Sigma}: M{s = s1 + s2}.
    """

    s: float
    s1: float
    s2: float

    @classmethod
    def forDimension(cls, n: int) -> SigmaParams:
        """
        The smallest admissible M{s = n/2 + 1/2} split evenly.
        """
        s = n / 2.0 + 0.5
        return cls(s, s / 2.0, s / 2.0)

    def validate(self, n: int) -> None:
        """
        @raise FieldError: unless M{s > n/2} and M{s1, s2} split it into two
            positive parts.
        """
        if not self.s > n / 2.0:
            raise FieldError(f"s={self.s} must exceed n/2={n / 2.0}")
        if not math.isclose(self.s1 + self.s2, self.s, rel_tol=1e-12):
            raise FieldError("s1 + s2 must equal s")
        if not (0 < self.s1 < self.s and 0 < self.s2 < self.s):
            raise FieldError("s1 and s2 must lie strictly between 0 and s")


def fractionalLaplacian(u: Wavefunction, power: float) -> np.ndarray:
    """
    Apply M{(-Delta)^(power/2)} as the multiplier M{|k|^power}, zero mode
    mapped to zero.
    """
    magnitude = np.sqrt(u.grid.kSquared)
    symbol = np.zeros_like(magnitude)
    nonzero = magnitude > 0
    symbol[nonzero] = magnitude[nonzero] ** power
    return u.grid.inverse(symbol * u.spectrum)


def sigmaNormTerms(
    u: Wavefunction, params: SigmaParams
) -> Tuple[float, float, float]:
    """
    The three squared-norm contributions to L{sigmaNorm}, before the square
    root: smoothness, spatial weight, and the mixed term.
    """
    grid = u.grid
    params.validate(grid.dimension)
    if u.norm() == 0.0:
        return (0.0, 0.0, 0.0)
    u.requireResolved()
    radius = np.sqrt(grid.radiusSquared)
    smooth = fractionalLaplacian(u, params.s)
    mixed = radius**params.s2 * fractionalLaplacian(u, params.s1)
    weighted = radius**params.s * u.values

    def square(f: np.ndarray) -> float:
        return grid.weight * float(np.sum(np.abs(f) ** 2))

    return (square(smooth), square(weighted), square(mixed))


def sigmaNorm(u: Wavefunction, params: SigmaParams) -> float:
    """
    Norm of C{u} in M{Sigma}.

    @raise UnresolvedField: if C{u} is not resolved by its grid.
    """
    return math.sqrt(sum(sigmaNormTerms(u, params)))
