import math
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from .errors import FieldError, GridError, GridMismatch, UnresolvedField
from .grid import (
    SigmaParams,
    Wavefunction,
    gaussianPacket,
    innerProduct,
    makeGrid,
    relativeDistance,
    sigmaNorm,
)


class GridTests(TestCase):
    """
    Tests for L{Grid}.
    """

    def test_rejectsBadShapes(self) -> None:
        """
        Odd or tiny point counts, and dimensions other than 1 and 2, are
        refused.
        """
        for n, N, L in [(3, 16, 1.0), (1, 15, 1.0), (1, 6, 1.0),
                        (2, 16, 0.0)]:
            with self.assertRaises(GridError):
                makeGrid(n, N, L)

    def test_axisAndSpacing(self) -> None:
        """
        The axis starts at M{-L} and stops one spacing short of M{L}.
        """
        grid = makeGrid(1, 8, 2.0)
        self.assertEqual(grid.spacing, 0.5)
        assert_allclose(grid.axis, [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0,
                                    1.5])
        self.assertAlmostEqual(grid.nyquist, 2.0 * math.pi)

    def test_wavenumbersInFFTOrder(self) -> None:
        """
        The zero mode comes first and the most negative mode sits in the
        middle.
        """
        grid = makeGrid(1, 8, math.pi)
        assert_allclose(grid.wavenumbers, [0, 1, 2, 3, -4, -3, -2, -1])

    def test_spectralDerivative(self) -> None:
        """
        A resolved Gaussian is differentiated to round-off.
        """
        grid = makeGrid(1, 128, 12.0)
        (x,) = grid.coordinates
        values = np.exp(-(x**2))
        assert_allclose(grid.derivative(values, 0).real,
                        -2.0 * x * values, atol=1e-11)

    def test_laplacianOfPlaneWave(self) -> None:
        grid = makeGrid(2, 16, math.pi)
        x, y = grid.coordinates
        wave = np.exp(1j * (2 * x - 3 * y))
        assert_allclose(grid.laplacian(wave), -13.0 * wave, atol=1e-10)


class WavefunctionTests(TestCase):
    """
    Tests for L{Wavefunction} and the pairings between them.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(1, 256, 20.0)

    def test_shapeMismatch(self) -> None:
        """
        Samples of the wrong shape are refused with L{GridMismatch}.
        """
        with self.assertRaises(GridMismatch):
            Wavefunction(self.grid, np.zeros(128))

    def test_nonFinite(self) -> None:
        values = np.zeros(self.grid.shape)
        values[3] = np.nan
        with self.assertRaises(FieldError):
            Wavefunction(self.grid, values)

    def test_gaussianNorm(self) -> None:
        """
        A unit-width Gaussian has squared norm M{sqrt(pi)}, on either side of
        the transform.
        """
        u = gaussianPacket(self.grid, momentum=(1.5,))
        self.assertAlmostEqual(u.norm(), math.pi**0.25, places=12)
        self.assertAlmostEqual(u.spectralNorm(), u.norm(), places=12)

    def test_innerProductConjugateLinear(self) -> None:
        """
        The pairing is linear in its first slot and conjugate-linear in its
        second.
        """
        u = gaussianPacket(self.grid, center=(1.0,), momentum=(0.5,))
        v = gaussianPacket(self.grid, width=1.3, momentum=(-0.3,))
        base = innerProduct(u, v)
        self.assertAlmostEqual(innerProduct(2j * u, v), 2j * base)
        self.assertAlmostEqual(innerProduct(u, 2j * v), -2j * base)
        self.assertAlmostEqual(innerProduct(u, u), u.norm() ** 2)

    def test_differentGrids(self) -> None:
        u = Wavefunction.zeros(self.grid)
        v = Wavefunction.zeros(makeGrid(1, 128, 20.0))
        with self.assertRaises(GridMismatch):
            innerProduct(u, v)
        with self.assertRaises(GridMismatch):
            u + v

    def test_relativeDistanceToZero(self) -> None:
        """
        Against a vanishing reference the plain distance is reported.
        """
        u = gaussianPacket(self.grid)
        self.assertAlmostEqual(
            relativeDistance(u, Wavefunction.zeros(self.grid)), u.norm()
        )


class SigmaNormTests(TestCase):
    """
    Tests for L{sigmaNorm} and L{SigmaParams}.
    """

    def test_defaultSplit(self) -> None:
        params = SigmaParams.forDimension(2)
        self.assertEqual(params, SigmaParams(1.5, 0.75, 0.75))
        params.validate(2)

    def test_invalidExponents(self) -> None:
        """
        M{s} must exceed M{n/2} and be split into two strictly positive
        parts.
        """
        for params in [SigmaParams(1.0, 0.5, 0.5),
                       SigmaParams(1.5, 1.0, 1.0),
                       SigmaParams(1.5, 1.5, 0.0)]:
            with self.assertRaises(FieldError):
                params.validate(2)

    def test_triangleInequality(self) -> None:
        grid = makeGrid(2, 64, 8.0)
        params = SigmaParams.forDimension(2)
        u = gaussianPacket(grid, center=(1.0, -0.5), momentum=(1.0, 0.0))
        v = gaussianPacket(grid, 0.5, 1.2, (-1.0, 0.0), (0.0, 2.0))
        self.assertLessEqual(
            sigmaNorm(u + v, params),
            sigmaNorm(u, params) + sigmaNorm(v, params) + 1e-12,
        )

    def test_zeroField(self) -> None:
        grid = makeGrid(1, 32, 4.0)
        self.assertEqual(
            sigmaNorm(Wavefunction.zeros(grid), SigmaParams.forDimension(1)),
            0.0,
        )

    def test_unresolved(self) -> None:
        """
        White noise puts a third of its energy in the outer band and is
        refused.
        """
        grid = makeGrid(1, 64, 4.0)
        noise = np.random.default_rng(3).normal(size=grid.shape)
        with self.assertRaises(UnresolvedField) as caught:
            sigmaNorm(Wavefunction(grid, noise), SigmaParams.forDimension(1))
        self.assertGreater(caught.exception.tailFraction, 0.1)
