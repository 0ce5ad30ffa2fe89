import math
from unittest import TestCase

import numpy as np

from .errors import GridMismatch, ScatterFlag, SinogramError
from .grid import makeGrid
from .potentials import ELECTRIC, Bump, buildPotentials, curlAt
from .tomography import (
    FIELD,
    TANGENTIAL,
    Provenance,
    ReconGrid,
    Sinogram,
    bFieldFromTangential,
    fbpInvert,
    rampFilter,
    reconstructionReport,
    truthFor,
    uniformAngles,
    uniformOffsets,
    xrayForward,
)


def discError(grid, values, truth, radius: float = 5.0) -> float:
    inside = grid.radiusSquared <= radius**2
    difference = np.where(inside, values - truth, 0.0)
    return float(np.linalg.norm(difference)
                 / np.linalg.norm(np.where(inside, truth, 0.0)))


class SinogramTests(TestCase):
    """
    Tests for L{Sinogram}.
    """

    def test_invalidLayouts(self) -> None:
        """
        Shapes, spacing, angle range and the offset axis are all checked.
        """
        angles, offsets = uniformAngles(4), uniformOffsets(5, 1.0)
        values = np.zeros((4, 5))
        for args in [
            (angles, offsets, np.zeros((5, 4))),
            (angles, np.array([-1.0, -0.5, 0.0, 0.2, 1.0]), values),
            (angles + 1.0, offsets, values),
            (angles, uniformOffsets(6, 1.0), np.zeros((4, 6))),
            (angles, offsets + 0.1, values),
            (angles, offsets, np.full((4, 5), np.nan)),
        ]:
            with self.assertRaises(SinogramError):
                Sinogram(*args, Provenance.ORACLE, ELECTRIC)

    def test_rows(self) -> None:
        sino = Sinogram(uniformAngles(2), uniformOffsets(3, 1.0),
                        np.arange(6).reshape(2, 3) * (1 + 1j),
                        Provenance.SCATTERING, TANGENTIAL, speed=8.0)
        rows = list(sino.rows())
        self.assertEqual(len(rows), 6)
        self.assertEqual(len(rows[0]), len(Sinogram.CSV_HEADER))
        self.assertEqual(rows[4],
                         (1, math.pi / 2, 0.0, 4.0, 4.0, "scattering", 8.0))
        self.assertEqual(sino.imaginaryRatio(), 1.0)

    def test_forwardLinear(self) -> None:
        """
        Line integrals of a sum of bumps are the sums of their line
        integrals.
        """
        first = Bump("V", (0.5, -0.3), 1.0, (1.0, 1.2))
        second = Bump("V", (-0.6, 0.4), -0.4, (0.8, 1.0))
        angles, offsets = uniformAngles(12), uniformOffsets(65, 6.0)
        both = xrayForward([first, second], angles, offsets)
        apart = (xrayForward([first], angles, offsets).values
                 + xrayForward([second], angles, offsets).values)
        np.testing.assert_allclose(both.values, apart, rtol=1e-12,
                                   atol=1e-15)

    def test_support(self) -> None:
        """
        Data that has not decayed at the outermost offsets is refused.
        """
        bumps = [Bump("V", (0.0, 0.0), 1.0, (1.0, 1.0))]
        with self.assertRaises(SinogramError):
            xrayForward(bumps, uniformAngles(4), uniformOffsets(9, 1.0))


class RampFilterTests(TestCase):
    def test_padding(self) -> None:
        """
        The offset axis is padded to a power of two, at least 64 and at least
        twice the data.
        """
        self.assertEqual(rampFilter(10, 0.1)[0], 64)
        self.assertEqual(rampFilter(129, 0.1)[0], 512)
        self.assertEqual(rampFilter(128, 0.1)[0], 256)

    def test_symmetric(self) -> None:
        padded, response = rampFilter(65, 0.1)
        np.testing.assert_allclose(response[1:], response[1:][::-1],
                                   atol=1e-9)
        self.assertEqual(len(response), padded)


class InversionTests(TestCase):
    """
    Tests for L{fbpInvert} and L{bFieldFromTangential}.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(2, 128, 10.0)
        self.angles = uniformAngles(90)
        self.offsets = uniformOffsets(129, 6.0)

    def test_electricOracle(self) -> None:
        """
        Filtered backprojection of exact line integrals recovers a bump to
        within a few percent.
        """
        bump = Bump("V", (0.5, -0.3), 1.0, (1.0, 1.2))
        recon = fbpInvert(xrayForward([bump], self.angles, self.offsets),
                          self.grid)
        self.assertEqual(recon.target, ELECTRIC)
        self.assertEqual(recon.provenance, Provenance.ORACLE)
        truth = bump.evaluate(self.grid.coordinates)
        self.assertLess(discError(self.grid, recon.values, truth), 0.05)

    def test_refinementLadder(self) -> None:
        """
        Doubling the angles and offsets together lowers the error at every
        step.
        """
        bump = Bump("V", (0.5, -0.3), 1.0, (1.0, 1.2))
        truth = bump.evaluate(self.grid.coordinates)
        errors = []
        for angles, offsets in ((22, 33), (45, 65), (90, 129)):
            sino = xrayForward([bump], uniformAngles(angles),
                               uniformOffsets(offsets, 6.0))
            recon = fbpInvert(sino, self.grid)
            errors.append(discError(self.grid, recon.values, truth))
        self.assertEqual(sorted(errors, reverse=True), errors)
        self.assertLess(errors[-1], errors[0])

    def test_imaginaryResidue(self) -> None:
        """
        Only the real part is inverted; an imaginary part above a tenth of
        it is flagged.
        """
        sino = xrayForward([Bump("V", (0.0, 0.0), 1.0, (1.0, 1.0))],
                           self.angles, self.offsets)
        plain = fbpInvert(sino, self.grid)
        small = fbpInvert(sino.withValues(sino.values * (1 + 0.05j)),
                          self.grid)
        large = fbpInvert(sino.withValues(sino.values * (1 + 0.2j)),
                          self.grid)
        self.assertEqual(small.flags, frozenset())
        self.assertEqual(large.flags,
                         frozenset({ScatterFlag.IMAGINARY_RESIDUE}))
        np.testing.assert_allclose(large.values, plain.values)

    def test_planarOnly(self) -> None:
        sino = xrayForward([Bump("V", (0.0, 0.0), 1.0, (1.0, 1.0))],
                           self.angles, self.offsets)
        with self.assertRaises(GridMismatch):
            fbpInvert(sino, makeGrid(1, 128, 10.0))

    def test_fieldFromTangential(self) -> None:
        """
        The offset derivative of tangential data reconstructs M{B_12}.
        """
        bumps = [Bump("A1", (0.5, 0.0), 0.4, (1.0, 1.5)),
                 Bump("A2", (-0.5, 0.5), -0.3, (1.5, 1.0))]
        sino = xrayForward(bumps, self.angles, self.offsets, TANGENTIAL)
        recon = bFieldFromTangential(sino, self.grid)
        self.assertEqual(recon.target, FIELD)
        self.assertEqual(recon.provenance, Provenance.ORACLE)
        truth = curlAt(bumps, self.grid.coordinates)
        self.assertLess(discError(self.grid, recon.values, truth), 0.1)

    def test_tooFewOffsets(self) -> None:
        bumps = [Bump("A1", (0.0, 0.0), 0.4, (1.0, 1.0))]
        sino = xrayForward(bumps, self.angles, uniformOffsets(33, 6.0),
                           TANGENTIAL)
        with self.assertRaises(SinogramError):
            bFieldFromTangential(sino, self.grid)


class ReportTests(TestCase):
    """
    Tests for L{reconstructionReport}.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(2, 64, 8.0)
        self.truth = buildPotentials(
            [Bump("V", (0.0, 0.0), 1.0, (1.0, 1.0)),
             Bump("A1", (0.5, 0.0), 0.4, (1.0, 1.5))],
            self.grid,
        )

    def test_exact(self) -> None:
        recon = ReconGrid(self.grid, truthFor(self.truth, ELECTRIC), ELECTRIC,
                          Provenance.ORACLE)
        report = reconstructionReport(self.truth, [recon])
        self.assertEqual(report.error(ELECTRIC).relativeL2, 0.0)
        self.assertEqual(report.error(ELECTRIC, "oracle").maxAbs, 0.0)
        with self.assertRaises(KeyError):
            report.error(ELECTRIC, "scattering")
        self.assertEqual(report.asJSON()["targets"][0]["target"], ELECTRIC)

    def test_otherGrid(self) -> None:
        grid = makeGrid(2, 32, 8.0)
        recon = ReconGrid(grid, np.zeros(grid.shape), ELECTRIC,
                          Provenance.ORACLE)
        with self.assertRaises(GridMismatch):
            reconstructionReport(self.truth, [recon])

    def test_unknownTarget(self) -> None:
        with self.assertRaises(KeyError):
            truthFor(self.truth, "A3")
