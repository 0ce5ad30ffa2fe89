from unittest import TestCase

import numpy as np

from .amplitude import (
    EpsSweep,
    OrderFit,
    fitOrder,
    geometricLadder,
    hermiteMode,
    linearPairing,
    probeFamily,
    sweep,
    sweepFamily,
)
from .errors import DegenerateFit
from .grid import gaussianPacket, innerProduct, makeGrid
from .jobs import JobPool
from .potentials import Bump, buildPotentials
from .propagators import EvolutionSpec, HamiltonianOp
from .scattering import ScatterSpec


class LadderTests(TestCase):
    def test_geometric(self) -> None:
        self.assertEqual(geometricLadder(0.1, 3), (0.1, 0.05, 0.025))

    def test_decreasingOnly(self) -> None:
        """
        Sweeps need strictly decreasing positive amplitudes, one pairing
        each.
        """
        with self.assertRaises(ValueError):
            EpsSweep((0.1, 0.2), (1j, 1j))
        with self.assertRaises(ValueError):
            EpsSweep((0.1, -0.05), (1j, 1j))
        with self.assertRaises(ValueError):
            EpsSweep((0.1, 0.05), (1j,))


class ProbeFamilyTests(TestCase):
    """
    Tests for L{hermiteMode} and L{probeFamily}.
    """

    def test_orthonormal(self) -> None:
        """
        Hermite functions about the same centre are orthonormal.
        """
        grid = makeGrid(1, 128, 12.0)
        modes = [hermiteMode(grid, (degree,), (0.5,), 1.0)
                 for degree in range(4)]
        gram = np.array([[innerProduct(a, b) for b in modes] for a in modes])
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)

    def test_planarFamily(self) -> None:
        """
        On the plane the family runs through total degrees 0, 1, 2, ...
        """
        grid = makeGrid(2, 32, 6.0)
        family = probeFamily(grid, (0.0, 0.0), 1.0, count=4)
        self.assertEqual(len(family), 4)
        for mode in family:
            self.assertAlmostEqual(mode.norm(), 1.0)


class FitOrderTests(TestCase):
    """
    Tests for L{fitOrder}.
    """

    def test_exactQuadraticResiduals(self) -> None:
        """
        Residuals proportional to M{eps^2} give order 2 and an exact
        extrapolation.
        """
        ladder = geometricLadder(0.1)
        reference = complex(0.3, -0.2)
        values = tuple(reference + 0.7 * eps**2 for eps in ladder)
        fit = fitOrder(EpsSweep(ladder, values), reference)
        self.assertAlmostEqual(fit.order, 2.0, places=10)
        self.assertLess(fit.extrapolationError, 1e-10)
        self.assertEqual(fit.asJSON()["fittedOrder"], fit.order)
        self.assertEqual(fit.increases, 0)

    def test_residualIncreases(self) -> None:
        """
        A residual that grows as the amplitude shrinks is counted, unless it
        sits at the numerical floor.
        """
        ladder = geometricLadder(0.1)
        reference = complex(0.3, -0.2)
        values = [reference + 0.7 * eps**2 for eps in ladder]
        values[2] = reference + 1e-2
        fit = fitOrder(EpsSweep(ladder, tuple(values)), reference)
        self.assertEqual(fit.increases, 1)
        self.assertEqual(fit.asJSON()["residualIncreases"], 1)
        floor = OrderFit(2.0, 0j, 1 + 0j, (1e-3, 1e-12, 5e-11))
        self.assertEqual(floor.increases, 0)

    def test_belowFloor(self) -> None:
        """
        Residuals below the numerical floor leave nothing to fit.
        """
        ladder = geometricLadder(0.1)
        sweep = EpsSweep(ladder, (1.0 + 0j,) * len(ladder))
        with self.assertRaises(DegenerateFit):
            fitOrder(sweep, 1.0)

    def test_rows(self) -> None:
        sweep = EpsSweep((0.2, 0.1), (1 + 2j, 1 + 1j))
        self.assertEqual(sweep.rows(1.0),
                         [(0.2, 1.0, 2.0, 2.0), (0.1, 1.0, 1.0, 1.0)])


class SweepTests(TestCase):
    """
    Tests for L{sweep} and L{sweepFamily}.
    """

    def setUp(self) -> None:
        grid = makeGrid(1, 128, 16.0)
        self.ham = HamiltonianOp(buildPotentials(
            [Bump("A1", (0.0,), 0.4, (1.5,))], grid
        ))
        self.phi = gaussianPacket(grid, momentum=(1.5,))
        self.psi = gaussianPacket(grid, center=(0.5,), momentum=(1.5,))
        self.spec = ScatterSpec(1.0, EvolutionSpec(1e-3, 1.0),
                                checkStability=False)

    def test_singleAmplitude(self) -> None:
        with self.assertRaises(DegenerateFit):
            sweepFamily(self.phi, [self.psi], self.ham, [0.1], self.spec)

    def test_approachesLinearPairing(self) -> None:
        """
        The scaled pairing moves towards the linear one as the amplitude
        shrinks, with the residual falling like M{eps^(p-1)}.
        """
        ladder = (0.08, 0.04, 0.02, 0.01)
        reference = linearPairing(self.phi, self.psi, self.ham, self.spec)
        result = sweep(self.phi, self.psi, self.ham, ladder, self.spec,
                       JobPool(2))
        residuals = result.residuals(reference)
        self.assertEqual(sorted(residuals, reverse=True), residuals)
        fit = fitOrder(result, reference)
        self.assertAlmostEqual(fit.order, 2.0, delta=0.3)
        self.assertLess(fit.extrapolationError, 1e-4)
        self.assertEqual(fit.increases, 0)

    def test_familySharesRuns(self) -> None:
        """
        Pairing one sweep with several states gives the same numbers as
        separate sweeps.
        """
        ladder = (0.1, 0.05)
        family = sweepFamily(self.phi, [self.psi, self.phi], self.ham,
                             ladder, self.spec)
        alone = sweep(self.phi, self.phi, self.ham, ladder, self.spec)
        np.testing.assert_allclose(family[1].values, alone.values)
