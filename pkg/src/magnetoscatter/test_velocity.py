import math
from dataclasses import replace
from unittest import TestCase

import numpy as np

from .errors import ResolutionError, ScatterFlag
from .grid import makeGrid
from .potentials import (
    Bump,
    buildPotentials,
    freePotentials,
    tangentialLineIntegrals,
)
from .propagators import HamiltonianOp
from .tomography import (
    Provenance,
    directions,
    uniformAngles,
    uniformOffsets,
)
from .velocity import (
    REMAINDER_SLOPE,
    Frame,
    ProbeSpec,
    ProbeState,
    RaySample,
    Target,
    assembleSinogram,
    boost,
    envelope,
    pairing,
    probeRay,
    probeStep,
    rayGeometry,
    requiredPoints,
    smearedLineIntegral,
    spectralExtent,
    symmetrisedPairings,
)


class EnvelopeTests(TestCase):
    """
    Tests for L{envelope}, L{spectralExtent} and L{boost}.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(2, 64, 8.0)

    def test_unitNorm(self) -> None:
        self.assertAlmostEqual(
            envelope(self.grid, (0.5, -0.5), 0.8).norm(), 1.0, places=12
        )

    def test_extent(self) -> None:
        """
        A Gaussian of width M{sigma} reaches M{3/sigma} in frequency, up to
        the lattice spacing.
        """
        width = 0.8
        extent = spectralExtent(envelope(self.grid, (0.0, 0.0), width))
        step = math.pi / self.grid.halfWidth
        self.assertLessEqual(extent, 3.0 / width + 1e-9)
        self.assertGreater(extent, 3.0 / width - 2 * step)

    def test_boostShiftsSpectrum(self) -> None:
        """
        Boosting moves the spectral centroid to M{m xi} without changing
        the modulus.
        """
        phi0 = envelope(self.grid, (0.0, 0.0), 1.0)
        boosted = boost(phi0, (2.0, 0.0))
        np.testing.assert_allclose(np.abs(boosted.values), phi0.values)
        power = np.abs(boosted.spectrum) ** 2
        kx = self.grid.kVectors[0]
        self.assertAlmostEqual(
            float(np.sum(kx * power) / np.sum(power)), 2.0, places=6
        )

    def test_boostBeyondBand(self) -> None:
        """
        A boost past 0.8 of Nyquist is refused, naming the resolution that
        would carry it.
        """
        phi0 = envelope(self.grid, (0.0, 0.0), 1.0)
        with self.assertRaises(ResolutionError) as caught:
            boost(phi0, (10.0, 0.0))
        required = caught.exception.requiredPoints
        self.assertGreater(required, self.grid.points)
        self.assertEqual(required % 2, 0)
        self.assertGreaterEqual(required, requiredPoints(self.grid, 10.0))
        self.assertIn(str(required), str(caught.exception))

    def test_lineRays(self) -> None:
        theta, center = rayGeometry(1, math.pi, 0.0)
        self.assertEqual(list(theta), [-1.0])
        with self.assertRaises(ValueError):
            rayGeometry(1, 0.0, 0.5)

    def test_probeState(self) -> None:
        state = ProbeState.forRay(self.grid, math.pi / 2, 1.0, 3.0, 0.5)
        np.testing.assert_allclose(state.center, (-1.0, 0.0), atol=1e-15)
        np.testing.assert_allclose(state.xi, (0.0, 3.0), atol=1e-15)
        self.assertAlmostEqual(state.bandEdge, 9.0)


class OracleTests(TestCase):
    """
    Tests for L{smearedLineIntegral}.
    """

    bumps = (Bump("A1", (0.5, 0.0), 0.4, (1.0, 1.5)),
             Bump("A2", (-0.5, 0.5), -0.3, (1.5, 1.0)),
             Bump("V", (0.0, -0.5), 0.5, (1.0, 1.0)))

    def test_narrowEnvelope(self) -> None:
        """
        As the envelope narrows the smeared integral tends to the plain line
        integral.
        """
        theta = np.array([math.cos(0.4), math.sin(0.4)])
        (exact,) = tangentialLineIntegrals(self.bumps, theta,
                                           np.array([0.3]))
        smeared = smearedLineIntegral(self.bumps, Target.TANGENTIAL, 0.4,
                                      0.3, 1e-4)
        self.assertAlmostEqual(smeared, exact, places=6)

    def test_reversal(self) -> None:
        """
        The tangential oracle is odd under reversing the ray, the electric
        one even.
        """
        for target, sign in ((Target.TANGENTIAL, -1.0),
                             (Target.ELECTRIC, 1.0)):
            forward = smearedLineIntegral(self.bumps, target, 0.9, 0.2, 0.4)
            backward = smearedLineIntegral(self.bumps, target,
                                           0.9 + math.pi, -0.2, 0.4)
            self.assertAlmostEqual(backward, sign * forward, places=12)


class RaySampleTests(TestCase):
    """
    Tests for L{RaySample}.
    """

    def test_extrapolates(self) -> None:
        """
        Two fast probes agreeing to ten percent are extrapolated linearly in
        M{1/|xi|}.
        """
        sample = RaySample(0.0, 0.0, Target.TANGENTIAL, (8.0, 16.0),
                           (1.1 + 0j, 1.05 + 0j), oracle=1.0)
        self.assertTrue(sample.isExtrapolated)
        self.assertAlmostEqual(sample.estimate, 1.0)
        self.assertAlmostEqual(sample.relativeDeviation(), 0.05)

    def test_fallsBackToFastest(self) -> None:
        sample = RaySample(0.0, 0.0, Target.TANGENTIAL, (8.0, 16.0),
                           (1.0 + 0j, 2.0 + 0j))
        self.assertFalse(sample.isExtrapolated)
        self.assertEqual(sample.estimate, 2.0)
        with self.assertRaises(ValueError):
            sample.remainders()

    def test_remainderSlope(self) -> None:
        sample = RaySample(0.0, 0.0, Target.TANGENTIAL, (4.0, 8.0, 16.0),
                           (1.5 + 0j, 1.25 + 0j, 1.125 + 0j), oracle=1.0)
        self.assertAlmostEqual(sample.remainderFit().exponent, -1.0)


class PairingTests(TestCase):
    """
    Tests for L{pairing} and the sinograms built from it.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(2, 64, 8.0)
        self.spec = ProbeSpec(width=0.8, speeds=(4.0,), asymptoticTime=0.5)

    def test_freeVanishes(self) -> None:
        """
        With no potential the probe comes back unchanged and the pairing
        vanishes.
        """
        ham = HamiltonianOp(freePotentials(self.grid))
        result = pairing(0.3, 0.5, 4.0, ham, self.spec)
        self.assertLess(abs(result.raw), 1e-12)
        self.assertEqual(result.flags, frozenset())

    def test_electricScaling(self) -> None:
        """
        The electric target is the raw pairing times M{-2m|xi|}.
        """
        ham = HamiltonianOp(buildPotentials(
            [Bump("V", (0.0, 0.0), 0.5, (1.0, 1.0))], self.grid
        ))
        result = pairing(0.0, 0.0, 4.0, ham, self.spec, Target.ELECTRIC)
        self.assertAlmostEqual(result.value, -8.0 * result.raw)

    def test_symmetrisedSplit(self) -> None:
        """
        For a purely electric potential the odd part of the two directions
        is small next to the even part.
        """
        ham = HamiltonianOp(buildPotentials(
            [Bump("V", (0.0, 0.0), 0.5, (1.0, 1.0))], self.grid
        ))
        tangential, electric, _ = symmetrisedPairings(ham, 0.0, 0.2, 4.0,
                                                      self.spec)
        self.assertLess(abs(tangential), 1e-2 * abs(electric) / 8.0)

    def test_labFrameBandCheck(self) -> None:
        """
        In the lab frame a sinogram whose fastest probes leave the band is
        refused before anything is computed.
        """
        ham = HamiltonianOp(freePotentials(self.grid))
        spec = replace(self.spec, frame=Frame.LAB)
        with self.assertRaises(ResolutionError):
            assembleSinogram(ham, uniformAngles(4), uniformOffsets(3, 1.0),
                             20.0, Target.TANGENTIAL, Provenance.SCATTERING,
                             spec)

    def test_oracleSinogram(self) -> None:
        bumps = [Bump("V", (0.0, 0.0), 0.5, (1.0, 1.0))]
        ham = HamiltonianOp(buildPotentials(bumps, self.grid))
        sino = assembleSinogram(ham, uniformAngles(4), uniformOffsets(5, 2.0),
                                4.0, Target.ELECTRIC, Provenance.ORACLE,
                                self.spec)
        self.assertEqual(sino.values.shape, (4, 5))
        self.assertEqual(sino.provenance, Provenance.ORACLE)
        # Radially symmetric: every angle sees the same profile.
        np.testing.assert_allclose(sino.values, np.tile(sino.values[0],
                                                        (4, 1)))

    def test_stepShrinksWithSpeed(self) -> None:
        potentials = buildPotentials([Bump("V", (0.0, 0.0), 0.5, (1.0, 1.0))],
                                     self.grid)
        self.assertLess(probeStep(potentials, 32.0, self.spec),
                        probeStep(potentials, 2.0, self.spec))


class PotentialDependenceTests(TestCase):
    """
    How pairings respond to changes of the potential: scaling, superposition
    and translation.
    """

    def setUp(self) -> None:
        self.grid = makeGrid(2, 64, 8.0)
        self.spec = ProbeSpec(width=0.8, speeds=(8.0, 16.0, 32.0))
        self.magnetic = Bump("A1", (0.3, 0.0), 0.02, (1.0, 1.0))
        self.electric = Bump("V", (0.0, 0.0), 0.3, (1.0, 1.0))

    def hamiltonian(self, bumps) -> HamiltonianOp:
        return HamiltonianOp(buildPotentials(bumps, self.grid))

    def test_linearInPotential(self) -> None:
        """
        Doubling a weak vector potential doubles the tangential pairing, up
        to terms quadratic in its line integral.
        """
        single = pairing(0.0, 0.0, 16.0, self.hamiltonian([self.magnetic]),
                         self.spec).value
        double = pairing(0.0, 0.0, 16.0,
                         self.hamiltonian([self.magnetic.scaled(2.0)]),
                         self.spec).value
        self.assertGreater(abs(single), 0.01)
        self.assertLess(abs(double - 2.0 * single), 0.05 * abs(2.0 * single))

    def test_translationCovariance(self) -> None:
        """
        Moving every bump by M{d} moves the pairing from offset M{s} to
        M{s + theta_perp.d}.
        """
        spec = replace(self.spec, asymptoticTime=0.4)
        shift = (0.0, 2 * self.grid.spacing)
        bumps = [self.magnetic, self.electric]
        moved = [bump.translated(shift) for bump in bumps]
        _, normal = directions(0.0)
        offset = 0.25
        before = pairing(0.0, offset, 16.0, self.hamiltonian(bumps),
                         spec).value
        after = pairing(0.0, offset + float(np.dot(normal, shift)), 16.0,
                        self.hamiltonian(moved), spec).value
        self.assertLess(abs(after - before), 1e-8 * abs(before))

    def test_oracleTranslation(self) -> None:
        bumps = [self.magnetic, Bump("A2", (-0.5, 0.5), 0.03, (1.5, 1.0))]
        shift = (0.7, -0.4)
        moved = [bump.translated(shift) for bump in bumps]
        for angle in (0.3, 1.9, 4.0):
            _, normal = directions(angle)
            before = smearedLineIntegral(bumps, Target.TANGENTIAL, angle,
                                         0.2, 0.5)
            after = smearedLineIntegral(moved, Target.TANGENTIAL, angle,
                                        0.2 + float(np.dot(normal, shift)),
                                        0.5)
            self.assertAlmostEqual(after, before, places=12)

    def test_remainderDecaysAsInverseSpeed(self) -> None:
        """
        With a weak vector potential the gap to the smeared line integral is
        led by the electric term M{int V / 2m|xi|}, so it halves with every
        doubling of the speed.
        """
        sample = probeRay(self.hamiltonian([self.magnetic, self.electric]),
                          0.0, 0.0, self.spec)
        low, high = REMAINDER_SLOPE
        exponent = sample.remainderFit().exponent
        self.assertGreaterEqual(exponent, low)
        self.assertLessEqual(exponent, high)
        self.assertNotIn(ScatterFlag.IMAGINARY_RESIDUE, sample.flags)
