from dataclasses import dataclass, field
from typing import List
from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from .errors import GridMismatch, ResolutionError
from .grid import (
    Wavefunction,
    gaussianPacket,
    innerProduct,
    makeGrid,
    relativeDistance,
)
from .potentials import (
    Bump,
    buildPotentials,
    freePotentials,
    uniformPotentials,
)
from .propagators import (
    ComovingHamiltonian,
    ConservationRecorder,
    EvolutionSpec,
    HamiltonianOp,
    applyH,
    checkTimeStep,
    conservedQuantities,
    evolve,
    fitPowerLaw,
    freePropagate,
    planeWaveError,
)


@dataclass
class StepLog:
    steps: List[int] = field(default_factory=list)

    def stepCompleted(self, step: int, time: float, u: Wavefunction) -> None:
        self.steps.append(step)


def lineMagnetic(amplitude: float = 0.5) -> HamiltonianOp:
    grid = makeGrid(1, 128, 16.0)
    bumps = [Bump("A1", (0.0,), amplitude, (1.5,)),
             Bump("V", (0.5,), 0.3, (1.0,))]
    return HamiltonianOp(buildPotentials(bumps, grid))


class EvolutionSpecTests(TestCase):
    """
    Tests for L{EvolutionSpec}.
    """

    def test_invalid(self) -> None:
        for kwargs in [dict(timeStep=0.0, totalTime=1.0),
                       dict(timeStep=1e-3, totalTime=-1.0),
                       dict(timeStep=1e-3, totalTime=1.0, exponent=1.0),
                       dict(timeStep=1e-3, totalTime=1.0, order=4)]:
            with self.assertRaises(ValueError):
                EvolutionSpec(**kwargs)

    def test_steps(self) -> None:
        """
        The step count rounds up, ignoring round-off in the ratio.
        """
        self.assertEqual(EvolutionSpec(1e-3, 0.5).steps, 500)
        self.assertEqual(EvolutionSpec(0.3, 1.0).steps, 4)
        self.assertEqual(EvolutionSpec(0.1, 0.0).steps, 0)

    def test_linear(self) -> None:
        spec = EvolutionSpec(1e-3, 1.0)
        self.assertTrue(spec.isNonlinear)
        self.assertFalse(spec.linear().isNonlinear)
        self.assertFalse(EvolutionSpec(1e-3, 1.0, nonlinearity=0.0)
                         .isNonlinear)


class HamiltonianTests(TestCase):
    """
    Tests for L{applyH}.
    """

    def test_selfAdjoint(self) -> None:
        """
        M{(Hu, v) = (u, Hv)} for the symmetric discretisation.
        """
        ham = lineMagnetic()
        u = gaussianPacket(ham.grid, center=(0.5,), momentum=(1.0,))
        v = gaussianPacket(ham.grid, 0.7, 1.3, (-0.5,), (-2.0,))
        left = innerProduct(applyH(u, ham, electric=True), v)
        right = innerProduct(u, applyH(v, ham, electric=True))
        self.assertAlmostEqual(left, right, places=12)

    def test_freeIsLaplacian(self) -> None:
        grid = makeGrid(1, 64, 8.0)
        u = gaussianPacket(grid)
        assert_allclose(applyH(u, HamiltonianOp(freePotentials(grid))).values,
                        grid.laplacian(u.values))

    def test_comovingAtRest(self) -> None:
        """
        Seen from a frame that does not move, the comoving operator is the
        ordinary one.
        """
        ham = lineMagnetic()
        moving = ComovingHamiltonian(ham.potentials, momentum=(0.0,))
        u = gaussianPacket(ham.grid, momentum=(1.0,))
        assert_allclose(applyH(u, moving, electric=True).values,
                        applyH(u, ham, electric=True).values, atol=1e-12)

    def test_gridMismatch(self) -> None:
        ham = lineMagnetic()
        with self.assertRaises(GridMismatch):
            applyH(gaussianPacket(makeGrid(1, 64, 16.0)), ham)


class EvolveTests(TestCase):
    """
    Tests for L{evolve}.
    """

    def setUp(self) -> None:
        self.ham = lineMagnetic()
        self.u0 = gaussianPacket(self.ham.grid, center=(-1.0,),
                                 momentum=(1.0,))

    def test_unitary(self) -> None:
        """
        The linear flow keeps the norm.
        """
        final = evolve(self.u0, self.ham, EvolutionSpec(1e-3, 0.2).linear())
        self.assertAlmostEqual(final.final.norm(), self.u0.norm(), places=10)

    def test_free(self) -> None:
        """
        Without potentials the split flow is the exact free multiplier.
        """
        ham = HamiltonianOp(freePotentials(self.ham.grid))
        spec = EvolutionSpec(1e-2, 0.5).linear()
        final = evolve(self.u0, ham, spec).final
        self.assertLess(
            relativeDistance(final, freePropagate(self.u0, 0.5)), 1e-12
        )

    def test_reversible(self) -> None:
        spec = EvolutionSpec(1e-3, 0.2)
        there = evolve(self.u0, self.ham, spec).final
        back = evolve(there, self.ham, spec, startTime=0.2,
                      backward=True).final
        self.assertLess(relativeDistance(back, self.u0), 1e-9)

    def test_checkpoints(self) -> None:
        """
        Every C{checkpointStride} steps a state is kept, and the observer
        hears about every step.
        """
        observer = StepLog()
        trajectory = evolve(
            self.u0, self.ham,
            EvolutionSpec(1e-3, 0.01, checkpointStride=4), observer,
        )
        self.assertEqual(observer.steps, list(range(1, 11)))
        assert_allclose(trajectory.times, [0.0, 0.004, 0.008, 0.01])
        self.assertEqual(trajectory.steps, 10)
        self.assertIs(trajectory.initial, self.u0)

    def test_timeStepTooLong(self) -> None:
        """
        A step ten times beyond the stiffness of the grid is refused.
        """
        grid = self.ham.grid
        dt = 11.0 / float(np.max(grid.kSquared))
        with self.assertRaises(ResolutionError):
            checkTimeStep(grid, dt)
        with self.assertRaises(ResolutionError):
            evolve(self.u0, self.ham, EvolutionSpec(dt, 10 * dt))
        checkTimeStep(grid, 1.0 / float(np.max(grid.kSquared)))

    def test_conservation(self) -> None:
        """
        Mass is kept to round-off and energy to the splitting error along a
        nonlinear trajectory.
        """
        spec = EvolutionSpec(1e-3, 0.1)
        recorder = ConservationRecorder(self.ham, spec, stride=10)
        recorder.record(0.0, self.u0)
        evolve(self.u0, self.ham, spec, recorder)
        self.assertEqual(len(recorder.rows), 11)
        massDrift, energyDrift = recorder.drifts()
        self.assertLess(massDrift, 1e-9)
        self.assertLess(energyDrift, 1e-4)

    def test_planeWave(self) -> None:
        """
        In a constant vector potential a plane wave only picks up the phase
        M{exp(-it|k + a|^2)}.
        """
        grid = makeGrid(1, 64, 8.0)
        self.assertLess(
            planeWaveError(grid, (0.3,), EvolutionSpec(1e-3, 1.0)), 1e-11
        )

    def test_energyOfPlaneWave(self) -> None:
        """
        The magnetic kinetic energy of M{exp(ikx)} is M{|k + a|^2 / 2} per
        unit mass.
        """
        grid = makeGrid(1, 32, np.pi)
        ham = HamiltonianOp(uniformPotentials(grid, (0.5,)))
        (x,) = grid.coordinates
        u = Wavefunction(grid, np.exp(2j * x))
        quantities = conservedQuantities(u, ham, 3.0, nonlinearity=0.0)
        self.assertAlmostEqual(quantities.mass, 2 * np.pi)
        self.assertAlmostEqual(quantities.energy, 0.5 * 2.5**2 * 2 * np.pi)


class PowerLawTests(TestCase):
    def test_exactPowerLaw(self) -> None:
        fit = fitPowerLaw([1.0, 2.0, 4.0], [3.0, 0.75, 0.1875])
        self.assertAlmostEqual(fit.exponent, -2.0)
        self.assertAlmostEqual(fit.prefactor, 3.0)
