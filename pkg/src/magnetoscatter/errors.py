"""
Exceptions raised by magnetoscatter.

Conditions that only degrade a result (an unstable asymptotic time, a weak
contraction) are not exceptions; they travel as L{ScatterFlag} values on the
result objects instead.
"""
from __future__ import annotations

from enum import Enum
from typing import Sequence


class ScatterFlag(Enum):
    """
    Reasons a numerical result should not be trusted at face value.
    """

    UNSTABLE_IN_TIME = "UnstableInTime"
    # Moving the asymptotic time to 1.25 T changed the output too much.
    SMALLNESS_VIOLATED = "SmallnessViolated"
    # The incoming state is outside the requested H1 ball.
    NOT_CONTRACTING = "NotContracting"
    # The Picard map was observed expanding at least once.
    BAND_LIMITED = "BandLimited"
    # A boosted state came too close to the grid's Nyquist band.
    IMAGINARY_RESIDUE = "ImaginaryResidue"
    # A quantity expected to be real carried a sizeable imaginary part.


class MagnetoscatterError(Exception):
    """
    Base class for everything this package raises on purpose.
    """


class GridError(MagnetoscatterError):
    """
    A grid was requested with an unusable shape.
    """


class GridMismatch(MagnetoscatterError):
    """
    Two fields (or a field and an operator) live on different grids.
    """


class UnresolvedField(MagnetoscatterError):
    """
    A field carries too much energy near the Nyquist band to be trusted.
    """

    def __init__(self, tailFraction: float, threshold: float) -> None:
        super().__init__(
            f"spectral tail holds {tailFraction:.3e} of the energy "
            f"(threshold {threshold:.1e})"
        )
        self.tailFraction = tailFraction
        self.threshold = threshold


class FieldError(MagnetoscatterError):
    """
    A field holds non-finite samples, or norm exponents describe no
    admissible space.
    """


class PotentialError(MagnetoscatterError):
    """
    A potential descriptor cannot be sampled faithfully on the grid.
    """


class ResolutionError(MagnetoscatterError):
    """
    The time step or the grid cannot carry the requested dynamics.
    """

    def __init__(self, message: str, requiredPoints: int = 0) -> None:
        if requiredPoints:
            message = f"{message} (need N >= {requiredPoints})"
        super().__init__(message)
        self.requiredPoints = requiredPoints


class NumericalBlowup(MagnetoscatterError):
    """
    A trajectory produced a non-finite value.
    """

    def __init__(self, step: int, time: float) -> None:
        super().__init__(f"non-finite field at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


class PicardDivergence(MagnetoscatterError):
    """
    The Duhamel fixed-point iteration stopped contracting.
    """

    def __init__(self, ratios: Sequence[float]) -> None:
        shown = ", ".join(f"{r:.3g}" for r in ratios)
        super().__init__(f"Picard iteration diverged; ratios: {shown}")
        self.ratios = list(ratios)


class DegenerateFit(MagnetoscatterError):
    """
    Too few usable points to fit a convergence order.
    """


class SinogramError(MagnetoscatterError):
    """
    A sinogram's geometry or support is unusable.
    """


class ConfigError(MagnetoscatterError):
    """
    A scenario file failed validation.
    """

    def __init__(self, problems: Sequence[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class VerificationError(MagnetoscatterError):
    """
    The invariant suite was asked to do something meaningless.
    """
