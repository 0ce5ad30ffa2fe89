"""
The canonical experiments, each a function from a scenario to a report plus
an artifact tree of CSV tables, grid dumps and C{report.json}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Set

import numpy as np
from twisted.logger import Logger
from twisted.python.filepath import FilePath

from .amplitude import fitOrder, probeFamily, sweepFamily
from .config import ScenarioConfig
from .errors import ConfigError, DegenerateFit, ScatterFlag
from .grid import (
    Grid,
    Wavefunction,
    gaussianPacket,
    innerProduct,
    relativeDistance,
)
from .jobs import JobPool
from .potentials import (
    PotentialSet,
    buildPotentials,
    freePotentials,
    gaugeBumps,
)
from .propagators import (
    ConservationRecorder,
    EvolutionSpec,
    HamiltonianOp,
    evolve,
    measureDispersiveDecay,
    observedOrder,
    planeWaveError,
)
from .scattering import (
    PicardSpec,
    ScatterMode,
    ScatterSpec,
    contractionRadius,
    inverseNonlinearS,
    linearS,
    nonlinearS,
    normEquivalenceCheck,
    picardSolve,
    waveOperator,
)
from .storage import ensureDirectory, saveField, writeCSV, writeJSON
from .tomography import (
    FIELD,
    TANGENTIAL,
    Provenance,
    ReconGrid,
    Sinogram,
    bFieldFromTangential,
    fbpInvert,
    reconstructionReport,
    uniformAngles,
    uniformOffsets,
    xrayForward,
)
from .velocity import (
    DEVIATION_LIMIT,
    REMAINDER_SLOPE,
    Frame,
    ProbeSpec,
    RaySample,
    Target,
    assembleJointSinograms,
    assembleSinogram,
    probeManifest,
    probeRay,
)

log = Logger()

SCHEMA_VERSION = 1
PLANE_WAVE_VECTOR = 0.3


@dataclass(frozen=True)
class Criterion:
    """
    One acceptance check: C{value} must lie in C{[low, high]}.
    """

    name: str
    value: float
    low: Optional[float] = None
    high: Optional[float] = None

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.low is not None and self.value < self.low:
            return False
        return self.high is None or self.value <= self.high

    def asJSON(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "low": self.low,
            "high": self.high,
            "passed": self.passed,
        }


@dataclass
class ExperimentReport:
    experiment: str
    metrics: Dict[str, Any] = field(default_factory=dict)
    criteria: List[Criterion] = field(default_factory=list)
    flags: Set[ScatterFlag] = field(default_factory=set)

    def require(self, name: str, value: float, low: Optional[float] = None,
                high: Optional[float] = None) -> Criterion:
        criterion = Criterion(name, float(value), low, high)
        self.criteria.append(criterion)
        log.info(
            "{name} = {value:.6g}: {verdict}",
            name=name,
            value=criterion.value,
            verdict="pass" if criterion.passed else "FAIL",
        )
        return criterion

    def flag(self, flags: Iterable[ScatterFlag]) -> None:
        self.flags.update(flags)

    @property
    def passed(self) -> bool:
        return not self.flags and all(c.passed for c in self.criteria)

    def asJSON(self) -> Dict[str, Any]:
        return {
            "schemaVersion": SCHEMA_VERSION,
            "experiment": self.experiment,
            "metrics": self.metrics,
            "criteria": [c.asJSON() for c in self.criteria],
            "flags": sorted(flag.value for flag in self.flags),
            "passed": self.passed,
        }


@dataclass
class ExperimentContext:
    """
    Everything an experiment needs: the scenario, where to write, and the
    workers to run independent jobs on.
    """

    config: ScenarioConfig
    output: FilePath
    pool: JobPool

    @cached_property
    def grid(self) -> Grid:
        return self.config.buildGrid()

    @cached_property
    def potentials(self) -> PotentialSet:
        return self.config.potential.build(self.grid)

    @cached_property
    def hamiltonian(self) -> HamiltonianOp:
        return HamiltonianOp(self.potentials)

    def evolution(self, **changes: Any) -> EvolutionSpec:
        dynamics = self.config.dynamics
        spec = EvolutionSpec(
            timeStep=dynamics.dt,
            totalTime=dynamics.Tscat,
            exponent=dynamics.p,
            nonlinearity=dynamics.nonlinearity,
            includeElectric=dynamics.includeV,
        )
        return replace(spec, **changes)

    def initialState(self) -> Wavefunction:
        initial = self.config.initial
        return gaussianPacket(self.grid, initial.amplitude, initial.width,
                              initial.center, initial.momentum)

    def probeSpec(self) -> ProbeSpec:
        probes = self.config.probes
        return ProbeSpec(
            width=probes.sigma,
            speeds=tuple(probes.xiLadder),
            frame=Frame(probes.frame),
            asymptoticTime=probes.asymptoticTime,
            timeStep=probes.timeStep,
        )

    def requirePlanar(self, experiment: str) -> None:
        if self.grid.dimension != 2:
            raise ConfigError([f"grid.n: {experiment} needs n=2"])


Experiment = Callable[[ExperimentContext, ExperimentReport], None]
EXPERIMENTS: Dict[str, Experiment] = {}
SUBCOMMANDS: Dict[str, str] = {}


def experiment(name: str,
               subcommand: str) -> Callable[[Experiment], Experiment]:
    def register(function: Experiment) -> Experiment:
        EXPERIMENTS[name] = function
        SUBCOMMANDS[name] = subcommand
        return function

    return register


def experimentsFor(subcommand: str) -> List[str]:
    return [name for name, sub in SUBCOMMANDS.items() if sub == subcommand]


def _unit(u: Wavefunction, size: float) -> Wavefunction:
    return u * (size / u.norm())


def _saveRecon(directory: FilePath, recon: ReconGrid, name: str) -> None:
    saveField(directory, name,
              Wavefunction(recon.grid, recon.values.astype(complex)))


def _saveSinogram(path: FilePath, sino: Sinogram) -> None:
    writeCSV(path, Sinogram.CSV_HEADER, sino.rows())


@experiment("free_identity", "scatter")
def freeIdentity(context: ExperimentContext,
                 report: ExperimentReport) -> None:
    """
    Without potentials the scattering and wave operators are the identity.
    """
    grid = context.grid
    ham = HamiltonianOp(freePotentials(grid))
    phi = context.initialState()
    spec = ScatterSpec(context.config.dynamics.Tscat,
                       context.evolution().linear())
    result = linearS(phi, ham, spec)
    saveField(context.output, "phi_minus", phi)
    saveField(context.output, "S_L_phi", result.output)
    report.metrics["scatterResult"] = result.asJSON("phi_minus", "S_L_phi")
    report.flag(result.flags)
    for sign, name in ((-1, "W_minus"), (1, "W_plus")):
        wave = waveOperator(phi, sign, ham, spec)
        report.metrics[f"{name}Deviation"] = relativeDistance(wave.output, phi)
        report.flag(wave.flags)
    report.require("S_L deviation", relativeDistance(result.output, phi),
                   high=1e-10)


@experiment("conservation", "simulate")
def conservation(context: ExperimentContext,
                 report: ExperimentReport) -> None:
    """
    Mass and energy along one nonlinear trajectory.
    """
    dynamics = context.config.dynamics
    ham = context.hamiltonian
    phi = context.initialState()
    spec = context.evolution(totalTime=dynamics.T,
                             checkpointStride=dynamics.checkpointStride)
    recorder = ConservationRecorder(ham, spec, dynamics.recordStride)
    recorder.record(0.0, phi)
    trajectory = evolve(phi, ham, spec, observer=recorder)
    writeCSV(context.output.child("conservation.csv"),
             ("t", "mass", "energy"), recorder.rows)
    checkpoints = context.output.child("checkpoints")
    for index, state in enumerate(trajectory.states):
        saveField(checkpoints, f"u_{index:04d}", state)
    writeCSV(checkpoints.child("times.csv"), ("index", "t"),
             enumerate(trajectory.times))
    massDrift, energyDrift = recorder.drifts()
    report.metrics.update(
        steps=trajectory.steps,
        timeStep=trajectory.timeStep,
        potentialChecks=context.potentials.checks,
        potentialNotes=list(context.potentials.notes),
    )
    if dynamics.decayTimes:
        fit = measureDispersiveDecay(phi, ham, dynamics.decayTimes,
                                     spec.linear())
        report.metrics["dispersiveDecay"] = {
            "fittedExponent": fit.exponent,
            "predictedExponent": -context.grid.dimension / 2.0,
        }
    report.require("mass drift", massDrift, high=1e-9)
    report.require("energy drift", energyDrift, high=1e-6)


@experiment("splitting_order", "simulate")
def splittingOrder(context: ExperimentContext,
                   report: ExperimentReport) -> None:
    dynamics = context.config.dynamics
    spec = context.evolution(totalTime=dynamics.T)
    steps = dynamics.orderSteps
    orders = observedOrder(context.initialState(), context.hamiltonian, spec,
                           steps)
    writeCSV(
        context.output.child("splitting_order.csv"),
        ("dt_coarse", "dt_fine", "order"),
        [(steps[i], steps[i + 1], order) for i, order in enumerate(orders)],
    )
    report.metrics["orders"] = orders
    for (coarse, fine), order in zip(zip(steps, steps[1:]), orders):
        report.require(f"order between dt={coarse} and dt={fine}", order,
                       low=1.8, high=2.2)
    vector = (PLANE_WAVE_VECTOR,) * context.grid.dimension
    report.require("constant-A plane wave error",
                   planeWaveError(context.grid, vector, spec), high=1e-11)


@experiment("scattering", "scatter")
def scattering(context: ExperimentContext,
               report: ExperimentReport) -> None:
    """
    Time-domain against Duhamel fixed point, contraction scaling, norm
    equivalence and inversion of the nonlinear scattering map.
    """
    config = context.config
    dynamics, settings = config.dynamics, config.scattering
    ham = context.hamiltonian
    packet = context.initialState()
    phi = _unit(packet, settings.amplitude)
    spec = ScatterSpec(dynamics.Tscat, context.evolution(),
                       ScatterMode.NONLINEAR_VS_H,
                       smallness=settings.smallness)
    timeDomain = nonlinearS(phi, ham, spec)
    picard = PicardSpec(
        asymptoticTime=dynamics.Tscat,
        timeStep=settings.picardStep or dynamics.dt,
        maxIterations=settings.maxIterations,
        tolerance=settings.tolerance,
        smallness=settings.smallness,
        exponent=dynamics.p,
        nonlinearity=dynamics.nonlinearity,
        includeElectric=dynamics.includeV,
    )
    fixedPoint = picardSolve(phi, ham, picard)
    halved = picardSolve(0.5 * phi, ham, picard)
    inverse = inverseNonlinearS(timeDomain.output, ham, spec)

    output = context.output
    saveField(output, "phi_minus", phi)
    saveField(output, "phi_plus_time_domain", timeDomain.output)
    saveField(output, "phi_plus_picard", fixedPoint.outgoing)
    writeCSV(
        output.child("picard.csv"),
        ("iteration", "difference", "ratio"),
        [
            (index + 1, difference,
             fixedPoint.ratios[index - 1] if index else "")
            for index, difference in enumerate(fixedPoint.differences)
        ],
    )
    writeJSON(output.child("scattering.json"),
              timeDomain.asJSON("phi_minus", "phi_plus_time_domain"))

    expected = 0.5 ** (dynamics.p - 1.0)
    scaling = (halved.contractionRatio / fixedPoint.contractionRatio
               if fixedPoint.contractionRatio else math.nan)
    small = _unit(packet, settings.normAmplitude)
    outgoing = nonlinearS(small, ham,
                          spec.using(ScatterMode.NONLINEAR_VS_FREE))
    norms = normEquivalenceCheck(small, outgoing.output, ham)
    radius = contractionRadius(_unit(packet, 1.0), ham, picard)

    report.metrics.update(
        picardIterations=fixedPoint.iterations,
        contractionRatio=fixedPoint.contractionRatio,
        halvedContractionRatio=halved.contractionRatio,
        expectedScaling=expected,
        picardResidual=fixedPoint.residual,
        normEquivalence=norms.asJSON(),
        contractionRadius={
            "amplitude": radius.amplitude,
            "radius": radius.radius,
            "ratio": radius.ratio,
        },
    )
    for result in (timeDomain, inverse, outgoing):
        report.flag(result.flags)
    report.flag(fixedPoint.flags | halved.flags)
    report.require("Picard against time domain",
                   (fixedPoint.outgoing - timeDomain.output).norm(),
                   high=1e-5)
    report.require("contraction ratio scaling", scaling,
                   low=0.7 * expected, high=1.3 * expected)
    report.require("H1 norm ratio", norms.ratio, low=0.999, high=1.001)
    report.require("inverse scattering round trip",
                   relativeDistance(inverse.output, phi), high=1e-5)


@experiment("thm13_sweep", "smallamp")
def smallAmplitude(context: ExperimentContext,
                   report: ExperimentReport) -> None:
    """
    Linear pairings recovered from the small-amplitude limit of the
    nonlinear scattering map.
    """
    config = context.config
    ham = context.hamiltonian
    phi = context.initialState()
    initial = config.initial
    center = initial.center or (0.0,) * context.grid.dimension
    psis = probeFamily(context.grid, center, initial.width,
                       config.probes.probePairs)
    spec = ScatterSpec(config.dynamics.Tscat, context.evolution(),
                       ScatterMode.NONLINEAR_VS_FREE)
    ladder = config.probes.epsLadder
    sweeps = sweepFamily(phi, psis, ham, ladder, spec, context.pool)
    linear = linearS(phi, ham, replace(spec,
                                       evolution=spec.evolution.linear()))
    report.flag(linear.flags)
    expected = config.dynamics.p - 1.0
    rows = []
    fits = []
    for index, (psi, result) in enumerate(zip(psis, sweeps)):
        reference = innerProduct(linear.output, psi)
        rows.extend((index,) + row for row in result.rows(reference))
        report.flag(result.flags)
        try:
            fit = fitOrder(result, reference)
        except DegenerateFit as error:
            log.warn("probe {index}: {error}", index=index, error=str(error))
            fits.append({"probe": index, "error": str(error)})
            report.require(f"probe {index} fitted order", math.nan)
            continue
        fits.append(dict(fit.asJSON(), probe=index))
        report.require(f"probe {index} fitted order", fit.order,
                       low=expected - 0.3, high=expected + 0.3)
        report.require(f"probe {index} extrapolation error",
                       fit.extrapolationError, high=1e-4)
        report.require(f"probe {index} residual increases", fit.increases,
                       high=0)
    writeCSV(context.output.child("smallamp.csv"),
             ("probe", "eps", "re", "im", "residual"), rows)
    writeJSON(context.output.child("smallamp.json"), {"fits": fits})
    saveField(context.output, "phi", phi)
    saveField(context.output, "S_L_phi", linear.output)
    report.metrics["fits"] = fits
    report.metrics["predictedOrder"] = expected


def checkRaySample(report: ExperimentReport, sample: RaySample) -> None:
    """
    Hold one probed ray to the M{1/|xi|} decay of its remainder and to the
    oracle at the fastest probe.
    """
    report.flag(sample.flags)
    fit = sample.remainderFit()
    label = f"ray ({sample.angle:.4f}, {sample.offset:.4f})"
    report.metrics[label] = {
        "oracle": sample.oracle,
        "estimate": sample.estimate,
        "remainderExponent": fit.exponent,
        "remainders": sample.remainders(),
    }
    low, high = REMAINDER_SLOPE
    report.require(f"{label} remainder slope", fit.exponent, low=low,
                   high=high)
    report.require(f"{label} deviation at |xi|={sample.speeds[-1]}",
                   sample.relativeDeviation(), high=DEVIATION_LIMIT)


@experiment("high_velocity", "probe")
def highVelocity(context: ExperimentContext,
                 report: ExperimentReport) -> None:
    """
    Probe pairings along a few rays against the smeared line integral.
    """
    context.requirePlanar("high_velocity")
    spec = context.probeSpec()
    rows = []
    manifests = []
    for angle, offset in context.config.probes.rays:
        sample = probeRay(context.hamiltonian, angle, offset, spec,
                          Target.TANGENTIAL, context.pool)
        rows.extend(sample.asRows())
        manifests.append(probeManifest([angle], [offset], spec.speeds[-1],
                                       spec, Target.TANGENTIAL))
        checkRaySample(report, sample)
    writeCSV(context.output.child("probes.csv"),
             ("theta", "s", "xi", "re", "im", "oracle"), rows)
    writeJSON(context.output.child("probes.json"), manifests)


def _oracleGeometry(context: ExperimentContext, angles: int):
    settings = context.config.reconstruction
    return (uniformAngles(angles),
            uniformOffsets(settings.offsets, settings.offsetRange))


def _probeGeometry(context: ExperimentContext):
    probes = context.config.probes
    return (uniformAngles(probes.angles),
            uniformOffsets(probes.offsets, probes.offsetRange))


def _oracleRecon(context: ExperimentContext, target: str,
                 angles: int) -> ReconGrid:
    thetas, offsets = _oracleGeometry(context, angles)
    sino = xrayForward(context.potentials.bumps, thetas, offsets, target)
    return fbpInvert(sino, context.grid)


def _fieldScale(potentials: PotentialSet) -> float:
    return float(np.linalg.norm(potentials.magneticField(1, 2)))


@experiment("recover_a", "reconstruct")
def recoverMagnetic(context: ExperimentContext,
                    report: ExperimentReport) -> None:
    """
    The vector potential from oracle data, and its field from scattering
    data, together with a pure-gauge control.
    """
    context.requirePlanar("recover_a")
    grid, truth = context.grid, context.potentials
    output = context.output
    count = context.config.reconstruction.angles

    literal = [_oracleRecon(context, component, count)
               for component in ("A1", "A2")]
    coarse = _oracleRecon(context, "A1", max(count // 2, 1))
    thetas, offsets = _oracleGeometry(context, count)
    tangential = xrayForward(truth.bumps, thetas, offsets, TANGENTIAL)
    oracleField = bFieldFromTangential(tangential, grid)

    spec = context.probeSpec()
    speed = spec.speeds[-1]
    probeAngles, probeOffsets = _probeGeometry(context)
    sino = assembleSinogram(context.hamiltonian, probeAngles, probeOffsets,
                            speed, Target.TANGENTIAL, Provenance.SCATTERING,
                            spec, context.pool)
    _saveSinogram(output.child("sinogram_tangential.csv"), sino)
    writeJSON(output.child("probes.json"),
              probeManifest(probeAngles, probeOffsets, speed, spec,
                            Target.TANGENTIAL))
    scattered = bFieldFromTangential(sino, grid)

    oracleReport = reconstructionReport(truth, literal + [oracleField])
    scatterReport = reconstructionReport(truth, [scattered])
    coarseError = reconstructionReport(truth, [coarse]).error("A1")
    for recon in literal + [oracleField]:
        _saveRecon(output, recon, f"recon_{recon.target}_oracle")
    _saveRecon(output, scattered, f"recon_{FIELD}_scattering")

    report.metrics.update(
        oracle=oracleReport.asJSON(),
        scattering=scatterReport.asJSON(),
        sinogramBudget=sino.budget,
        coarseAngles=coarseError.asJSON(),
    )
    report.flag(sino.flags | scatterReport.flags)
    for axis, component in enumerate(("A1", "A2")):
        if np.any(truth.vector[axis]):
            report.require(f"{component} oracle error",
                           oracleReport.error(component).relativeL2,
                           high=0.05)
    if np.any(truth.vector[0]):
        report.require(
            "A1 error ratio when doubling angles",
            oracleReport.error("A1").relativeL2 / coarseError.relativeL2,
            high=1.0 - 1e-12,
        )
    report.require(f"{FIELD} scattering error",
                   scatterReport.error(FIELD).relativeL2, high=0.15)

    gauge = context.config.potential.gauge
    if gauge is not None:
        pure = buildPotentials(
            gaugeBumps(gauge.center, gauge.amplitude, gauge.widths), grid
        )
        gaugeSino = assembleSinogram(HamiltonianOp(pure), probeAngles,
                                     probeOffsets, speed, Target.TANGENTIAL,
                                     Provenance.SCATTERING, spec,
                                     context.pool)
        _saveSinogram(output.child("sinogram_gauge.csv"), gaugeSino)
        gaugeField = bFieldFromTangential(gaugeSino, grid)
        _saveRecon(output, gaugeField, f"recon_{FIELD}_gauge")
        report.flag(gaugeSino.flags)
        scale = _fieldScale(truth) or 1.0
        ratio = float(np.linalg.norm(gaugeField.values)) / scale
        report.require("gauge field relative to reference", ratio,
                       high=0.05)


@experiment("recover_av", "reconstruct")
def recoverBoth(context: ExperimentContext,
                report: ExperimentReport) -> None:
    """
    Both potentials from one set of symmetrised probes.
    """
    context.requirePlanar("recover_av")
    grid, truth = context.grid, context.potentials
    output = context.output
    electric = Target.ELECTRIC.value

    oracleV = _oracleRecon(context, electric,
                           context.config.reconstruction.angles)
    spec = context.probeSpec()
    speed = spec.speeds[-1]
    probeAngles, probeOffsets = _probeGeometry(context)
    tangential, scalar = assembleJointSinograms(
        context.hamiltonian, probeAngles, probeOffsets, speed, spec,
        context.pool,
    )
    _saveSinogram(output.child("sinogram_tangential.csv"), tangential)
    _saveSinogram(output.child("sinogram_V.csv"), scalar)
    scatteredV = fbpInvert(scalar, grid)
    recons = [scatteredV]
    if truth.isMagnetic:
        recons.append(bFieldFromTangential(tangential, grid))
    oracleReport = reconstructionReport(truth, [oracleV])
    jointReport = reconstructionReport(truth, recons)
    _saveRecon(output, oracleV, f"recon_{electric}_oracle")
    for recon in recons:
        _saveRecon(output, recon, f"recon_{recon.target}_scattering")

    report.metrics.update(
        oracle=oracleReport.asJSON(),
        joint=jointReport.asJSON(),
        sinogramBudget=scalar.budget,
        potentialNotes=list(truth.notes),
    )
    report.flag(tangential.flags | jointReport.flags)
    report.require(f"{electric} oracle error",
                   oracleReport.error(electric).relativeL2, high=0.05)
    report.require(f"{electric} scattering error",
                   jointReport.error(electric).relativeL2, high=0.15)


def runExperiment(
    config: ScenarioConfig,
    output: FilePath,
    pool: Optional[JobPool] = None,
    name: Optional[str] = None,
) -> ExperimentReport:
    """
    Run one experiment and write its artifacts under C{output}.

    @raise ConfigError: if no experiment is selected or the name is unknown.
    """
    name = name or config.experiment
    if name is None:
        raise ConfigError(["experiment: no experiment selected"])
    if name not in EXPERIMENTS:
        raise ConfigError([f"experiment: unknown experiment {name!r}"])
    ensureDirectory(output)
    writeJSON(output.child("scenario.json"), config.model_dump(mode="json"))
    context = ExperimentContext(config, output, pool or JobPool())
    report = ExperimentReport(name, {"seed": config.seed,
                                     "grid": context.grid.describe()})
    log.info("running {experiment} into {path}", experiment=name,
             path=output.path)
    EXPERIMENTS[name](context, report)
    writeJSON(output.child("report.json"), report.asJSON())
    log.info("{experiment} {verdict}", experiment=name,
             verdict="passed" if report.passed else "failed")
    return report
