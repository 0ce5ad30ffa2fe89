"""
The C{magnetoscatter} command.
"""
from __future__ import annotations

import os
import sys
from contextlib import contextmanager
from functools import partial
from typing import IO, Iterator, List, Mapping, Optional, Sequence

from twisted.logger import (
    FilteringLogObserver,
    LogLevel,
    LogLevelFilterPredicate,
    Logger,
    globalLogPublisher,
    jsonFileLogObserver,
    textFileLogObserver,
)
from twisted.python import usage
from twisted.python.filepath import FilePath

from .config import ScenarioConfig, loadConfig
from .errors import ConfigError, MagnetoscatterError, VerificationError
from .experiments import SUBCOMMANDS, experimentsFor, runExperiment
from .jobs import JobPool, defaultWorkers
from .storage import appendText, ensureDirectory, writeJSON
from .verify import FAULTS, SUITES, runVerification

log = Logger()

ENVIRONMENT_PREFIX = "MAGNETOSCATTER_"

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_ERROR = 3


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed {seed} is not an unsigned 64-bit integer")
    return seed


def _workers(value: str) -> int:
    workers = int(value)
    if workers < 1:
        raise ValueError(f"need at least one worker, not {workers}")
    return workers


class _EnvironmentOptions(usage.Options):
    """
    Options whose unset parameters fall back to C{MAGNETOSCATTER_<NAME>}.
    """

    coercions = {"workers": _workers, "seed": _seed}

    def __init__(self, environ: Optional[Mapping[str, str]] = None) -> None:
        super().__init__()
        self.environ = os.environ if environ is None else environ

    def postOptions(self) -> None:
        for name, *_ in self.optParameters:
            if self[name] is not None:
                continue
            value = self.environ.get(ENVIRONMENT_PREFIX + name.upper())
            if value is None:
                continue
            try:
                self[name] = self.coercions.get(name, str)(value)
            except ValueError as error:
                raise usage.UsageError(
                    f"{ENVIRONMENT_PREFIX}{name.upper()}: {error}"
                ) from error


class ScenarioOptions(_EnvironmentOptions):
    optParameters = [
        ["config", "c", None, "Scenario file (JSON)."],
        ["out", "o", None, "Directory for the artifacts."],
        ["workers", "w", None, "Parallel jobs (default: all cores).",
         _workers],
        ["seed", "s", None, "Seed for randomised checks.", _seed],
        ["experiment", "e", None, "Experiment to run."],
    ]
    optFlags = [["verbose", "v", "Log debug events too."]]
    command = ""

    def postOptions(self) -> None:
        super().postOptions()
        if self["config"] is None:
            raise usage.UsageError("--config is required")
        allowed = experimentsFor(self.command)
        if self["experiment"] is not None and self["experiment"] not in (
            allowed
        ):
            raise usage.UsageError(
                f"{self.command} runs {', '.join(allowed)}, not "
                f"{self['experiment']!r}"
            )


class SimulateOptions(ScenarioOptions):
    command = "simulate"


class ScatterOptions(ScenarioOptions):
    command = "scatter"


class SmallAmplitudeOptions(ScenarioOptions):
    command = "smallamp"


class ProbeOptions(ScenarioOptions):
    command = "probe"


class ReconstructOptions(ScenarioOptions):
    command = "reconstruct"


class VerifyOptions(_EnvironmentOptions):
    optParameters = [
        ["config", "c", None, "Scenario whose verify block picks suites."],
        ["out", "o", None, "Directory for verify.json."],
        ["seed", "s", None, "Seed for randomised checks.", _seed],
        ["suite", None, None,
         f"Comma-separated suites out of {', '.join(SUITES)}."],
        ["fault", None, None,
         f"Inject a fault ({', '.join(FAULTS)}); its check must fail."],
    ]
    optFlags = [["verbose", "v", "Log debug events too."]]

    def postOptions(self) -> None:
        super().postOptions()
        if self["fault"] is not None and self["fault"] not in FAULTS:
            raise usage.UsageError(f"unknown fault {self['fault']!r}")


class Options(usage.Options):
    synopsis = "Usage: magnetoscatter <command> [options]"
    subCommands = [
        ["simulate", None, SimulateOptions,
         "Integrate trajectories (conservation, splitting_order)."],
        ["scatter", None, ScatterOptions,
         "Scattering operators (free_identity, scattering)."],
        ["smallamp", None, SmallAmplitudeOptions,
         "Small-amplitude limit of the scattering map (thm13_sweep)."],
        ["probe", None, ProbeOptions,
         "High-velocity probes along rays (high_velocity)."],
        ["reconstruct", None, ReconstructOptions,
         "Sinograms and their inversion (recover_a, recover_av)."],
        ["verify", None, VerifyOptions, "Run the invariant suite."],
    ]

    def __init__(self, environ: Optional[Mapping[str, str]] = None) -> None:
        super().__init__()
        self.subCommands = [
            [name, short, partial(parser, environ), description]
            for name, short, parser, description in type(self).subCommands
        ]

    def postOptions(self) -> None:
        if self.subCommand is None:
            raise usage.UsageError("choose a command")


@contextmanager
def observing(output: Optional[FilePath], verbose: bool,
              stream: IO[str]) -> Iterator[None]:
    """
    Send events to C{stream} as text and, with an C{output} directory, to
    its C{events.jsonl} as JSON.
    """
    level = LogLevel.debug if verbose else LogLevel.info
    observers = [
        FilteringLogObserver(
            textFileLogObserver(stream),
            [LogLevelFilterPredicate(defaultLogLevel=level)],
        )
    ]
    events = None
    if output is not None:
        events = appendText(output.child("events.jsonl"))
        observers.append(jsonFileLogObserver(events, recordSeparator=""))
    for observer in observers:
        globalLogPublisher.addObserver(observer)
    try:
        yield
    finally:
        for observer in observers:
            globalLogPublisher.removeObserver(observer)
        if events is not None:
            events.close()


def _complain(stream: IO[str], problems: Sequence[str]) -> int:
    for problem in problems:
        stream.write(f"magnetoscatter: {problem}\n")
    return EXIT_USAGE


def _runScenario(command: str, options: ScenarioOptions,
                 stderr: IO[str]) -> int:
    try:
        config = loadConfig(FilePath(options["config"]))
    except ConfigError as error:
        return _complain(stderr, error.problems)
    if options["seed"] is not None:
        config = config.model_copy(update={"seed": options["seed"]})
    name = (options["experiment"] or config.experiment
            or experimentsFor(command)[0])
    if SUBCOMMANDS.get(name) != command:
        return _complain(stderr, [
            f"experiment {name!r} belongs to "
            f"{SUBCOMMANDS.get(name, 'no command')}, not {command}"
        ])
    output = ensureDirectory(
        FilePath(options["out"] or config.output or os.path.join("out", name))
    )
    pool = JobPool(options["workers"] or defaultWorkers())
    with observing(output, options["verbose"], stderr):
        try:
            report = runExperiment(config, output, pool, name)
        except ConfigError as error:
            return _complain(stderr, error.problems)
        except MagnetoscatterError:
            log.failure("{experiment} stopped", experiment=name)
            return EXIT_ERROR
    return EXIT_PASSED if report.passed else EXIT_FAILED


def _runVerify(options: VerifyOptions, stdout: IO[str],
               stderr: IO[str]) -> int:
    config: Optional[ScenarioConfig] = None
    if options["config"] is not None:
        try:
            config = loadConfig(FilePath(options["config"]))
        except ConfigError as error:
            return _complain(stderr, error.problems)
    suites: Optional[List[str]] = None
    if options["suite"] is not None:
        suites = [s.strip() for s in options["suite"].split(",") if s.strip()]
    elif config is not None:
        suites = config.verify.suites
    fault = options["fault"] or (config.verify.fault if config else None)
    seed = options["seed"]
    if seed is None:
        seed = config.seed if config is not None else 0
    output = None
    if options["out"] is not None:
        output = ensureDirectory(FilePath(options["out"]))
    with observing(output, options["verbose"], stderr):
        try:
            result = runVerification(suites, fault, seed)
        except VerificationError as error:
            return _complain(stderr, [str(error)])
    stdout.write(result.table() + "\n")
    if output is not None:
        writeJSON(output.child("verify.json"), {
            "seed": seed,
            "fault": fault,
            "passed": result.passed,
            "checks": [
                {
                    "suite": c.suite,
                    "name": c.name,
                    "value": c.value,
                    "limit": c.limit,
                    "passed": c.passed,
                    "error": c.error,
                }
                for c in result.checks
            ],
        })
    return EXIT_PASSED if result.passed else EXIT_FAILED


def run(
    argv: Sequence[str],
    environ: Optional[Mapping[str, str]] = None,
    stdout: IO[str] = sys.stdout,
    stderr: IO[str] = sys.stderr,
) -> int:
    """
    Parse C{argv}, run the command, and return the exit status: 0 when every
    criterion passed, 1 when one failed or a result was flagged, 2 for usage
    and configuration errors, 3 when the computation itself gave up.
    """
    options = Options(environ)
    try:
        options.parseOptions(list(argv))
    except usage.UsageError as error:
        stderr.write(f"{options}\nmagnetoscatter: {error}\n")
        return EXIT_USAGE
    if options.subCommand == "verify":
        return _runVerify(options.subOptions, stdout, stderr)
    return _runScenario(options.subCommand, options.subOptions, stderr)


def main() -> None:
    sys.exit(run(sys.argv[1:]))
