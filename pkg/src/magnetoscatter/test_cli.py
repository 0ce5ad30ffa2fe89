import json
import shutil
import tempfile
from io import StringIO
from typing import Mapping, Optional, Sequence, Tuple
from unittest import TestCase

from twisted.python.filepath import FilePath

from .cli import EXIT_PASSED, EXIT_USAGE, run
from .storage import readJSON


def runQuietly(
    argv: Sequence[str], environ: Optional[Mapping[str, str]] = None
) -> Tuple[int, str, str]:
    stdout, stderr = StringIO(), StringIO()
    status = run(argv, {} if environ is None else environ, stdout, stderr)
    return status, stdout.getvalue(), stderr.getvalue()


class UsageTests(TestCase):
    """
    Malformed command lines exit with status 2 and say why.
    """

    def test_noCommand(self) -> None:
        status, _, stderr = runQuietly([])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("choose a command", stderr)

    def test_unknownCommand(self) -> None:
        self.assertEqual(runQuietly(["tomograph"])[0], EXIT_USAGE)

    def test_configRequired(self) -> None:
        status, _, stderr = runQuietly(["simulate"])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("--config is required", stderr)

    def test_experimentOfAnotherCommand(self) -> None:
        status, _, stderr = runQuietly(
            ["simulate", "--config", "x.json", "--experiment", "scattering"]
        )
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("conservation, splitting_order", stderr)

    def test_unknownFault(self) -> None:
        self.assertEqual(runQuietly(["verify", "--fault", "x"])[0],
                         EXIT_USAGE)

    def test_badEnvironment(self) -> None:
        """
        Environment fallbacks are validated like the options themselves.
        """
        status, _, stderr = runQuietly(["verify"],
                                       {"MAGNETOSCATTER_SEED": "-1"})
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("MAGNETOSCATTER_SEED", stderr)


class VerifyCommandTests(TestCase):
    def test_gridSuite(self) -> None:
        status, stdout, _ = runQuietly(["verify", "--suite", "grid"])
        self.assertEqual(status, EXIT_PASSED)
        self.assertIn("Parseval", stdout)

    def test_suiteFromEnvironment(self) -> None:
        status, stdout, _ = runQuietly(["verify"],
                                       {"MAGNETOSCATTER_SUITE": "grid"})
        self.assertEqual(status, EXIT_PASSED)
        self.assertNotIn("unitarity", stdout)

    def test_unknownSuite(self) -> None:
        status, _, stderr = runQuietly(["verify", "--suite", "grid,gird"])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("gird", stderr)


class ScenarioCommandTests(TestCase):
    """
    Running experiments from scenario files.
    """

    def setUp(self) -> None:
        path = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, path)
        self.directory = FilePath(path)

    def scenario(self, document: dict) -> str:
        path = self.directory.child("scenario.json")
        path.setContent(json.dumps(document).encode("utf-8"))
        return path.path

    def test_invalidScenario(self) -> None:
        config = self.scenario({"grid": {"n": 1, "N": 63, "L": 8.0}})
        status, _, stderr = runQuietly(["scatter", "--config", config])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("grid.N", stderr)

    def test_missingScenario(self) -> None:
        missing = self.directory.child("absent.json").path
        self.assertEqual(runQuietly(["scatter", "-c", missing])[0],
                         EXIT_USAGE)

    def test_scenarioNamesOtherCommand(self) -> None:
        config = self.scenario({"grid": {"n": 1, "N": 64, "L": 8.0},
                                "experiment": "conservation"})
        status, _, stderr = runQuietly(["scatter", "--config", config])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn("belongs to simulate", stderr)

    def test_freeIdentity(self) -> None:
        """
        A passing experiment exits 0 and leaves its report and event log in
        the output directory.
        """
        config = self.scenario({
            "grid": {"n": 1, "N": 64, "L": 8.0},
            "dynamics": {"dt": 1e-3, "Tscat": 1.0},
            "experiment": "free_identity",
        })
        output = self.directory.child("out")
        status, _, _ = runQuietly(["scatter", "-c", config, "-o",
                                   output.path, "-w", "1", "-s", "7"])
        self.assertEqual(status, EXIT_PASSED)
        self.assertTrue(output.child("events.jsonl").exists())
        report = readJSON(output.child("report.json"))
        self.assertTrue(report["passed"])
        self.assertEqual(report["metrics"]["seed"], 7)
