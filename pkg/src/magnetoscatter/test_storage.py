import shutil
import tempfile
from unittest import TestCase

import numpy as np
from twisted.python.filepath import FilePath

from .errors import GridMismatch
from .grid import gaussianPacket, makeGrid
from .storage import (
    appendText,
    formatCell,
    loadField,
    readCSV,
    readJSON,
    saveField,
    toJSON,
    writeCSV,
    writeJSON,
)


class StorageTests(TestCase):
    """
    Tests for the artifact readers and writers.
    """

    def setUp(self) -> None:
        path = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, path)
        self.directory = FilePath(path).child("run")

    def test_fieldRoundTrip(self) -> None:
        """
        A saved field comes back bit for bit, with its grid.
        """
        u = gaussianPacket(makeGrid(2, 16, 4.0), 0.7, momentum=(1.0, -0.5))
        saveField(self.directory, "phi", u)
        self.assertEqual(self.directory.child("phi.bin").getsize(),
                         16 * 16 * 16)
        loaded = loadField(self.directory, "phi")
        self.assertEqual(loaded.grid, u.grid)
        np.testing.assert_array_equal(loaded.values, u.values)
        header = readJSON(self.directory.child("phi.json"))
        self.assertEqual(header["field_name"], "phi")

    def test_truncatedDump(self) -> None:
        u = gaussianPacket(makeGrid(1, 16, 4.0))
        saveField(self.directory, "phi", u)
        binary = self.directory.child("phi.bin")
        binary.setContent(binary.getContent()[:-16])
        with self.assertRaises(GridMismatch):
            loadField(self.directory, "phi")

    def test_fullPrecision(self) -> None:
        """
        Floats are written with 17 significant digits; everything else as
        text.
        """
        self.assertEqual(formatCell(0.1), "0.10000000000000001")
        self.assertEqual(formatCell(np.float64(0.5)), "0.5")
        self.assertEqual(formatCell(3), "3")
        table = self.directory.child("table.csv")
        writeCSV(table, ("a", "b"), [(1, 0.1), ("x", 2.5)])
        self.assertEqual(readCSV(table),
                         [["a", "b"], ["1", "0.10000000000000001"],
                          ["x", "2.5"]])
        self.assertEqual(float(readCSV(table)[1][1]), 0.1)

    def test_json(self) -> None:
        """
        Complex numbers become C{re}/C{im} pairs and numpy values plain
        ones.
        """
        document = {"q": 1 - 2j, "n": np.int64(3), "v": np.arange(2.0)}
        path = self.directory.child("doc.json")
        writeJSON(path, document)
        self.assertEqual(readJSON(path),
                         {"q": {"re": 1.0, "im": -2.0}, "n": 3,
                          "v": [0.0, 1.0]})
        with self.assertRaises(TypeError):
            toJSON({"x": object()})

    def test_appendText(self) -> None:
        """
        Text is appended as UTF-8, creating the file and its directory on
        first use.
        """
        log = self.directory.child("nested").child("events.jsonl")
        for line in ("{\"a\": 1}\n", "{\"b\": \"ξ\"}\n"):
            with appendText(log) as stream:
                stream.write(line)
        self.assertEqual(log.getContent().decode("utf-8"),
                         "{\"a\": 1}\n{\"b\": \"ξ\"}\n")
