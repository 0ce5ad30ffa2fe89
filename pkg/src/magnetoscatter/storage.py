"""
Reading and writing experiment artifacts: grid dumps, CSV tables and JSON
documents, all addressed through L{FilePath}.
"""
from __future__ import annotations

import csv
import io
import json
from typing import IO, Any, Iterable, Sequence

import numpy as np
from twisted.logger import Logger
from twisted.python.filepath import FilePath

from .errors import GridMismatch
from .grid import Wavefunction, makeGrid

log = Logger()

FLOAT_FORMAT = "%.17g"
DUMP_DTYPE = np.dtype("<c16")


def ensureDirectory(directory: FilePath) -> FilePath:
    if not directory.isdir():
        directory.makedirs(True)
    return directory


def appendText(path: FilePath) -> IO[str]:
    """
    Open C{path} for appending UTF-8 text, creating it if needed.
    """
    ensureDirectory(path.parent())
    return io.TextIOWrapper(path.open("a"), encoding="utf-8")


def dumpPaths(directory: FilePath, name: str) -> tuple:
    return directory.child(name + ".bin"), directory.child(name + ".json")


def saveField(directory: FilePath, name: str, u: Wavefunction) -> None:
    """
    Save C{u} as C{name.bin} (little-endian float64 (re, im) pairs, row-major)
    with a C{name.json} header.
    """
    ensureDirectory(directory)
    binary, header = dumpPaths(directory, name)
    binary.setContent(np.ascontiguousarray(u.values, DUMP_DTYPE).tobytes())
    writeJSON(header, dict(u.grid.describe(), field_name=name))
    log.debug("saved field {name} to {path}", name=name, path=binary.path)


def loadField(directory: FilePath, name: str) -> Wavefunction:
    """
    Load a field written by L{saveField}.
    """
    binary, header = dumpPaths(directory, name)
    description = readJSON(header)
    grid = makeGrid(description["n"], description["N"], description["L"])
    values = np.frombuffer(binary.getContent(), dtype=DUMP_DTYPE)
    if values.size != grid.size:
        raise GridMismatch(
            f"{binary.path} holds {values.size} samples, its header "
            f"describes {grid.size}"
        )
    return Wavefunction(grid, values.reshape(grid.shape).copy())


def formatCell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def writeCSV(
    path: FilePath, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    """
    Write a table with every float at 17 significant digits.
    """
    ensureDirectory(path.parent())
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([formatCell(cell) for cell in row])
    path.setContent(buffer.getvalue().encode("utf-8"))


def readCSV(path: FilePath) -> list:
    reader = csv.reader(io.StringIO(path.getContent().decode("utf-8")))
    return list(reader)


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    raise TypeError(f"cannot serialize {type(value).__name__}")


def toJSON(document: Any) -> str:
    return json.dumps(document, default=_plain, indent=2, sort_keys=True)


def writeJSON(path: FilePath, document: Any) -> None:
    ensureDirectory(path.parent())
    path.setContent((toJSON(document) + "\n").encode("utf-8"))


def readJSON(path: FilePath) -> Any:
    return json.loads(path.getContent())
