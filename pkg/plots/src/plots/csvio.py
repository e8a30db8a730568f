"""Study-log CSV contract: schema constants, parsing, validation errors.

The producer writes one CSV per run with a fixed header, floats at 17
significant digits, and a trailing comment line naming the JSON manifest.
Convergence studies key rows by refinement level; viscosity sweeps replace
the level column with nu. This module is the only place the contract is
spelled out; everything downstream works from Log objects.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

STUDY_HEADER = (
    "level",
    "ndof",
    "err_h1",
    "mu_class",
    "mu_new",
    "eta_vol",
    "eta_curl",
    "eta_jump",
    "eta_jump2",
    "eta_cons1",
    "eta_cons2",
    "div_norm",
    "eff_class",
    "eff_new",
    "seconds",
)
SWEEP_HEADER = ("nu",) + STUDY_HEADER[1:]

# every column name a figure or table may legally reference
COLUMN_VOCAB = frozenset(STUDY_HEADER) | {"nu"}


class PlotsError(RuntimeError):
    """Bad input data: unreadable, empty, or contract-violating CSVs."""


class SpecError(ValueError):
    """Malformed figure or table specification."""


@dataclass(frozen=True)
class Log:
    """One parsed study log: column arrays plus provenance."""

    path: str
    kind: str  # "study" or "sweep"
    columns: dict
    manifest: str | None

    def __len__(self):
        return len(next(iter(self.columns.values())))

    def column(self, name):
        if name not in self.columns:
            raise PlotsError(
                f"{self.path}: no column '{name}' in this {self.kind} file; "
                f"header is {','.join(self.columns)}"
            )
        return self.columns[name]


def read_log(path):
    """Parse one CSV against the contract; raise PlotsError on any defect."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PlotsError(f"cannot read {path}: {exc}") from exc

    manifest = None
    rows_text = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            tag = line.lstrip("#").strip()
            if tag.startswith("manifest:"):
                manifest = tag.split(":", 1)[1].strip()
            continue
        if header is None:
            header = tuple(line.split(","))
            continue
        rows_text.append((lineno, line.split(",")))

    if header is None:
        raise PlotsError(f"{path}: empty file, expected a study-log CSV")
    if header == STUDY_HEADER:
        kind = "study"
    elif header == SWEEP_HEADER:
        kind = "sweep"
    else:
        raise PlotsError(
            f"{path}: unrecognized header {','.join(header)}; expected "
            f"{','.join(STUDY_HEADER)} or {','.join(SWEEP_HEADER)}"
        )
    if not rows_text:
        raise PlotsError(f"{path}: no data rows")

    data = np.empty((len(rows_text), len(header)))
    for i, (lineno, fields) in enumerate(rows_text):
        if len(fields) != len(header):
            raise PlotsError(
                f"{path}:{lineno}: {len(fields)} fields, header has {len(header)}"
            )
        try:
            data[i] = [float(tok) for tok in fields]
        except ValueError as exc:
            raise PlotsError(f"{path}:{lineno}: non-numeric field ({exc})") from exc

    columns = {name: data[:, j].copy() for j, name in enumerate(header)}
    return Log(path=str(path), kind=kind, columns=columns, manifest=manifest)


def check_vocab(name, where):
    """Reject column references outside the contract vocabulary."""
    if name not in COLUMN_VOCAB:
        raise SpecError(
            f"{where}: '{name}' is not a study-log column; known columns: "
            f"{', '.join(sorted(COLUMN_VOCAB))}"
        )
