"""Viscosity-sweep tables: classical and robust runs side by side.

Input is a pair of sweep CSVs (one per discretization mode) over the same
set of viscosities. The efficiency columns are recomputed from the error
and indicator columns of the same row rather than copied, so the table
can never disagree with its own data.
"""

from dataclasses import dataclass

import numpy as np

from .csvio import PlotsError, read_log

TABLE_HEADER = (
    "nu",
    "err_h1 (classical)",
    "mu_class",
    "eff_class",
    "err_h1 (robust)",
    "mu_new",
    "eff_new",
)


@dataclass(frozen=True)
class SweepTable:
    header: tuple
    rows: tuple  # tuples of floats, one per nu, descending
    markdown: str


def _sweep_columns(path, err_name, mu_name):
    log = read_log(path)
    if log.kind != "sweep":
        raise PlotsError(
            f"{path}: expected a sweep CSV (leading nu column), got a "
            f"{log.kind} file"
        )
    nu = log.column("nu")
    if len(np.unique(nu)) != len(nu):
        raise PlotsError(f"{path}: duplicate nu rows; sweeps need one row per nu")
    err = log.column(err_name)
    mu = log.column(mu_name)
    if not np.all(err > 0):
        raise PlotsError(f"{path}: non-positive {err_name}; cannot form efficiency")
    return {float(v): (float(e), float(m)) for v, e, m in zip(nu, err, mu)}


def render_sweep_table(classical_csv, robust_csv):
    """Build the side-by-side sweep table as markdown plus raw rows."""
    classical = _sweep_columns(classical_csv, "err_h1", "mu_class")
    robust = _sweep_columns(robust_csv, "err_h1", "mu_new")

    if set(classical) != set(robust):
        only_c = sorted(set(classical) - set(robust), reverse=True)
        only_r = sorted(set(robust) - set(classical), reverse=True)
        raise PlotsError(
            "mismatched nu sets: "
            f"only in {classical_csv}: {only_c or 'none'}; "
            f"only in {robust_csv}: {only_r or 'none'}"
        )

    rows = []
    for nu in sorted(classical, reverse=True):
        err_c, mu_c = classical[nu]
        err_r, mu_r = robust[nu]
        rows.append((nu, err_c, mu_c, mu_c / err_c, err_r, mu_r, mu_r / err_r))

    lines = [
        "| " + " | ".join(TABLE_HEADER) + " |",
        "|" + "---:|" * len(TABLE_HEADER),
    ]
    for nu, err_c, mu_c, eff_c, err_r, mu_r, eff_r in rows:
        cells = (
            f"{nu:g}",
            f"{err_c:.4e}",
            f"{mu_c:.4e}",
            f"{eff_c:.2f}",
            f"{err_r:.4e}",
            f"{mu_r:.4e}",
            f"{eff_r:.2f}",
        )
        lines.append("| " + " | ".join(cells) + " |")

    return SweepTable(
        header=TABLE_HEADER, rows=tuple(rows), markdown="\n".join(lines) + "\n"
    )
