"""Offline figure and table generation from study-log CSVs.

Log-log convergence plots with reference slopes and observed-order
annotations, and viscosity-sweep tables with classical and robust runs
side by side. Consumes only the CSV contract; deterministic output.
"""

from .csvio import COLUMN_VOCAB, STUDY_HEADER, SWEEP_HEADER, Log, PlotsError, SpecError, read_log
from .figures import FigureSpec, RenderResult, figure_spec_from_json, render_convergence, slope_last3
from .tables import SweepTable, render_sweep_table

__version__ = "0.1.0"

__all__ = [
    "COLUMN_VOCAB",
    "STUDY_HEADER",
    "SWEEP_HEADER",
    "Log",
    "PlotsError",
    "SpecError",
    "FigureSpec",
    "RenderResult",
    "figure_spec_from_json",
    "render_convergence",
    "slope_last3",
    "SweepTable",
    "render_sweep_table",
    "read_log",
]
