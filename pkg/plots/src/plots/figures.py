"""Log-log convergence figures from study-log CSVs.

A FigureSpec describes one output image: one or more panels, each with
series drawn from (csv, column) pairs, optional dashed reference slopes,
and optional axis ranges. Rendering is deterministic: fixed style tables,
fixed dpi, metadata stripped, so the same spec and data regenerate the
same bytes.
"""

from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg", force=False)
import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from .csvio import PlotsError, SpecError, check_vocab, read_log  # noqa: E402

MARKERS = ("o", "s", "^", "d", "v", "p", "*", "x")
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
REF_STYLES = ("--", ":", "-.")

RC = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
}


@dataclass(frozen=True)
class Series:
    csv: str
    y: str
    label: str


@dataclass(frozen=True)
class RefSlope:
    """Reference decay order k, drawn as C * ndof^(-k/2)."""

    order: float
    label: str


@dataclass(frozen=True)
class Panel:
    series: tuple
    x: str = "ndof"
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    reference_slopes: tuple = ()
    xlim: tuple | None = None
    ylim: tuple | None = None


@dataclass(frozen=True)
class FigureSpec:
    output: str
    panels: tuple
    title: str | None = None
    width: float | None = None
    height: float | None = None
    annotate_slopes: bool = True


@dataclass(frozen=True)
class RenderResult:
    """What was drawn: per panel, (label, annotated order or None)."""

    path: str
    slopes: tuple
    labels: tuple = field(default=())


def _take(obj, required, optional, where):
    # strict key checking so typos in spec files fail loudly
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object, got {type(obj).__name__}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise SpecError(f"{where}: missing key(s) {', '.join(missing)}")
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise SpecError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return obj


def _limits(value, where):
    if value is None:
        return None
    ok = (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) for v in value)
    )
    if not ok or not (0 < value[0] < value[1]):
        raise SpecError(f"{where}: limits must be two ascending positive numbers")
    return (float(value[0]), float(value[1]))


def _series_from_json(obj, where):
    _take(obj, {"csv", "y", "label"}, set(), where)
    if not all(isinstance(obj[k], str) and obj[k] for k in ("csv", "y", "label")):
        raise SpecError(f"{where}: csv, y, label must be non-empty strings")
    check_vocab(obj["y"], where)
    return Series(csv=obj["csv"], y=obj["y"], label=obj["label"])


def _ref_from_json(obj, where):
    _take(obj, {"order", "label"}, set(), where)
    order = obj["order"]
    if not isinstance(order, (int, float)) or order <= 0:
        raise SpecError(f"{where}: order must be a positive number")
    if not isinstance(obj["label"], str) or not obj["label"]:
        raise SpecError(f"{where}: label must be a non-empty string")
    return RefSlope(order=float(order), label=obj["label"])


def _panel_from_json(obj, idx):
    where = f"panels[{idx}]"
    _take(
        obj,
        {"series"},
        {"x", "title", "xlabel", "ylabel", "reference_slopes", "xlim", "ylim"},
        where,
    )
    raw = obj["series"]
    if not isinstance(raw, list) or not raw:
        raise SpecError(f"{where}: series must be a non-empty list")
    series = tuple(
        _series_from_json(s, f"{where}.series[{j}]") for j, s in enumerate(raw)
    )
    x = obj.get("x", "ndof")
    if not isinstance(x, str):
        raise SpecError(f"{where}: x must be a string")
    check_vocab(x, where)
    refs_raw = obj.get("reference_slopes", [])
    if not isinstance(refs_raw, list):
        raise SpecError(f"{where}: reference_slopes must be a list")
    refs = tuple(
        _ref_from_json(r, f"{where}.reference_slopes[{j}]")
        for j, r in enumerate(refs_raw)
    )
    for key in ("title", "xlabel", "ylabel"):
        if obj.get(key) is not None and not isinstance(obj[key], str):
            raise SpecError(f"{where}: {key} must be a string")
    return Panel(
        series=series,
        x=x,
        title=obj.get("title"),
        xlabel=obj.get("xlabel"),
        ylabel=obj.get("ylabel"),
        reference_slopes=refs,
        xlim=_limits(obj.get("xlim"), f"{where}.xlim"),
        ylim=_limits(obj.get("ylim"), f"{where}.ylim"),
    )


def figure_spec_from_json(obj):
    """Validate a figure object from a spec document into a FigureSpec."""
    _take(
        obj,
        {"output", "panels"},
        {"title", "width", "height", "annotate_slopes"},
        "figure",
    )
    output = obj["output"]
    if not isinstance(output, str) or not output.endswith(".png"):
        raise SpecError("figure: output must be a .png path")
    raw = obj["panels"]
    if not isinstance(raw, list) or not raw:
        raise SpecError("figure: panels must be a non-empty list")
    panels = tuple(_panel_from_json(p, i) for i, p in enumerate(raw))
    for key in ("width", "height"):
        v = obj.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v <= 0):
            raise SpecError(f"figure: {key} must be a positive number")
    annotate = obj.get("annotate_slopes", True)
    if not isinstance(annotate, bool):
        raise SpecError("figure: annotate_slopes must be true or false")
    title = obj.get("title")
    if title is not None and not isinstance(title, str):
        raise SpecError("figure: title must be a string")
    return FigureSpec(
        output=output,
        panels=panels,
        title=title,
        width=obj.get("width"),
        height=obj.get("height"),
        annotate_slopes=annotate,
    )


def slope_last3(x, y):
    """Observed decay order over the trailing window of up to 3 points.

    Order in mesh-size convention: err ~ ndof^(-order/2) in 2D, so
    order = -2 * dlog(err) / dlog(ndof) across the window endpoints.
    Returns None when fewer than two points are available.
    """
    n = len(x)
    if n < 2:
        return None
    i0 = max(0, n - 3)
    if x[n - 1] == x[i0]:
        return None  # fixed-mesh data carries no order
    return -2.0 * np.log(y[n - 1] / y[i0]) / np.log(x[n - 1] / x[i0])


def _load_series(spec):
    """Read every referenced CSV once; validate columns and positivity."""
    logs = {}
    for panel in spec.panels:
        for s in panel.series:
            if s.csv not in logs:
                logs[s.csv] = read_log(s.csv)
            log = logs[s.csv]
            for name in (panel.x, s.y):
                values = log.column(name)
                if not np.all(values > 0):
                    raise PlotsError(
                        f"{s.csv}: column '{name}' has non-positive entries; "
                        "cannot draw on log axes"
                    )
    return logs


def render_convergence(spec):
    """Render a FigureSpec to its output image.

    All inputs are validated before the output file is touched, so a bad
    spec or CSV never leaves a partial image behind. Returns a
    RenderResult with the annotated orders per series.
    """
    logs = _load_series(spec)

    n = len(spec.panels)
    width = spec.width if spec.width is not None else 4.8 * n
    height = spec.height if spec.height is not None else 3.6

    all_slopes = []
    all_labels = []
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, n, figsize=(width, height), squeeze=False)
        for ax, panel in zip(axes[0], spec.panels):
            panel_slopes = []
            panel_labels = []
            anchor = None
            for j, s in enumerate(panel.series):
                log = logs[s.csv]
                x = log.column(panel.x)
                y = log.column(s.y)
                order = slope_last3(x, y) if panel.x == "ndof" else None
                label = s.label
                if spec.annotate_slopes and order is not None:
                    label = f"{s.label} (EOC {order:.2f})"
                ax.loglog(
                    x,
                    y,
                    marker=MARKERS[j % len(MARKERS)],
                    color=COLORS[j % len(COLORS)],
                    label=label,
                )
                panel_slopes.append((s.label, order))
                panel_labels.append(label)
                if anchor is None:
                    anchor = (x, y)

            xa, ya = anchor
            for j, ref in enumerate(panel.reference_slopes):
                # anchored below the first series, offset per line
                xs = np.geomspace(xa.min(), xa.max(), 16)
                scale = 0.5 / (2.0**j)
                ys = scale * ya[-1] * (xs / xa[-1]) ** (-ref.order / 2.0)
                ax.loglog(
                    xs,
                    ys,
                    linestyle=REF_STYLES[j % len(REF_STYLES)],
                    color="0.45",
                    label=ref.label,
                )

            ax.set_xlabel(panel.xlabel if panel.xlabel is not None else panel.x)
            if panel.ylabel is not None:
                ax.set_ylabel(panel.ylabel)
            if panel.title is not None:
                ax.set_title(panel.title)
            if panel.xlim is not None:
                ax.set_xlim(panel.xlim)
            if panel.ylim is not None:
                ax.set_ylim(panel.ylim)
            ax.grid(True, which="both", alpha=0.25)
            ax.legend(loc="best")
            all_slopes.append(tuple(panel_slopes))
            all_labels.append(tuple(panel_labels))

        if spec.title is not None:
            fig.suptitle(spec.title)
        fig.tight_layout()
        fig.savefig(spec.output, metadata={"Software": None})
        plt.close(fig)

    return RenderResult(
        path=spec.output, slopes=tuple(all_slopes), labels=tuple(all_labels)
    )
