"""Command-line front end: render figures and tables from a spec document.

    plots render --spec spec.json

The spec document is either a single figure object or an object with
"figures" and/or "tables" lists; the schema is documented in the package
README. Exit codes: 0 success, 1 unreadable or contract-violating data,
2 bad arguments or malformed spec.
"""

import argparse
import json
import sys
from pathlib import Path

from .csvio import PlotsError, SpecError
from .figures import figure_spec_from_json, render_convergence
from .tables import render_sweep_table


def _table_spec(obj, idx):
    where = f"tables[{idx}]"
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    missing = sorted({"classical", "robust"} - set(obj))
    if missing:
        raise SpecError(f"{where}: missing key(s) {', '.join(missing)}")
    unknown = sorted(set(obj) - {"classical", "robust", "output"})
    if unknown:
        raise SpecError(f"{where}: unknown key(s) {', '.join(unknown)}")
    for key in ("classical", "robust"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise SpecError(f"{where}: {key} must be a CSV path")
    out = obj.get("output")
    if out is not None and (not isinstance(out, str) or not out):
        raise SpecError(f"{where}: output must be a path")
    return obj["classical"], obj["robust"], out


def _parse_document(doc):
    """Split a spec document into figure specs and table specs."""
    if not isinstance(doc, dict):
        raise SpecError("spec document must be a JSON object")
    if "panels" in doc:
        return [figure_spec_from_json(doc)], []
    unknown = sorted(set(doc) - {"figures", "tables"})
    if unknown:
        raise SpecError(f"spec document: unknown key(s) {', '.join(unknown)}")
    figures_raw = doc.get("figures", [])
    tables_raw = doc.get("tables", [])
    if not isinstance(figures_raw, list) or not isinstance(tables_raw, list):
        raise SpecError("figures and tables must be lists")
    if not figures_raw and not tables_raw:
        raise SpecError("spec document declares nothing to render")
    figures = [figure_spec_from_json(f) for f in figures_raw]
    tables = [_table_spec(t, i) for i, t in enumerate(tables_raw)]
    return figures, tables


def cmd_render(args, parser):
    try:
        doc = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        parser.error(f"cannot read spec: {exc}")
    except json.JSONDecodeError as exc:
        parser.error(f"spec is not valid JSON: {exc}")

    try:
        figures, tables = _parse_document(doc)
    except SpecError as exc:
        parser.error(str(exc))

    try:
        for spec in figures:
            result = render_convergence(spec)
            print(f"wrote {result.path}")
        for classical, robust, out in tables:
            table = render_sweep_table(classical, robust)
            if out is None:
                sys.stdout.write(table.markdown)
            else:
                Path(out).write_text(table.markdown)
                print(f"wrote {out}")
    except PlotsError as exc:
        print(f"plots: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"plots: error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render convergence figures and sweep tables from study CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render everything in a spec document")
    render.add_argument("--spec", required=True, help="path to the spec JSON")
    render.set_defaults(fn=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args, parser)


if __name__ == "__main__":
    sys.exit(main())
