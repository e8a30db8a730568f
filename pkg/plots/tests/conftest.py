"""Shared factories for synthetic study-log CSVs."""

import pytest

from plots.csvio import STUDY_HEADER, SWEEP_HEADER


def _emit(path, header, columns, manifest):
    # unspecified columns get a positive filler so log axes stay legal
    nrows = len(next(iter(columns.values())))
    lines = [",".join(header)]
    for i in range(nrows):
        fields = []
        for name in header:
            if name in columns:
                value = columns[name][i]
            elif name == "level":
                value = i
            else:
                value = 0.25
            if isinstance(value, int):
                fields.append(str(value))
            else:
                fields.append(format(float(value), ".17g"))
        lines.append(",".join(fields))
    text = "\n".join(lines) + "\n"
    if manifest is not None:
        text += f"# manifest: {manifest}\n"
    path.write_text(text)
    return path


@pytest.fixture
def make_study(tmp_path):
    """Write a study CSV; columns is a dict of name -> sequence."""

    def build(name="study.csv", manifest="study_manifest.json", **columns):
        columns.setdefault("ndof", (100, 400, 1600, 6400))
        return _emit(tmp_path / name, STUDY_HEADER, columns, manifest)

    return build


@pytest.fixture
def make_sweep(tmp_path):
    """Write a sweep CSV; nu is required, the rest optional."""

    def build(name="sweep.csv", manifest="sweep_manifest.json", **columns):
        assert "nu" in columns
        nrows = len(columns["nu"])
        columns.setdefault("ndof", (1218,) * nrows)
        return _emit(tmp_path / name, SWEEP_HEADER, columns, manifest)

    return build


def power_decay(ndofs, order, scale=10.0):
    """err ~ scale * (ndof/ndof0)^(-order/2), the 2D mesh-size convention."""
    n0 = ndofs[0]
    return tuple(scale * (n / n0) ** (-order / 2.0) for n in ndofs)
