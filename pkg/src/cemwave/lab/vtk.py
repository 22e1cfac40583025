"""Legacy-VTK (ASCII) structured-grid writer for per-cell fields on the unit square."""
from __future__ import annotations

import numpy as np

from ..errors import FieldFormatError


def write_vtk(path, n: int, fields: dict, title: str = "cemwave fields") -> None:
    """Write ``n x n`` cell fields (each flattened, x fastest) as CELL_DATA scalars."""
    arrays = {}
    for name, values in fields.items():
        values = np.asarray(values, dtype=float).ravel()
        if values.size != n * n:
            raise FieldFormatError(f"field {name!r} has {values.size} values, expected {n * n}")
        if any(c.isspace() for c in name):
            raise FieldFormatError(f"field name {name!r} contains whitespace")
        arrays[name] = values
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_GRID\n")
        fh.write(f"DIMENSIONS {n + 1} {n + 1} 1\n")
        fh.write(f"POINTS {(n + 1) ** 2} double\n")
        for px, py in zip(X.ravel(), Y.ravel()):
            fh.write(f"{px!r} {py!r} 0.0\n")
        fh.write(f"CELL_DATA {n * n}\n")
        for name, values in arrays.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(repr(float(v)) for v in values) + "\n")
