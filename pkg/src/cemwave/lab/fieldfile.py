"""Per-cell raster files and the builtin high-contrast medium generator.

File layout: one ASCII header line

    CEMFIELD 1 <nx> <ny> <kind> <text|binary>

followed by ``nx * ny`` values, row-major with x varying fastest and the
first row at y = 0. Text payloads hold one or more whitespace-separated
numbers per line; binary payloads are little-endian float64.

A Marmousi slice (or any other raster) can be converted by writing its
values in this layout, e.g. ``write_field(path, values, kind="kappa")``
after reshaping to ``(ny, nx)`` with the deepest row first flipped to y = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..assembly import MediumFields
from ..errors import ConfigurationError, DomainError, FieldFormatError
from ..grid import GridHierarchy

MAGIC = "CEMFIELD"
VERSION = "1"


@dataclass(frozen=True)
class FieldFile:
    nx: int
    ny: int
    kind: str
    values: np.ndarray  # shape (ny, nx)


def write_field(path, values, kind: str = "scalar", encoding: str = "text") -> None:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        n = int(round(math.sqrt(values.size)))
        if n * n != values.size:
            raise FieldFormatError(f"cannot infer a square raster from {values.size} values")
        values = values.reshape(n, n)
    ny, nx = values.shape
    if encoding not in ("text", "binary"):
        raise ConfigurationError(f"unknown field encoding {encoding!r}")
    header = f"{MAGIC} {VERSION} {nx} {ny} {kind} {encoding}\n"
    if encoding == "text":
        with open(path, "w") as fh:
            fh.write(header)
            for row in values:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    else:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(values.astype("<f8").tobytes())


def read_field(path) -> FieldFile:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 6 or header[0] != MAGIC:
            raise FieldFormatError(f"{path}: missing {MAGIC} header")
        if header[1] != VERSION:
            raise FieldFormatError(f"{path}: unsupported version {header[1]}")
        try:
            nx, ny = int(header[2]), int(header[3])
        except ValueError as exc:
            raise FieldFormatError(f"{path}: bad raster size {header[2:4]}") from exc
        kind, encoding = header[4], header[5]
        payload = fh.read()
    if nx < 1 or ny < 1:
        raise FieldFormatError(f"{path}: bad raster size {nx}x{ny}")
    if encoding == "binary":
        if len(payload) != 8 * nx * ny:
            raise FieldFormatError(f"{path}: expected {nx * ny} binary values, got {len(payload) // 8}")
        values = np.frombuffer(payload, dtype="<f8").astype(float)
    elif encoding == "text":
        try:
            values = np.array(payload.decode("ascii").split(), dtype=float)
        except ValueError as exc:
            raise FieldFormatError(f"{path}: non-numeric payload") from exc
        if values.size != nx * ny:
            raise FieldFormatError(f"{path}: expected {nx * ny} values, got {values.size}")
    else:
        raise FieldFormatError(f"{path}: unknown encoding {encoding!r}")
    return FieldFile(nx, ny, kind, values.reshape(ny, nx))


def resample(values: np.ndarray, n: int) -> np.ndarray:
    """Nearest-cell resampling of a ``(ny, nx)`` raster onto ``n x n`` cells (flattened)."""
    ny, nx = values.shape
    ix = np.minimum(((np.arange(n) + 0.5) * nx / n).astype(int), nx - 1)
    iy = np.minimum(((np.arange(n) + 0.5) * ny / n).astype(int), ny - 1)
    return values[np.ix_(iy, ix)].ravel()


def generate_kappa(
    centers: np.ndarray,
    seed: int = 0,
    contrast: float = 1e4,
    mode: str = "high",
    n_inclusions: int = 40,
    n_channels: int = 4,
    radius: tuple[float, float] = (0.015, 0.04),
    channel_width: tuple[float, float] = (0.012, 0.025),
) -> np.ndarray:
    """Seeded inclusions-and-channels medium sampled at the given points.

    Background value 1; features take ``1/contrast`` (``mode="low"``) or
    ``contrast`` (``mode="high"``). Geometry is defined in continuous
    coordinates, so the same seed gives the same medium on every grid.
    """
    if contrast < 1:
        raise ConfigurationError(f"contrast must be >= 1, got {contrast}")
    if mode not in ("low", "high"):
        raise ConfigurationError(f"medium mode must be 'low' or 'high', got {mode!r}")
    rng = np.random.default_rng(seed)
    x, y = centers[:, 0], centers[:, 1]
    inside = np.zeros(x.size, dtype=bool)
    for _ in range(n_channels):
        y0 = rng.uniform(0.1, 0.9)
        amp = rng.uniform(0.0, 0.06)
        freq = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0, 2 * np.pi)
        w = rng.uniform(*channel_width)
        x_start, x_end = sorted(rng.uniform(0.0, 1.0, 2))
        x_start, x_end = min(x_start, 0.1), max(x_end, 0.9)
        yc = y0 + amp * np.sin(2 * np.pi * freq * x + phase)
        inside |= (np.abs(y - yc) < w / 2) & (x >= x_start) & (x <= x_end)
    for _ in range(n_inclusions):
        cx, cy = rng.uniform(0, 1, 2)
        rx, ry = rng.uniform(*radius, 2)
        inside |= ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 < 1.0
    value = 1.0 / contrast if mode == "low" else float(contrast)
    return np.where(inside, value, 1.0)


def load_medium(g: GridHierarchy, spec: dict, rho=1.0) -> MediumFields:
    """Build per-cell κ (and ρ) from ``{"file": path}`` or ``{"generator": {...}}``."""
    if "file" in spec and spec["file"]:
        ff = read_field(spec["file"])
        kappa = resample(ff.values, g.n_fine)
        bad = np.flatnonzero(~(ff.values.ravel() > 0))
        if bad.size:
            raise DomainError(f"{spec['file']}: nonpositive value at raster cell {bad[0]}")
    else:
        params = dict(spec.get("generator", spec))
        params.pop("file", None)
        try:
            kappa = generate_kappa(g.cell_centers(), **params)
        except TypeError as exc:
            raise ConfigurationError(f"bad medium generator parameters {sorted(params)}: {exc}") from exc
    if isinstance(rho, (int, float)) and not isinstance(rho, bool):
        rho_field = np.full(g.n_cells, float(rho))
    else:
        path = rho.get("file") if isinstance(rho, dict) else rho
        if not isinstance(path, (str, bytes)) and not hasattr(path, "__fspath__"):
            raise ConfigurationError(f"rho must be a number, a path or {{file: path}}, got {rho!r}")
        ff = read_field(path)
        if not (ff.values > 0).all():
            raise DomainError(f"{path}: nonpositive density")
        rho_field = resample(ff.values, g.n_fine)
    return MediumFields(kappa, rho_field)
