"""Source terms used in the experiments."""
from __future__ import annotations

import math

import numpy as np

from ..dynamics import SeparableSource
from ..errors import ConfigurationError
from ..grid import GridHierarchy


def source_example1(x) -> np.ndarray:
    """+1 on [0, 1/8]², -1 on [7/8, 1]², 0 elsewhere (vectorized over points)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lo = (x[:, 0] <= 0.125) & (x[:, 1] <= 0.125)
    hi = (x[:, 0] >= 0.875) & (x[:, 1] >= 0.875)
    return lo.astype(float) - hi.astype(float)


def wavelet_profile(t, f0: float):
    """Time factor (t - 2/f0) exp(-π² f0² (t - 2/f0)²)."""
    s = np.asarray(t, dtype=float) - 2.0 / f0
    return s * np.exp(-(math.pi**2) * f0**2 * s**2)


def wavelet_space(x, delta: float, center=(0.5, 0.5), literal: bool = False) -> np.ndarray:
    """Spatial factor 10 δ⁻² exp(-|x - c|² δ⁻²).

    ``literal=True`` drops the minus sign in the exponent as printed in the
    source formula; the result grows without bound away from ``center``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = ((x - np.asarray(center, dtype=float)) ** 2).sum(axis=1)
    sign = 1.0 if literal else -1.0
    return 10.0 / delta**2 * np.exp(sign * r2 / delta**2)


def source_wavelet(x, t, f0: float, delta: float, center=(0.5, 0.5), literal: bool = False):
    return wavelet_space(x, delta, center, literal) * wavelet_profile(t, f0)


def make_source(g: GridHierarchy, spec) -> SeparableSource | None:
    """Cellwise source from a config entry: ``"example1"``, ``"none"`` or a wavelet dict."""
    if spec is None or spec == "none":
        return None
    centers = g.cell_centers()
    if spec == "example1":
        return SeparableSource(source_example1(centers))
    if isinstance(spec, dict) and spec.get("kind") == "gaussian_wavelet":
        f0 = float(spec.get("f0", 20.0))
        delta = float(spec.get("delta", 0.02))
        if not (f0 > 0 and delta > 0):
            raise ConfigurationError(f"wavelet source needs f0 > 0 and delta > 0, got f0={f0}, delta={delta}")
        center = tuple(spec.get("center", (0.5, 0.5)))
        literal = bool(spec.get("literal", False))
        return SeparableSource(wavelet_space(centers, delta, center, literal), lambda t: float(wavelet_profile(t, f0)))
    raise ConfigurationError(f"unknown source specification {spec!r}")
