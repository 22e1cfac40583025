"""Relative energy-norm errors between fine and multiscale snapshots."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..assembly import FineOperators


@dataclass(frozen=True)
class ErrorRow:
    t: float
    e_pre: float
    e_vel: float
    absolute: bool = False  # reference norm vanished; errors are absolute


def a_norm(ops: FineOperators, v: np.ndarray) -> float:
    return math.sqrt(max(float(v @ (ops.A @ v)), 0.0))


def rho_norm(ops: FineOperators, p: np.ndarray) -> float:
    return math.sqrt(max(float(p @ (ops.M_rho @ p)), 0.0))


def error_metrics(fine_snapshots, ms_snapshots, ops: FineOperators) -> list[ErrorRow]:
    """Both arguments are sequences of ``(t, v_edges, p_cells)`` at identical times."""
    rows = []
    for (t, vh, ph), (tm, vm, pm) in zip(fine_snapshots, ms_snapshots, strict=True):
        if abs(t - tm) > 1e-12:
            raise ValueError(f"snapshot times differ: {t} vs {tm}")
        dv, dp = a_norm(ops, vh - vm), rho_norm(ops, ph - pm)
        nv, np_ = a_norm(ops, vh), rho_norm(ops, ph)
        absolute = nv == 0 or np_ == 0
        e_vel = dv / nv if nv > 0 else dv
        e_pre = dp / np_ if np_ > 0 else dp
        rows.append(ErrorRow(t, e_pre, e_vel, absolute))
    return rows
