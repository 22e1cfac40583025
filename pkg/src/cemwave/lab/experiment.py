"""Sweep driver: one fine reference, one multiscale run per (n_coarse, J, ell) point."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..assembly import FineOperators, assemble_fine_operators
from ..cem import CemVelocityBasis, assemble_velocity_space
from ..dynamics import ReducedSystem, Trajectory, assemble_reduced, fine_system, simulate
from ..errors import CemError
from ..grid import GridHierarchy, build_hierarchy
from ..pou import PartitionOfUnity, attach_weight, solve_pou
from ..spectral import AuxiliarySpace, build_auxiliary
from .config import ExperimentConfig
from .fieldfile import load_medium, write_field
from .metrics import ErrorRow, error_metrics
from .sources import make_source
from .vtk import write_vtk

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n_coarse", "J", "ell", "t", "e_pre", "e_vel", "Lambda", "offline_seconds", "online_seconds", "error_kind")


@dataclass(frozen=True)
class SweepRow:
    n_coarse: int
    J: int
    ell: int
    t: float
    e_pre: float
    e_vel: float
    Lambda: float
    offline_seconds: float
    online_seconds: float
    absolute: bool = False


@dataclass
class ExperimentResult:
    rows: list[SweepRow]
    output_dir: Path
    csv_path: Path

    def at(self, n_coarse: int, J: int, ell: int, t: float) -> SweepRow:
        for r in self.rows:
            if (r.n_coarse, r.J, r.ell) == (n_coarse, J, ell) and abs(r.t - t) < 1e-12:
                return r
        raise KeyError((n_coarse, J, ell, t))


@dataclass
class MultiscaleModel:
    grid: GridHierarchy
    ops: FineOperators
    pou: PartitionOfUnity
    aux: AuxiliarySpace
    cem: CemVelocityBasis
    system: ReducedSystem
    offline_seconds: float


class OfflineCache:
    """Reuses the partition of unity per n_coarse and the auxiliary space per (n_coarse, J)."""

    def __init__(self, base_ops: FineOperators, pressure_weight: str = "rho"):
        self.base_ops = base_ops
        self.pressure_weight = pressure_weight
        self._pou: dict = {}
        self._aux: dict = {}

    def _coarse(self, nc: int):
        if nc not in self._pou:
            t0 = time.perf_counter()
            base = self.base_ops
            g = build_hierarchy(base.grid.n_fine, nc)
            ops = dataclasses.replace(base, grid=g, S=None, kappa_tilde=None)
            pou = solve_pou(g, base.medium)
            floored = attach_weight(ops, pou)
            if floored:
                log.warning("n_coarse=%d: %d cells with vanishing weight were floored", nc, floored)
            self._pou[nc] = (g, ops, pou, time.perf_counter() - t0)
        return self._pou[nc]

    def model(self, nc: int, J: int, ell: int) -> MultiscaleModel:
        g, ops, pou, t_pou = self._coarse(nc)
        if (nc, J) not in self._aux:
            t0 = time.perf_counter()
            self._aux[(nc, J)] = (build_auxiliary(g, ops, J), time.perf_counter() - t0)
        aux, t_aux = self._aux[(nc, J)]
        t0 = time.perf_counter()
        cem = assemble_velocity_space(g, ops, aux, ell)
        system = assemble_reduced(ops, aux, cem, pressure_weight=self.pressure_weight)
        offline = t_pou + t_aux + time.perf_counter() - t0
        return MultiscaleModel(g, ops, pou, aux, cem, system, offline)


def cell_velocity(g: GridHierarchy, v_edges: np.ndarray) -> np.ndarray:
    """Cell-center velocity vectors ``(n_cells, 2)`` from unit-flux edge coefficients."""
    e = g.cell_edges
    vx = 0.5 * (v_edges[e[:, 0]] + v_edges[e[:, 1]]) / g.h
    vy = 0.5 * (v_edges[e[:, 2]] + v_edges[e[:, 3]]) / g.h
    return np.column_stack([vx, vy])


def _dump(directory: Path, n: int, fields: dict, vtk: bool) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, values in fields.items():
        write_field(directory / f"{name}.cemf", np.asarray(values).reshape(n, n), kind=name)
    if vtk:
        write_vtk(directory / "fields.vtk", n, fields)


def _field_set(g: GridHierarchy, v: np.ndarray, p: np.ndarray) -> dict:
    return {"p": p, "v_magnitude": np.linalg.norm(cell_velocity(g, v), axis=1)}


def _format(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_csv(rows: list[SweepRow], path, timings: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r.n_coarse,
                    r.J,
                    r.ell,
                    _format(r.t),
                    _format(r.e_pre),
                    _format(r.e_vel),
                    _format(r.Lambda),
                    f"{r.offline_seconds:.3f}" if timings else "",
                    f"{r.online_seconds:.3f}" if timings else "",
                    "absolute" if r.absolute else "relative",
                ]
            )


def _snapshots(traj: Trajectory, sys: ReducedSystem) -> list:
    return [(t, *traj.fine_fields(sys, k)) for k, t in enumerate(traj.times)]


def run_experiment(cfg: ExperimentConfig, csv_name: str = "errors.csv") -> ExperimentResult:
    """Run every sweep point of ``cfg`` against one shared fine reference."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)

    g0 = build_hierarchy(cfg.n_fine, cfg.sweep_points[0][0])
    medium = load_medium(g0, cfg.medium_spec(), rho=cfg.rho)
    base = assemble_fine_operators(g0, medium)
    source = make_source(g0, cfg.source)
    times = sorted(set(cfg.snapshot_times) | ({cfg.T} if cfg.dump_fields else set()))
    run_kw = dict(source_rule=cfg.source_rule, check_stability=cfg.check_stability)

    t0 = time.perf_counter()
    fsys = fine_system(base, pressure_weight=cfg.pressure_weight)
    fine = simulate(fsys, cfg.tau, cfg.T, source, snapshot_times=times, **run_kw)
    log.info("fine reference: %d steps in %.1fs", round(cfg.T / cfg.tau), time.perf_counter() - t0)
    fine_snaps = _snapshots(fine, fsys)
    if cfg.dump_fields:
        _, v_T, p_T = fine_snaps[times.index(cfg.T)]
        _dump(out / "fields" / "fine", cfg.n_fine, {"kappa": medium.kappa, **_field_set(g0, v_T, p_T)}, cfg.vtk)

    cache = OfflineCache(base, cfg.pressure_weight)
    rows: list[SweepRow] = []
    for nc, J, ell in cfg.sweep_points:
        context = f"[n_coarse={nc}, J={J}, ell={ell}]"
        try:
            model = cache.model(nc, J, ell)
            t1 = time.perf_counter()
            traj = simulate(model.system, cfg.tau, cfg.T, source, snapshot_times=times, **run_kw)
            ms_snaps = _snapshots(traj, model.system)
            online = time.perf_counter() - t1
        except CemError as exc:
            raise type(exc)(f"{context} {exc}") from exc
        errors: list[ErrorRow] = error_metrics(fine_snaps, ms_snaps, base)
        for row in errors:
            if row.t not in cfg.snapshot_times:
                continue
            rows.append(
                SweepRow(nc, J, ell, row.t, row.e_pre, row.e_vel, model.aux.Lambda, model.offline_seconds, online, row.absolute)
            )
        log.info(
            "%s offline %.1fs online %.1fs e_pre(T)=%.4g e_vel(T)=%.4g",
            context, model.offline_seconds, online, errors[-1].e_pre, errors[-1].e_vel,
        )
        if cfg.dump_fields:
            _, v_T, p_T = ms_snaps[times.index(cfg.T)]
            _dump(out / "fields" / f"nc{nc}_J{J}_ell{ell}", cfg.n_fine, _field_set(g0, v_T, p_T), cfg.vtk)

    csv_path = out / csv_name
    write_csv(rows, csv_path, timings=cfg.timings)
    return ExperimentResult(rows, out, csv_path)
