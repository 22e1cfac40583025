"""Command-line entry point: ``cemwave {run,sweep,fields,check}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, FieldFormatError, SingularSystemError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("config", nargs=None if config_required else "?", help="YAML experiment configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry (repeatable; dotted keys reach nested entries)")
    p.add_argument("--output-dir", help="shortcut for --set output_dir=...")
    p.add_argument("--seed", type=int, help="shortcut for --set seed=...")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cemwave", description="CEM-GMsFEM solver for the first-order wave equation")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run a single (n_coarse, J, ell) point"))
    _common(sub.add_parser("sweep", help="run every sweep point (explicit points, or the product of the n_coarse, J and ell lists)"))
    fields = sub.add_parser("fields", help="dump kappa, weighted kappa, partition of unity and basis functions")
    _common(fields)
    fields.add_argument("--element", type=int, default=None, help="coarse element for basis dumps (default: central)")
    fields.add_argument("--node", type=int, default=None, help="interior coarse node for chi (default: central)")
    check = sub.add_parser("check", help="run the invariant suite on a small copy of the medium")
    _common(check, config_required=False)
    return parser


def _load(args):
    from .lab.config import load_config

    overrides = list(args.overrides)
    if args.output_dir is not None:
        overrides.append(("output_dir", args.output_dir))
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    return load_config(args.config, overrides)


def _cmd_run(args, sweep: bool) -> int:
    from .lab.experiment import run_experiment

    cfg = _load(args)
    if not sweep and len(cfg.sweep_points) != 1:
        raise ConfigurationError(
            f"'run' takes a single point but the configuration lists {len(cfg.sweep_points)}; use 'sweep'"
        )
    result = run_experiment(cfg)
    for r in result.rows:
        print(f"n_coarse={r.n_coarse} J={r.J} ell={r.ell} t={r.t:g} e_pre={r.e_pre:.4%} e_vel={r.e_vel:.4%}")
    print(f"wrote {result.csv_path}")
    return EXIT_OK


def _cmd_fields(args) -> int:
    from .assembly import assemble_fine_operators
    from .cem import build_cem_basis
    from .grid import build_hierarchy
    from .lab.experiment import _dump, cell_velocity
    from .lab.fieldfile import load_medium
    from .pou import attach_weight, solve_pou
    from .spectral import build_auxiliary

    cfg = _load(args)
    nc, J, ell = cfg.sweep_points[0]
    g = build_hierarchy(cfg.n_fine, nc)
    medium = load_medium(g, cfg.medium_spec(), rho=cfg.rho)
    ops = assemble_fine_operators(g, medium)
    pou = solve_pou(g, medium)
    attach_weight(ops, pou)
    node = args.node if args.node is not None else (nc // 2 - 1) * (nc - 1) + nc // 2 - 1
    element = args.element if args.element is not None else (nc // 2) * nc + nc // 2
    if not 0 <= node < g.n_interior_nodes or not 0 <= element < g.n_elements:
        raise ConfigurationError(f"node {node} or element {element} out of range")
    chi_cells = pou.node(node)[g.cell_vertices].mean(axis=1)
    aux = build_auxiliary(g, ops, J)
    out = {"kappa": medium.kappa, "kappa_tilde": ops.kappa_tilde, f"chi_{node}": chi_cells}
    for j in range(J):
        out[f"aux_{element}_{j}"] = aux.P[:, aux.column(element, j)].toarray().ravel()
        psi, _ = build_cem_basis(g, ops, aux, element, j, ell)
        out[f"psi_{element}_{j}_magnitude"] = np.linalg.norm(cell_velocity(g, psi), axis=1)
    target = Path(cfg.output_dir) / "fields" / "basis"
    _dump(target, cfg.n_fine, out, cfg.vtk)
    print(f"wrote {len(out)} fields to {target}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .lab.checks import run_checks
    from .lab.config import ExperimentConfig

    cfg = _load(args) if args.config or args.overrides else ExperimentConfig()
    results = run_checks(cfg.medium_spec())
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("run", "sweep"):
            return _cmd_run(args, sweep=args.command == "sweep")
        if args.command == "fields":
            return _cmd_fields(args)
        return _cmd_check(args)
    except (DomainError, FieldFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, DivergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
