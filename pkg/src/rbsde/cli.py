"""Batch command line: ``rbsde <subcommand> --config scenario.json [--out DIR] ...``.

Exit status: 0 success, 2 usage or malformed config, 3 scenario validation
failure, 4 Picard non-convergence, 5 distances grew (no contraction),
6 a cross-check exceeded its tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .experiments import NonConvergenceError, convergence_study, dependence_study, esm_check_batch, local_time_study, zigzag_paths
from .grid import BarrierGapError, eval_barriers, make_uniform_grid
from .skorohod import StartOutsideError
from .solver import ScenarioError, UnsupportedDriverError, solve_picard, warm_start
from .tree import TreeDepthError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_NO_CONTRACTION = 5
EXIT_CHECK_FAILED = 6

CHECK_TOL = 1e-12

ESM_COLUMNS = [
    "max_formula_vs_slaby_gap",
    "max_formula_vs_oracle_gap",
    "lipschitz_gap",
    "flat_off_residual_l",
    "flat_off_residual_u",
]


class _Usage(Exception):
    pass


# -- output helpers -----------------------------------------------------------


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    _atomic_write(path, buf.getvalue())


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def write_json(path: Path, obj):
    _atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _csv_list(text: str, conv, flag: str):
    try:
        return tuple(conv(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise _Usage(f"{flag}: cannot parse {text!r} as a comma-separated list") from None


def _seed(args, cfg: ScenarioConfig) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    if not 0 <= seed < 2**64:
        raise _Usage(f"--seed must be an unsigned 64-bit integer, got {seed}")
    return seed


# -- subcommands --------------------------------------------------------------


def cmd_esm_check(cfg: ScenarioConfig, out: Path, args) -> int:
    ec = cfg.esm_check
    n = ec.paths if args.paths is None else args.paths
    if n < 0:
        raise _Usage("--paths must be nonnegative")
    grid = make_uniform_grid(cfg.T, ec.N)
    b = eval_barriers(cfg.lower, cfg.upper, grid)
    lo, hi = b.lower.values, b.upper.values
    rng = np.random.default_rng(_seed(args, cfg))
    x = zigzag_paths(rng, n, lo, hi, ec.knot_every, ec.scale)
    d = zigzag_paths(rng, n, lo, hi, ec.knot_every, ec.pair_scale) if ec.pair_scale > 0 else np.zeros_like(x)
    x2 = x + d - d[:, :1]
    cols = esm_check_batch(x, x2, lo, hi, ec.lipschitz_constant)
    write_csv(out / "esm_check.csv", ["path_id", *ESM_COLUMNS], [(i, *(cols[c][i] for c in ESM_COLUMNS)) for i in range(n)])
    if n == 0:
        return EXIT_OK
    bad = (
        max(np.max(np.abs(cols[c])) for c in ESM_COLUMNS if c != "lipschitz_gap") > CHECK_TOL
        or np.min(cols["lipschitz_gap"]) < -CHECK_TOL
    )
    return EXIT_CHECK_FAILED if bad else EXIT_OK


def cmd_solve(cfg: ScenarioConfig, out: Path, args) -> int:
    scn = cfg.spec.build(cfg.N)
    initial = warm_start(scn) if (args.warm_start or cfg.warm_start) else None
    quad, rep = solve_picard(scn, cfg.picard, initial)
    ratios = [None, *rep.ratios]
    write_csv(out / "picard_report.csv", ["iter", "distance", "ratio"], [(i + 1, d, r) for i, (d, r) in enumerate(zip(rep.distances, ratios))])

    tree = scn.tree
    rows = []
    for k in range(tree.N + 1):
        step = tree.block(k)
        for p in range(2**k):
            w = p * step
            rows.append((k, p, quad.Y[k, w], quad.Z[k, w], quad.Kl[k, w], quad.Ku[k, w]))
    write_csv(out / "solution.csv", ["k", "prefix_id", "Y", "Z", "Kl", "Ku"], rows)

    measured = [r for r in rep.ratios[1:] if not math.isnan(r)]
    write_json(
        out / "residuals.json",
        {
            "converged": rep.converged,
            "contracting": rep.contracting,
            "iterations": rep.iterations,
            "final_distance": rep.distances[-1] if rep.distances else None,
            "residuals": rep.residuals,
            "identity_bound": 10 * scn.tree.dt * (1 + scn.driver.L1 + scn.driver.L2),
            "adaptedness_gap": rep.adaptedness_gap,
            "raw_vs_projected_gap": rep.raw_vs_projected_gap,
            "decomposition_gap": rep.decomposition_gap,
            "constants": rep.constants,
            "measured_max_ratio": max(measured) if measured else None,
            "geometric_r2": rep.geometric_r2,
            "warm_start": bool(initial is not None),
        },
    )
    if not all(r <= 1.0 for r in measured):
        return EXIT_NO_CONTRACTION
    if not rep.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_depend(cfg: ScenarioConfig, out: Path, args) -> int:
    eps = cfg.depend.eps if args.eps is None else _csv_list(args.eps, float, "--eps")
    scn = cfg.spec.build(cfg.N)
    rep = dependence_study(scn, cfg.depend.perturbation, eps, cfg.picard)
    write_csv(out / "depend.csv", ["eps", "E_xi_hat_sq", "lhs", "ratio"], rep.rows())
    return EXIT_OK


def cmd_local_time(cfg: ScenarioConfig, out: Path, args) -> int:
    if cfg.lower.kind != "constant" or cfg.upper.kind != "constant":
        raise ScenarioError("local-time runs need constant barriers")
    lo, hi = cfg.lower.params[0], cfg.upper.params[0]
    if not hi > lo:
        raise BarrierGapError(f"barrier gap must stay positive; got [{lo}, {hi}]")
    mesh = cfg.local_time.mesh if args.mesh is None else _csv_list(args.mesh, int, "--mesh")
    if any(m < 1 for m in mesh):
        raise _Usage("--mesh entries must be positive")
    n = cfg.local_time.paths if args.paths is None else args.paths
    if n < 0:
        raise _Usage("--paths must be nonnegative")
    try:
        rows = local_time_study(mesh, n, _seed(args, cfg), lo, hi, cfg.local_time.start, cfg.T)
    except ValueError as e:
        raise ScenarioError(str(e)) from None
    write_csv(out / "local_time.csv", ["N", "mean_relative_rmse"], rows)
    return EXIT_OK


def cmd_converge(cfg: ScenarioConfig, out: Path, args) -> int:
    Ns = cfg.converge_N if args.mesh is None else _csv_list(args.mesh, int, "--mesh")
    table = convergence_study(cfg.spec, Ns, cfg.picard)
    write_csv(out / "converge.csv", ["N", "error"], table.rows())
    return EXIT_OK if table.monotone else EXIT_CHECK_FAILED


COMMANDS = {
    "esm-check": cmd_esm_check,
    "solve": cmd_solve,
    "depend": cmd_depend,
    "local-time": cmd_local_time,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbsde", description="Doubly reflected BSDE experiments on exact path trees.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", help="output directory (default: first config output, else .)")
        s.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
        s.add_argument("--paths", type=int, help="number of random paths")
        s.add_argument("--eps", help="comma-separated perturbation sizes")
        s.add_argument("--mesh", help="comma-separated mesh sizes")
        if name == "solve":
            s.add_argument("--warm-start", action="store_true", help="start Picard from the backward-induction oracle")
        else:
            s.set_defaults(warm_start=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out if args.out is not None else (cfg.outputs[0] if cfg.outputs else "."))
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, _Usage) as e:
        print(f"rbsde: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as e:
        print(f"rbsde: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ScenarioError, BarrierGapError, StartOutsideError, UnsupportedDriverError, TreeDepthError, ValueError) as e:
        print(f"rbsde: validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
