"""Command line: ``asymgame {validate,u-surface,solve,vn,play} MODEL [flags]``.

Exit codes::

    0  success
    1  numerical non-convergence
    2  invalid input
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .expr import ExprError
from .hjb import Grid, ValueField, make_grid, refinement_check, residual_report, solve_value
from .model import ModelError, load_model, validate_model
from .stage_game import u_surface

EXIT_OK, EXIT_NOCONV, EXIT_INPUT = 0, 1, 2
PLAY_BLOCK = 2000

log = logging.getLogger("asymgame")


class InputError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers") from None
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file")
    common.add_argument("--np", dest="n_p", type=_positive_int, default=51, help="belief nodes")
    common.add_argument("--ny", dest="n_y", type=_positive_int, default=21, help="observation nodes")
    common.add_argument("--tol", type=_positive_float, default=1e-6)
    common.add_argument("--max-iter", type=_positive_int, default=None)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="asymgame", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a model file")
    sub.add_parser("u-surface", parents=[common], help="non-revealing value on the grid")
    s = sub.add_parser("solve", parents=[common], help="limit value V and residual report")
    s.add_argument("--refine-check", action="store_true",
                   help="also solve on the (2N-1) grid and report residual reduction")
    v = sub.add_parser("vn", parents=[common], help="discrete-time values V_n against V")
    v.add_argument("--n", type=_int_list, default=[1, 2, 4, 8])
    v.add_argument("--mq", type=int, default=5)
    v.add_argument("--ns", type=_positive_int, default=21)
    p = sub.add_parser("play", parents=[common], help="splitting strategy vs Bayesian opponent")
    p.add_argument("--n", type=_positive_int, default=32)
    p.add_argument("--paths", type=_positive_int, default=10_000)
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.add_argument("--p0", type=float, default=0.5, help="prior probability of state 0")
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--non-revealing", action="store_true", help="informed player ignores the state")
    p.add_argument("--transcripts", type=int, default=0, metavar="K", help="log the first K paths")
    return ap


def _fmt(x) -> str:
    return repr(float(x))


def _write_surface(path: Path, grid: Grid, values: np.ndarray, name: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["p", "y", name])
        for i, p in enumerate(grid.p_nodes):
            for j, y in enumerate(grid.y_nodes):
                w.writerow([_fmt(p), _fmt(y), _fmt(values[i, j])])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_solution(out: Path, m) -> ValueField:
    vpath, mpath = out / "V.csv", out / "V_meta.json"
    if not vpath.exists() or not mpath.exists():
        raise InputError(f"no solve output in {out}; run `asymgame solve` first")
    meta = json.loads(mpath.read_text())
    grid = Grid(np.linspace(0.0, 1.0, meta["n_p"]), np.linspace(meta["y_min"], meta["y_max"], meta["n_y"]))
    data = np.loadtxt(vpath, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != meta["n_p"] * meta["n_y"]:
        raise InputError(f"{vpath} does not match its metadata")
    v = data[:, 2].reshape(meta["n_p"], meta["n_y"])
    return ValueField(v=v, grid=grid, iterations=meta["iterations"], final_change=meta["final_change"],
                      dt=meta["dt"], converged=meta["converged"], width=meta.get("stencil_width"))


def cmd_validate(args, m) -> int:
    rep = validate_model(m)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.passed else EXIT_INPUT


def cmd_u_surface(args, m) -> int:
    grid = make_grid(m, args.n_p, args.n_y)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_surface(out / "u.csv", grid, u_surface(m, grid.p_nodes, grid.y_nodes), "u")
    print(f"wrote {out / 'u.csv'}")
    return EXIT_OK


def cmd_solve(args, m) -> int:
    grid = make_grid(m, args.n_p, args.n_y)
    kw = {} if args.max_iter is None else {"max_iter": args.max_iter}
    V = solve_value(m, grid, tol=args.tol, **kw)
    res = residual_report(m, grid, V)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_surface(out / "V.csv", grid, V.v, "V")
    meta = V.metadata()
    meta["residual"] = res.to_dict()
    report = res.to_dict()
    if args.refine_check:
        fine = solve_value(m, make_grid(m, 2 * args.n_p - 1, 2 * args.n_y - 1), tol=args.tol, **kw)
        chk = refinement_check(m, V, fine)
        report["refinement"] = {
            "coarse_max": chk.coarse_max, "fine_max": chk.fine_max, "reduction": chk.reduction,
            "shared_nodes": chk.n_nodes, "sup_diff_common_nodes": chk.sup_diff,
            "self_convergence_constant": chk.sup_diff / (grid.dp + grid.dy),
        }
    _write_json(out / "V_meta.json", meta)
    _write_json(out / "residual.json", report)
    print(f"iterations {V.iterations}, final change {V.final_change:.3g}, converged {V.converged}")
    print(f"max |residual| {res.max_abs:.4g} (mean {res.mean_abs:.4g}), "
          f"constraint active on {res.active_fraction:.1%} of nodes")
    if "refinement" in report:
        r = report["refinement"]
        print(f"refinement: residual {r['coarse_max']:.4g} -> {r['fine_max']:.4g}, "
              f"sup difference {r['sup_diff_common_nodes']:.4g}")
    return EXIT_OK if V.converged else EXIT_NOCONV


def _vn_job(payload):
    from .discrete_game import value_iteration_vn
    m, n, grid, tol, max_iter, mq, ns = payload
    return value_iteration_vn(m, n, grid, tol=tol, max_iter=max_iter, mq=mq, ns=ns)


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def cmd_vn(args, m) -> int:
    from .discrete_game import GH_ORDERS
    if args.mq not in GH_ORDERS:
        raise InputError(f"--mq must be one of {GH_ORDERS}")
    out = Path(args.out)
    V = _load_solution(out, m)
    grid = V.grid
    jobs = [(m, n, grid, args.tol, args.max_iter, args.mq, args.ns) for n in args.n]
    fields = _map(_vn_job, jobs, args.jobs)
    rows = []
    ok = True
    for n, Vn in zip(args.n, fields):
        _write_surface(out / f"Vn_{n}.csv", grid, Vn.v, "Vn")
        _write_json(out / f"Vn_{n}.json", Vn.metadata())
        gap = np.abs(Vn.v - V.v)
        rows.append((n, float(gap.max()), float(gap.mean())))
        ok &= Vn.converged
        print(f"n={n}: sup gap {gap.max():.4g}, mean gap {gap.mean():.4g}, "
              f"{Vn.iterations} iterations{'' if Vn.converged else ' (not converged)'}")
    with open(out / "vn_convergence.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n", "sup_gap_to_V", "mean_gap"])
        for n, a, b in rows:
            w.writerow([n, _fmt(a), _fmt(b)])
    return EXIT_OK if ok else EXIT_NOCONV


def _play_job(payload):
    from .discrete_game import simulate_match
    m, pol, opp, n, p0, y0, T, count, seed, first, transcripts = payload
    return simulate_match(m, pol, opp, n, p0, y0, T=T, num_paths=count, seed=seed,
                          first_path=first, transcripts=transcripts)


def cmd_play(args, m) -> int:
    from .discrete_game import (BayesOpponent, build_informed_strategy, merge_results,
                                non_revealing_policy, write_transcripts_csv)
    if m.K != 2:
        raise InputError("play supports two-state models")
    if not 0.0 <= args.p0 <= 1.0:
        raise InputError("--p0 must lie in [0, 1]")
    out = Path(args.out)
    V = _load_solution(out, m)
    if args.non_revealing:
        pol = non_revealing_policy(m, V.grid)
    else:
        pol = build_informed_strategy(m, V)
    opp = BayesOpponent(m, pol)
    p0 = [args.p0, 1.0 - args.p0]
    T = args.horizon
    # fixed blocks, so results do not depend on --jobs
    blocks = []
    left = args.transcripts
    for first in range(0, args.paths, PLAY_BLOCK):
        count = min(PLAY_BLOCK, args.paths - first)
        keep = max(0, min(left, count))
        left -= keep
        blocks.append((m, pol, opp, args.n, p0, args.y0, T, count, args.seed, first, keep))
    res = merge_results(_map(_play_job, blocks, args.jobs))
    v0 = float(V(args.p0, args.y0))
    summary = res.summary()
    summary.update({"seed": args.seed, "p0": args.p0, "y0": args.y0, "V_p0_y0": v0,
                    "gap_to_V": summary["estimate"] - v0,
                    "policy": "non-revealing" if args.non_revealing else "splitting"})
    _write_json(out / "play.json", summary)
    with open(out / "play_trace.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["q", "t", "phat_0", "pi_0"])
        for q in range(res.stages):
            w.writerow([q, _fmt(q / args.n), _fmt(res.phat_trace[q, 0]), _fmt(res.pi_trace[q, 0])])
    if args.transcripts:
        with open(out / "play_transcripts.csv", "w") as f:
            write_transcripts_csv(res, f)
    print(f"payoff {res.estimate:.6f} +/- {res.std_error:.6f} (SE, {res.num_paths} paths); "
          f"V(p0, y0) = {v0:.6f}, gap {res.estimate - v0:+.6f}")
    print(f"truncation budget {res.truncation_budget:.3g}; belief gap sum {res.martingale_lhs:.4g} "
          f"<= bound {res.martingale_bound:.4g}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "u-surface": cmd_u_surface, "solve": cmd_solve,
            "vn": cmd_vn, "play": cmd_play}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.n_p < 3 or args.n_y < 3:
            raise InputError("--np and --ny must be at least 3")
        m = load_model(args.model)
        return COMMANDS[args.command](args, m)
    except (InputError, ModelError, ExprError, OSError, ValueError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
