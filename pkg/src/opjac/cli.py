"""Command-line front end: ``opjac solve|verify|bench <problem>`` and ``opjac replay``.

Exit codes: 0 success, 1 non-convergence, 2 verification failure,
3 invalid arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import problems
from .discretization import chebyshev_coefficients
from .fdjac import FdConfig, fd_jacobian
from .newton import ContinuationError, NewtonConfig, NewtonError, continuation_solve, newton_solve

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_VERIFY_FAILED = 2
EXIT_BAD_ARGS = 3

VERIFY_TOL = 1e-6
DEFAULT_SIZES = {
    "thinfilm": [100, 200, 400, 800],
    "thinfilm-mapped": [100, 200, 400, 800],
    "colloid": [10, 15, 20, 25, 30],
    "pnp1d": [16, 32, 64, 128],
}

log = logging.getLogger("opjac")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_ARGS, f"{self.prog}: error: {message}\n")


def _sizes(text: str) -> list[int]:
    try:
        out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not out or any(s < 2 for s in out):
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", choices=sorted(problems.REGISTRY))
    g = common.add_argument_group("problem parameters (defaults depend on the problem)")
    g.add_argument("--n", type=int, help="grid size for 1D problems")
    g.add_argument("--nr", type=int, help="radial grid size (colloid)")
    g.add_argument("--nt", type=int, help="polar grid size (colloid)")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--kc", type=float, help="reaction rate constant k_c (thin film)")
    g.add_argument("--jr", type=float, help="reaction rate constant j_r (thin film)")
    g.add_argument("--j", type=float, help="current density, continuation target (thin film)")
    g.add_argument("--efield", type=float, help="applied field, continuation target (colloid)")
    g.add_argument("--cont-start", type=float)
    g.add_argument("--cont-step", type=float)
    g.add_argument("--beta", type=float, help="mapping parameter (thin film)")
    g.add_argument("--lr", type=float, help="radial map scale (colloid)")
    g.add_argument("--delta", type=float, help="Stern capacitance parameter (colloid)")
    g.add_argument("--v", type=float, help="colloid potential")
    g.add_argument("--dt", type=float, help="time step (pnp1d)")
    g.add_argument("--steps", type=int, default=5, help="backward-Euler steps (pnp1d solve)")
    g.add_argument("--res-tol", type=float, default=1e-8)
    g.add_argument("--max-iters", type=int, default=20)
    g.add_argument("--out", type=Path, default=Path("out"))
    g.add_argument("--verbose", action="store_true", help="log each continuation stage")

    p = _Parser(prog="opjac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="solve with continuation and write data files")
    pv = sub.add_parser("verify", parents=[common], help="check the analytical Jacobian against finite differences")
    pv.add_argument("--tol", type=float, default=VERIFY_TOL)
    pv.add_argument(
        "--inject-bug",
        nargs="?",
        const="auto",
        metavar="BLOCK",
        help="negative control: flip the sign of one Jacobian block (ROW/COL, default the largest)",
    )
    pb = sub.add_parser("bench", parents=[common], help="time direct versus finite-difference Jacobians")
    pb.add_argument("--sizes", type=_sizes)
    pb.add_argument("--repeats", type=int, default=5)
    pr = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    pr.add_argument("manifest", type=Path)
    return p


_OPTION_KEYS = (
    "n", "nr", "nt", "epsilon", "kc", "jr", "j", "efield", "cont_start", "cont_step",
    "beta", "lr", "delta", "v", "dt",
)


def _options(args) -> dict:
    return {k: getattr(args, k) for k in _OPTION_KEYS}


def _validate(args) -> None:
    if args.res_tol is not None and not args.res_tol > 0:
        raise UsageError("--res-tol must be positive")
    if args.max_iters < 1:
        raise UsageError("--max-iters must be at least 1")
    if args.cont_step is not None and not args.cont_step > 0:
        raise UsageError("--cont-step must be positive")
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    if getattr(args, "repeats", 5) < 1:
        raise UsageError("--repeats must be at least 1")
    if args.problem != "thinfilm-mapped" and args.problem != "thinfilm" and args.beta is not None:
        raise UsageError("--beta applies to the thin-film problems only")


def _config(build, opts):
    try:
        return build(opts)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_csv(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    cols = [np.asarray(c) for c in columns]
    fmt = [int if np.issubdtype(c.dtype, np.integer) else (lambda v: repr(float(v))) for c in cols]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f(v) for f, v in zip(fmt, row)])


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _write_manifest(out: Path, manifest: dict) -> Path:
    path = out / f"manifest_{manifest['command']}.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


# --- solve -------------------------------------------------------------------


def _write_solution(name: str, family, cfg, u: np.ndarray, out: Path) -> dict[str, str]:
    files = {}
    prob = family(getattr(cfg, "j", getattr(cfg, "e_applied", 0.0)))
    if name.startswith("thinfilm"):
        st = prob.state(u)
        rho = st.charge_density(prob.physical_derivative())
        cols = [st.x, st.field, st.concentration, rho]
        header = ["x", "E", "c", "rho"]
        if name == "thinfilm-mapped":
            cols += [prob.mgrid.y, u]
            header += ["y", "E_computational"]
        _write_csv(out / "solution.csv", header, cols)
        coef = chebyshev_coefficients(u)
        _write_csv(out / "coefficients.csv", ["n", "abs_coef"], [np.arange(coef.size), coef])
        files = {"solution": "solution.csv", "coefficients": "coefficients.csv"}
    elif name == "colloid":
        g = prob.grid
        c, psi = prob.split(u)
        r = g.r_full("finite")
        th = g.theta_full("finite")
        _write_csv(
            out / "solution.csv",
            ["r", "theta", "x", "z", "c", "psi"],
            [r, th, r * np.sin(th), r * np.cos(th), c, psi],
        )
        st = prob.state(u)
        _write_csv(
            out / "surface.csv",
            ["theta", "c_s", "psi_s", "zeta", "q", "w"],
            [g.theta, st.c_s, st.psi_s, st.zeta, st.q, st.w],
        )
        files = {"solution": "solution.csv", "surface": "surface.csv"}
    return files


def _solve_pnp(entry, cfg, args, ncfg, out: Path):
    prob = entry.family(cfg)(0.0)
    reports = []
    u = prob.initial()
    for step in range(args.steps):
        u, rep = newton_solve(prob, u, ncfg)
        rep.parameter = (step + 1) * cfg.dt
        reports.append(rep)
        if not rep.converged:
            raise ContinuationError(rep.parameter, reports, u)
        prob = prob.with_previous(prob.split(u))
    cp, cm = prob.split(u)
    _write_csv(
        out / "solution.csv",
        ["x", "c_plus", "c_minus", "phi"],
        [prob.x, cp, cm, prob.potential(cp, cm)],
    )
    return u, reports, {"solution": "solution.csv"}


def cmd_solve(args, argv) -> int:
    entry = problems.get(args.problem)
    opts = _options(args)
    cfg = _config(entry.config, opts)
    ncfg = NewtonConfig(res_tol=args.res_tol, max_iters=args.max_iters)
    if args.problem == "colloid":
        ncfg = dataclasses.replace(ncfg, delta_tol=1e-13)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": "solve", "problem": args.problem, "argv": list(argv), "config": cfg}
    t0 = time.perf_counter()
    code = EXIT_OK
    reports = []
    files: dict[str, str] = {}
    try:
        if args.problem == "pnp1d":
            manifest["steps"] = args.steps
            u, reports, files = _solve_pnp(entry, cfg, args, ncfg, out)
        else:
            sched = entry.schedule(cfg, opts)
            manifest["schedule"] = sched
            family = entry.family(cfg)
            u0 = family(sched.start).initial()
            u, reports = continuation_solve(family, sched, u0, ncfg)
            files = _write_solution(args.problem, family, cfg, u, out)
    except (ContinuationError, NewtonError) as exc:
        reports = getattr(exc, "reports", [getattr(exc, "report", None)])
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGED
    wall = time.perf_counter() - t0
    with (out / "newton.jsonl").open("w") as fh:
        for rep in reports:
            if rep is not None:
                fh.write(rep.to_jsonl())
    files["newton_log"] = "newton.jsonl"
    manifest.update(
        {
            "outputs": files,
            "wall_time": wall,
            "exit_code": code,
            "convergence": [
                {
                    "parameter": r.parameter,
                    "iterations": r.iterations,
                    "final_residual": r.final_residual,
                    "converged": r.converged,
                    "stop_reason": r.stop_reason,
                }
                for r in reports
                if r is not None
            ],
        }
    )
    _write_manifest(out, manifest)
    if code == EXIT_OK:
        iters = [r.iterations for r in reports]
        print(
            f"{args.problem}: converged in {len(reports)} stage(s), iterations {iters}, "
            f"final residual {reports[-1].final_residual:.3e}, {wall:.2f} s"
        )
    return code


# --- verify ------------------------------------------------------------------


def _dense(a) -> np.ndarray:
    return a.toarray() if hasattr(a, "toarray") else np.array(a, dtype=float)


def _blocks(prob):
    return prob.row_slices(), prob.col_slices()


def _pick_bug_block(analytic: np.ndarray, rows: dict, cols: dict, choice: str) -> tuple[str, str]:
    if choice == "auto":
        best, key = -1.0, None
        for rn, rs in rows.items():
            for cn, cs in cols.items():
                size = np.abs(analytic[rs, cs]).max(initial=0.0)
                if size > best:
                    best, key = size, (rn, cn)
        return key
    if "/" not in choice:
        raise UsageError(f"--inject-bug expects ROW/COL, got {choice!r}")
    rn, cn = choice.split("/", 1)
    if rn not in rows or cn not in cols:
        names = [f"{r}/{c}" for r in rows for c in cols]
        raise UsageError(f"unknown block {choice!r}; choose from {names}")
    return rn, cn


def verify_problem(prob, states, tol: float = VERIFY_TOL, inject: str | None = None):
    """Compare analytical and central-FD Jacobians; returns per-state block errors."""
    rows, cols = _blocks(prob)
    results = []
    bug = None
    for k, u in enumerate(states):
        analytic = _dense(prob.jacobian(u))
        if inject is not None:
            if bug is None:
                bug = _pick_bug_block(analytic, rows, cols, inject)
            analytic[rows[bug[0]], cols[bug[1]]] *= -1.0
        numeric = fd_jacobian(prob.residual, u, FdConfig(scheme="central"))
        scale = max(1.0, np.abs(analytic).max(initial=0.0))
        diff = np.abs(analytic - numeric)
        blocks = {}
        for rn, rs in rows.items():
            for cn, cs in cols.items():
                blocks[f"{rn}/{cn}"] = float(diff[rs, cs].max(initial=0.0) / scale)
        worst = np.argsort(diff, axis=None)[::-1][:5]
        worst_entries = [
            (int(i), int(j), float(analytic[i, j]), float(numeric[i, j]))
            for i, j in zip(*np.unravel_index(worst, diff.shape))
        ]
        results.append(
            {
                "state": k,
                "max_rel_error": float(diff.max(initial=0.0) / scale),
                "blocks": blocks,
                "worst": worst_entries,
                "passed": bool(diff.max(initial=0.0) / scale <= tol),
            }
        )
    return results, bug


def cmd_verify(args, argv) -> int:
    entry = problems.get(args.problem)
    opts = _options(args)
    cfg = _config(entry.verify_config, opts)
    prob = entry.family(cfg)(getattr(cfg, "j", getattr(cfg, "e_applied", 0.0)))
    states = entry.verify_states(prob)
    t0 = time.perf_counter()
    results, bug = verify_problem(prob, states, args.tol, args.inject_bug)
    wall = time.perf_counter() - t0
    ok = all(r["passed"] for r in results)
    for r in results:
        print(f"state {r['state']}: max relative error {r['max_rel_error']:.3e}")
        for name, err in r["blocks"].items():
            flag = "" if err <= args.tol else "  FAIL"
            print(f"  block {name:<22s} {err:.3e}{flag}")
        if not r["passed"]:
            print("  worst entries (row, col, analytic, fd):")
            for i, j, a, b in r["worst"]:
                print(f"    ({i}, {j}) {a:.10g} {b:.10g}")
    if bug is not None:
        print(f"injected sign flip in block {bug[0]}/{bug[1]}")
    print(f"{args.problem}: verification {'passed' if ok else 'FAILED'} (tol {args.tol:g})")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        out,
        {
            "command": "verify",
            "problem": args.problem,
            "argv": list(argv),
            "config": cfg,
            "tolerance": args.tol,
            "injected_block": None if bug is None else "/".join(bug),
            "results": results,
            "passed": ok,
            "wall_time": wall,
        },
    )
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


# --- bench -------------------------------------------------------------------


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def loglog_slope(sizes, times) -> float:
    if len(sizes) < 2:
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)[0])


def bench_problem(name: str, sizes: Sequence[int], repeats: int = 5, opts=None) -> list[dict]:
    """Median construction times of the direct and forward-FD Jacobians per size."""
    entry = problems.get(name)
    rows = []
    fd_cfg = FdConfig(scheme="forward")
    for size in sizes:
        prob, u = entry.bench_instance(size, opts or {})
        prob.jacobian(u)  # warm caches before timing
        t_direct = _median_time(lambda: prob.jacobian(u), repeats)
        t_fd = _median_time(lambda: fd_jacobian(prob.residual, u, fd_cfg), repeats)
        rows.append(
            {"size": size, "unknowns": int(u.size), "t_direct": t_direct, "t_fd": t_fd, "ratio": t_fd / t_direct}
        )
    return rows


def cmd_bench(args, argv) -> int:
    sizes = args.sizes or DEFAULT_SIZES[args.problem]
    t0 = time.perf_counter()
    rows = bench_problem(args.problem, sizes, args.repeats, _options(args))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["size", "t_direct", "t_fd", "ratio"])
        for r in rows:
            w.writerow([r["size"], repr(r["t_direct"]), repr(r["t_fd"]), repr(r["ratio"])])
    n_unknowns = [r["unknowns"] for r in rows]
    slopes = {
        "direct": loglog_slope(n_unknowns, [r["t_direct"] for r in rows]),
        "fd": loglog_slope(n_unknowns, [r["t_fd"] for r in rows]),
    }
    for r in rows:
        print(f"size {r['size']:>5d}: direct {r['t_direct']:.3e} s, fd {r['t_fd']:.3e} s, ratio {r['ratio']:.1f}")
    if len(rows) > 1:
        print(f"log-log slope vs unknowns: direct {slopes['direct']:.2f}, fd {slopes['fd']:.2f}")
    _write_manifest(
        out,
        {
            "command": "bench",
            "problem": args.problem,
            "argv": list(argv),
            "sizes": sizes,
            "repeats": args.repeats,
            "rows": rows,
            "slopes": slopes,
            "outputs": {"bench": "bench.csv"},
            "wall_time": time.perf_counter() - t0,
        },
    )
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(args.manifest.read_text())
        argv = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot replay {args.manifest}: {exc}") from None
    return main(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "replay":
            return cmd_replay(args)
        _validate(args)
        handler = {"solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}[args.command]
        return handler(args, argv)
    except UsageError as exc:
        print(f"opjac: error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
