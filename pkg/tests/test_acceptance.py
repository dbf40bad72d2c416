"""End-to-end acceptance checks, one test and one verdict line per criterion."""

import time

import numpy as np
import pytest
from scipy.optimize import bisect

from opjac import opexpr as ox
from opjac.cli import bench_problem, loglog_slope
from opjac.discretization import chebyshev, chebyshev_coefficients
from opjac.fdjac import fd_jacobian, max_relative_error
from opjac.newton import ContinuationSchedule, NewtonConfig, continuation_solve
from opjac.problems import REGISTRY
from opjac.problems.colloid import Colloid, ColloidConfig, zeta_solve
from opjac.problems.pnp1d import Pnp1D, PnpConfig, smooth_perturbation
from opjac.problems.thinfilm import MappedThinFilm, ThinFilm, ThinFilmConfig

pytestmark = pytest.mark.acceptance


def test_criterion_1_jacobian_oracle(verdict):
    cases = {
        "thinfilm": {"n": 50},
        "thinfilm-mapped": {"n": 50, "beta": 0.75},
        "colloid": {"nr": 10, "nt": 8},
        "pnp1d": {"n": 32},
    }
    worst = {}
    counts = {}
    for name, opts in cases.items():
        entry = REGISTRY[name]
        cfg = entry.verify_config(opts)
        prob = entry.family(cfg)(getattr(cfg, "j", getattr(cfg, "e_applied", 0.0)))
        states = entry.verify_states(prob)
        counts[name] = len(states)
        worst[name] = max(max_relative_error(prob.jacobian(u), fd_jacobian(prob.residual, u)) for u in states)
    ok = all(v <= 1e-6 for v in worst.values()) and all(c >= 3 for c in counts.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert verdict(1, ok, f"max relative error {detail}; tol 1e-6")


def test_criterion_2_thinfilm_reproduction(verdict):
    t0 = time.perf_counter()
    base = ThinFilm(ThinFilmConfig(n=100, epsilon=0.01, k_c=10.0, j_r=10.0, j=1.5))
    u, reps = continuation_solve(
        base.with_parameter,
        ContinuationSchedule("j", 0.5, 0.1, 1.5),
        base.with_parameter(0.5).initial(),
        NewtonConfig(res_tol=1e-8, max_iters=20),
    )
    wall = time.perf_counter() - t0
    stages_ok = len(reps) == 11 and all(r.converged and r.final_residual <= 1e-8 and r.iterations <= 20 for r in reps)
    # unimodal profile: the slope changes sign at most once
    slope_sign = np.sign(np.diff(u))
    unimodal = np.count_nonzero(np.diff(slope_sign[slope_sign != 0])) <= 1
    shape_ok = bool(np.all(u < 0) and -100.0 <= u.min() <= 0.0 and unimodal)
    ok = stages_ok and shape_ok and wall < 10.0
    iters = [r.iterations for r in reps]
    assert verdict(2, ok, f"iterations {iters}, min E {u.min():.2f}, unimodal {unimodal}, {wall:.2f} s")


def _solve_250(j, beta):
    cls = MappedThinFilm if beta is not None else ThinFilm
    base = cls(ThinFilmConfig(n=250, j=j, beta=beta))
    u, reps = continuation_solve(
        base.with_parameter, ContinuationSchedule("j", 0.5, 0.1, j), base.with_parameter(0.5).initial()
    )
    assert all(r.converged for r in reps)
    return chebyshev_coefficients(u)


def _first_below(a, level=1e-10):
    hits = np.flatnonzero(a < level)
    return int(hits[0]) if hits.size else a.size


def test_criterion_3_spectral_convergence(verdict):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for j, beta in ((0.5, 0.9), (1.0, 0.9), (1.5, 0.75)):
        plain = _solve_250(j, None)
        mapped = _solve_250(j, beta)
        plateau = float(np.median(plain[-50:]))
        k_plain, k_mapped = _first_below(plain), _first_below(mapped)
        ok &= plateau <= 1e-9 and 2 * k_mapped <= k_plain
        parts.append(f"j={j:g}: plateau {plateau:.1e}, index {k_plain} vs mapped {k_mapped}")
    wall = time.perf_counter() - t0
    ok &= wall < 30.0
    assert verdict(3, ok, "; ".join(parts) + f"; {wall:.1f} s")


@pytest.mark.slow
def test_criterion_4_colloid_reproduction(verdict):
    quiet = Colloid(ColloidConfig(n_r=30, n_t=30, e_applied=0.0))
    quiescent = float(np.abs(quiet.residual(quiet.initial())).max())
    t0 = time.perf_counter()
    base = Colloid(ColloidConfig(n_r=30, n_t=30, l_r=0.5, epsilon=0.01, delta=1.0, v=0.0, e_applied=10.0))
    _, reps = continuation_solve(
        base.with_parameter,
        ContinuationSchedule("E", 1.0, 0.5, 10.0),
        base.initial(),
        NewtonConfig(res_tol=1e-8, max_iters=20, delta_tol=1e-13),
    )
    wall = time.perf_counter() - t0
    iters = [r.iterations for r in reps]
    ok = (
        len(reps) == 19
        and all(r.converged and r.final_residual <= 1e-8 for r in reps)
        and max(iters) <= 20
        and max(iters[1:]) <= 8
        and wall < 60.0
        and quiescent <= 1e-12
    )
    assert verdict(4, ok, f"iterations {iters}, {wall:.1f} s, quiescent residual {quiescent:.1e}")


@pytest.mark.slow
def test_criterion_5_performance(verdict):
    parts = []
    ratio_ok = True
    slope_ok = True
    for name, sizes in (("thinfilm", [100, 200, 400, 800]), ("colloid", [10, 20, 30])):
        rows = bench_problem(name, sizes, repeats=3)
        n = [r["unknowns"] for r in rows]
        s_direct = loglog_slope(n, [r["t_direct"] for r in rows])
        s_fd = loglog_slope(n, [r["t_fd"] for r in rows])
        ratio = rows[-1]["ratio"]
        ratio_ok &= ratio >= 5.0
        slope_ok &= s_direct < s_fd
        parts.append(f"{name} {sizes[-1]}: ratio {ratio:.0f}, slopes {s_direct:.2f} vs {s_fd:.2f}")
    mode = "5x bar met" if ratio_ok else "5x bar missed, slope comparison only"
    assert verdict(5, slope_ok, f"{mode}; " + "; ".join(parts))


def test_criterion_6_rule_engine(verdict):
    u = ox.Var("u")
    errs = {}
    # Poisson left-hand side
    g = chebyshev(16)
    j = ox.jacobian(g.d @ (g.d @ u), "u", {"u": np.sin(g.points)})
    errs["poisson"] = np.abs(j - g.d @ g.d).max() / np.abs(g.d @ g.d).max()
    # e^{2u} du/dx
    v = 0.4 * np.cos(3 * g.points)
    j = ox.jacobian(ox.exp(2 * u) * (g.d @ u), "u", {"u": v})
    e2 = np.exp(2 * v)
    ref = 2 * np.diag((g.d @ v) * e2) + np.diag(e2) @ g.d
    errs["exp"] = np.abs(j - ref).max() / np.abs(ref).max()
    # PNP block structure
    cfg = PnpConfig(n=32)
    prob = Pnp1D(cfg, smooth_perturbation(chebyshev(32).points))
    st = np.concatenate(smooth_perturbation(prob.x, 0.2))
    cp, cm = prob.split(st)
    d, d2, m, dt = prob.d, prob.d2, prob.dphi_dcp, cfg.dt
    dphi = d @ prob.potential(cp, cm)
    eye = np.eye(32)
    refs = {
        ("c+", "c+"): eye - dt * (d2 + d @ np.diag(dphi) + d @ np.diag(cp) @ d @ m),
        ("c+", "c-"): dt * d @ np.diag(cp) @ d @ m,
        ("c-", "c+"): dt * d @ np.diag(cm) @ d @ m,
        ("c-", "c-"): eye - dt * (d2 - d @ np.diag(dphi) + d @ np.diag(cm) @ d @ m),
    }
    fp, fm = prob.expressions()
    eng = ox.jacobian_blocks([fp, fm], ["cp", "cm"], {"cp": cp, "cm": cm})
    hand = prob.jacobian_blocks(st)
    names = ["c+", "c-"]
    pnp_err = 0.0
    for a in range(2):
        for b in range(2):
            key = (names[a], names[b])
            ref = refs[key]
            scale = max(1.0, np.abs(ref).max())
            inner = slice(1, 31)
            pnp_err = max(pnp_err, np.abs(np.asarray(eng[a][b])[inner] - ref[inner]).max() / scale)
            ref = ref.copy()
            ref[prob.boundary, :] = 0.0
            if a == b:
                ref[prob.boundary, prob.boundary] = 1.0
            pnp_err = max(pnp_err, np.abs(hand[key] - ref).max() / scale)
    errs["pnp"] = pnp_err
    ok = all(e <= 1e-13 for e in errs.values())
    assert verdict(6, ok, ", ".join(f"{k} {e:.1e}" for k, e in errs.items()) + "; tol 1e-13")


def test_criterion_7_zeta_solver(verdict):
    rng = np.random.default_rng(7)
    n = 1000
    psi = rng.uniform(-20.0, 20.0, n)
    c_s = rng.uniform(0.1, 10.0, n)
    delta = rng.uniform(0.0, 5.0, n)
    t0 = time.perf_counter()
    zeta = np.array([zeta_solve(psi[k : k + 1], c_s[k : k + 1], delta[k])[0] for k in range(n)])
    ref = np.empty(n)
    for k in range(n):
        a = delta[k] * np.sqrt(c_s[k])
        f = lambda z, a=a, p=psi[k]: z + 2.0 * a * np.sinh(0.5 * z) - p  # noqa: E731
        # the root lies between 0 and psi because f is increasing and f(0) = -psi
        lo, hi = min(0.0, psi[k]), max(0.0, psi[k])
        ref[k] = lo if lo == hi else bisect(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    wall = time.perf_counter() - t0
    err = float(np.abs(zeta - ref).max())
    ok = err <= 1e-8 and wall < 5.0
    assert verdict(7, ok, f"max error {err:.1e} over {n} triples, {wall:.2f} s")
