"""Double-layer charging of a metal colloid sphere in an applied field.

Axisymmetric electroneutral bulk equations for concentration ``c`` and the
shifted potential ``psi = phi + E z`` on a rational-Chebyshev (radial) by
pole-avoiding (polar) grid::

    lap c = 0
    div(c grad psi) - E div(c z_hat) = 0

Two surface conditions close the system at ``r = 1``. They involve the
excess charge ``q`` and excess concentration ``w`` of the thin double layer,
both functions of the zeta potential from the Stern closure
``v - phi_s = zeta + 2 delta sqrt(c_s) sinh(zeta / 2)``.

Unknowns are the finite-point values ``[c_f; psi_f]`` ordered polar-major
(``theta`` outer, ``r`` inner). Within each radial line the last entry is
the surface point. Values at infinity are Dirichlet data (``c = c_inf``,
``psi = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .. import discretization as disc
from .. import matrix as mx
from .. import opexpr as ox

ZETA_RES_TOL = 1e-9
ZETA_DELTA_TOL = 1e-13
ZETA_MAX_ITERS = 20

BLOCK_ROWS = ("F1", "F2", "H1", "H2")
BLOCK_COLS = ("c", "psi")


class ZetaConvergenceError(ArithmeticError):
    """The component-wise Stern-closure Newton solve did not converge."""

    def __init__(self, components: np.ndarray, residuals: np.ndarray):
        self.components = np.asarray(components)
        self.residuals = np.asarray(residuals)
        shown = ", ".join(str(int(k)) for k in self.components[:10])
        super().__init__(
            f"zeta solve did not converge at surface components [{shown}]"
            f" (max residual {np.max(np.abs(self.residuals)):.3e})"
        )


class SurfaceConcentrationError(ValueError):
    """Raised when a Newton iterate has a non-positive surface concentration."""

    def __init__(self, components: np.ndarray, values: np.ndarray):
        self.components = np.asarray(components)
        self.values = np.asarray(values)
        super().__init__(
            f"surface concentration is not positive at components {self.components[:10].tolist()}"
            f" (min {self.values.min():.3e}); reduce the continuation step"
        )


@dataclass(frozen=True)
class ColloidConfig:
    n_r: int = 30
    n_t: int = 30
    l_r: float = 0.5
    e_applied: float = 10.0
    v: float = 0.0
    epsilon: float = 0.01
    delta: float = 1.0
    c_infinity: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not self.c_infinity > 0:
            raise ValueError("c_infinity must be positive")
        if not self.l_r > 0:
            raise ValueError("l_r must be positive")
        if self.n_r < 2 or self.n_t < 2:
            raise ValueError("colloid grid needs n_r >= 2 and n_t >= 2")


@lru_cache(maxsize=8)
def colloid_grid(n_r: int, n_t: int, l_r: float) -> disc.SphericalGrid:
    return disc.spherical_operators(n_r, n_t, l_r)


def zeta_solve(
    psi_drive,
    c_s,
    delta: float,
    res_tol: float = ZETA_RES_TOL,
    delta_tol: float = ZETA_DELTA_TOL,
    max_iters: int = ZETA_MAX_ITERS,
) -> np.ndarray:
    """Solve ``zeta + 2 delta sqrt(c_s) sinh(zeta/2) = psi_drive`` component-wise.

    Newton from ``zeta = psi_drive``. Stops when the residual infinity norm
    is at most ``res_tol`` or the last step is at most ``delta_tol``.

    Raises:
        ZetaConvergenceError: listing the components whose residual still
            exceeds ``res_tol`` after ``max_iters`` steps.
    """
    psi_drive = np.asarray(psi_drive, dtype=float)
    c_s = np.broadcast_to(np.asarray(c_s, dtype=float), psi_drive.shape)
    if np.any(c_s <= 0):
        bad = np.flatnonzero(c_s <= 0)
        raise SurfaceConcentrationError(bad, c_s[bad])
    a = delta * np.sqrt(c_s)
    zeta = psi_drive.copy()
    res = zeta + 2.0 * a * np.sinh(0.5 * zeta) - psi_drive
    step = np.inf
    count = 0
    while np.max(np.abs(res), initial=0.0) > res_tol and step > delta_tol and count < max_iters:
        dz = -res / (1.0 + a * np.cosh(0.5 * zeta))
        zeta = zeta + dz
        res = zeta + 2.0 * a * np.sinh(0.5 * zeta) - psi_drive
        step = np.max(np.abs(dz), initial=0.0)
        count += 1
    bad = np.flatnonzero(~(np.abs(res) <= res_tol))
    if bad.size and step > delta_tol:
        raise ZetaConvergenceError(bad, res[bad])
    return zeta


def zeta_sensitivities(zeta, c_s, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """``(d zeta / d psi_s, d zeta / d c_s)`` from the implicit function theorem."""
    zeta = np.asarray(zeta, dtype=float)
    sq = np.sqrt(np.asarray(c_s, dtype=float))
    den = 1.0 + delta * sq * np.cosh(0.5 * zeta)
    return -1.0 / den, -delta * np.sinh(0.5 * zeta) / (sq * den)


@dataclass(frozen=True)
class ColloidState:
    c_f: np.ndarray
    psi_f: np.ndarray
    c_s: np.ndarray
    psi_s: np.ndarray
    phi_s: np.ndarray
    zeta: np.ndarray
    q: np.ndarray
    w: np.ndarray


class Colloid:
    """Residual ``[F1; F2; H1; H2]`` and its sparse analytical Jacobian."""

    name = "colloid"

    def __init__(self, cfg: ColloidConfig):
        self.cfg = cfg
        self.grid = g = colloid_grid(cfg.n_r, cfg.n_t, float(cfg.l_r))
        self.n_f = g.n_finite
        self.surf = np.arange(cfg.n_t) * cfg.n_r + (cfg.n_r - 1)
        self.cos_t = np.cos(g.theta)
        self.sin_t = np.sin(g.theta)
        self.cos_f = np.repeat(self.cos_t, cfg.n_r)
        self.sin_f = np.repeat(self.sin_t, cfg.n_r)
        e, cinf = cfg.e_applied, cfg.c_infinity
        # Terms in c_inf are folded into deviations c - c_inf: the finite and
        # infinite parts of L and G_n sum to operators that annihilate
        # constants, so L_f c + c_inf L_inf 1 = L_f (c - c_inf) exactly in
        # real arithmetic, and the quiescent state gives an exact zero.
        self.f2_const = e * cinf * (-(g.div_r_inf @ self.cos_t) + g.div_t_inf @ self.sin_t)

    def with_parameter(self, e_applied: float) -> "Colloid":
        return type(self)(replace(self.cfg, e_applied=float(e_applied)))

    def initial(self) -> np.ndarray:
        return np.concatenate([np.full(self.n_f, self.cfg.c_infinity), np.zeros(self.n_f)])

    def split(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        if u.size != 2 * self.n_f:
            raise ValueError(f"expected {2 * self.n_f} unknowns, got {u.size}")
        return u[: self.n_f], u[self.n_f :]

    def state(self, u) -> ColloidState:
        cfg = self.cfg
        c, psi = self.split(u)
        c_s = c[self.surf]
        if np.any(c_s <= 0):
            bad = np.flatnonzero(c_s <= 0)
            raise SurfaceConcentrationError(bad, c_s[bad])
        psi_s = psi[self.surf]
        phi_s = psi_s - cfg.e_applied * self.cos_t
        zeta = zeta_solve(cfg.v - phi_s, c_s, cfg.delta)
        sq = np.sqrt(c_s)
        q = -2.0 * sq * np.sinh(0.5 * zeta)
        w = 4.0 * sq * np.sinh(0.25 * zeta) ** 2
        return ColloidState(c, psi, c_s, psi_s, phi_s, zeta, q, w)

    def residual(self, u) -> np.ndarray:
        cfg, g = self.cfg, self.grid
        st = self.state(u)
        e, eps = cfg.e_applied, cfg.epsilon
        c, psi = st.c_f, st.psi_f
        dc = c - cfg.c_infinity
        f1 = g.lap_f @ dc
        f2 = (
            self.f2_const
            + g.div_r_f @ (c * (g.grad_r_f @ psi - e * self.cos_f))
            + g.div_t_f @ (c * (g.grad_t_f @ psi + e * self.sin_f))
        )
        gl = g.grad_s @ np.log(st.c_s)
        gp = g.grad_s @ st.phi_s
        h1 = eps * (g.div_s @ (st.q * gl + st.w * gp)) - st.c_s * (g.grad_n_f @ psi + e * self.cos_t)
        h2 = eps * (g.div_s @ (st.w * gl + st.q * gp)) - g.grad_n_f @ dc
        return np.concatenate([f1, f2, h1, h2])

    def jacobian_blocks(self, u) -> dict[tuple[str, str], sp.csr_matrix]:
        """All eight blocks keyed by ``(equation, variable)``, each full width."""
        cfg, g = self.cfg, self.grid
        st = self.state(u)
        e, eps, n_t = cfg.e_applied, cfg.epsilon, cfg.n_t
        c, psi = st.c_f, st.psi_f
        c_s = st.c_s
        sq = np.sqrt(c_s)
        ch = np.cosh(0.5 * st.zeta)
        sh = np.sinh(0.5 * st.zeta)
        dz_dpsi, dz_dc = zeta_sensitivities(st.zeta, c_s, cfg.delta)
        gl = g.grad_s @ np.log(c_s)
        gp = g.grad_s @ st.phi_s
        ds, gs = g.div_s, g.grad_s
        r_s = g.rf_surface

        df2_dc = mx.scale_cols(g.div_r_f, g.grad_r_f @ psi - e * self.cos_f) + mx.scale_cols(
            g.div_t_f, g.grad_t_f @ psi + e * self.sin_f
        )
        df2_dpsi = mx.scale_cols(g.div_r_f, c) @ g.grad_r_f + mx.scale_cols(g.div_t_f, c) @ g.grad_t_f

        # d/dc_s of q and w, and d/dpsi_s of q and w, through zeta
        dq_dc = 0.5 * st.q / c_s - sq * ch * dz_dc
        dw_dc = 0.5 * st.w / c_s + sq * sh * dz_dc
        dq_dpsi = -sq * ch * dz_dpsi
        dw_dpsi = sq * sh * dz_dpsi
        inv_c = 1.0 / c_s

        dh1_dc_s = eps * (
            mx.scale_cols(ds, dq_dc * gl + dw_dc * gp)
            + ds @ mx.scale_cols(mx.scale_rows(st.q, gs), inv_c)
        )
        dh1_dc_s[np.diag_indices(n_t)] -= g.grad_n_f @ psi + e * self.cos_t
        dh1_dpsi_s = eps * (mx.scale_cols(ds, dq_dpsi * gl + dw_dpsi * gp) + ds @ mx.scale_rows(st.w, gs))
        dh2_dc_s = eps * (
            mx.scale_cols(ds, dw_dc * gl + dq_dc * gp)
            + ds @ mx.scale_cols(mx.scale_rows(st.w, gs), inv_c)
        )
        dh2_dpsi_s = eps * (mx.scale_cols(ds, dw_dpsi * gl + dq_dpsi * gp) + ds @ mx.scale_rows(st.q, gs))

        def surf(block):
            return (sp.csr_matrix(block) @ r_s).tocsr()

        return {
            ("F1", "c"): g.lap_f.tocsr(),
            ("F1", "psi"): sp.csr_matrix(g.lap_f.shape),
            ("F2", "c"): sp.csr_matrix(df2_dc),
            ("F2", "psi"): sp.csr_matrix(df2_dpsi),
            ("H1", "c"): surf(dh1_dc_s),
            ("H1", "psi"): (surf(dh1_dpsi_s) - mx.scale_rows(c_s, g.grad_n_f)).tocsr(),
            ("H2", "c"): (surf(dh2_dc_s) - g.grad_n_f).tocsr(),
            ("H2", "psi"): surf(dh2_dpsi_s),
        }

    def jacobian(self, u) -> sp.csc_matrix:
        b = self.jacobian_blocks(u)
        return sp.bmat([[b[(r, v)] for v in BLOCK_COLS] for r in BLOCK_ROWS], format="csc")

    def row_slices(self) -> dict[str, slice]:
        n_i = self.grid.n_interior
        n_t = self.cfg.n_t
        return {
            "F1": slice(0, n_i),
            "F2": slice(n_i, 2 * n_i),
            "H1": slice(2 * n_i, 2 * n_i + n_t),
            "H2": slice(2 * n_i + n_t, 2 * n_i + 2 * n_t),
        }

    def col_slices(self) -> dict[str, slice]:
        return {"c": slice(0, self.n_f), "psi": slice(self.n_f, 2 * self.n_f)}

    def bulk_expressions(self):
        """``(F1, F2)`` as expressions in the variables ``c`` and ``psi``.

        The surface rows depend on zeta through an implicit solve and are
        assembled by hand instead.
        """
        cfg, g = self.cfg, self.grid
        e = cfg.e_applied
        c, psi = ox.Var("c"), ox.Var("psi")
        f1 = g.lap_f @ ox.AffineShift(c, np.full(self.n_f, -cfg.c_infinity))
        flux_r = c * ox.AffineShift(g.grad_r_f @ psi, -e * self.cos_f)
        flux_t = c * ox.AffineShift(g.grad_t_f @ psi, e * self.sin_f)
        f2 = ox.AffineShift(g.div_r_f @ flux_r + g.div_t_f @ flux_t, self.f2_const)
        return f1, f2

    def full_fields(self, u) -> tuple[np.ndarray, np.ndarray]:
        """``c`` and ``psi`` on the full grid, with the Dirichlet values at infinity."""
        g = self.grid
        c, psi = self.split(u)
        c_full = np.empty(g.n_full)
        psi_full = np.zeros(g.n_full)
        c_full[g.finite_idx] = c
        c_full[g.inf_idx] = self.cfg.c_infinity
        psi_full[g.finite_idx] = psi
        return c_full, psi_full


def make_colloid(cfg: ColloidConfig) -> Colloid:
    return Colloid(cfg)


def colloid_residual(u, cfg: ColloidConfig) -> np.ndarray:
    return Colloid(cfg).residual(u)


def colloid_jacobian(u, cfg: ColloidConfig) -> sp.csc_matrix:
    return Colloid(cfg).jacobian(u)
