"""One backward-Euler step of the 1D Poisson-Nernst-Planck system.

For cation and anion concentrations ``c+`` and ``c-`` on a Chebyshev grid::

    c+ - dt (D^2 c+ + D (c+ .* D phi)) - c+_prev = 0
    c- - dt (D^2 c- - D (c- .* D phi)) - c-_prev = 0
    eps D^2 phi + (c+ - c-) = 0        (interior rows)

``phi`` has Dirichlet data and is eliminated: for a given iterate the
interior Poisson system is solved, so the unknowns are ``[c+; c-]`` only.
The first and last rows of each concentration equation are Dirichlet
conditions ``c - c_bc``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import discretization as disc
from .. import matrix as mx
from .. import opexpr as ox


@dataclass(frozen=True)
class PnpConfig:
    n: int = 32
    epsilon: float = 0.1
    dt: float = 0.01
    # boundary values ordered (x = 1, x = -1), matching the grid ordering
    phi_bc: tuple[float, float] = (0.5, -0.5)
    c_plus_bc: tuple[float, float] = (1.0, 1.0)
    c_minus_bc: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if not self.dt >= 0:
            raise ValueError("dt must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n < 3:
            raise ValueError("PNP grid needs at least 3 points")
        for name in ("phi_bc", "c_plus_bc", "c_minus_bc"):
            if len(getattr(self, name)) != 2:
                raise ValueError(f"{name} needs two boundary values")


def smooth_perturbation(x: np.ndarray, amplitude: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Concentrations ``1 +- amplitude (1 - x^2)``, equal to 1 at both ends."""
    bump = amplitude * (1.0 - x**2)
    return 1.0 + bump, 1.0 - bump


class Pnp1D:
    """Residual and Jacobian in ``u = [c+; c-]`` for one time step from ``prev``."""

    name = "pnp1d"

    def __init__(self, cfg: PnpConfig, prev: tuple[np.ndarray, np.ndarray] | None = None):
        self.cfg = cfg
        g = disc.chebyshev(cfg.n)
        self.x, self.d = g.points, g.d
        self.d2 = g.d @ g.d
        n = cfg.n
        self.interior = np.arange(1, n - 1)
        self.boundary = np.array([0, n - 1])
        d2_int = self.d2[1:-1, 1:-1]
        # one factorization, N-2 right-hand sides
        inv = mx.solve_linear(d2_int, np.eye(n - 2))
        self.dphi_dcp = np.zeros((n, n))
        self.dphi_dcp[1:-1, 1:-1] = -inv / cfg.epsilon
        self._d2_int_inv = inv
        phi_b = np.zeros(n)
        phi_b[self.boundary] = cfg.phi_bc
        # potential for zero space charge: Dirichlet data plus harmonic interior
        self.phi_base = phi_b.copy()
        self.phi_base[1:-1] = -inv @ (self.d2 @ phi_b)[1:-1]
        if prev is None:
            prev = (np.ones(n), np.ones(n))
        self.prev = (np.asarray(prev[0], dtype=float).copy(), np.asarray(prev[1], dtype=float).copy())
        self.c_bc = (np.asarray(cfg.c_plus_bc, dtype=float), np.asarray(cfg.c_minus_bc, dtype=float))

    @property
    def n(self) -> int:
        return self.cfg.n

    def with_previous(self, prev) -> "Pnp1D":
        return Pnp1D(self.cfg, prev)

    def initial(self) -> np.ndarray:
        return np.concatenate(self.prev)

    def split(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        if u.size != 2 * self.n:
            raise ValueError(f"expected {2 * self.n} unknowns, got {u.size}")
        return u[: self.n], u[self.n :]

    def potential(self, c_plus, c_minus) -> np.ndarray:
        """Solve the interior Poisson rows for ``phi`` with Dirichlet ends."""
        return self.phi_base + self.dphi_dcp @ (np.asarray(c_plus) - np.asarray(c_minus))

    def residual(self, u) -> np.ndarray:
        cp, cm = self.split(u)
        dt, d, d2 = self.cfg.dt, self.d, self.d2
        dphi = d @ self.potential(cp, cm)
        rp = cp - dt * (d2 @ cp + d @ (cp * dphi)) - self.prev[0]
        rm = cm - dt * (d2 @ cm - d @ (cm * dphi)) - self.prev[1]
        rp[self.boundary] = cp[self.boundary] - self.c_bc[0]
        rm[self.boundary] = cm[self.boundary] - self.c_bc[1]
        return np.concatenate([rp, rm])

    def jacobian_blocks(self, u) -> dict[tuple[str, str], np.ndarray]:
        cp, cm = self.split(u)
        dt, d, d2, m = self.cfg.dt, self.d, self.d2, self.dphi_dcp
        n = self.n
        dphi = d @ self.potential(cp, cm)
        dm = d @ m
        # D diag(c) D M, as row scaling of the shared product D M
        cp_term = d @ mx.scale_rows(cp, dm)
        cm_term = d @ mx.scale_rows(cm, dm)
        eye = np.eye(n)
        jpp = eye - dt * (d2 + mx.scale_cols(d, dphi) + cp_term)
        jpm = dt * cp_term
        jmp = dt * cm_term
        jmm = eye - dt * (d2 - mx.scale_cols(d, dphi) + cm_term)
        for blk, diag_one in ((jpp, True), (jpm, False), (jmp, False), (jmm, True)):
            blk[self.boundary, :] = 0.0
            if diag_one:
                blk[self.boundary, self.boundary] = 1.0
        return {("c+", "c+"): jpp, ("c+", "c-"): jpm, ("c-", "c+"): jmp, ("c-", "c-"): jmm}

    def jacobian(self, u) -> np.ndarray:
        b = self.jacobian_blocks(u)
        return np.block([[b[("c+", "c+")], b[("c+", "c-")]], [b[("c-", "c+")], b[("c-", "c-")]]])

    def row_slices(self) -> dict[str, slice]:
        return {"c+": slice(0, self.n), "c-": slice(self.n, 2 * self.n)}

    col_slices = row_slices

    def expressions(self):
        """Concentration equations as expressions in ``cp`` and ``cm``.

        The potential enters as ``phi = M (cp - cm) + phi_base`` with ``M``
        the padded interior Poisson inverse. Boundary rows are not replaced.
        """
        dt, d, d2 = self.cfg.dt, self.d, self.d2
        cp, cm = ox.Var("cp"), ox.Var("cm")
        phi = ox.AffineShift(ox.MatVec(self.dphi_dcp, cp - cm), self.phi_base)
        dphi = d @ phi
        fp = cp - dt * (d2 @ cp + d @ (cp * dphi)) - self.prev[0]
        fm = cm - dt * (d2 @ cm - d @ (cm * dphi)) - self.prev[1]
        return fp, fm


def make_pnp1d(cfg: PnpConfig, prev=None) -> Pnp1D:
    return Pnp1D(cfg, prev)


def pnp1d_residual(c_plus, c_minus, prev, cfg: PnpConfig) -> np.ndarray:
    return Pnp1D(cfg, prev).residual(np.concatenate([c_plus, c_minus]))


def pnp1d_jacobian(c_plus, c_minus, cfg: PnpConfig) -> np.ndarray:
    return Pnp1D(cfg).jacobian(np.concatenate([c_plus, c_minus]))
