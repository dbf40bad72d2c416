"""Steady electrochemical thin film: electric-field equation with reaction-kinetics boundary rows.

Interior equation on ``(-1, 1)``::

    eps^2 (E'' - E^3/2) - (c0 + j (x+1)) E / 4 - j/4 = 0
    c0 = 1 - j + eps^2 (2 E(1) - 2 E(-1) - int E^2 dx)

The first and last collocation rows (``x = 1`` and ``x = -1``) are replaced
by the electrode kinetics conditions. The mapped variant solves for
``E(y)`` on a Chebyshev grid in ``y`` with the physical field
``gamma * E(y)``, which clusters points into the boundary layers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import blas

from .. import discretization as disc
from .. import matrix as mx
from .. import opexpr as ox


@dataclass(frozen=True)
class ThinFilmConfig:
    n: int = 100
    epsilon: float = 0.01
    k_c: float = 10.0
    j_r: float = 10.0
    j: float = 1.5
    beta: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n < 4:
            raise ValueError("thin-film grid needs at least 4 points")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")


@dataclass(frozen=True)
class ThinFilmGrid:
    x: np.ndarray
    d: np.ndarray
    lap: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size


@lru_cache(maxsize=16)
def thinfilm_grid(n: int) -> ThinFilmGrid:
    g = disc.chebyshev(n)
    lap = g.d @ g.d
    for a in (g.points, g.d, lap, g.w):
        a.setflags(write=False)
    return ThinFilmGrid(x=g.points, d=g.d, lap=lap, w=g.w)


@lru_cache(maxsize=16)
def mapped_grid(n: int, beta: float) -> disc.MappedThinFilmGrid:
    g = disc.mapped_thinfilm_grid(n, beta)
    for a in (g.y, g.x, g.gamma, g.d, g.w, g.l_mapped):
        a.setflags(write=False)
    return g


@dataclass(frozen=True)
class ThinFilmState:
    """Electric field at the collocation points plus the derived scalar ``c0``.

    ``x`` and ``field`` are physical coordinates and the physical field
    (for the mapped problem the field is ``gamma * E(y)``).
    """

    e_hat: np.ndarray
    c0: float
    x: np.ndarray
    field: np.ndarray
    epsilon: float
    j: float

    @property
    def concentration(self) -> np.ndarray:
        return self.c0 + self.j * (self.x + 1.0) + 2.0 * self.epsilon**2 * self.field**2

    def charge_density(self, d_phys: np.ndarray) -> np.ndarray:
        return 4.0 * self.epsilon**2 * (d_phys @ self.field)


def _rank1_update(a: np.ndarray, alpha: float, u: np.ndarray, v: np.ndarray) -> None:
    """``a += alpha * outer(u, v)`` in place, without forming the outer product."""
    if a.flags.c_contiguous:
        # the transpose is a Fortran-ordered view that BLAS updates in place
        blas.dger(alpha, v, u, a=a.T, overwrite_a=1)
    else:
        a += alpha * np.outer(u, v)


def initial_field(x: np.ndarray, j: float) -> np.ndarray:
    """Leading-order asymptotic field ``-2j / (j (x+1) + 1 - j)``."""
    c0 = 1.0 - j
    den = j * (x + 1.0) + c0
    if np.any(den == 0):
        raise ZeroDivisionError("initial-iterate denominator vanishes on the grid")
    return -2.0 * j / den


class ThinFilm:
    """Residual and analytical Jacobian of the unmapped thin-film system."""

    name = "thinfilm"

    def __init__(self, cfg: ThinFilmConfig):
        self.cfg = cfg
        self.grid = thinfilm_grid(cfg.n)

    def with_parameter(self, j: float) -> "ThinFilm":
        return type(self)(replace(self.cfg, j=float(j)))

    def initial(self) -> np.ndarray:
        return initial_field(self.grid.x, self.cfg.j)

    def c0(self, e: np.ndarray) -> float:
        eps2 = self.cfg.epsilon**2
        return 1.0 - self.cfg.j + eps2 * (2.0 * e[0] - 2.0 * e[-1] - self.grid.w @ (e * e))

    def dc0_de(self, e: np.ndarray) -> np.ndarray:
        eps2 = self.cfg.epsilon**2
        out = -2.0 * eps2 * self.grid.w * e
        out[0] += 2.0 * eps2
        out[-1] -= 2.0 * eps2
        return out

    def residual(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        cfg, g = self.cfg, self.grid
        eps2, j, kc = cfg.epsilon**2, cfg.j, cfg.k_c
        c0 = self.c0(e)
        res = eps2 * (g.lap @ e - 0.5 * e**3) - 0.25 * (c0 + j * (g.x + 1.0)) * e - 0.25 * j
        res[0] = -kc * (c0 + 2.0 * j + eps2 * (2.0 * e[0] ** 2 + 4.0 * g.d[0] @ e)) + cfg.j_r - j
        res[-1] = kc * (c0 + eps2 * (2.0 * e[-1] ** 2 + 4.0 * g.d[-1] @ e)) - cfg.j_r - j
        return res

    def jacobian(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        cfg, g = self.cfg, self.grid
        eps2, j, kc = cfg.epsilon**2, cfg.j, cfg.k_c
        c0 = self.c0(e)
        dc0 = self.dc0_de(e)
        jac = np.multiply(g.lap, eps2)
        _rank1_update(jac, -0.25, e, dc0)
        jac[np.diag_indices(g.n)] -= 1.5 * eps2 * e * e + 0.25 * (c0 + j * (g.x + 1.0))
        jac[0, :] = -kc * (dc0 + 4.0 * eps2 * g.d[0])
        jac[0, 0] -= 4.0 * kc * eps2 * e[0]
        jac[-1, :] = kc * (dc0 + 4.0 * eps2 * g.d[-1])
        jac[-1, -1] += 4.0 * kc * eps2 * e[-1]
        return jac

    def state(self, e) -> ThinFilmState:
        e = np.asarray(e, dtype=float)
        return ThinFilmState(
            e_hat=e, c0=self.c0(e), x=self.grid.x, field=e, epsilon=self.cfg.epsilon, j=self.cfg.j
        )

    def physical_derivative(self) -> np.ndarray:
        return self.grid.d

    def row_slices(self) -> dict[str, slice]:
        n = self.cfg.n
        return {"bc x=1": slice(0, 1), "interior": slice(1, n - 1), "bc x=-1": slice(n - 1, n)}

    def col_slices(self) -> dict[str, slice]:
        return {"E": slice(0, self.cfg.n)}

    # ------------------------------------------------------------------
    # the same residual as an operator expression

    def expressions(self):
        """``(interior, first_row, last_row)`` expressions in the variable ``E``.

        ``C0`` is built as a broadcast vector: the boundary values enter
        through rank-one selector matrices and the integral through the
        quadrature matrix.
        """
        cfg, g = self.cfg, self.grid
        n, eps2, j, kc = g.n, cfg.epsilon**2, cfg.j, cfg.k_c
        e = ox.Var("E")
        ones = np.ones(n)
        first = mx.outer(ones, np.eye(n)[0])
        last = mx.outer(ones, np.eye(n)[-1])
        q = disc.quadrature_matrix(g.w, n)
        c0 = ox.AffineShift(
            eps2 * (2.0 * (first @ e) - 2.0 * (last @ e) - q @ (e**2)), np.full(n, 1.0 - j)
        )
        interior = (
            eps2 * (g.lap @ e - 0.5 * e**3)
            - 0.25 * ((c0 + j * (g.x + 1.0)) * e)
            - np.full(n, 0.25 * j)
        )
        sel0 = np.eye(n)[:1]
        seln = np.eye(n)[-1:]
        row0 = -kc * (sel0 @ c0 + 2.0 * j + eps2 * (2.0 * (sel0 @ e) ** 2 + 4.0 * (g.d[:1] @ e))) + (cfg.j_r - j)
        rown = kc * (seln @ c0 + eps2 * (2.0 * (seln @ e) ** 2 + 4.0 * (g.d[-1:] @ e))) - (cfg.j_r + j)
        return interior, row0, rown


class MappedThinFilm(ThinFilm):
    """Thin film in the stretched coordinate ``x = tanh(alpha y) / beta``.

    The unknown is ``E(y)``; the physical field is ``gamma * E``.
    """

    name = "thinfilm-mapped"

    def __init__(self, cfg: ThinFilmConfig):
        if cfg.beta is None:
            raise ValueError("mapped thin film needs a beta")
        self.cfg = cfg
        self.mgrid = mapped_grid(cfg.n, float(cfg.beta))

    @property
    def x(self) -> np.ndarray:
        return self.mgrid.x

    def initial(self) -> np.ndarray:
        return initial_field(self.mgrid.x, self.cfg.j)

    def c0(self, e: np.ndarray) -> float:
        g, eps2 = self.mgrid, self.cfg.epsilon**2
        gam = g.gamma
        return 1.0 - self.cfg.j + eps2 * (
            2.0 * gam[0] * e[0] - 2.0 * gam[-1] * e[-1] - g.w @ (gam * e * e)
        )

    def dc0_de(self, e: np.ndarray) -> np.ndarray:
        g, eps2 = self.mgrid, self.cfg.epsilon**2
        out = -2.0 * eps2 * g.w * g.gamma * e
        out[0] += 2.0 * eps2 * g.gamma[0]
        out[-1] -= 2.0 * eps2 * g.gamma[-1]
        return out

    def residual(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        cfg, g = self.cfg, self.mgrid
        eps2, j, kc = cfg.epsilon**2, cfg.j, cfg.k_c
        gam = g.gamma
        ge = gam * e
        c0 = self.c0(e)
        res = eps2 * (g.l_mapped @ ge - 0.5 * gam**3 * e**3) - 0.25 * (c0 + j * (g.x + 1.0)) * ge - 0.25 * j
        res[0] = (
            -kc * (c0 + 2.0 * j + eps2 * (2.0 * gam[0] ** 2 * e[0] ** 2 + 4.0 * gam[0] * (g.d[0] @ ge)))
            + cfg.j_r
            - j
        )
        res[-1] = (
            kc * (c0 + eps2 * (2.0 * gam[-1] ** 2 * e[-1] ** 2 + 4.0 * gam[-1] * (g.d[-1] @ ge)))
            - cfg.j_r
            - j
        )
        return res

    def jacobian(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        cfg, g = self.cfg, self.mgrid
        eps2, j, kc = cfg.epsilon**2, cfg.j, cfg.k_c
        gam = g.gamma
        c0 = self.c0(e)
        dc0 = self.dc0_de(e)
        jac = mx.scale_cols(g.l_mapped, eps2 * gam)
        _rank1_update(jac, -0.25, gam * e, dc0)
        jac[np.diag_indices(g.n)] -= 1.5 * eps2 * gam**3 * e**2 + 0.25 * gam * (c0 + j * (g.x + 1.0))
        jac[0, :] = -kc * (dc0 + 4.0 * eps2 * gam[0] * g.d[0] * gam)
        jac[0, 0] -= 4.0 * kc * eps2 * gam[0] ** 2 * e[0]
        jac[-1, :] = kc * (dc0 + 4.0 * eps2 * gam[-1] * g.d[-1] * gam)
        jac[-1, -1] += 4.0 * kc * eps2 * gam[-1] ** 2 * e[-1]
        return jac

    def state(self, e) -> ThinFilmState:
        e = np.asarray(e, dtype=float)
        return ThinFilmState(
            e_hat=e,
            c0=self.c0(e),
            x=self.mgrid.x,
            field=self.mgrid.gamma * e,
            epsilon=self.cfg.epsilon,
            j=self.cfg.j,
        )

    def physical_derivative(self) -> np.ndarray:
        return mx.scale_rows(self.mgrid.gamma, self.mgrid.d)

    def expressions(self):
        cfg, g = self.cfg, self.mgrid
        n, eps2, j, kc = g.n, cfg.epsilon**2, cfg.j, cfg.k_c
        gam = g.gamma
        e = ox.Var("E")
        ge = gam * e
        ones = np.ones(n)
        first = mx.outer(ones, np.eye(n)[0] * gam[0])
        last = mx.outer(ones, np.eye(n)[-1] * gam[-1])
        q = disc.quadrature_matrix(g.w, n)
        c0 = ox.AffineShift(
            eps2 * (2.0 * (first @ e) - 2.0 * (last @ e) - q @ (gam * e**2)), np.full(n, 1.0 - j)
        )
        interior = (
            eps2 * (g.l_mapped @ ge - 0.5 * (gam**3 * e**3))
            - 0.25 * ((c0 + j * (g.x + 1.0)) * ge)
            - np.full(n, 0.25 * j)
        )
        sel0, seln = np.eye(n)[:1], np.eye(n)[-1:]
        gd = mx.scale_rows(gam, g.d)
        row0 = -kc * (
            sel0 @ c0 + 2.0 * j + eps2 * (2.0 * (sel0 @ ge) ** 2 + 4.0 * (gd[:1] @ ge))
        ) + (cfg.j_r - j)
        rown = kc * (seln @ c0 + eps2 * (2.0 * (seln @ ge) ** 2 + 4.0 * (gd[-1:] @ ge))) - (cfg.j_r + j)
        return interior, row0, rown


def make_thinfilm(cfg: ThinFilmConfig) -> ThinFilm:
    return MappedThinFilm(cfg) if cfg.beta is not None else ThinFilm(cfg)


def thinfilm_initial(cfg: ThinFilmConfig) -> ThinFilmState:
    prob = make_thinfilm(cfg)
    return prob.state(prob.initial())


def thinfilm_residual(state: ThinFilmState | np.ndarray, cfg: ThinFilmConfig) -> np.ndarray:
    e = state.e_hat if isinstance(state, ThinFilmState) else state
    return make_thinfilm(cfg).residual(e)


def thinfilm_jacobian(state: ThinFilmState | np.ndarray, cfg: ThinFilmConfig) -> np.ndarray:
    e = state.e_hat if isinstance(state, ThinFilmState) else state
    return make_thinfilm(cfg).jacobian(e)
