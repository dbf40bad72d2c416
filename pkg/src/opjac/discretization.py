"""Collocation grids with their differentiation and quadrature operators.

1D Chebyshev points are ordered from ``x[0] = 1`` down to ``x[-1] = -1``.
The spherical grid flattens the polar angle as the outer index and the radial
coordinate as the inner one; along every radial line entry 0 sits at
infinity and the last entry on the sphere surface ``r = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import matrix as mx


@dataclass(frozen=True)
class Grid1D:
    points: np.ndarray
    d: np.ndarray
    w: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.points.size


def _cheb_points(n: int) -> np.ndarray:
    k = np.arange(n)
    # symmetric evaluation keeps x[k] == -x[n-1-k] bitwise
    x = np.sin(np.pi * (n - 1 - 2 * k) / (2 * (n - 1)))
    return x


def chebyshev_matrix(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto-Chebyshev points and collocation derivative matrix.

    Off-diagonal entries use the closed form ``c_i/c_j (-1)^(i+j)/(x_i-x_j)``;
    diagonal entries are the negative row sums so constants differentiate to
    zero exactly.
    """
    if n < 2:
        raise ValueError(f"Chebyshev grid needs at least 2 points, got {n}")
    x = _cheb_points(n)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n))
    d -= np.diag(d.sum(axis=1))
    return x, d


def clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on the ``n`` Chebyshev points, ordered like the points."""
    if n < 2:
        raise ValueError(f"Clenshaw-Curtis rule needs at least 2 points, got {n}")
    big_n = n - 1
    theta = np.pi * np.arange(n) / big_n
    w = np.zeros(n)
    v = np.ones(big_n - 1)
    th = theta[1:-1]
    if big_n % 2 == 0:
        w[0] = w[-1] = 1.0 / (big_n**2 - 1)
        for k in range(1, big_n // 2):
            v -= 2.0 * np.cos(2 * k * th) / (4 * k * k - 1)
        v -= np.cos(big_n * th) / (big_n**2 - 1)
    else:
        w[0] = w[-1] = 1.0 / big_n**2
        for k in range(1, (big_n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * th) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / big_n
    return w


def chebyshev(n: int) -> Grid1D:
    x, d = chebyshev_matrix(n)
    return Grid1D(points=x, d=d, w=clenshaw_curtis(n))


def quadrature_matrix(w, n: int) -> np.ndarray:
    """``n x n`` matrix whose every row is ``w``; ``Q @ f`` broadcasts the integral."""
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"weight vector of length {w.size} for {n} points")
    return mx.outer(np.ones(n), w)


@dataclass(frozen=True)
class MappedThinFilmGrid:
    """Chebyshev grid in ``y`` with the boundary-layer map ``x = tanh(alpha y)/beta``.

    ``gamma = dy/dx`` so ``diag(gamma) @ d`` differentiates in ``x`` and the
    physical field is ``gamma * E(y)``.
    """

    beta: float
    alpha: float
    y: np.ndarray
    x: np.ndarray
    gamma: np.ndarray
    d: np.ndarray
    w: np.ndarray
    l_mapped: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size


def mapped_thinfilm_grid(n: int, beta: float) -> MappedThinFilmGrid:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"mapping parameter beta must lie in (0, 1), got {beta}")
    y, d = chebyshev_matrix(n)
    alpha = float(np.arctanh(beta))
    x = np.tanh(alpha * y) / beta
    x[0], x[-1] = 1.0, -1.0
    gamma = beta / alpha * np.cosh(alpha * y) ** 2
    gd = mx.scale_rows(gamma, d)
    return MappedThinFilmGrid(
        beta=float(beta),
        alpha=alpha,
        y=y,
        x=x,
        gamma=gamma,
        d=d,
        w=clenshaw_curtis(n),
        l_mapped=gd @ gd,
    )


def polar_grid(n_t: int) -> tuple[np.ndarray, np.ndarray]:
    """Pole-free polar angles ``(2k-1) pi / (2 n_t)`` and their derivative matrix.

    The matrix is exact on cosine series ``sum a_k cos(k theta)`` with
    ``k < n_t``, which is the parity every axisymmetric scalar field has;
    it is not meant for sine series such as ``sin(2 theta)``.
    """
    if n_t < 2:
        raise ValueError(f"polar grid needs at least 2 points, got {n_t}")
    k = np.arange(1, n_t + 1)
    theta = (2 * k - 1) * np.pi / (2 * n_t)
    sgn = (-1.0) ** (k + 1)
    ti = theta[:, None]
    tj = theta[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        off = sgn[None, :] * np.sin(n_t * ti) * np.sin(tj) / (np.cos(tj) - np.cos(ti))
    d = np.where(np.eye(n_t, dtype=bool), 0.0, off)
    d[np.diag_indices(n_t)] = -0.5 / np.tan(theta)
    return theta, d


def rational_radial_grid(n_r: int, l_r: float) -> tuple[np.ndarray, np.ndarray]:
    """Shifted semi-infinite rational Chebyshev grid on ``[1, inf]``.

    Returns ``n_r + 1`` radii ``r = l_r (1+y)/(1-y) + 1`` (``r[0] = inf``,
    ``r[-1] = 1``) and the radial derivative matrix, whose row at infinity
    vanishes.
    """
    if n_r < 2:
        raise ValueError(f"radial grid needs at least 2 intervals, got {n_r}")
    if l_r <= 0:
        raise ValueError(f"radial scale must be positive, got {l_r}")
    y, d_y = chebyshev_matrix(n_r + 1)
    one_minus_y = 1.0 - y
    r = np.empty_like(y)
    r[0] = np.inf
    r[1:] = l_r * (1.0 + y[1:]) / one_minus_y[1:] + 1.0
    r[-1] = 1.0
    d_r = mx.scale_rows(0.5 / l_r * one_minus_y**2, d_y)
    d_r[0, :] = 0.0
    return r, d_r


def inverse_radius(r: np.ndarray) -> np.ndarray:
    """``1/r`` with the point at infinity mapped to its limit 0."""
    out = np.zeros_like(r)
    finite = np.isfinite(r)
    out[finite] = 1.0 / r[finite]
    return out


@dataclass(frozen=True)
class SphericalGrid:
    """Tensor-product (theta, r) grid for axisymmetric problems outside the unit sphere.

    Full operators act on all ``n_t * (n_r + 1)`` points. Split operators are
    named ``<op>_f`` (reading finite points) and ``<op>_inf`` (reading points at
    infinity); bulk rows are restricted to interior points (finite and off the
    surface). Surface operators act on the ``n_t`` surface values.
    """

    n_r: int
    n_t: int
    l_r: float
    r: np.ndarray
    theta: np.ndarray
    d_r: np.ndarray
    d_theta: np.ndarray

    lap: sp.csr_matrix
    div_r: sp.csr_matrix
    div_t: sp.csr_matrix
    grad_r: sp.csr_matrix
    grad_t: sp.csr_matrix
    div_s: np.ndarray
    grad_s: np.ndarray
    grad_n: sp.csr_matrix

    finite_idx: np.ndarray
    interior_idx: np.ndarray
    surface_idx: np.ndarray
    inf_idx: np.ndarray

    r_finite: sp.csr_matrix
    r_interior: sp.csr_matrix
    r_inf: sp.csr_matrix
    # restrictors acting on finite-point vectors
    rf_surface: sp.csr_matrix
    rf_interior: sp.csr_matrix

    lap_f: sp.csr_matrix
    lap_inf: sp.csr_matrix
    div_r_f: sp.csr_matrix
    div_r_inf: sp.csr_matrix
    div_t_f: sp.csr_matrix
    div_t_inf: sp.csr_matrix
    grad_r_f: sp.csr_matrix
    grad_t_f: sp.csr_matrix
    grad_n_f: sp.csr_matrix
    grad_n_inf: sp.csr_matrix
    grad_n_s: sp.csr_matrix
    grad_n_i: sp.csr_matrix

    extras: dict = field(default_factory=dict)

    @property
    def n_full(self) -> int:
        return self.n_t * (self.n_r + 1)

    @property
    def n_finite(self) -> int:
        return self.n_t * self.n_r

    @property
    def n_interior(self) -> int:
        return self.n_t * (self.n_r - 1)

    def theta_full(self, which: str = "finite") -> np.ndarray:
        """Polar angle at every point of the requested point set."""
        per_line = {"finite": self.n_r, "interior": self.n_r - 1, "full": self.n_r + 1}[which]
        return np.repeat(self.theta, per_line)

    def r_full(self, which: str = "finite") -> np.ndarray:
        rr = np.tile(self.r, self.n_t)
        idx = {"finite": self.finite_idx, "interior": self.interior_idx, "full": np.arange(self.n_full)}[which]
        return rr[idx]


def _line_indices(n_t: int, per_line: int, offsets) -> np.ndarray:
    offsets = np.asarray(offsets)
    return (np.arange(n_t)[:, None] * per_line + offsets[None, :]).ravel()


def spherical_operators(n_r: int, n_t: int, l_r: float) -> SphericalGrid:
    r, d_r = rational_radial_grid(n_r, l_r)
    theta, d_t = polar_grid(n_t)
    n_line = n_r + 1
    n_full = n_t * n_line

    inv_r = inverse_radius(r)
    one_over_r = mx.diag(inv_r)
    eye_t = mx.identity(n_t)
    sin_t = np.sin(theta)

    # (1/sin) d_theta sin: the polar part of the divergence
    div_theta_1d = mx.scale_cols(mx.scale_rows(1.0 / sin_t, d_t), sin_t)
    d_r_sq = d_r @ d_r

    div_r = mx.kron(eye_t, sp.csr_matrix(2.0 * np.diag(inv_r) + d_r))
    div_t = mx.kron(sp.csr_matrix(div_theta_1d), one_over_r)
    grad_r = mx.kron(eye_t, sp.csr_matrix(d_r))
    grad_t = mx.kron(sp.csr_matrix(d_t), one_over_r)
    lap = (
        mx.kron(eye_t, sp.csr_matrix(mx.scale_rows(2.0 * inv_r, d_r) + d_r_sq))
        + mx.kron(sp.csr_matrix(div_theta_1d @ d_t), mx.diag(inv_r**2))
    ).tocsr()
    r_surf = r[-1]
    div_s = div_theta_1d / r_surf
    grad_s = d_t / r_surf
    grad_n = (-mx.kron(eye_t, sp.csr_matrix(d_r[-1:, :]))).tocsr()

    finite_idx = _line_indices(n_t, n_line, np.arange(1, n_line))
    interior_idx = _line_indices(n_t, n_line, np.arange(1, n_line - 1))
    surface_idx = _line_indices(n_t, n_line, [n_line - 1])
    inf_idx = _line_indices(n_t, n_line, [0])

    r_finite = mx.restriction(finite_idx, n_full)
    r_interior = mx.restriction(interior_idx, n_full)
    r_inf = mx.restriction(inf_idx, n_full)
    rf_surface = mx.restriction(_line_indices(n_t, n_r, [n_r - 1]), n_t * n_r)
    rf_interior = mx.restriction(_line_indices(n_t, n_r, np.arange(n_r - 1)), n_t * n_r)

    def block(op, rows, cols):
        return mx.restrict_operator(op, cols, rows)

    grad_n_f = (grad_n @ r_finite.T).tocsr()
    return SphericalGrid(
        n_r=n_r,
        n_t=n_t,
        l_r=float(l_r),
        r=r,
        theta=theta,
        d_r=d_r,
        d_theta=d_t,
        lap=lap,
        div_r=div_r,
        div_t=div_t,
        grad_r=grad_r,
        grad_t=grad_t,
        div_s=div_s,
        grad_s=grad_s,
        grad_n=grad_n,
        finite_idx=finite_idx,
        interior_idx=interior_idx,
        surface_idx=surface_idx,
        inf_idx=inf_idx,
        r_finite=r_finite,
        r_interior=r_interior,
        r_inf=r_inf,
        rf_surface=rf_surface,
        rf_interior=rf_interior,
        lap_f=block(lap, interior_idx, finite_idx),
        lap_inf=block(lap, interior_idx, inf_idx),
        div_r_f=block(div_r, interior_idx, finite_idx),
        div_r_inf=block(div_r, interior_idx, inf_idx),
        div_t_f=block(div_t, interior_idx, finite_idx),
        div_t_inf=block(div_t, interior_idx, inf_idx),
        grad_r_f=block(grad_r, finite_idx, finite_idx),
        grad_t_f=block(grad_t, finite_idx, finite_idx),
        grad_n_f=grad_n_f,
        grad_n_inf=(grad_n @ r_inf.T).tocsr(),
        grad_n_s=(grad_n_f @ rf_surface.T).tocsr(),
        grad_n_i=(grad_n_f @ rf_interior.T).tocsr(),
    )


def chebyshev_coefficients(u) -> np.ndarray:
    """Magnitudes of the cosine-series coefficients of Chebyshev samples.

    Equals ``abs(fft(even_extension(u)))[:N]`` with the even extension
    ``[u, u[-2:0:-1]]``; evaluated as a direct cosine sum.
    """
    u = np.asarray(u, dtype=float).ravel()
    n = u.size
    if n < 2:
        return np.abs(u)
    m = n - 1
    k = np.arange(n)
    # reduce k*j mod 2m before the cosine to keep arguments small
    arg = np.outer(k, k) % (2 * m)
    c = np.cos(np.pi * arg / m)
    wts = np.full(n, 2.0)
    wts[0] = wts[-1] = 1.0
    return np.abs(c @ (wts * u))
