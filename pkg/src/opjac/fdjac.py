"""Column-by-column finite-difference Jacobians.

This is the naive oracle: one (forward) or two (central) residual
evaluations per unknown, no sparsity coloring. It is used to cross-check the
analytical Jacobians and as the baseline in the Jacobian benchmark.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

EPS = np.finfo(float).eps


class NonFiniteResidualError(FloatingPointError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"residual is not finite after perturbing column {column}")


@dataclass(frozen=True)
class FdConfig:
    scheme: Literal["forward", "central"] = "central"
    base_step: float | None = None
    typical_scale: float = 1.0

    def __post_init__(self):
        if self.scheme not in ("forward", "central"):
            raise ValueError(f"unknown finite-difference scheme {self.scheme!r}")
        if self.base_step is not None and not self.base_step > 0:
            raise ValueError("base_step must be positive")

    @property
    def step(self) -> float:
        if self.base_step is not None:
            return self.base_step
        return np.sqrt(EPS) if self.scheme == "forward" else np.cbrt(EPS)


def fd_jacobian(
    residual: Callable[[np.ndarray], np.ndarray],
    u,
    cfg: FdConfig | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Dense finite-difference approximation of ``d residual / d u``.

    Column ``j`` uses the step ``h_j = base_step * max(|u_j|, typical_scale)``.
    ``workers > 1`` evaluates columns on a thread pool; only use that with a
    residual that is safe to call concurrently. The result does not depend
    on ``workers``.
    """
    cfg = cfg or FdConfig()
    u = np.asarray(u, dtype=float).ravel()
    if not np.all(np.isfinite(u)):
        raise ValueError("finite-difference base point is not finite")
    n = u.size
    h = cfg.step * np.maximum(np.abs(u), cfg.typical_scale)
    # make the step exactly representable relative to u_j
    h = (u + h) - u
    f0 = None
    if cfg.scheme == "forward":
        f0 = np.asarray(residual(u.copy()), dtype=float).ravel()
        if not np.all(np.isfinite(f0)):
            raise NonFiniteResidualError(-1)

    def column(j: int) -> np.ndarray:
        up = u.copy()
        up[j] += h[j]
        fp = np.asarray(residual(up), dtype=float).ravel()
        if cfg.scheme == "forward":
            col = (fp - f0) / h[j]
        else:
            um = u.copy()
            um[j] -= h[j]
            fm = np.asarray(residual(um), dtype=float).ravel()
            col = (fp - fm) / (2.0 * h[j])
        if not np.all(np.isfinite(col)):
            raise NonFiniteResidualError(j)
        return col

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(n)))
    else:
        cols = [column(j) for j in range(n)]
    return np.column_stack(cols)


def max_relative_error(analytic, numeric) -> float:
    """``max |A - N| / max(1, max |A|)``, the comparison metric for Jacobian checks."""
    a = analytic.toarray() if hasattr(analytic, "toarray") else np.asarray(analytic)
    b = numeric.toarray() if hasattr(numeric, "toarray") else np.asarray(numeric)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).max(initial=0.0) / max(1.0, np.abs(a).max(initial=0.0)))
