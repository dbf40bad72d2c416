"""Full-step Newton iteration and fixed-step parameter continuation.

There is no line search or damping: continuation in a physical parameter is
the only globalization. Convergence is measured in the infinity norm.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .matrix import solve_linear

logger = logging.getLogger(__name__)


class Problem(Protocol):
    def residual(self, u: np.ndarray) -> np.ndarray: ...

    def jacobian(self, u: np.ndarray): ...


@dataclass(frozen=True)
class NewtonConfig:
    res_tol: float = 1e-8
    max_iters: int = 20
    delta_tol: float = 0.0

    def __post_init__(self):
        if not self.res_tol > 0:
            raise ValueError("res_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.delta_tol < 0:
            raise ValueError("delta_tol must be non-negative")


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    step_norm_history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    stop_reason: str = ""
    parameter: float | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def records(self) -> list[dict]:
        """One dict per iterate (iteration 0 is the initial guess)."""
        out = []
        for k, res in enumerate(self.residual_history):
            out.append(
                {
                    "parameter": self.parameter,
                    "iteration": k,
                    "residual_inf": res,
                    "step_inf": self.step_norm_history[k - 1] if k > 0 else None,
                }
            )
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())

    def summary(self) -> dict:
        d = asdict(self)
        d["final_residual"] = self.final_residual
        return d


class NewtonError(RuntimeError):
    def __init__(self, message: str, report: NewtonReport):
        super().__init__(message)
        self.report = report


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def newton_solve(
    problem: Problem, u0, cfg: NewtonConfig | None = None
) -> tuple[np.ndarray, NewtonReport]:
    """Iterate ``u <- u - J(u)^{-1} F(u)`` until a stopping test fires.

    Stops when ``|F|_inf <= res_tol``, when the last step satisfies
    ``|du|_inf <= delta_tol``, or after ``max_iters`` steps. The report's
    ``converged`` flag is set only by the residual test.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    u = np.array(u0, dtype=float).ravel()
    report = NewtonReport()
    res = np.asarray(problem.residual(u), dtype=float)
    if not np.all(np.isfinite(res)):
        raise NewtonError("residual is not finite at the initial iterate", report)
    res_norm = _inf_norm(res)
    report.residual_history.append(res_norm)
    step_norm = np.inf
    while res_norm > cfg.res_tol and step_norm > cfg.delta_tol and report.iterations < cfg.max_iters:
        jac = problem.jacobian(u)
        du = -solve_linear(jac, res)
        u = u + du
        step_norm = _inf_norm(du)
        res = np.asarray(problem.residual(u), dtype=float)
        report.iterations += 1
        if not np.all(np.isfinite(res)):
            report.step_norm_history.append(step_norm)
            report.wall_time = time.perf_counter() - t0
            raise NewtonError(f"residual is not finite after iteration {report.iterations}", report)
        res_norm = _inf_norm(res)
        report.residual_history.append(res_norm)
        report.step_norm_history.append(step_norm)
        logger.debug("newton it=%d res=%.3e step=%.3e", report.iterations, res_norm, step_norm)
    report.converged = res_norm <= cfg.res_tol
    if report.converged:
        report.stop_reason = "residual"
    elif step_norm <= cfg.delta_tol:
        report.stop_reason = "step"
    else:
        report.stop_reason = "max_iters"
    report.wall_time = time.perf_counter() - t0
    return u, report


@dataclass(frozen=True)
class ContinuationSchedule:
    param_name: str
    start: float
    step: float
    target: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("continuation step must be positive")

    def values(self) -> list[float]:
        """Stage parameters ``start, start+step, ...`` with the last one clamped to ``target``."""
        direction = 1.0 if self.target >= self.start else -1.0
        span = abs(self.target - self.start)
        # stages closer than this to the target are merged into it
        slack = 1e-9 * self.step
        out = []
        k = 0
        while k * self.step < span - slack:
            out.append(self.start + direction * k * self.step)
            k += 1
        out.append(float(self.target))
        return out


class ContinuationError(RuntimeError):
    def __init__(self, parameter: float, reports: list[NewtonReport], u: np.ndarray, cause: Exception | None = None):
        self.parameter = parameter
        self.reports = reports
        self.u = u
        msg = f"continuation stage failed to converge at parameter = {parameter:g}"
        if cause is not None:
            msg += f" ({cause})"
        super().__init__(msg)


def continuation_solve(
    family: Callable[[float], Problem],
    schedule: ContinuationSchedule,
    u0,
    cfg: NewtonConfig | None = None,
    on_stage: Callable[[float, np.ndarray, NewtonReport], None] | None = None,
) -> tuple[np.ndarray, list[NewtonReport]]:
    """Solve along the schedule, warm-starting each stage from the previous one.

    Raises:
        ContinuationError: at the first stage that does not converge; carries
            the parameter value, the reports so far and the last iterate.
    """
    cfg = cfg or NewtonConfig()
    u = np.array(u0, dtype=float).ravel()
    reports: list[NewtonReport] = []
    for p in schedule.values():
        try:
            u_new, rep = newton_solve(family(p), u, cfg)
        except Exception as exc:  # noqa: BLE001 - any stage failure ends the sweep
            rep = getattr(exc, "report", NewtonReport())
            rep.parameter = p
            reports.append(rep)
            raise ContinuationError(p, reports, u, exc) from exc
        rep.parameter = p
        reports.append(rep)
        logger.info(
            "%s=%g: %d iterations, residual %.3e",
            schedule.param_name, p, rep.iterations, rep.final_residual,
        )
        if not rep.converged:
            raise ContinuationError(p, reports, u_new)
        u = u_new
        if on_stage is not None:
            on_stage(p, u, rep)
    return u, reports
