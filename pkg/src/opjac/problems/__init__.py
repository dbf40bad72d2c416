"""Registry of the example systems, keyed by their stable CLI names.

Each entry turns a flat option mapping (``None`` meaning "use the default")
into configured problems. It also carries the continuation schedule used by
``solve`` plus the fixed states and sizes used by ``verify`` and ``bench``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from ..newton import ContinuationSchedule
from .colloid import Colloid, ColloidConfig
from .pnp1d import Pnp1D, PnpConfig, smooth_perturbation
from .thinfilm import MappedThinFilm, ThinFilm, ThinFilmConfig

Options = Mapping[str, Any]

DEFAULT_BETA = 0.75
VERIFY_SEED = 20240601


def _pick(opts: Options, key: str, default):
    val = opts.get(key)
    return default if val is None else val


@dataclass(frozen=True)
class ProblemEntry:
    name: str
    parameter: str | None
    config: Callable[[Options], Any]
    family: Callable[[Any], Callable[[float], Any]]
    schedule: Callable[[Any, Options], ContinuationSchedule | None]
    verify_config: Callable[[Options], Any]
    verify_states: Callable[[Any], list[np.ndarray]]
    bench_instance: Callable[[int, Options], tuple[Any, np.ndarray]]


# --- thin film ---------------------------------------------------------------


def _thinfilm_config(opts: Options, mapped: bool, n_default: int = 100) -> ThinFilmConfig:
    beta = _pick(opts, "beta", DEFAULT_BETA) if mapped else opts.get("beta")
    return ThinFilmConfig(
        n=int(_pick(opts, "n", n_default)),
        epsilon=float(_pick(opts, "epsilon", 0.01)),
        k_c=float(_pick(opts, "kc", 10.0)),
        j_r=float(_pick(opts, "jr", 10.0)),
        j=float(_pick(opts, "j", 1.5)),
        beta=None if beta is None else float(beta),
    )


def _thinfilm_family(cfg: ThinFilmConfig):
    cls = MappedThinFilm if cfg.beta is not None else ThinFilm
    base = cls(cfg)
    return base.with_parameter


def _thinfilm_schedule(cfg: ThinFilmConfig, opts: Options) -> ContinuationSchedule:
    start = opts.get("cont_start")
    if start is None:
        # the asymptotic initial iterate is only good for small j
        start = min(0.5, cfg.j) if cfg.j >= 0 else cfg.j
    return ContinuationSchedule("j", float(start), float(_pick(opts, "cont_step", 0.1)), cfg.j)


def _thinfilm_states(prob: ThinFilm) -> list[np.ndarray]:
    rng = np.random.default_rng(VERIFY_SEED)
    e0 = prob.initial()
    x = prob.x if isinstance(prob, MappedThinFilm) else prob.grid.x
    smooth = np.cos(np.outer(x, np.arange(4))) @ rng.uniform(-0.3, 0.3, 4)
    return [e0, e0 * (1.0 + smooth), e0 + rng.uniform(-0.5, 0.5, e0.size)]


def _thinfilm_entry(name: str, mapped: bool) -> ProblemEntry:
    def verify_config(opts):
        o = dict(opts)
        o["n"] = _pick(opts, "n", 50)
        o["j"] = _pick(opts, "j", 0.5)
        return _thinfilm_config(o, mapped)

    def bench_instance(size, opts):
        o = dict(opts)
        o["n"] = size
        o["j"] = _pick(opts, "j", 0.5)
        cfg = _thinfilm_config(o, mapped)
        prob = _thinfilm_family(cfg)(cfg.j)
        return prob, prob.initial()

    return ProblemEntry(
        name=name,
        parameter="j",
        config=lambda opts: _thinfilm_config(opts, mapped),
        family=_thinfilm_family,
        schedule=_thinfilm_schedule,
        verify_config=verify_config,
        verify_states=lambda prob: _thinfilm_states(prob),
        bench_instance=bench_instance,
    )


# --- colloid -----------------------------------------------------------------


def _colloid_config(opts: Options, n_r: int = 30, n_t: int = 30) -> ColloidConfig:
    return ColloidConfig(
        n_r=int(_pick(opts, "nr", n_r)),
        n_t=int(_pick(opts, "nt", n_t)),
        l_r=float(_pick(opts, "lr", 0.5)),
        e_applied=float(_pick(opts, "efield", 10.0)),
        v=float(_pick(opts, "v", 0.0)),
        epsilon=float(_pick(opts, "epsilon", 0.01)),
        delta=float(_pick(opts, "delta", 1.0)),
    )


def _colloid_schedule(cfg: ColloidConfig, opts: Options) -> ContinuationSchedule:
    start = opts.get("cont_start")
    if start is None:
        start = min(1.0, cfg.e_applied)
    return ContinuationSchedule("E", float(start), float(_pick(opts, "cont_step", 0.5)), cfg.e_applied)


def _colloid_states(prob: Colloid) -> list[np.ndarray]:
    rng = np.random.default_rng(VERIFY_SEED)
    n = prob.n_f
    states = []
    for amp_c, amp_psi in ((0.05, 0.1), (0.2, 0.5), (0.4, 1.0)):
        u = prob.initial()
        u[:n] *= 1.0 + amp_c * rng.uniform(-1.0, 1.0, n)
        u[n:] += amp_psi * rng.standard_normal(n)
        states.append(u)
    return states


def _colloid_verify_config(opts: Options) -> ColloidConfig:
    o = dict(opts)
    o["efield"] = _pick(opts, "efield", 2.0)
    o["v"] = _pick(opts, "v", 0.2)
    return _colloid_config(o, n_r=10, n_t=8)


def _colloid_bench(size: int, opts: Options):
    o = dict(opts)
    o["nr"] = o["nt"] = size
    o["efield"] = _pick(opts, "efield", 2.0)
    prob = Colloid(_colloid_config(o))
    u = _colloid_states(prob)[0]
    return prob, u


# --- PNP ---------------------------------------------------------------------


def _pnp_config(opts: Options, n_default: int = 32) -> PnpConfig:
    return PnpConfig(
        n=int(_pick(opts, "n", n_default)),
        epsilon=float(_pick(opts, "epsilon", 0.1)),
        dt=float(_pick(opts, "dt", 0.01)),
    )


def _pnp_family(cfg: PnpConfig):
    from .. import discretization as disc

    prev = smooth_perturbation(disc.chebyshev(cfg.n).points)

    def build(_param: float) -> Pnp1D:
        return Pnp1D(cfg, prev)

    return build


def _pnp_states(prob: Pnp1D) -> list[np.ndarray]:
    rng = np.random.default_rng(VERIFY_SEED)
    base = np.concatenate(smooth_perturbation(prob.x))
    return [base] + [base * (1.0 + amp * rng.uniform(-1.0, 1.0, base.size)) for amp in (0.1, 0.3)]


def _pnp_bench(size: int, opts: Options):
    o = dict(opts)
    o["n"] = size
    prob = _pnp_family(_pnp_config(o))(0.0)
    return prob, prob.initial()


REGISTRY: dict[str, ProblemEntry] = {
    "thinfilm": _thinfilm_entry("thinfilm", mapped=False),
    "thinfilm-mapped": _thinfilm_entry("thinfilm-mapped", mapped=True),
    "colloid": ProblemEntry(
        name="colloid",
        parameter="E",
        config=_colloid_config,
        family=lambda cfg: Colloid(cfg).with_parameter,
        schedule=_colloid_schedule,
        verify_config=_colloid_verify_config,
        verify_states=_colloid_states,
        bench_instance=_colloid_bench,
    ),
    "pnp1d": ProblemEntry(
        name="pnp1d",
        parameter=None,
        config=_pnp_config,
        family=_pnp_family,
        schedule=lambda cfg, opts: None,
        verify_config=_pnp_config,
        verify_states=_pnp_states,
        bench_instance=_pnp_bench,
    ),
}


def get(name: str) -> ProblemEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None


__all__ = ["REGISTRY", "ProblemEntry", "get"]
