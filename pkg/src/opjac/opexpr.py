"""Operator-expression trees with direct matrix-form Jacobians.

An expression is built from named grid-function variables, constant grid
functions, matrix-vector applications, component-wise functions, Hadamard
products and linear combinations. ``jacobian`` walks the tree applying the
matrix-vector rule, the diagonal rule, the two chain rules and the product
rule, so the result is a matrix assembled from the operators in the tree
rather than from individual partial derivatives.

Intermediate Jacobians are held as sums of factor chains (:class:`JacSum`).
Adjacent diagonal factors are folded into one vector and a diagonal next to
a matrix becomes a row or column scaling. General matrix products are only
formed by :meth:`JacSum.materialize`.

Example::

    >>> import numpy as np
    >>> from opjac.discretization import chebyshev_matrix
    >>> x, D = chebyshev_matrix(8)
    >>> u = Var("u")
    >>> f = exp(2 * u) * (D @ u)
    >>> J = jacobian(f, "u", {"u": x})
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import matrix as mx

Environment = Mapping[str, np.ndarray]


class UnboundVariableError(KeyError):
    pass


class DomainError(ValueError):
    """A component-wise function was evaluated outside its domain."""

    def __init__(self, fn: str, positions: np.ndarray, values: np.ndarray):
        self.fn = fn
        self.positions = positions
        self.values = values
        head = ", ".join(f"[{i}]={v:.3g}" for i, v in zip(positions[:5], values[:5]))
        super().__init__(f"{fn} evaluated outside its domain at {head}")


# --------------------------------------------------------------------------
# component-wise function catalog
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CwiseFn:
    """A scalar function applied component-wise together with its derivative."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], np.ndarray] | None = None

    def _check(self, x: np.ndarray) -> None:
        if self.domain is None:
            return
        bad = ~self.domain(x)
        if np.any(bad):
            pos = np.flatnonzero(bad)
            raise DomainError(self.name, pos, x[pos])

    def value(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return self.f(x)

    def deriv(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return self.df(x)


def _positive(x):
    return x > 0


EXP = CwiseFn("exp", np.exp, np.exp)
LOG = CwiseFn("ln", np.log, lambda x: 1.0 / x, _positive)
SIN = CwiseFn("sin", np.sin, np.cos)
COS = CwiseFn("cos", np.cos, lambda x: -np.sin(x))
SINH = CwiseFn("sinh", np.sinh, np.cosh)
COSH = CwiseFn("cosh", np.cosh, np.sinh)
SQRT = CwiseFn("sqrt", np.sqrt, lambda x: 0.5 / np.sqrt(x), _positive)


def power_fn(p: float) -> CwiseFn:
    p = float(p)
    if p.is_integer() and p >= 0:
        return CwiseFn(f"pow{p:g}", lambda x: x**p, lambda x: p * x ** (p - 1))
    if p.is_integer():
        return CwiseFn(f"pow{p:g}", lambda x: x**p, lambda x: p * x ** (p - 1), lambda x: x != 0)
    return CwiseFn(f"pow{p:g}", lambda x: x**p, lambda x: p * x ** (p - 1), _positive)


def affine_fn(a: float, b: float = 0.0) -> CwiseFn:
    return CwiseFn(f"affine({a:g},{b:g})", lambda x: a * x + b, lambda x: np.full_like(x, a))


# --------------------------------------------------------------------------
# expression nodes
# --------------------------------------------------------------------------


class Expr:
    """Base class of expression nodes; supports ``+ - *`` and ``@`` on the left."""

    # make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __add__(self, other):
        return LinComb(((1.0, self), (1.0, as_expr(other))))

    def __radd__(self, other):
        return LinComb(((1.0, as_expr(other)), (1.0, self)))

    def __sub__(self, other):
        return LinComb(((1.0, self), (-1.0, as_expr(other))))

    def __rsub__(self, other):
        return LinComb(((1.0, as_expr(other)), (-1.0, self)))

    def __neg__(self):
        return LinComb(((-1.0, self),))

    def __mul__(self, other):
        if np.isscalar(other):
            return LinComb(((float(other), self),))
        return Hadamard(self, as_expr(other))

    def __rmul__(self, other):
        if np.isscalar(other):
            return LinComb(((float(other), self),))
        return Hadamard(as_expr(other), self)

    def __rmatmul__(self, a):
        return MatVec(a, self)

    def __pow__(self, p):
        return Cwise(power_fn(p), self)


@dataclass(frozen=True, eq=False)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).ravel())


@dataclass(frozen=True, eq=False)
class MatVec(Expr):
    a: object
    child: Expr


@dataclass(frozen=True, eq=False)
class Cwise(Expr):
    fn: CwiseFn
    child: Expr


@dataclass(frozen=True, eq=False)
class Hadamard(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=False)
class LinComb(Expr):
    terms: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((float(c), as_expr(e)) for c, e in self.terms)
        )


@dataclass(frozen=True, eq=False)
class AffineShift(Expr):
    """``child + shift`` with a constant grid-function shift."""

    child: Expr
    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float).ravel())


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(np.asarray(x, dtype=float))


def exp(e) -> Cwise:
    return Cwise(EXP, as_expr(e))


def log(e) -> Cwise:
    return Cwise(LOG, as_expr(e))


def sin(e) -> Cwise:
    return Cwise(SIN, as_expr(e))


def cos(e) -> Cwise:
    return Cwise(COS, as_expr(e))


def sinh(e) -> Cwise:
    return Cwise(SINH, as_expr(e))


def cosh(e) -> Cwise:
    return Cwise(COSH, as_expr(e))


def sqrt(e) -> Cwise:
    return Cwise(SQRT, as_expr(e))


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (MatVec, Cwise, AffineShift)):
        return free_vars(e.child)
    if isinstance(e, Hadamard):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, LinComb):
        out: set[str] = set()
        for _, t in e.terms:
            out |= free_vars(t)
        return out
    raise TypeError(f"unknown expression node {type(e).__name__}")


def render(e: Expr) -> str:
    """Prefix-notation rendering used for debugging and golden tests."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return f"const[{e.value.size}]"
    if isinstance(e, MatVec):
        kind = "sparse" if sp.issparse(e.a) else "dense"
        return f"(matvec {kind}{e.a.shape[0]}x{e.a.shape[1]} {render(e.child)})"
    if isinstance(e, Cwise):
        return f"({e.fn.name} {render(e.child)})"
    if isinstance(e, Hadamard):
        return f"(.* {render(e.left)} {render(e.right)})"
    if isinstance(e, LinComb):
        inner = " ".join(f"{c:g}*{render(t)}" for c, t in e.terms)
        return f"(+ {inner})"
    if isinstance(e, AffineShift):
        return f"(shift {render(e.child)} const[{e.shift.size}])"
    raise TypeError(f"unknown expression node {type(e).__name__}")


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _lookup(env: Environment, name: str) -> np.ndarray:
    try:
        return np.asarray(env[name], dtype=float).ravel()
    except KeyError:
        raise UnboundVariableError(f"variable {name!r} is not bound") from None


def _same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.size != b.size:
        raise ValueError(f"length mismatch in {what}: {a.size} vs {b.size}")


def evaluate(e: Expr, env: Environment, _cache: dict | None = None) -> np.ndarray:
    """Value of ``e`` with variables bound by ``env``."""
    cache = {} if _cache is None else _cache
    key = id(e)
    if key in cache:
        return cache[key]
    if isinstance(e, Var):
        out = _lookup(env, e.name)
    elif isinstance(e, Const):
        out = e.value
    elif isinstance(e, MatVec):
        v = evaluate(e.child, env, cache)
        if e.a.shape[1] != v.size:
            raise ValueError(f"operator with {e.a.shape[1]} columns applied to vector of length {v.size}")
        out = np.asarray(e.a @ v, dtype=float).ravel()
    elif isinstance(e, Cwise):
        out = e.fn.value(evaluate(e.child, env, cache))
    elif isinstance(e, Hadamard):
        a = evaluate(e.left, env, cache)
        b = evaluate(e.right, env, cache)
        _same_length(a, b, "Hadamard product")
        out = a * b
    elif isinstance(e, LinComb):
        vals = [(c, evaluate(t, env, cache)) for c, t in e.terms]
        n = vals[0][1].size
        out = np.zeros(n)
        for c, v in vals:
            _same_length(out, v, "linear combination")
            out = out + c * v
    elif isinstance(e, AffineShift):
        v = evaluate(e.child, env, cache)
        _same_length(v, e.shift, "affine shift")
        out = v + e.shift
    else:
        raise TypeError(f"unknown expression node {type(e).__name__}")
    cache[key] = out
    return out


# --------------------------------------------------------------------------
# Jacobian representation
# --------------------------------------------------------------------------


@dataclass
class JacTerm:
    """``coef * F_0 @ F_1 @ ... @ F_k`` where each factor is a diagonal (vector) or a matrix.

    An empty factor list is the identity.
    """

    coef: float
    factors: list = field(default_factory=list)

    def lmul_diag(self, v: np.ndarray) -> "JacTerm":
        if self.factors and isinstance(self.factors[0], np.ndarray) and self.factors[0].ndim == 1:
            return JacTerm(self.coef, [v * self.factors[0]] + self.factors[1:])
        return JacTerm(self.coef, [v] + self.factors)

    def lmul_mat(self, a) -> "JacTerm":
        return JacTerm(self.coef, [a] + self.factors)


def _is_diag_factor(f) -> bool:
    return isinstance(f, np.ndarray) and f.ndim == 1


@dataclass
class JacSum:
    """Sum of :class:`JacTerm` chains with known output and input sizes."""

    n_out: int
    n_in: int
    terms: list = field(default_factory=list)

    @classmethod
    def zero(cls, n_out: int, n_in: int) -> "JacSum":
        return cls(n_out, n_in, [])

    @classmethod
    def identity(cls, n: int) -> "JacSum":
        return cls(n, n, [JacTerm(1.0, [])])

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def lmul_diag(self, v: np.ndarray) -> "JacSum":
        return JacSum(v.size, self.n_in, [t.lmul_diag(v) for t in self.terms])

    def lmul_mat(self, a) -> "JacSum":
        return JacSum(a.shape[0], self.n_in, [t.lmul_mat(a) for t in self.terms])

    def scaled(self, c: float) -> "JacSum":
        return JacSum(self.n_out, self.n_in, [JacTerm(c * t.coef, t.factors) for t in self.terms])

    def __add__(self, other: "JacSum") -> "JacSum":
        if (self.n_out, self.n_in) != (other.n_out, other.n_in):
            raise ValueError(
                f"adding Jacobians of shapes {(self.n_out, self.n_in)} and {(other.n_out, other.n_in)}"
            )
        return JacSum(self.n_out, self.n_in, self.terms + other.terms)

    def materialize(self, fold: bool = True, sparse: bool | None = None):
        """Explicit matrix.

        With ``fold=True`` diagonal factors become row/column scalings and
        pure-diagonal terms are summed as vectors. ``fold=False`` multiplies
        explicit diagonal matrices instead (reference path for tests).
        """
        if sparse is None:
            sparse = any(sp.issparse(f) for t in self.terms for f in t.factors)
        square = self.n_out == self.n_in
        diag_acc = np.zeros(self.n_out) if square else None
        mats = []
        for t in self.terms:
            if fold and square and all(_is_diag_factor(f) for f in t.factors):
                d = np.full(self.n_out, t.coef)
                for f in t.factors:
                    d = d * f
                diag_acc += d
                continue
            m = _chain(t.factors, self.n_in, fold)
            mats.append(m if t.coef == 1.0 else t.coef * m)
        if sparse:
            out = sp.csr_matrix((self.n_out, self.n_in))
            for m in mats:
                out = out + sp.csr_matrix(m)
            if diag_acc is not None and np.any(diag_acc):
                out = out + mx.diag(diag_acc)
            out = sp.csr_matrix(out)
            out.sort_indices()
            return out
        out = np.zeros((self.n_out, self.n_in))
        for m in mats:
            out += mx.to_dense(m)
        if diag_acc is not None:
            out[np.diag_indices(self.n_out)] += diag_acc
        return out


def _chain(factors: list, n_in: int, fold: bool):
    """Multiply a factor chain right to left."""
    if not factors:
        return mx.identity(n_in)
    # while acc_diag is set, the running product is still diagonal
    acc_diag = None
    acc = None
    for f in reversed(factors):
        if _is_diag_factor(f):
            if acc is None:
                acc_diag = f if acc_diag is None else f * acc_diag
            elif fold:
                acc = mx.scale_rows(f, acc)
            else:
                acc = mx.diag(f) @ acc
        else:
            if acc is not None:
                acc = f @ acc
            elif acc_diag is None:
                acc = f
            elif fold:
                acc = mx.scale_cols(f, acc_diag)
            else:
                acc = f @ mx.diag(acc_diag)
            acc_diag = None
    return mx.diag(acc_diag) if acc is None else acc


# --------------------------------------------------------------------------
# differentiation
# --------------------------------------------------------------------------


def _jac(e: Expr, var: str, env: Environment, n_in: int, cache: dict) -> JacSum:
    if isinstance(e, Var):
        n = evaluate(e, env, cache).size
        if e.name == var:
            return JacSum.identity(n)
        return JacSum.zero(n, n_in)
    if isinstance(e, Const):
        return JacSum.zero(e.value.size, n_in)
    if isinstance(e, MatVec):
        inner = _jac(e.child, var, env, n_in, cache)
        if inner.is_zero:
            return JacSum.zero(e.a.shape[0], n_in)
        return inner.lmul_mat(e.a)
    if isinstance(e, Cwise):
        inner = _jac(e.child, var, env, n_in, cache)
        if inner.is_zero:
            return JacSum.zero(inner.n_out, n_in)
        return inner.lmul_diag(e.fn.deriv(evaluate(e.child, env, cache)))
    if isinstance(e, Hadamard):
        f = evaluate(e.left, env, cache)
        g = evaluate(e.right, env, cache)
        _same_length(f, g, "Hadamard product")
        jf = _jac(e.left, var, env, n_in, cache)
        jg = _jac(e.right, var, env, n_in, cache)
        out = JacSum.zero(f.size, n_in)
        if not jf.is_zero:
            out = out + jf.lmul_diag(g)
        if not jg.is_zero:
            out = out + jg.lmul_diag(f)
        return out
    if isinstance(e, LinComb):
        n = evaluate(e, env, cache).size
        out = JacSum.zero(n, n_in)
        for c, t in e.terms:
            jt = _jac(t, var, env, n_in, cache)
            if c != 0.0 and not jt.is_zero:
                out = out + jt.scaled(c)
        return out
    if isinstance(e, AffineShift):
        return _jac(e.child, var, env, n_in, cache)
    raise TypeError(f"unknown expression node {type(e).__name__}")


def jacobian_terms(e: Expr, var: str, env: Environment) -> JacSum:
    """Unmaterialized Jacobian of ``e`` with respect to ``var``."""
    n_in = _lookup(env, var).size
    cache: dict = {}
    evaluate(e, env, cache)
    return _jac(e, var, env, n_in, cache)


def jacobian(e: Expr, var: str, env: Environment, fold: bool = True, sparse: bool | None = None):
    """Matrix ``d e / d var`` at the point ``env``."""
    return jacobian_terms(e, var, env).materialize(fold=fold, sparse=sparse)


def jacobian_blocks(
    exprs: Sequence[Expr], variables: Sequence[str], env: Environment, sparse: bool | None = None
) -> list[list]:
    """``[[d exprs[i] / d variables[j]]]`` as a nested list of matrices."""
    return [[jacobian(e, v, env, sparse=sparse) for v in variables] for e in exprs]


def assemble_blocks(blocks: list[list]):
    """Stack a nested block list into one matrix (sparse if any block is)."""
    if any(sp.issparse(b) for row in blocks for b in row):
        return sp.bmat([[sp.csr_matrix(b) for b in row] for row in blocks], format="csr")
    return np.block([[mx.to_dense(b) for b in row] for row in blocks])


Node = Union[Var, Const, MatVec, Cwise, Hadamard, LinComb, AffineShift]
