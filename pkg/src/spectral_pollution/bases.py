"""B-spline radial bases and composite Gauss-Legendre quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError, EvaluationError, ValidationError

__all__ = [
    "BSplineBasis",
    "QuadratureRule",
    "RadialFunction",
    "make_basis",
    "eval_basis",
    "integrate",
    "make_rule",
    "uniform_breakpoints",
    "graded_breakpoints",
    "DEFAULT_ORDER",
    "DEFAULT_R_MAX",
    "DEFAULT_RATIO",
]

DEFAULT_ORDER = 6
DEFAULT_R_MAX = 40.0
DEFAULT_BREAKPOINTS = 60
DEFAULT_RATIO = 1.1


def uniform_breakpoints(n_points: int, r_max: float = DEFAULT_R_MAX, r_min: float = 0.0):
    return np.linspace(r_min, r_max, n_points)


def graded_breakpoints(
    n_points: int = DEFAULT_BREAKPOINTS,
    r_max: float = DEFAULT_R_MAX,
    ratio: float = DEFAULT_RATIO,
):
    """Breakpoints on ``[0, r_max]`` whose spacing grows geometrically by ``ratio``."""
    if n_points < 2:
        raise ValidationError("need at least two breakpoints")
    n_int = n_points - 1
    if ratio == 1.0:
        return uniform_breakpoints(n_points, r_max)
    steps = ratio ** np.arange(n_int)
    r = np.concatenate([[0.0], np.cumsum(steps)])
    return r_max * r / r[-1]


@dataclass(frozen=True)
class BSplineBasis:
    """B-splines of a given order with Dirichlet conditions at both ends.

    ``knots`` is the full knot vector (end knots repeated ``order`` times).
    The first and last B-splines are dropped, so every retained function
    vanishes at both endpoints and behaves like ``O(r)`` at the origin.
    """

    order: int
    knots: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.knots, float)
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def n_full(self) -> int:
        return len(self.knots) - self.order

    @property
    def count(self) -> int:
        return self.n_full - 2

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def design(self, x, deriv: int = 0) -> np.ndarray:
        """Matrix ``M[p, i] = d^deriv B_i(x_p)`` over the retained functions."""
        return _design_full(self.knots, self.order, np.atleast_1d(np.asarray(x, float)), deriv)[
            :, 1:-1
        ]

    def design_all(self, x, max_deriv: int = 2) -> list[np.ndarray]:
        x = np.atleast_1d(np.asarray(x, float))
        return [
            m[:, 1:-1] for m in _design_full_upto(self.knots, self.order, x, max_deriv)
        ]

    def full_design(self, x, deriv: int = 0) -> np.ndarray:
        """Same as :meth:`design` but including the two boundary splines."""
        return _design_full(self.knots, self.order, np.atleast_1d(np.asarray(x, float)), deriv)


def make_basis(order: int, breakpoints) -> BSplineBasis:
    """Build a Dirichlet B-spline basis.

    ``count = len(breakpoints) - 2 + order - 2``.
    """
    bp = np.asarray(breakpoints, float)
    if int(order) != order or order < 2:
        raise ValidationError(f"spline order must be an integer >= 2, got {order}")
    if bp.ndim != 1 or len(bp) < 2:
        raise ValidationError("need at least two breakpoints")
    if np.any(np.diff(bp) <= 0.0):
        raise ValidationError("breakpoints must be strictly increasing")
    k = int(order)
    knots = np.concatenate([np.full(k - 1, bp[0]), bp, np.full(k - 1, bp[-1])])
    basis = BSplineBasis(k, knots)
    if basis.count < 1:
        raise ValidationError("no interior basis functions remain after boundary removal")
    return basis


def _cox_de_boor(t, k, x):
    """Values of all B-splines of orders 1..k at x, as a list indexed by order."""
    n_int = len(t) - 1
    x = np.asarray(x, float)
    # interval index mu with t[mu] <= x < t[mu+1]; right endpoint joins last nonempty interval
    mu = np.searchsorted(t, x, side="right") - 1
    last = np.max(np.nonzero(np.diff(t) > 0)[0])
    mu = np.where(x >= t[-1], last, mu)
    mu = np.clip(mu, 0, n_int - 1)
    b = np.zeros((x.size, n_int))
    b[np.arange(x.size), mu] = 1.0
    out = [None, b]
    for j in range(2, k + 1):
        nf = len(t) - j
        new = np.zeros((x.size, nf))
        left_den = t[j - 1 : j - 1 + nf] - t[:nf]
        right_den = t[j : j + nf] - t[1 : 1 + nf]
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.where(left_den > 0, (x[:, None] - t[:nf]) / left_den, 0.0)
            rw = np.where(right_den > 0, (t[j : j + nf] - x[:, None]) / right_den, 0.0)
        new += lw * b[:, :nf]
        new += rw * b[:, 1 : 1 + nf]
        b = new
        out.append(b)
    return out


def _differentiate(t, j, arr_lower):
    """d/dx of order-j splines given the (already differentiated) order j-1 array."""
    nf = len(t) - j
    left_den = t[j - 1 : j - 1 + nf] - t[:nf]
    right_den = t[j : j + nf] - t[1 : 1 + nf]
    with np.errstate(divide="ignore", invalid="ignore"):
        lc = np.where(left_den > 0, (j - 1) / left_den, 0.0)
        rc = np.where(right_den > 0, (j - 1) / right_den, 0.0)
    return lc * arr_lower[:, :nf] - rc * arr_lower[:, 1 : 1 + nf]


def _design_full_upto(t, k, x, max_deriv):
    table = _cox_de_boor(t, k, x)
    result = [table[k]]
    for d in range(1, max_deriv + 1):
        if d >= k:
            result.append(np.zeros_like(table[k]))
            continue
        arr = table[k - d]
        for j in range(k - d + 1, k + 1):
            arr = _differentiate(t, j, arr)
        result.append(arr)
    return result


def _design_full(t, k, x, deriv):
    if deriv not in (0, 1, 2):
        raise ValidationError(f"derivative order must be 0, 1 or 2, got {deriv}")
    return _design_full_upto(t, k, x, deriv)[deriv]


def eval_basis(b: BSplineBasis, i: int, r: float, derivative_order: int = 0) -> float:
    """Value (or first derivative) of retained basis function ``i`` at ``r``."""
    if not 0 <= i < b.count:
        raise DomainError(f"basis index {i} outside [0, {b.count})")
    lo, hi = b.domain
    if not lo <= r <= hi:
        raise DomainError(f"r = {r} outside the basis domain [{lo}, {hi}]")
    if derivative_order not in (0, 1):
        raise ValidationError("derivative_order must be 0 or 1")
    return float(b.design([r], derivative_order)[0, i])


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule, one panel per nonempty knot interval."""

    panels: tuple
    points_per_panel: int

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([p[1] for p in self.panels])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([p[2] for p in self.panels])


def make_rule(breakpoints_or_basis, points_per_panel: int | None = None) -> QuadratureRule:
    """Gauss-Legendre panels on every interval of a breakpoint set or basis.

    Defaults to ``2 * order`` points per panel for a basis.
    """
    if isinstance(breakpoints_or_basis, BSplineBasis):
        bp = breakpoints_or_basis.breakpoints
        if points_per_panel is None:
            points_per_panel = 2 * breakpoints_or_basis.order
    else:
        bp = np.asarray(breakpoints_or_basis, float)
        if points_per_panel is None:
            raise ValidationError("points_per_panel is required for raw breakpoints")
    if points_per_panel < 1:
        raise ValidationError("points_per_panel must be positive")
    xg, wg = leggauss(points_per_panel)
    panels = []
    for a, b in zip(bp[:-1], bp[1:]):
        half = 0.5 * (b - a)
        panels.append(((float(a), float(b)), a + half * (xg + 1.0), half * wg))
    return QuadratureRule(tuple(panels), int(points_per_panel))


@dataclass(frozen=True)
class RadialFunction:
    """Scalar radial function with declared ``O(r^-s)`` behaviour at the origin."""

    evaluator: Callable
    singularity_order: int = 0

    def __call__(self, r):
        return self.evaluator(r)


def integrate(rule: QuadratureRule, f) -> float:
    """Composite Gauss-Legendre integral of ``f`` over the rule's support.

    ``f`` may be a :class:`RadialFunction` or a plain callable (treated as
    regular). Integrands singular worse than ``1/r`` are rejected.
    """
    if not isinstance(f, RadialFunction):
        f = RadialFunction(f, 0)
    if f.singularity_order > 1:
        raise ValidationError(
            f"singularity order {f.singularity_order} > 1 is not supported"
        )
    x = rule.nodes
    vals = np.broadcast_to(np.asarray(f(x)), x.shape)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        node = float(x[np.argmax(bad)])
        raise EvaluationError(f"integrand is not finite at node r = {node!r}")
    total = np.sum(rule.weights * vals)
    return complex(total) if np.iscomplexobj(total) else float(total)
