"""Two-dimensional balance probes, two-scale bumps and the Hardy-type gap.

A balance ``L`` pairs a trial vector ``x`` with ``L x``; the 2x2 pencil of
the channel Hamiltonian on ``span{x, Lx}`` has eigenvalues
``mu1 <= mu2``. For kinetic and atomic balance ``x = (phi, 0)``; for dual
kinetic balance ``x = (phi, eps D phi)`` and ``Lx = (eps D^+ phi, -phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .bases import BSplineBasis, QuadratureRule, make_basis, make_rule
from .dirac import (
    COULOMB_LIMIT,
    DiracChannelModel,
    SchemeSpec,
    TrialFamily,
    _form_matrices,
    _spline_tables,
    assemble_dirac,
)
from .eig import GeneralizedPencil, eig_generalized
from .errors import DegenerateBalanceError, ResolutionError, ValidationError

__all__ = [
    "ChannelSample",
    "mu2_probe",
    "atomic_balance_mu2_bound",
    "smooth_annulus",
    "bump_constants",
    "minimal_bump_delta",
    "bump_determinant_coefficient",
    "bump_basis",
    "two_scale_bump",
    "bump_sweep",
    "hardy_terms",
    "hardy_gap",
    "hardy_mass",
    "ground_upper_component",
    "random_trial_coefficients",
]

NORM_FLOOR = 1e-13


# --------------------------------------------------------------------------
# mu2 probe
# --------------------------------------------------------------------------


def _probe_pair(model, scheme, phi):
    basis = model.basis
    phi = np.asarray(phi, float)
    if phi.shape != (basis.count,):
        raise ValidationError(f"phi must have {basis.count} coefficients, got shape {phi.shape}")
    rule = make_rule(basis)
    x, w = rule.nodes, rule.weights
    b, db, dadjb, ddadjb = _spline_tables(basis, x, model.kappa_d, basis.count)
    p, dp, dadjp, ddadjp = b @ phi, db @ phi, dadjb @ phi, ddadjb @ phi
    zero = np.zeros_like(p)
    kind = scheme.kind
    if kind == "kinetic_balance":
        cols = [(p, dp, zero), (zero, zero, dp)]
    elif kind == "atomic_balance":
        v = model.potential(x)
        if not model.potential.sup_v < 2.0:
            raise ValidationError("atomic balance needs sup V < 2")
        cols = [(p, dp, zero), (zero, zero, dp / (2.0 - v))]
    elif kind == "dual_kinetic_balance":
        eps = scheme.epsilon
        cols = [(p, dp, eps * dp), (eps * dadjp, eps * ddadjp, -p)]
    else:
        raise ValidationError(f"mu2 probe needs a balance scheme, got {kind!r}")
    g, dg, f = (np.column_stack(c) for c in zip(*cols))
    return TrialFamily(x, w, g, dg, f, 1)


def mu2_probe(model: DiracChannelModel, scheme: SchemeSpec, phi) -> tuple[float, float]:
    """Ordered eigenvalues of the channel Hamiltonian on ``span{x, Lx}``."""
    fam = _probe_pair(model, scheme, phi)
    h, s = _form_matrices(fam, model.potential(fam.x))
    nx, nl = sqrt(max(s[0, 0], 0.0)), sqrt(max(s[1, 1], 0.0))
    if nx < NORM_FLOOR:
        raise ValidationError("phi is numerically zero")
    if nl < NORM_FLOOR * max(nx, 1.0):
        raise DegenerateBalanceError(f"balance image norm {nl:.3e} is below the floor")
    # normalize both columns so the 2x2 overlap is well scaled
    d = np.array([1.0 / nx, 1.0 / nl])
    h, s = h * np.outer(d, d), s * np.outer(d, d)
    vals = eig_generalized(GeneralizedPencil(h, s)).values
    return float(vals[0]), float(vals[1])


def atomic_balance_mu2_bound(kappa: float) -> float:
    """Lower bound ``1 - 2 (1 - s)/(1 + s)``, ``s = sqrt(1 - kappa^2)``."""
    s = sqrt(1.0 - kappa * kappa)
    return 1.0 - 2.0 * (1.0 - s) / (1.0 + s)


# --------------------------------------------------------------------------
# Two-scale bump
# --------------------------------------------------------------------------


def _psi(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dpsi(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def _step(t):
    a, b = _psi(t), _psi(1.0 - t)
    return a / (a + b)


def _dstep(t):
    a, b = _psi(t), _psi(1.0 - t)
    da, db = _dpsi(t), -_dpsi(1.0 - t)
    return (da * b - a * db) / (a + b) ** 2


def smooth_annulus(s, derivative: bool = False):
    """Smooth radial profile: 1 on ``[2, 3]``, 0 outside ``[1, 4]``."""
    s = np.asarray(s, float)
    rise, fall = s - 1.0, 4.0 - s
    if not derivative:
        return np.where(s <= 2.5, _step(rise), _step(fall))
    return np.where(s <= 2.5, _dstep(rise), -_dstep(fall))


def bump_constants(n_panels: int = 400) -> dict:
    """``N, D, C1, C2`` of the annular profile (3D integrals over the radial variable).

    The common solid-angle factor is dropped; only ratios enter the probes.
    """
    rule = make_rule(np.linspace(1.0, 4.0, n_panels + 1), 8)
    r, w = rule.nodes, rule.weights
    z, dz = smooth_annulus(r), smooth_annulus(r, True)
    return {
        "N": float(np.sum(w * z * z * r * r)),
        "D": float(np.sum(w * dz * dz * r * r)),
        "C1": float(np.sum(w * z * z * r)),
        "C2": float(np.sum(w * dz * dz * r)),
    }


def minimal_bump_delta(kappa: float, constants: dict | None = None) -> float:
    """Smallest ``delta >= 4`` with ``kappa^2 (1 + 1/delta)(1 + delta) C1 C2 > 4 D^2``.

    Above this threshold the determinant of the normalized 2x2 bump matrix
    grows like ``+n^2``.
    """
    c = constants or bump_constants()
    # (1 + 1/d)(1 + d) = 2 + d + 1/d; solve d + 1/d = target
    target = 4.0 * c["D"] ** 2 / (kappa**2 * c["C1"] * c["C2"]) - 2.0
    if target <= 2.0:
        return 4.0
    d = 0.5 * (target + sqrt(target * target - 4.0))
    return max(4.0, d)


def bump_determinant_coefficient(kappa: float, delta: float, constants: dict | None = None) -> float:
    """Leading ``n^2`` coefficient of ``mu1 mu2`` for the two-scale bump."""
    c = constants or bump_constants()
    x = (1.0 + 1.0 / delta) * (1.0 + delta)
    num = kappa**2 * x * c["C1"] * c["C2"] - 4.0 * c["D"] ** 2
    return num / (2.0 * (1.0 + delta**-2) * c["N"] * c["D"])


def bump_basis(n_max: int, delta: float, size: int = 300, order: int = 6,
               r_max: float | None = None) -> BSplineBasis:
    """Graded basis resolving both scales of every bump up to ``n_max``."""
    r_inner = 1.0 / (delta * n_max)
    r_max = 5.0 if r_max is None else r_max
    n_int = size - order + 3
    # first interval a tenth of the innermost support start
    h0 = 0.1 * r_inner
    lo, hi = 1.0 + 1e-12, 2.0
    while h0 * (hi**n_int - 1.0) / (hi - 1.0) < r_max:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h0 * (mid**n_int - 1.0) / (mid - 1.0) < r_max:
            lo = mid
        else:
            hi = mid
    steps = h0 * hi ** np.arange(n_int)
    bp = np.concatenate([[0.0], np.cumsum(steps)])
    bp *= r_max / bp[-1]
    return make_basis(order, bp)


def _bump_profile(n, delta, r):
    """Radial function ``G = r phi_n`` and its derivative."""
    pieces = [(n, sqrt(n)), (delta * n, sqrt(delta * n))]
    g = np.zeros_like(r)
    dg = np.zeros_like(r)
    for scale, amp in pieces:
        z = smooth_annulus(scale * r)
        dz = smooth_annulus(scale * r, True) * scale
        g += amp * r * z
        dg += amp * (z + r * dz)
    return g, dg


def two_scale_bump(n: int, delta: float, basis: BSplineBasis, min_intervals: int = 8):
    """Best L2 spline approximation of ``r (n^1/2 z(n r) + (delta n)^1/2 z(delta n r))``.

    Raises :class:`ResolutionError` when fewer than ``min_intervals`` knot
    intervals cover the inner annulus or the outer annulus leaves the domain.
    """
    if n < 1:
        raise ValidationError("n must be a positive integer")
    if delta < 4.0:
        raise ValidationError("delta must be >= 4 for disjoint supports")
    lo, hi = 1.0 / (delta * n), 4.0 / (delta * n)
    if 4.0 / n > basis.domain[1]:
        raise ResolutionError(f"outer annulus [1/n, 4/n] = [{1 / n:g}, {4 / n:g}] leaves the domain")
    bp = basis.breakpoints
    inside = np.count_nonzero((bp > lo) & (bp < hi)) + 1
    if inside < min_intervals:
        raise ResolutionError(
            f"only {inside} knot intervals cover the inner annulus [{lo:.3g}, {hi:.3g}]"
        )
    rule = make_rule(basis)
    x, w = rule.nodes, rule.weights
    b = basis.design(x)
    g, _ = _bump_profile(n, delta, x)
    gram = b.T @ (w[:, None] * b)
    rhs = b.T @ (w * g)
    return np.linalg.solve(gram, rhs)


def bump_sweep(kappa_c: float, ns=(1, 2, 4, 8), delta: float | None = None,
               size: int = 300) -> dict:
    """Kinetic-balance probe along the two-scale bump family for ``-kappa_c/r``.

    Returns the per-``n`` eigenvalue pairs, the determinants ``mu1 mu2`` and
    a quadratic least-squares fit of the determinant in ``n``.
    """
    from .dirac import PotentialSpec

    if delta is None:
        delta = 4.0 * minimal_bump_delta(kappa_c)
    basis = bump_basis(max(ns), delta, size)
    model = DiracChannelModel(-1, PotentialSpec.coulomb(kappa_c), basis)
    scheme = SchemeSpec("kinetic_balance")
    rows = []
    for n in ns:
        mu1, mu2 = mu2_probe(model, scheme, two_scale_bump(n, delta, basis))
        rows.append((n, mu1, mu2, mu1 * mu2))
    arr = np.array(rows)
    if len(rows) < 3:
        # a quadratic fit needs three points
        return {"delta": delta, "rows": rows, "quad_coef": np.nan, "r2": np.nan}
    coef = np.polyfit(arr[:, 0], arr[:, 3], 2)
    fit = np.polyval(coef, arr[:, 0])
    ss_res = float(np.sum((arr[:, 3] - fit) ** 2))
    ss_tot = float(np.sum((arr[:, 3] - arr[:, 3].mean()) ** 2))
    return {
        "delta": delta,
        "rows": rows,
        "quad_coef": float(coef[0]),
        "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
    }


# --------------------------------------------------------------------------
# Hardy-type inequality
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSample:
    """Upper radial component ``G`` and ``D G`` sampled on a quadrature rule."""

    nodes: np.ndarray
    weights: np.ndarray
    g: np.ndarray
    dg: np.ndarray

    @classmethod
    def from_spline(cls, basis: BSplineBasis, coeffs, kappa_d: int = -1):
        rule = make_rule(basis)
        x = rule.nodes
        b0, b1 = basis.design_all(x, 1)
        c = np.asarray(coeffs, float)
        g = b0 @ c
        return cls(x, rule.weights, g, b1 @ c + kappa_d * g / x)

    @classmethod
    def from_callable(cls, g, dg, rule: QuadratureRule, kappa_d: int = -1):
        x = rule.nodes
        gv = np.asarray(g(x), float)
        return cls(x, rule.weights, gv, np.asarray(dg(x), float) + kappa_d * gv / x)


def hardy_mass(kappa: float) -> float:
    """Mass parameter ``1 + sqrt(1 - kappa^2)`` at which the inequality is sharp."""
    return 1.0 + sqrt(1.0 - kappa * kappa)


def hardy_terms(g: ChannelSample, kappa: float, m_param: float) -> tuple[float, float]:
    """Left and right sides of the Hardy-type inequality for the upper component."""
    if not 0.0 <= kappa < COULOMB_LIMIT:
        raise ValidationError(f"kappa must lie in [0, sqrt(3)/2), got {kappa}")
    if m_param <= 0:
        raise ValidationError("m_param must be positive")
    x, w = g.nodes, g.weights
    s = sqrt(1.0 - kappa * kappa)
    kinetic = np.sum(w * g.dg**2 / (m_param + kappa / x))
    mass = m_param * (1.0 - s) / (1.0 + s) * np.sum(w * g.g**2)
    rhs = kappa * np.sum(w * g.g**2 / x)
    return float(kinetic + mass), float(rhs)


def hardy_gap(g: ChannelSample, kappa: float, m_param: float) -> float:
    """LHS minus RHS of the Hardy-type inequality (nonnegative for admissible ``g``)."""
    lhs, rhs = hardy_terms(g, kappa, m_param)
    return lhs - rhs


def ground_upper_component(model: DiracChannelModel, scheme: SchemeSpec) -> tuple[float, ChannelSample]:
    """Lowest in-gap eigenvalue and the upper component of its eigenvector."""
    pencil, fam = assemble_dirac(model, scheme, return_family=True)
    dec = eig_generalized(pencil, want_vectors=True, condition_cap=model.condition_cap)
    vals = dec.values
    idx = np.nonzero((vals > -1.0) & (vals < 1.0))[0]
    if idx.size == 0:
        raise ValidationError("no eigenvalue inside the gap")
    k = int(idx[0])
    vec = np.asarray(dec.vectors)[:, k].real
    return float(vals[k]), ChannelSample(fam.x, fam.w, fam.g @ vec, fam.dg @ vec)


def random_trial_coefficients(basis: BSplineBasis, rng: np.random.Generator,
                              keep_clear: int | None = None) -> np.ndarray:
    """Random coefficients on a random contiguous index window.

    The last ``keep_clear`` splines (default: the order) are left out so the
    function vanishes near the outer boundary.
    """
    n = basis.count
    keep_clear = basis.order if keep_clear is None else keep_clear
    top = n - keep_clear
    if top < 2:
        raise ValidationError("basis too small for random trial vectors")
    i0 = int(rng.integers(0, top - 1))
    i1 = int(rng.integers(i0 + 1, top + 1))
    c = np.zeros(n)
    c[i0:i1] = rng.standard_normal(i1 - i0)
    return c
