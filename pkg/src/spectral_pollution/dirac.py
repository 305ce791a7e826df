"""Radial-channel Dirac operator and its splitting / balance Galerkin schemes.

Units are ``m = c = 1``. A channel with angular number ``kappa_d`` acts on
pairs ``(G, F)`` of radial functions (already multiplied by ``r``) as::

    H = [[1 + V,           -d/dr + kappa_d/r],
         [d/dr + kappa_d/r, -1 + V          ]]

Throughout, ``D = d/dr + kappa_d/r`` maps upper to lower components and
``D^+ = -d/dr + kappa_d/r`` is its formal adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import sqrt

import numpy as np

from .bases import (
    DEFAULT_ORDER,
    DEFAULT_R_MAX,
    BSplineBasis,
    QuadratureRule,
    graded_breakpoints,
    make_basis,
    make_rule,
)
from .eig import DEFAULT_CONDITION_CAP, GeneralizedPencil, eig_generalized
from .errors import SchemeInadmissibleError, ValidationError

__all__ = [
    "COULOMB_LIMIT",
    "PotentialSpec",
    "SchemeSpec",
    "DiracChannelModel",
    "TrialFamily",
    "assemble_dirac",
    "build_family",
    "channel_basis",
    "coulomb_levels",
    "dirac_coulomb_eigenvalue",
    "solve_dirac",
]

COULOMB_LIMIT = sqrt(3.0) / 2.0
DEFAULT_EPSILON = 0.5
# last/first interval ratio of the graded grid (60 breakpoints, ratio 1.1)
GRADING_STRETCH = 1.1 ** 58


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------

POTENTIAL_KINDS = ("zero", "gaussian_bump", "gaussian_well", "coulomb", "smeared_coulomb")


@dataclass(frozen=True)
class PotentialSpec:
    """Radial potential ``V(r)``.

    kinds
        ``zero``; ``gaussian_bump(v0, width)``: ``v0 exp(-r^2/width^2)``;
        ``gaussian_well(v0, width)``: ``-v0 exp(-r^2/width^2)``;
        ``coulomb(kappa_c)``: ``-kappa_c/r``;
        ``smeared_coulomb(kappa_c, r_cut)``: field of a uniformly charged
        ball of radius ``r_cut``.
    """

    kind: str = "zero"
    v0: float = 0.0
    width: float = 1.0
    kappa_c: float = 0.0
    r_cut: float = 1.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if self.kind in ("gaussian_bump", "gaussian_well"):
            if self.v0 < 0 or self.width <= 0:
                raise ValidationError("gaussian potentials need v0 >= 0 and width > 0")
        if self.kind == "coulomb" and not 0.0 < self.kappa_c < COULOMB_LIMIT:
            raise ValidationError(
                f"coulomb strength must satisfy 0 < kappa_c < sqrt(3)/2, got {self.kappa_c}"
            )
        if self.kind == "smeared_coulomb":
            if self.kappa_c <= 0 or self.r_cut <= 0:
                raise ValidationError("smeared_coulomb needs kappa_c > 0 and r_cut > 0")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def gaussian_well(cls, v0, width=1.0):
        return cls("gaussian_well", v0=v0, width=width)

    @classmethod
    def gaussian_bump(cls, v0, width=1.0):
        return cls("gaussian_bump", v0=v0, width=width)

    @classmethod
    def coulomb(cls, kappa_c):
        return cls("coulomb", kappa_c=kappa_c)

    @classmethod
    def smeared_coulomb(cls, kappa_c, r_cut):
        return cls("smeared_coulomb", kappa_c=kappa_c, r_cut=r_cut)

    def __call__(self, r):
        r = np.asarray(r, float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "gaussian_bump":
            return self.v0 * np.exp(-((r / self.width) ** 2))
        if self.kind == "gaussian_well":
            return -self.v0 * np.exp(-((r / self.width) ** 2))
        if self.kind == "coulomb":
            return -self.kappa_c / r
        inside = -self.kappa_c * (3.0 - (r / self.r_cut) ** 2) / (2.0 * self.r_cut)
        with np.errstate(divide="ignore"):
            outside = -self.kappa_c / r
        return np.where(r < self.r_cut, inside, outside)

    @property
    def is_bounded(self) -> bool:
        return self.kind != "coulomb"

    @property
    def singularity_order(self) -> int:
        return 1 if self.kind == "coulomb" else 0

    @property
    def sup_v(self) -> float:
        return self.v0 if self.kind == "gaussian_bump" else 0.0

    @property
    def inf_v(self) -> float:
        if self.kind == "gaussian_well":
            return -self.v0
        if self.kind == "coulomb":
            return -np.inf
        if self.kind == "smeared_coulomb":
            return -1.5 * self.kappa_c / self.r_cut
        return 0.0

    @property
    def sup_abs(self) -> float:
        return max(abs(self.sup_v), abs(self.inf_v))

    def describe(self) -> str:
        if self.kind == "zero":
            return "V=0"
        if self.kind in ("gaussian_bump", "gaussian_well"):
            return f"{self.kind}(v0={self.v0:g}, width={self.width:g})"
        if self.kind == "coulomb":
            return f"coulomb(kappa_c={self.kappa_c:g})"
        return f"smeared_coulomb(kappa_c={self.kappa_c:g}, r_cut={self.r_cut:g})"


# --------------------------------------------------------------------------
# Schemes
# --------------------------------------------------------------------------

SCHEME_KINDS = (
    "naive",
    "upper_lower",
    "dual",
    "free_split",
    "kinetic_balance",
    "atomic_balance",
    "dual_kinetic_balance",
)
BALANCE_KINDS = ("kinetic_balance", "atomic_balance", "dual_kinetic_balance")


@dataclass(frozen=True)
class SchemeSpec:
    """Which splitting and/or balance generates the trial spaces.

    ``epsilon`` is used by ``dual`` and ``dual_kinetic_balance``;
    ``angles`` (optional) by ``naive``, defaulting to ``1/sqrt(i+1)``;
    ``ref_factor`` by ``free_split`` (size of the reference discretization of
    the free operator relative to the trial size).
    """

    kind: str
    epsilon: float = DEFAULT_EPSILON
    angles: tuple | None = None
    ref_factor: int = 1

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValidationError(f"unknown scheme kind {self.kind!r}")
        if self.kind in ("dual", "dual_kinetic_balance") and not 0.0 < self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must satisfy 0 < epsilon <= 1, got {self.epsilon}")
        if self.ref_factor < 1:
            raise ValidationError("ref_factor must be >= 1")

    @property
    def is_balance(self) -> bool:
        return self.kind in BALANCE_KINDS

    def describe(self) -> str:
        if self.kind in ("dual", "dual_kinetic_balance"):
            return f"{self.kind}(epsilon={self.epsilon:g})"
        return self.kind


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


def channel_basis(
    size: int,
    order: int = DEFAULT_ORDER,
    r_max: float = DEFAULT_R_MAX,
    graded: bool = True,
    stretch: float = GRADING_STRETCH,
) -> BSplineBasis:
    """Dirichlet spline basis with exactly ``size`` functions on ``[0, r_max]``.

    Graded grids keep the ratio of the last to the first interval fixed at
    ``stretch`` for every size, so refinement is uniform in the graded
    coordinate (60 breakpoints reproduce the ratio-1.1 grid).
    """
    n_points = size - order + 4
    if n_points < 2:
        raise ValidationError(f"size {size} too small for spline order {order}")
    if graded and n_points > 2:
        ratio = stretch ** (1.0 / (n_points - 2))
        bp = graded_breakpoints(n_points, r_max, ratio)
    else:
        bp = np.linspace(0.0, r_max, n_points)
    basis = make_basis(order, bp)
    assert basis.count == size
    return basis


@dataclass(frozen=True)
class DiracChannelModel:
    """One angular channel of ``D^0 + V`` discretized on a spline basis."""

    kappa_d: int = -1
    potential: PotentialSpec = field(default_factory=PotentialSpec.zero)
    basis: BSplineBasis | None = None
    condition_cap: float = DEFAULT_CONDITION_CAP

    def __post_init__(self):
        if int(self.kappa_d) != self.kappa_d or self.kappa_d == 0:
            raise ValidationError(f"kappa_d must be a nonzero integer, got {self.kappa_d}")
        if self.basis is None:
            object.__setattr__(self, "basis", channel_basis(60 + DEFAULT_ORDER - 4))

    @classmethod
    def for_size(cls, size, kappa_d=-1, potential=None, order=DEFAULT_ORDER,
                 r_max=DEFAULT_R_MAX, graded=None, **kw):
        potential = potential or PotentialSpec.zero()
        if graded is None:
            graded = True
        return cls(kappa_d, potential, channel_basis(size, order, r_max, graded), **kw)

    def with_size(self, size: int) -> "DiracChannelModel":
        """Same model on the size-``size`` member of its breakpoint family."""
        b = self.basis
        bp = b.breakpoints
        graded = not np.allclose(np.diff(bp), bp[1] - bp[0])
        return replace(self, basis=channel_basis(size, b.order, b.domain[1], graded))

    @property
    def rule(self) -> QuadratureRule:
        return make_rule(self.basis)


# --------------------------------------------------------------------------
# Trial families
# --------------------------------------------------------------------------


@dataclass
class TrialFamily:
    """Trial spinors sampled at quadrature nodes.

    Columns are trial functions. ``g`` and ``f`` are the upper/lower radial
    components, ``dg`` is ``D g`` (needed for the symmetric coupling form).
    """

    x: np.ndarray
    w: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    f: np.ndarray
    n_plus: int

    @property
    def size(self) -> int:
        return self.g.shape[1]

    def combine(self, coeffs: np.ndarray, n_plus: int) -> "TrialFamily":
        return TrialFamily(self.x, self.w, self.g @ coeffs, self.dg @ coeffs,
                           self.f @ coeffs, n_plus)


def _spline_tables(basis, x, kappa_d, size):
    b0, b1, b2 = basis.design_all(x, 2)
    b0, b1, b2 = b0[:, :size], b1[:, :size], b2[:, :size]
    inv_r = (1.0 / x)[:, None]
    d_b = b1 + kappa_d * b0 * inv_r
    dadj_b = -b1 + kappa_d * b0 * inv_r
    d_dadj_b = -b2 + kappa_d * (kappa_d - 1) * b0 * inv_r**2
    return b0, d_b, dadj_b, d_dadj_b


def build_family(model: DiracChannelModel, scheme: SchemeSpec, size: int | None = None):
    """Trial family ``V_n = V_n^+ (+) V_n^-`` for a scheme on the first ``size`` splines."""
    basis = model.basis
    size = basis.count if size is None else int(size)
    if not 1 <= size <= basis.count:
        raise ValidationError(f"size {size} outside [1, {basis.count}]")
    pot = model.potential
    kind = scheme.kind
    if kind == "atomic_balance" and not pot.sup_v < 2.0:
        raise SchemeInadmissibleError(
            f"atomic balance needs sup V < 2, got sup V = {pot.sup_v:g}"
        )
    rule = make_rule(basis)
    x, w = rule.nodes, rule.weights
    b, db, dadjb, ddadjb = _spline_tables(basis, x, model.kappa_d, size)
    zero = np.zeros_like(b)

    if kind in ("upper_lower", "kinetic_balance", "atomic_balance"):
        if kind == "upper_lower":
            lower = b
        elif kind == "kinetic_balance":
            lower = db
        else:
            lower = db / (2.0 - pot(x))[:, None]
        g = np.hstack([b, zero])
        dg = np.hstack([db, zero])
        f = np.hstack([zero, lower])
        return TrialFamily(x, w, g, dg, f, size)

    if kind == "naive":
        if scheme.angles is not None:
            alpha = np.asarray(scheme.angles, float)
            if alpha.size < size:
                raise ValidationError(f"need {size} mixing angles, got {alpha.size}")
            alpha = alpha[:size]
        else:
            alpha = 1.0 / np.sqrt(np.arange(size) + 1.0)
        c, s = np.cos(alpha), np.sin(alpha)
        g = np.hstack([c * b, -s * b])
        dg = np.hstack([c * db, -s * db])
        f = np.hstack([s * b, c * b])
        return TrialFamily(x, w, g, dg, f, size)

    if kind in ("dual", "dual_kinetic_balance"):
        eps = scheme.epsilon
        if not pot.is_bounded:
            # D^+ B_0 does not vanish at r = 0; keep only splines that vanish like r^2
            b, db, dadjb, ddadjb = (m[:, 1:] for m in (b, db, dadjb, ddadjb))
        sign = -1.0 if kind == "dual" else 1.0
        g = np.hstack([b, sign * eps * dadjb])
        dg = np.hstack([db, sign * eps * ddadjb])
        f = np.hstack([eps * db, -sign * b])
        return TrialFamily(x, w, g, dg, f, b.shape[1])

    if kind == "free_split":
        return _free_split_family(model, scheme, size)
    raise ValidationError(f"unsupported scheme {kind!r}")


def _free_split_family(model, scheme, size):
    ref_model = model
    ref_size = size * scheme.ref_factor
    if ref_size > model.basis.count:
        ref_model = model.with_size(ref_size)
    free = replace(ref_model, potential=PotentialSpec.zero())
    ref = build_family(free, SchemeSpec("kinetic_balance"), ref_size)
    h, s = _form_matrices(ref, np.zeros_like(ref.x))
    dec = eig_generalized(GeneralizedPencil(h, s), want_vectors=True,
                          condition_cap=model.condition_cap)
    vals, vecs = dec.values, np.asarray(dec.vectors)
    neg = np.nonzero(vals < 0.0)[0]
    pos = np.nonzero(vals > 0.0)[0]
    # keep the `size` states of each sign closest to the gap
    neg = neg[::-1][:size][::-1]
    pos = pos[:size]
    coeffs = np.hstack([vecs[:, pos], vecs[:, neg]]).real
    # a finer reference family keeps its own quadrature nodes; assembly
    # evaluates the potential at fam.x, so nothing needs resampling
    return ref.combine(coeffs, len(pos))


def _form_matrices(fam: TrialFamily, v: np.ndarray):
    w = fam.w
    g, dg, f = fam.g, fam.dg, fam.f
    s = g.T @ (w[:, None] * g) + f.T @ (w[:, None] * f)
    coupling = dg.T @ (w[:, None] * f)
    h = (
        g.T @ ((w * (1.0 + v))[:, None] * g)
        + f.T @ ((w * (-1.0 + v))[:, None] * f)
        + coupling
        + coupling.T
    )
    return 0.5 * (h + h.T), 0.5 * (s + s.T)


def assemble_dirac(model: DiracChannelModel, scheme: SchemeSpec, size: int | None = None,
                   return_family: bool = False):
    """Galerkin pencil of ``D^0 + V`` on the trial space generated by ``scheme``.

    The first ``size`` splines of ``model.basis`` generate the families
    (all of them by default). Columns are ordered ``V^+`` first, then ``V^-``.
    """
    fam = build_family(model, scheme, size)
    v = model.potential(fam.x)
    h, s = _form_matrices(fam, v)
    pencil = GeneralizedPencil(h, s)
    if return_family:
        return pencil, fam
    return pencil


def solve_dirac(model, scheme, size=None, want_vectors=False):
    """Eigen-decomposition of the assembled pencil (overlap cap from the model)."""
    pencil = assemble_dirac(model, scheme, size)
    return eig_generalized(pencil, want_vectors, condition_cap=model.condition_cap)


# --------------------------------------------------------------------------
# Reference spectrum
# --------------------------------------------------------------------------


def dirac_coulomb_eigenvalue(kappa_c: float, kappa_d: int, n_r: int) -> float:
    """Sommerfeld energy ``[1 + kappa_c^2/(n_r + gamma)^2]^(-1/2)``, ``gamma = sqrt(kappa_d^2 - kappa_c^2)``."""
    if kappa_d == 0 or int(kappa_d) != kappa_d:
        raise ValidationError("kappa_d must be a nonzero integer")
    if n_r < 0 or int(n_r) != n_r:
        raise ValidationError("n_r must be a nonnegative integer")
    if not 0.0 < kappa_c < abs(kappa_d):
        raise ValidationError(
            f"need 0 < kappa_c < |kappa_d| for a real energy, got kappa_c={kappa_c}, kappa_d={kappa_d}"
        )
    gamma = sqrt(kappa_d**2 - kappa_c**2)
    return (1.0 + kappa_c**2 / (n_r + gamma) ** 2) ** -0.5


def coulomb_levels(kappa_c: float, kappa_d: int, below: float = 1.0, max_levels: int = 50):
    """Sommerfeld levels of one channel strictly below ``below``."""
    start = 1 if kappa_d > 0 else 0
    out = []
    for n_r in range(start, start + max_levels):
        e = dirac_coulomb_eigenvalue(kappa_c, kappa_d, n_r)
        if e >= below:
            break
        out.append(e)
    return out
