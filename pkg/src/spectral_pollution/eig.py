"""Dense Hermitian and generalized-Hermitian eigensolvers.

Householder reduction to a real symmetric tridiagonal matrix (complex
off-diagonal phases are absorbed into a diagonal unitary), followed by the
implicit-shift QL iteration. Generalized pencils ``h x = lam s x`` are reduced
through the Cholesky factor of ``s``; the overlap is never filtered or
regularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import copysign, hypot, sqrt

import numpy as np
from numba import njit

from .errors import (
    ConvergenceError,
    IllConditionedOverlapError,
    PencilError,
    ValidationError,
)

__all__ = [
    "DenseHermitian",
    "GeneralizedPencil",
    "EigDecomposition",
    "eig_hermitian",
    "eig_generalized",
    "condition_estimate",
    "DEFAULT_CONDITION_CAP",
]

HERMITIAN_RTOL = 1e-12
DEFAULT_CONDITION_CAP = 1e12
SWEEP_FACTOR = 50


# --------------------------------------------------------------------------
# Containers
# --------------------------------------------------------------------------


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DenseHermitian:
    """Immutable dense Hermitian matrix.

    The constructor checks ``entries[i, j] == conj(entries[j, i])`` up to an
    absolute tolerance of ``1e-12 * max|entry|`` and stores the exactly
    Hermitian part.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValidationError("matrix dimension must be >= 1")
        if not np.all(np.isfinite(a)):
            raise ValidationError("matrix has non-finite entries")
        if np.iscomplexobj(a):
            a = a.astype(np.complex128)
        else:
            a = a.astype(np.float64)
        scale = float(np.max(np.abs(a)))
        asym = float(np.max(np.abs(a - a.conj().T)))
        if asym > HERMITIAN_RTOL * scale:
            raise ValidationError(
                f"matrix is not Hermitian: max|A - A^H| = {asym:.3e} "
                f"exceeds {HERMITIAN_RTOL:g} * {scale:.3e}"
            )
        a = 0.5 * (a + a.conj().T)
        if np.iscomplexobj(a) and not np.any(a.imag):
            a = a.real.copy()
        object.__setattr__(self, "entries", _frozen(a))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.entries)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))

    @classmethod
    def identity(cls, n: int) -> "DenseHermitian":
        return cls(np.eye(n))


@dataclass(frozen=True)
class GeneralizedPencil:
    """Form matrix ``h`` and overlap matrix ``s`` of a Galerkin problem."""

    h: DenseHermitian
    s: DenseHermitian

    def __post_init__(self):
        if not isinstance(self.h, DenseHermitian):
            object.__setattr__(self, "h", DenseHermitian(self.h))
        if not isinstance(self.s, DenseHermitian):
            object.__setattr__(self, "s", DenseHermitian(self.s))
        if self.h.dim != self.s.dim:
            raise ValidationError(
                f"pencil dimension mismatch: h is {self.h.dim}, s is {self.s.dim}"
            )

    @property
    def dim(self) -> int:
        return self.h.dim


@dataclass(frozen=True)
class EigDecomposition:
    """Ascending eigenvalues and, optionally, the matching eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, float)))
        if self.vectors is not None:
            object.__setattr__(self, "vectors", _frozen(self.vectors))

    def __len__(self):
        return len(self.values)


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _householder_tridiag(a):
    """In-place Householder reduction of a Hermitian matrix (lower storage).

    Returns the diagonal, the complex subdiagonal and the unit reflectors,
    stored column-wise in ``vs`` (column k acts on rows k+1..n-1).
    """
    n = a.shape[0]
    vs = np.zeros_like(a)
    used = np.zeros(n, dtype=np.bool_)
    for k in range(n - 2):
        m = n - k - 1
        xnorm2 = 0.0
        for i in range(k + 1, n):
            xnorm2 += abs(a[i, k]) ** 2
        xnorm = sqrt(xnorm2)
        if xnorm == 0.0:
            continue
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else x0 * 0.0 + 1.0
        alpha = -phase * xnorm
        v = np.empty(m, dtype=a.dtype)
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        vnorm2 = 0.0
        for i in range(m):
            vnorm2 += abs(v[i]) ** 2
        if vnorm2 == 0.0:
            continue
        vnorm = sqrt(vnorm2)
        for i in range(m):
            v[i] /= vnorm
        p = np.zeros(m, dtype=a.dtype)
        for i in range(m):
            acc = p[i]
            for j in range(m):
                acc += a[k + 1 + i, k + 1 + j] * v[j]
            p[i] = acc
        kk = 0.0
        for i in range(m):
            kk += (np.conj(v[i]) * p[i]).real
        for i in range(m):
            p[i] -= kk * v[i]
        for i in range(m):
            vi = v[i]
            qi = p[i]
            for j in range(m):
                a[k + 1 + i, k + 1 + j] -= 2.0 * (vi * np.conj(p[j]) + qi * np.conj(v[j]))
        a[k + 1, k] = alpha
        a[k, k + 1] = np.conj(alpha)
        for i in range(k + 2, n):
            a[i, k] = 0.0
            a[k, i] = 0.0
        for i in range(m):
            vs[k + 1 + i, k] = v[i]
        used[k] = True
    d = np.empty(n)
    e = np.zeros(n, dtype=a.dtype)
    for i in range(n):
        d[i] = a[i, i].real
    for i in range(n - 1):
        e[i] = a[i + 1, i]
    return d, e, vs, used


@njit(cache=True, nogil=True)
def _accumulate_q(vs, used):
    """Form Q = H_0 H_1 ... H_{n-3} from the stored reflectors."""
    n = vs.shape[0]
    q = np.zeros_like(vs)
    for i in range(n):
        q[i, i] = 1.0
    for k in range(n - 3, -1, -1):
        if not used[k]:
            continue
        lo = k + 1
        m = n - lo
        # Q[lo:, lo:] <- (I - 2 v v^H) Q[lo:, lo:]
        w = np.zeros(m, dtype=vs.dtype)
        for i in range(m):
            vi = np.conj(vs[lo + i, k])
            for j in range(m):
                w[j] += vi * q[lo + i, lo + j]
        for i in range(m):
            vi = 2.0 * vs[lo + i, k]
            for j in range(m):
                q[lo + i, lo + j] -= vi * w[j]
    return q


@njit(cache=True, nogil=True)
def _tql(d, e, zt, want_z, budget):
    """Implicit-shift QL on a real symmetric tridiagonal matrix.

    ``d`` diagonal, ``e[i]`` couples rows i and i+1 (``e[n-1]`` unused).
    Rotations are applied to the rows of ``zt`` (eigenvectors stored as rows).
    Returns -1 on success or the index whose iteration exhausted the budget.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    total = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            total += 1
            if total > budget:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_z:
                    for k in range(zt.shape[1]):
                        f2 = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f2
                        zt[i, k] = c * zt[i, k] - s * f2
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


@njit(cache=True, nogil=True)
def _cholesky(s):
    """Lower Cholesky factor; returns (L, k) with k = -1 or the failing pivot."""
    n = s.shape[0]
    el = np.zeros_like(s)
    for j in range(n):
        acc = s[j, j].real
        for k in range(j):
            acc -= abs(el[j, k]) ** 2
        if not acc > 0.0:
            return el, j
        piv = sqrt(acc)
        el[j, j] = piv
        for i in range(j + 1, n):
            t = s[i, j]
            for k in range(j):
                t -= el[i, k] * np.conj(el[j, k])
            el[i, j] = t / piv
    return el, -1


@njit(cache=True, nogil=True)
def _forward_solve(el, b):
    """Solve L X = B for lower-triangular L (B overwritten is not assumed)."""
    n, ncol = b.shape
    x = b.copy()
    for i in range(n):
        piv = el[i, i]
        for k in range(i):
            lik = el[i, k]
            if lik != 0.0:
                for j in range(ncol):
                    x[i, j] -= lik * x[k, j]
        for j in range(ncol):
            x[i, j] /= piv
    return x


@njit(cache=True, nogil=True)
def _backward_solve_h(el, b):
    """Solve L^H X = B for lower-triangular L."""
    n, ncol = b.shape
    x = b.copy()
    for i in range(n - 1, -1, -1):
        piv = el[i, i].real
        for k in range(i + 1, n):
            lki = np.conj(el[k, i])
            if lki != 0.0:
                for j in range(ncol):
                    x[i, j] -= lki * x[k, j]
        for j in range(ncol):
            x[i, j] /= piv
    return x


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------


def _as_hermitian(m) -> DenseHermitian:
    return m if isinstance(m, DenseHermitian) else DenseHermitian(m)


def _tridiagonal_eig(a: np.ndarray, want_vectors: bool):
    n = a.shape[0]
    if n == 1:
        vals = np.array([float(np.real(a[0, 0]))])
        vecs = np.ones((1, 1), dtype=a.dtype) if want_vectors else None
        return vals, vecs
    work = np.array(a, copy=True, order="C")
    d, e, vs, used = _householder_tridiag(work)
    # absorb subdiagonal phases: T_real = D^H T D
    mag = np.abs(e)
    phases = np.ones(n, dtype=work.dtype)
    for k in range(n - 1):
        ph = e[k] / mag[k] if mag[k] > 0.0 else 1.0
        phases[k + 1] = phases[k] * ph
    off = mag.astype(float)
    zt = np.eye(n) if want_vectors else np.zeros((1, 1))
    status = _tql(d, off, zt, want_vectors, SWEEP_FACTOR * n)
    if status >= 0:
        raise ConvergenceError(
            f"QL iteration did not converge for eigenvalue index {status} "
            f"within {SWEEP_FACTOR * n} sweeps",
            index=int(status),
        )
    order = np.argsort(d, kind="stable")
    vals = d[order]
    if not want_vectors:
        return vals, None
    q = _accumulate_q(vs, used)
    z = zt.T[:, order]
    vecs = q @ (phases[:, None] * z)
    return vals, vecs


def eig_hermitian(m, want_vectors: bool = False) -> EigDecomposition:
    """All eigenvalues (with multiplicity) of a Hermitian matrix.

    Parameters
    ----------
    m : DenseHermitian or array_like
        Hermitian input; arrays are validated through :class:`DenseHermitian`.
    want_vectors : bool
        Also return orthonormal eigenvectors as columns.

    Raises
    ------
    ValidationError
        Input is not Hermitian within tolerance.
    ConvergenceError
        The QL sweep budget (50 * dim) was exhausted.
    """
    m = _as_hermitian(m)
    vals, vecs = _tridiagonal_eig(np.asarray(m.entries), want_vectors)
    return EigDecomposition(vals, vecs)


def condition_estimate(s) -> float:
    """Ratio of largest to smallest eigenvalue of a positive definite matrix."""
    s = _as_hermitian(s)
    vals = eig_hermitian(s).values
    if vals[0] <= 0.0:
        raise PencilError(
            f"overlap is not positive definite (smallest eigenvalue {vals[0]:.3e})"
        )
    return float(vals[-1] / vals[0])


def cholesky(s) -> np.ndarray:
    """Lower Cholesky factor of a positive definite Hermitian matrix."""
    s = _as_hermitian(s)
    el, bad = _cholesky(np.array(s.entries, order="C"))
    if bad >= 0:
        raise PencilError(f"overlap is not positive definite (Cholesky pivot {bad} <= 0)")
    return el


def eig_generalized(
    p: GeneralizedPencil,
    want_vectors: bool = False,
    condition_cap: float = DEFAULT_CONDITION_CAP,
) -> EigDecomposition:
    """Solve ``h x = lam s x`` by Cholesky reduction ``s = L L^H``.

    Eigenvectors, when requested, are ``s``-orthonormal.

    Raises
    ------
    PencilError
        ``s`` is not positive definite.
    IllConditionedOverlapError
        The condition estimate of ``s`` exceeds ``condition_cap``.
    """
    el = cholesky(p.s)
    if condition_cap is not None and np.isfinite(condition_cap):
        cond = condition_estimate(p.s)
        if cond > condition_cap:
            raise IllConditionedOverlapError(
                f"overlap condition estimate {cond:.3e} exceeds cap {condition_cap:.3e}",
                condition=cond,
            )
    h = np.asarray(p.h.entries)
    dtype = np.result_type(h.dtype, el.dtype)
    el = el.astype(dtype)
    y = _forward_solve(el, np.ascontiguousarray(h, dtype=dtype))
    c = _forward_solve(el, np.ascontiguousarray(y.conj().T))
    c = 0.5 * (c + c.conj().T)
    vals, vecs = _tridiagonal_eig(c, want_vectors)
    if want_vectors:
        vecs = _backward_solve_h(el, np.ascontiguousarray(vecs.astype(dtype)))
    return EigDecomposition(vals, vecs)
