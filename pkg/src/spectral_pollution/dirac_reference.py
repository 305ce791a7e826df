"""Reference bound states of the radial Dirac channel by ODE shooting.

Independent of the Galerkin machinery: the first-order system::

    G' = -kappa_d G / r + (E + 1 - V) F
    F' =  kappa_d F / r - (E - 1 - V) G

is integrated outward from the regular solution at the origin and inward
from the decaying solution at large ``r``; bound states are the zeros of
the Wronskian mismatch at a matching radius.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .dirac import PotentialSpec, coulomb_levels
from .errors import ValidationError

__all__ = ["shooting_levels", "reference_levels"]


def _scalar_potential(p: PotentialSpec):
    if p.kind == "gaussian_well":
        return lambda r: -p.v0 * math.exp(-((r / p.width) ** 2))
    if p.kind == "gaussian_bump":
        return lambda r: p.v0 * math.exp(-((r / p.width) ** 2))
    return lambda r: float(p(r))


def _rhs(kappa_d, vfun, energy):
    def f(r, y):
        g, h = y
        v = vfun(r)
        return [-kappa_d * g / r + (energy + 1.0 - v) * h,
                kappa_d * h / r - (energy - 1.0 - v) * g]
    return f


def _outward(kappa_d, potential, energy, r_match, r0=1e-6):
    v0 = potential(r0)
    k = abs(kappa_d)
    if kappa_d < 0:
        y0 = [r0**k, -(energy - 1.0 - v0) * r0 ** (k + 1) / (2 * k + 1)]
    else:
        y0 = [(energy + 1.0 - v0) * r0 ** (k + 1) / (2 * k + 1), r0**k]
    sol = solve_ivp(_rhs(kappa_d, potential, energy), (r0, r_match), y0,
                    method="DOP853", rtol=1e-11, atol=1e-14)
    return sol.y[:, -1]


def _inward(kappa_d, potential, energy, r_match, r_far):
    lam = np.sqrt(1.0 - energy**2)
    y0 = [1.0, -lam / (energy + 1.0)]
    sol = solve_ivp(_rhs(kappa_d, potential, energy), (r_far, r_match), y0,
                    method="DOP853", rtol=1e-11, atol=1e-30)
    return sol.y[:, -1]


def _mismatch(kappa_d, potential, energy, r_match, r_far):
    go, fo = _outward(kappa_d, potential, energy, r_match)
    gi, fi = _inward(kappa_d, potential, energy, r_match, r_far)
    norm = np.hypot(go, fo) * np.hypot(gi, fi)
    return (go * fi - fo * gi) / norm


@lru_cache(maxsize=64)
def shooting_levels(
    potential: PotentialSpec,
    kappa_d: int = -1,
    window: tuple[float, float] = (-0.999, 0.999),
    r_match: float | None = None,
    n_scan: int = 240,
    decay_lengths: float = 40.0,
):
    """Bound-state energies of a bounded radial potential inside ``window``.

    Parameters
    ----------
    potential : PotentialSpec
        Must be bounded (the Coulomb case has a closed form).
    window : tuple
        Energy interval scanned for sign changes of the matching Wronskian.
    r_match : float, optional
        Matching radius; defaults to twice the potential width.
    decay_lengths : float
        Inward integration starts ``decay_lengths / sqrt(1 - E^2)`` beyond
        the matching radius.
    """
    if not potential.is_bounded:
        raise ValidationError("shooting reference needs a bounded potential")
    if r_match is None:
        r_match = 2.0 * potential.width
    lo, hi = window
    if not -1.0 < lo < hi < 1.0:
        raise ValidationError("window must lie inside (-1, 1)")

    vfun = _scalar_potential(potential)

    def mismatch(e):
        lam = math.sqrt(1.0 - e * e)
        r_far = r_match + decay_lengths / lam
        return _mismatch(kappa_d, vfun, e, r_match, r_far)

    grid = np.linspace(lo, hi, n_scan)
    vals = np.array([mismatch(e) for e in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            e = brentq(mismatch, a, b, xtol=1e-13, rtol=1e-13)
            # a genuine root has a small mismatch; poles of the ratio do not
            if abs(mismatch(e)) < 1e-6:
                roots.append(e)
    return tuple(roots)


def reference_levels(potential: PotentialSpec, kappa_d: int = -1,
                     window: tuple[float, float] = (-0.999, 0.999)):
    """Trusted discrete levels: closed form for Coulomb, shooting otherwise."""
    if potential.kind == "zero":
        return []
    if potential.kind == "coulomb":
        return [e for e in coulomb_levels(potential.kappa_c, kappa_d) if window[0] < e < window[1]]
    return list(shooting_levels(potential, int(kappa_d), tuple(window)))
