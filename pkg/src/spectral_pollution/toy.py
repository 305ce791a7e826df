"""Exactly solvable rotated-frame operators.

Two variants share an orthonormal frame ``e_n^+, e_n^-`` (n >= 1) and the
rotated frame::

    f_n^+ = cos(t_n) e_n^+ + sin(t_n) e_n^-
    f_n^- = sin(t_n) e_n^+ - cos(t_n) e_n^-

``bounded_below``
    ``A = sum_n n |e_n^+><e_n^+|`` restricted to
    ``span{f_1^+, f_1^-, ..., f_{n-1}^+, f_{n-1}^-, f_n^-}``.
``unbounded_both``
    ``A + B = sum_n n (|f_n^+><f_n^+| - |f_n^-><f_n^-|)`` restricted to
    ``span{e_1^+, e_1^-, ..., e_{n-1}^+, e_{n-1}^-, e_n^-}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eig import DenseHermitian
from .errors import ValidationError

__all__ = ["ThetaRule", "ToyRotatedModel", "assemble_toy", "toy_exact_spectrum"]

VARIANTS = ("bounded_below", "unbounded_both")


@dataclass(frozen=True)
class ThetaRule:
    """Rotation angle as a function of the level index ``n``.

    kind
        ``inv_sqrt_2n``: ``1/sqrt(2n)``; ``power``: ``n**(-alpha)``;
        ``constant``: ``value`` for every ``n``.
    """

    kind: str = "inv_sqrt_2n"
    alpha: float = 0.5
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inv_sqrt_2n", "power", "constant"):
            raise ValidationError(f"unknown theta rule {self.kind!r}")
        if self.kind == "power" and self.alpha <= 0:
            raise ValidationError("power rule needs alpha > 0")
        if self.kind == "constant" and not 0.0 <= self.value < np.pi / 2:
            raise ValidationError("constant angle must lie in [0, pi/2)")

    def __call__(self, n):
        n = np.asarray(n, float)
        if self.kind == "inv_sqrt_2n":
            return 1.0 / np.sqrt(2.0 * n)
        if self.kind == "power":
            return n ** (-self.alpha)
        return np.full_like(n, self.value)

    def limit_of_n_sin2(self) -> float:
        """``lim n sin^2(t_n)`` as ``n -> inf`` (may be ``inf``)."""
        if self.kind == "inv_sqrt_2n":
            return 0.5
        if self.kind == "power":
            if self.alpha > 0.5:
                return 0.0
            return 1.0 if self.alpha == 0.5 else np.inf
        return 0.0 if self.value == 0.0 else np.inf

    def describe(self) -> str:
        if self.kind == "power":
            return f"n^-{self.alpha:g}"
        if self.kind == "constant":
            return f"constant({self.value:g})"
        return "1/sqrt(2n)"


@dataclass(frozen=True)
class ToyRotatedModel:
    variant: str = "bounded_below"
    theta_rule: ThetaRule = ThetaRule()
    n: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown toy variant {self.variant!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"truncation n must be a positive integer, got {self.n}")
        angles = self.theta_rule(np.arange(1, self.n + 1))
        if np.any(angles < 0) or np.any(angles >= np.pi / 2):
            raise ValidationError("rotation angles must lie in [0, pi/2)")

    def with_size(self, n: int) -> "ToyRotatedModel":
        return ToyRotatedModel(self.variant, self.theta_rule, n)


def assemble_toy(m: ToyRotatedModel) -> DenseHermitian:
    """``(2n-1) x (2n-1)`` matrix in the listed spanning order (pairs, then the last vector)."""
    n = m.n
    k = np.arange(1, n, dtype=float)
    t = m.theta_rule(np.arange(1, n + 1))
    c, s = np.cos(t[:-1]), np.sin(t[:-1])
    out = np.zeros((2 * n - 1, 2 * n - 1))
    ip, im = 2 * np.arange(n - 1), 2 * np.arange(n - 1) + 1
    if m.variant == "bounded_below":
        out[ip, ip] = k * c * c
        out[ip, im] = out[im, ip] = k * c * s
        out[im, im] = k * s * s
        out[-1, -1] = n * np.sin(t[-1]) ** 2
    else:
        c2, s2 = np.cos(2 * t[:-1]), np.sin(2 * t[:-1])
        out[ip, ip] = k * c2
        out[ip, im] = out[im, ip] = k * s2
        out[im, im] = -k * c2
        out[-1, -1] = -n * np.cos(2 * t[-1])
    return DenseHermitian(out)


def toy_exact_spectrum(m: ToyRotatedModel) -> np.ndarray:
    """Closed-form eigenvalues of :func:`assemble_toy`, ascending."""
    n = m.n
    k = np.arange(1, n, dtype=float)
    t_n = float(m.theta_rule(n))
    if m.variant == "bounded_below":
        vals = np.concatenate([np.zeros(n - 1), k, [n * np.sin(t_n) ** 2]])
    else:
        vals = np.concatenate([-k, k, [-n * np.cos(2 * t_n)]])
    return np.sort(vals)
