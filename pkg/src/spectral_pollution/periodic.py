"""1D periodic Schrodinger operator with a localized defect.

``A = -d^2/dx^2 + V_per + W`` with ``V_per(x) = sum_j v_j exp(2 pi i j x / a)``.
Bloch fibers are diagonalized in plane waves ``exp(i (xi + 2 pi j / a) x)``,
``|j| <= G_max``. Wannier functions are built on the periodic supercell of
``n_xi`` cells that the uniform quasimomentum grid resolves exactly, so every
trial function is a finite combination of supercell plane waves with
momenta ``2 pi p / (n_xi a)``, ``p = s + n_xi j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np

from .concurrency import parallel_map
from .eig import DenseHermitian, GeneralizedPencil, eig_hermitian
from .errors import (
    BandCrossingError,
    DomainError,
    GaugeError,
    ResolutionError,
    ValidationError,
)

__all__ = [
    "DefectSpec",
    "PeriodicModel",
    "BandStructure",
    "WannierSet",
    "DEFAULT_W0",
    "bloch_bands",
    "band_edges",
    "gauge_fix",
    "wannier_build",
    "wannier_pair",
    "assemble_periodic",
    "supercell_hamiltonian",
    "supercell_spectrum",
    "supercell_reference",
]

# depth of the Gaussian defect that puts its bound state at the middle of the first gap
DEFAULT_W0 = 8.0
DEFAULT_N_XI = 128
DEFAULT_N_ABOVE = 4


@dataclass(frozen=True)
class DefectSpec:
    """Localized potential ``W(x) = sign * amplitude * exp(-x^2 / width^2)``."""

    kind: str = "gaussian_well"
    amplitude: float = DEFAULT_W0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_well", "gaussian_bump"):
            raise ValidationError(f"unknown defect kind {self.kind!r}")
        if self.amplitude < 0 or self.width <= 0:
            raise ValidationError("defect needs amplitude >= 0 and width > 0")

    @property
    def sign(self) -> float:
        if self.kind == "none":
            return 0.0
        return -1.0 if self.kind == "gaussian_well" else 1.0

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.sign * self.amplitude * np.exp(-((x / self.width) ** 2))

    def fourier(self, q, length):
        """``(1/L) int W(x) exp(-i q x) dx`` over one supercell (images negligible)."""
        q = np.asarray(q, float)
        return (self.sign * self.amplitude * sqrt(pi) * self.width
                * np.exp(-((self.width * q) ** 2) / 4.0) / length)

    def extent(self, tol: float = 1e-16) -> float:
        """Half-width beyond which ``|W| < tol``."""
        if self.sign == 0.0 or self.amplitude == 0.0:
            return 0.0
        return self.width * sqrt(max(np.log(self.amplitude / tol), 0.0))


@dataclass(frozen=True)
class PeriodicModel:
    """Lattice constant, periodic potential coefficients, defect and plane-wave cutoff.

    ``vper_coeffs`` maps harmonic index ``j`` to the coefficient ``v_j``;
    the default ``{1: 2, -1: 2}`` is ``V_per = 4 cos(2 pi x)``.
    """

    a: float = 1.0
    vper_coeffs: dict = field(default_factory=lambda: {1: 2.0, -1: 2.0})
    defect: DefectSpec = field(default_factory=DefectSpec)
    planewave_cutoff: int = 8

    def __post_init__(self):
        if self.a <= 0:
            raise ValidationError("lattice constant must be positive")
        if self.planewave_cutoff < 1:
            raise ValidationError("planewave_cutoff must be >= 1")
        coeffs = {int(j): complex(v) for j, v in dict(self.vper_coeffs).items()}
        for j, v in coeffs.items():
            if abs(coeffs.get(-j, 0.0) - np.conj(v)) > 1e-12 * (1.0 + abs(v)):
                raise ValidationError("V_per coefficients must be conjugate-symmetric (real potential)")
        object.__setattr__(self, "vper_coeffs", coeffs)

    def __hash__(self):
        return hash((self.a, tuple(sorted(self.vper_coeffs.items())), self.defect,
                     self.planewave_cutoff))

    @property
    def harmonics(self) -> np.ndarray:
        g = self.planewave_cutoff
        return np.arange(-g, g + 1)

    def vper(self, x):
        x = np.asarray(x, float)
        out = np.zeros_like(x, dtype=complex)
        for j, v in self.vper_coeffs.items():
            out += v * np.exp(2j * pi * j * x / self.a)
        return out.real

    def fiber_matrix(self, xi: float) -> np.ndarray:
        """Plane-wave matrix of the periodic operator at quasimomentum ``xi``."""
        j = self.harmonics
        k = xi + 2 * pi * j / self.a
        h = np.diag(k * k).astype(complex)
        diff = j[:, None] - j[None, :]
        for jj, v in self.vper_coeffs.items():
            h[diff == jj] += v
        return h

    def without_defect(self) -> "PeriodicModel":
        return PeriodicModel(self.a, dict(self.vper_coeffs), DefectSpec("none", 0.0, 1.0),
                             self.planewave_cutoff)


@dataclass(frozen=True)
class BandStructure:
    """Bands ``(n_xi, n_bands)`` and Bloch vectors ``(n_xi, 2 G_max + 1, n_bands)``."""

    model: PeriodicModel
    xi_grid: np.ndarray
    bands: np.ndarray
    bloch_vectors: np.ndarray
    group: tuple | None = None

    @property
    def n_xi(self) -> int:
        return len(self.xi_grid)


def _xi_grid(n_xi, a):
    s = np.arange(-n_xi // 2, n_xi // 2)
    return 2 * pi * s / (n_xi * a)


def bloch_bands(m: PeriodicModel, n_xi: int = DEFAULT_N_XI, n_bands: int = 6,
                threads: int | None = None) -> BandStructure:
    """Diagonalize every Bloch fiber on the uniform grid ``xi_s = 2 pi s / (n_xi a)``."""
    if n_xi < 8 or n_xi % 2:
        raise ValidationError("n_xi must be even and >= 8")
    dim = 2 * m.planewave_cutoff + 1
    if not 1 <= n_bands <= dim:
        raise ValidationError(f"n_bands must lie in [1, {dim}]")
    xi = _xi_grid(n_xi, m.a)

    def fiber(x):
        dec = eig_hermitian(DenseHermitian(m.fiber_matrix(x)), want_vectors=True)
        return dec.values[:n_bands], np.asarray(dec.vectors, complex)[:, :n_bands]

    out = parallel_map(fiber, xi, threads)
    bands = np.array([o[0] for o in out])
    vecs = np.array([o[1] for o in out])
    limit = 0.5 * (2 * pi * m.planewave_cutoff / m.a) ** 2
    if bands.max() > limit:
        raise ResolutionError(
            f"band energy {bands.max():.4g} exceeds half the squared cutoff momentum ({limit:.4g})"
        )
    return BandStructure(m, xi, bands, vecs)


def band_edges(m: PeriodicModel, gap_index: int = 1, n_xi: int = 256) -> tuple[float, float]:
    """``(top of band gap_index, bottom of band gap_index + 1)`` on a fine grid."""
    b = bloch_bands(m.without_defect(), n_xi, gap_index + 1)
    lo, hi = float(b.bands[:, gap_index - 1].max()), float(b.bands[:, gap_index].min())
    # the extrema of the first gap sit at xi = 0 or the zone edge, both on the grid
    return lo, hi


def _polar(m):
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _shift_next_zone(vecs):
    """Coefficients of ``u(xi + 2 pi / a)`` from ``u(xi)``: ``c_j -> c_{j+1}``."""
    out = np.zeros_like(vecs)
    out[:-1] = vecs[1:]
    return out


def gauge_fix(b: BandStructure, group) -> BandStructure:
    """Parallel-transport gauge for a composite band group, made periodic in ``xi``.

    Each frame is rotated by the polar factor of its overlap with the
    previous frame; the closing rotation across the zone boundary is
    spread evenly over the grid.
    """
    group = tuple(sorted(int(k) for k in group))
    if not group or group[0] < 0 or group[-1] >= b.bands.shape[1]:
        raise ValidationError("band group outside the computed bands")
    if group != tuple(range(group[0], group[-1] + 1)):
        raise ValidationError("band group must be contiguous")
    lo_k, hi_k = group[0], group[-1]
    gaps = []
    if lo_k > 0:
        gaps.append(np.min(b.bands[:, lo_k] - b.bands[:, lo_k - 1]))
    if hi_k + 1 < b.bands.shape[1]:
        gaps.append(np.min(b.bands[:, hi_k + 1] - b.bands[:, hi_k]))
    else:
        raise ValidationError("need at least one band above the group to check isolation")
    if min(gaps) < 1e-8:
        raise BandCrossingError(f"band group {group} is not isolated (gap {min(gaps):.2e})")

    frames = b.bloch_vectors[:, :, lo_k:hi_k + 1].copy()
    n = b.n_xi
    for s in range(1, n):
        m = frames[s - 1].conj().T @ frames[s]
        frames[s] = frames[s] @ _polar(m).conj().T
    closing = frames[n - 1].conj().T @ _shift_next_zone(frames[0])
    rot = _polar(closing).conj().T
    # rot = Q diag(exp(i phi)) Q^H; apply rot^(-s/n) to frame s
    phases, q = np.linalg.eig(rot)
    q, _ = np.linalg.qr(q) if len(phases) > 1 else (q, None)
    phi = np.angle(np.diag(q.conj().T @ rot @ q))
    for s in range(n):
        frames[s] = frames[s] @ (q @ np.diag(np.exp(-1j * phi * s / n)) @ q.conj().T)
    vecs = b.bloch_vectors.copy()
    vecs[:, :, lo_k:hi_k + 1] = frames
    return BandStructure(b.model, b.xi_grid, b.bands, vecs, group)


@dataclass(frozen=True)
class WannierSet:
    """Wannier functions of one band group and their translates ``|m| <= R``.

    ``coeffs[k]`` holds the supercell plane-wave coefficients of the home
    function of band ``k``; translates are phase multiplications.
    """

    band_group: str
    bands: BandStructure
    group: tuple
    translates: int
    decay_rate: float
    orthonormality_residual: float

    @property
    def count(self) -> int:
        return len(self.group) * (2 * self.translates + 1)

    @property
    def n_cells(self) -> int:
        return self.bands.n_xi

    def supercell_index(self) -> np.ndarray:
        """Supercell plane-wave index ``p = s + n_xi j`` for every (s, j)."""
        n = self.n_cells
        s = np.arange(-n // 2, n // 2)
        j = self.bands.model.harmonics
        return s[:, None] + n * j[None, :]

    def home_coefficients(self) -> np.ndarray:
        """``(n_group, n_xi, 2 G + 1)`` coefficients of ``w_k(x)`` on supercell plane waves."""
        v = self.bands.bloch_vectors[:, :, list(self.group)]
        return np.transpose(v, (2, 0, 1)) / sqrt(self.n_cells)

    def real_space(self, points_per_cell: int | None = None):
        """Home functions on a uniform supercell grid centred on the origin."""
        m = self.bands.model
        n = self.n_cells
        per = points_per_cell or (4 * m.planewave_cutoff + 8)
        total = n * per
        length = n * m.a
        p = self.supercell_index()
        coef = self.home_coefficients()
        grid = np.zeros((len(self.group), total), complex)
        idx = np.mod(p, total)
        for k in range(len(self.group)):
            np.add.at(grid[k], idx.ravel(), coef[k].ravel())
        x = (np.arange(total) - total // 2) * (length / total)
        # inverse DFT evaluates sum_p c_p exp(i q_p x) / sqrt(L) on the grid
        vals = np.fft.ifft(grid, axis=1) * total / sqrt(length)
        vals = np.roll(vals, total // 2, axis=1)
        return x, vals, per


def _decay_rate(x, vals, a, cell_tol=1e-13):
    """Exponential decay rate from per-cell maxima of ``|w|`` on both tails."""
    mag = np.max(np.abs(vals), axis=0)
    cells = np.round(x / a).astype(int)
    cmax = {}
    for c, v in zip(cells, mag):
        cmax[c] = max(cmax.get(c, 0.0), v)
    r = np.array(sorted(cmax))
    y = np.array([cmax[c] for c in r])
    keep = (np.abs(r) >= 1) & (y > cell_tol * y.max())
    if keep.sum() < 3:
        return np.inf
    slope = np.polyfit(np.abs(r[keep]) * a, np.log(y[keep]), 1)[0]
    return float(-slope)


def wannier_build(b: BandStructure, group=None, translates: int = 8, band_group: str = "",
                  tol: float = 1e-6) -> WannierSet:
    """Wannier functions of a gauge-fixed band group (trapezoidal zone average)."""
    group = b.group if group is None else tuple(group)
    if b.group is None or tuple(group) != b.group:
        raise ValidationError("wannier_build needs a BandStructure gauge-fixed for this group")
    if translates < 0 or 2 * translates + 1 > b.n_xi:
        raise ValidationError(f"translates must satisfy 2R+1 <= n_xi = {b.n_xi}")
    ws = WannierSet(band_group, b, group, translates, np.nan, np.nan)
    c = _translated_coefficients(ws)
    flat = c.reshape(c.shape[0], -1)
    resid = float(np.max(np.abs(flat.conj() @ flat.T - np.eye(flat.shape[0]))))
    if resid > tol:
        raise GaugeError(f"Wannier orthonormality residual {resid:.2e} exceeds {tol:g}")
    x, vals, _ = ws.real_space()
    gamma = _decay_rate(x, vals, b.model.a)
    return WannierSet(band_group, b, group, translates, gamma, resid)


def _translated_coefficients(ws: WannierSet) -> np.ndarray:
    """``(count, n_xi, 2G+1)`` coefficients; ordering is translate-major, band-minor."""
    a = ws.bands.model.a
    xi = ws.bands.xi_grid
    home = ws.home_coefficients()
    out = []
    for m in range(-ws.translates, ws.translates + 1):
        phase = np.exp(-1j * xi * m * a)[:, None]
        for k in range(len(ws.group)):
            out.append(home[k] * phase)
    return np.array(out)


def wannier_pair(m: PeriodicModel, translates: int, n_xi: int = DEFAULT_N_XI,
                 n_above: int = DEFAULT_N_ABOVE, gap_index: int = 1,
                 threads: int | None = None) -> tuple[WannierSet, WannierSet]:
    """Gauge-fixed Wannier sets below and above the chosen gap."""
    n_bands = gap_index + n_above + 1
    b = bloch_bands(m, n_xi, n_bands, threads)
    below = tuple(range(gap_index))
    above = tuple(range(gap_index, gap_index + n_above))
    wb = wannier_build(gauge_fix(b, below), below, translates, "below_gap")
    wa = wannier_build(gauge_fix(b, above), above, translates, "above_gap")
    return wb, wa


def _bloch_block(ws1: WannierSet, ws2: WannierSet, operator: bool):
    """Matrix of the periodic operator (or the identity) between two Wannier sets."""
    b = ws1.bands
    a = b.model.a
    xi = b.xi_grid
    n = b.n_xi
    f1 = b.bloch_vectors[:, :, list(ws1.group)]
    f2 = b.bloch_vectors[:, :, list(ws2.group)]
    if operator:
        fib = np.array([b.model.fiber_matrix(x) for x in xi])
        core = np.einsum("sjk,sjl->skl", f1.conj(), fib @ f2)
    else:
        core = np.einsum("sjk,sjl->skl", f1.conj(), f2)
    r1, r2 = ws1.translates, ws2.translates
    m1 = np.arange(-r1, r1 + 1)
    m2 = np.arange(-r2, r2 + 1)
    # <w_{k,m}, O w_{l,m'}> = (1/n) sum_s exp(i xi_s (m - m') a) core_s[k, l]
    ph = np.exp(1j * xi[None, None, :] * (m1[:, None, None] - m2[None, :, None]) * a) / n
    block = np.einsum("abs,skl->akbl", ph, core)
    return block.reshape(len(m1) * len(ws1.group), len(m2) * len(ws2.group))


def _defect_block(ws1: WannierSet, ws2: WannierSet):
    """Real-space quadrature of ``<w, W w'>`` over the defect support."""
    m = ws1.bands.model
    x, v1, per = ws1.real_space()
    _, v2, _ = ws2.real_space(per)
    dx = x[1] - x[0]
    ext = m.defect.extent()
    if ext == 0.0:
        return np.zeros((ws1.count, ws2.count), complex)
    total = len(x)
    if ext > 0.5 * len(x) * dx - ws1.translates * m.a:
        raise DomainError("defect does not decay inside the Wannier supercell")
    sel = np.nonzero(np.abs(x) <= ext)[0]
    wx = m.defect(x[sel]) * dx

    def translated(vals, ws):
        rows = []
        for mm in range(-ws.translates, ws.translates + 1):
            shift = mm * per
            idx = np.mod(sel - shift, total)
            for k in range(len(ws.group)):
                rows.append(vals[k, idx])
        return np.array(rows)

    t1 = translated(v1, ws1)
    t2 = translated(v2, ws2)
    return t1.conj() @ (wx[:, None] * t2.T)


def assemble_periodic(m: PeriodicModel, w: tuple[WannierSet, WannierSet], size: int | None = None):
    """Galerkin pencil of ``A_per + W`` on Wannier translates ``|m| <= R`` of both groups.

    ``size`` is the translate radius ``R`` (defaults to the sets' radius);
    it must not exceed the radius the sets were built with.
    """
    below, above = w
    r = below.translates if size is None else int(size)
    if r < 1:
        raise ValidationError("translate radius R must be >= 1")
    if r > below.translates or r > above.translates:
        raise ValidationError(f"R = {r} exceeds the Wannier sets' radius")
    sets = [_restrict(ws, r) for ws in (below, above)]
    h_blocks, s_blocks = [], []
    for w1 in sets:
        hrow, srow = [], []
        for w2 in sets:
            h = _bloch_block(w1, w2, True) + _defect_block(w1, w2)
            hrow.append(h)
            srow.append(_bloch_block(w1, w2, False))
        h_blocks.append(hrow)
        s_blocks.append(srow)
    h = np.block(h_blocks)
    s = np.block(s_blocks)
    h = 0.5 * (h + h.conj().T)
    s = 0.5 * (s + s.conj().T)
    return GeneralizedPencil(h, s)


def _restrict(ws: WannierSet, r: int) -> WannierSet:
    if r == ws.translates:
        return ws
    return WannierSet(ws.band_group, ws.bands, ws.group, r, ws.decay_rate,
                      ws.orthonormality_residual)


def supercell_hamiltonian(m: PeriodicModel, cells: int, cutoff: int | None = None,
                          p_range: tuple[int, int] | None = None) -> np.ndarray:
    """Plane-wave matrix of ``A_per + W`` on a periodic supercell of ``cells`` lattice constants.

    Momenta are ``2 pi p / (cells a)`` with ``p`` in ``p_range`` (inclusive);
    the default covers ``|p| <= cells (G + 1/2)``.
    """
    if cells < 1:
        raise ValidationError("cells must be positive")
    g = m.planewave_cutoff if cutoff is None else int(cutoff)
    length = cells * m.a
    if m.defect.extent(1e-12) > 0.5 * length:
        raise DomainError(
            f"defect is not negligible at the supercell boundary (half-length {0.5 * length:g})"
        )
    if p_range is None:
        pmax = cells * g + cells // 2
        p_range = (-pmax, pmax)
    p = np.arange(p_range[0], p_range[1] + 1)
    q = 2 * pi * p / length
    dp = p[:, None] - p[None, :]
    h = np.zeros((len(p), len(p)), complex)
    for j, v in m.vper_coeffs.items():
        h[dp == j * cells] += v
    h += m.defect.fourier(q[:, None] - q[None, :], length)
    h[np.diag_indices_from(h)] += q * q
    if np.all(np.abs(h.imag) < 1e-14):
        h = h.real
    return h


def supercell_spectrum(m: PeriodicModel, cells: int, cutoff: int | None = None,
                       p_range=None) -> np.ndarray:
    return eig_hermitian(DenseHermitian(supercell_hamiltonian(m, cells, cutoff, p_range))).values


def supercell_reference(m: PeriodicModel, cells: int, cutoff: int | None = None,
                        gap_index: int = 1) -> np.ndarray:
    """Eigenvalues of the supercell defect Hamiltonian strictly inside the gap."""
    lo, hi = band_edges(m, gap_index)
    vals = supercell_spectrum(m, cells, cutoff)
    # band-edge states land on the edges up to rounding
    tol = 1e-9 * max(abs(lo), abs(hi))
    return vals[(vals > lo + tol) & (vals < hi - tol)]
