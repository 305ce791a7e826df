"""Galerkin sequences, spurious-point detection and predicted pollution sets."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .concurrency import THREADS_ENV, default_threads
from .dirac import DiracChannelModel, SchemeSpec, solve_dirac
from .eig import eig_generalized, eig_hermitian
from .errors import LabError, NoTheoryError, ProtocolError, ValidationError
from .toy import ToyRotatedModel, assemble_toy

__all__ = [
    "THREADS_ENV",
    "SpectrumModel",
    "RunSequence",
    "DetectorParams",
    "SpuriousPoint",
    "PollutionReport",
    "PredictedSpurious",
    "Comparison",
    "Problem",
    "run_sequence",
    "detect_spurious",
    "predicted_spurious",
    "compare_report",
    "toy_problem",
    "dirac_problem",
    "toy_spectrum_model",
    "dirac_spectrum_model",
    "periodic_problem",
    "periodic_spectrum_model",
    "default_threads",
]

# --------------------------------------------------------------------------
# Data types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumModel:
    """Essential spectrum, the gap under study and trusted discrete levels.

    ``reference_eigs`` holds ``(value, tolerance)`` pairs; levels outside the
    gap are allowed (they are used for matching only). ``hat_extends``
    flags whether the extended essential spectrum contains ``-inf``/``+inf``.
    """

    gap: tuple[float, float]
    ess_intervals: tuple = ()
    reference_eigs: tuple = ()
    hat_extends: tuple[bool, bool] = (True, True)

    def __post_init__(self):
        a, b = map(float, self.gap)
        if not a < b:
            raise ValidationError(f"gap must satisfy a < b, got {self.gap}")
        object.__setattr__(self, "gap", (a, b))
        ess = tuple((float(lo), float(hi)) for lo, hi in self.ess_intervals)
        for lo, hi in ess:
            if lo > hi:
                raise ValidationError(f"bad essential interval {(lo, hi)}")
            if lo < b and hi > a:
                raise ValidationError(f"essential interval {(lo, hi)} meets the gap {self.gap}")
        object.__setattr__(self, "ess_intervals", ess)
        refs = tuple((float(v), float(t)) for v, t in self.reference_eigs)
        object.__setattr__(self, "reference_eigs", refs)

    @property
    def width(self) -> float:
        return self.gap[1] - self.gap[0]

    def in_gap(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return (x > self.gap[0]) & (x < self.gap[1])

    def gap_references(self) -> list[float]:
        return [v for v, _ in self.reference_eigs if self.gap[0] < v < self.gap[1]]


@dataclass
class RunSequence:
    """Per-size gap spectra of one Galerkin sequence."""

    sizes: tuple
    spectra: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) != len(self.spectra):
            raise ValidationError("one spectrum per size is required")
        if any(b <= a for a, b in zip(sizes[:-1], sizes[1:])):
            raise ValidationError(f"sizes must be strictly increasing, got {sizes}")
        self.sizes = sizes
        self.spectra = tuple(np.sort(np.asarray(s, float)) for s in self.spectra)


@dataclass(frozen=True)
class DetectorParams:
    """Detector tolerances as fractions of the gap width."""

    cluster: float = 5e-3
    drift: float = 2e-3
    true: float = 1e-3
    margin: float = 1e-2

    def __post_init__(self):
        for name in ("cluster", "drift", "true", "margin"):
            if getattr(self, name) < 0:
                raise ValidationError(f"detector threshold {name} must be nonnegative")

    def absolute(self, width: float) -> dict:
        return {k: v * width for k, v in asdict(self).items()}


@dataclass(frozen=True)
class SpuriousPoint:
    location: float
    persistence: int
    drift: float
    verdict: str


@dataclass(frozen=True)
class PredictedSpurious:
    """Union of closed intervals (clipped to the gap closure) with its provenance."""

    intervals: tuple
    provenance: str

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    def distance(self, x: float) -> float:
        if self.is_empty:
            return np.inf
        return min(max(lo - x, 0.0, x - hi) for lo, hi in self.intervals)

    def contains(self, x: float, dilation: float = 0.0) -> bool:
        return self.distance(x) <= dilation

    def to_dict(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals], "provenance": self.provenance}


@dataclass
class PollutionReport:
    spurious_points: list
    true_hits: list
    unresolved: list
    predicted: PredictedSpurious | None
    gap: tuple
    window: tuple
    thresholds: dict
    sizes: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def points(self) -> list[SpuriousPoint]:
        return self.spurious_points + self.unresolved

    def to_dict(self) -> dict:
        def pt(p):
            return {"location": p.location, "persistence": p.persistence,
                    "drift": p.drift, "verdict": p.verdict}
        return {
            "gap": list(self.gap),
            "window": list(self.window),
            "sizes": list(self.sizes),
            "thresholds": self.thresholds,
            "spurious_points": [pt(p) for p in self.spurious_points],
            "true_hits": list(self.true_hits),
            "unresolved": [pt(p) for p in self.unresolved],
            "predicted": None if self.predicted is None else self.predicted.to_dict(),
            "metadata": self.metadata,
        }


@dataclass(frozen=True)
class Comparison:
    verdict: str
    n_spurious: int
    n_outside: int
    violations: tuple
    provenance: str

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "n_spurious": self.n_spurious,
            "n_outside": self.n_outside,
            "violations": [{"location": x, "distance": d} for x, d in self.violations],
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class Problem:
    """A Galerkin family: ``solve(size)`` returns all eigenvalues at that size."""

    label: str
    solve: Callable[[int], np.ndarray]
    spectrum: SpectrumModel
    predicted: PredictedSpurious | None = None
    metadata: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Sequences and detection
# --------------------------------------------------------------------------


def run_sequence(problem: Problem, sizes: Sequence[int], threads: int | None = None) -> RunSequence:
    """Solve every size (concurrently) and keep the eigenvalues inside the gap."""
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes[:-1], sizes[1:])):
        raise ValidationError(f"sizes must be strictly increasing, got {sizes}")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValidationError("threads must be positive")

    def one(n):
        try:
            vals = np.asarray(problem.solve(n), float)
        except LabError as exc:
            exc.args = (f"size {n}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        return vals[problem.spectrum.in_gap(vals)]

    # largest sizes first so the slow jobs start early
    order = sorted(range(len(sizes)), key=lambda i: -sizes[i])
    with ThreadPoolExecutor(max_workers=min(threads, len(sizes))) as pool:
        futures = {i: pool.submit(one, sizes[i]) for i in order}
        spectra = [futures[i].result() for i in range(len(sizes))]
    meta = dict(problem.metadata)
    meta.setdefault("label", problem.label)
    return RunSequence(tuple(sizes), tuple(spectra), meta)


def _clusters(values: np.ndarray, tol: float) -> list[float]:
    """Single-linkage clusters of sorted values; returns centroids."""
    if values.size == 0:
        return []
    breaks = np.nonzero(np.diff(values) > tol)[0] + 1
    return [float(np.mean(g)) for g in np.split(values, breaks)]


def detect_spurious(run: RunSequence, spectrum: SpectrumModel,
                    params: DetectorParams | None = None,
                    predicted: PredictedSpurious | None = None) -> PollutionReport:
    """Classify the persistent in-gap points of a Galerkin sequence.

    Candidates are the cluster centroids of the final-size spectrum inside
    the gap window. Over the last half of the sizes a candidate must stay
    within the cluster tolerance of every spectrum (a) and its nearest
    values must drift by at most the drift tolerance (b); candidates failing
    (a) or (b) are unresolved. Resolved candidates near a reference level
    are true hits; the others are spurious.
    """
    if len(run.sizes) < 4:
        raise ProtocolError(f"detection needs at least 4 sizes, got {len(run.sizes)}")
    params = params or DetectorParams()
    tol = params.absolute(spectrum.width)
    a, b = spectrum.gap
    window = (a + tol["margin"], b - tol["margin"])
    final = run.spectra[-1]
    final = final[(final > window[0]) & (final < window[1])]
    tail = run.spectra[len(run.spectra) // 2:]

    spurious, hits, unresolved = [], [], []
    for lam in _clusters(final, tol["cluster"]):
        nearest, ok = [], True
        for spec in tail:
            if spec.size == 0:
                ok = False
                break
            j = int(np.argmin(np.abs(spec - lam)))
            if abs(spec[j] - lam) > tol["cluster"]:
                ok = False
                break
            nearest.append(spec[j])
        persistence = 0
        for spec in reversed(run.spectra):
            if spec.size and np.min(np.abs(spec - lam)) <= tol["cluster"]:
                persistence += 1
            else:
                break
        drift = float(np.ptp(nearest)) if nearest else np.inf
        if not ok or drift > tol["drift"]:
            unresolved.append(SpuriousPoint(lam, persistence, drift, "unresolved"))
            continue
        match = [v for v, t in spectrum.reference_eigs if abs(v - lam) <= max(tol["true"], t)]
        if match:
            hits.append(min(match, key=lambda v: abs(v - lam)))
        else:
            spurious.append(SpuriousPoint(lam, persistence, drift, "spurious"))

    return PollutionReport(
        spurious_points=spurious,
        true_hits=hits,
        unresolved=unresolved,
        predicted=predicted,
        gap=spectrum.gap,
        window=window,
        thresholds=tol,
        sizes=run.sizes,
        metadata=dict(run.metadata),
    )


def compare_report(rep: PollutionReport) -> Comparison:
    """PASS iff every spurious point lies in the predicted set dilated by the drift tolerance."""
    if rep.predicted is None:
        raise ValidationError("report carries no predicted set")
    dil = rep.thresholds["drift"]
    bad = []
    for p in rep.spurious_points:
        d = rep.predicted.distance(p.location)
        if d > dil:
            bad.append((p.location, float(d)))
    bad.sort(key=lambda t: -t[1])
    return Comparison(
        verdict="FAIL" if bad else "PASS",
        n_spurious=len(rep.spurious_points),
        n_outside=len(bad),
        violations=tuple(bad),
        provenance=rep.predicted.provenance,
    )


# --------------------------------------------------------------------------
# Predicted sets
# --------------------------------------------------------------------------


def _clip(intervals, gap, provenance):
    a, b = gap
    out = []
    for lo, hi in intervals:
        lo, hi = max(lo, a), min(hi, b)
        if lo > hi:
            continue
        if lo == hi and lo in (a, b):
            # a single gap endpoint is not inside the open gap
            continue
        out.append((float(lo), float(hi)))
    return PredictedSpurious(tuple(out), provenance)


def _predicted_toy(m: ToyRotatedModel) -> PredictedSpurious:
    spec = toy_spectrum_model(m)
    if m.variant == "bounded_below":
        lim = m.theta_rule.limit_of_n_sin2()
        prov = f"Theorem 2.1 (rotated frame, lim n sin^2 theta_n = {lim:g})"
        return _clip([(0.0, lim)], spec.gap, prov)
    t = m.theta_rule
    if t.kind == "constant":
        # last diagonal entry -n cos(2 theta) has a finite limit only at theta = pi/4
        if abs(np.cos(2 * t.value)) < 1e-12:
            return _clip([(0.0, 0.0)], spec.gap, "Theorem 2.1 (rotated pair A+B, theta = pi/4)")
        return _clip([], spec.gap, "Theorem 2.1 (rotated pair A+B)")
    raise NoTheoryError("unbounded_both is only covered for constant angles")


def _predicted_dirac(model: DiracChannelModel, scheme: SchemeSpec) -> PredictedSpurious:
    pot = model.potential
    gap = (-1.0, 1.0)
    whole = [(-1.0, 1.0)]
    kind = scheme.kind
    coulomb = not pot.is_bounded
    sup_v, inf_v = pot.sup_v, pot.inf_v
    if kind == "naive":
        return _clip(whole, gap, "Theorem 1.5 (whole gap)")
    if kind == "upper_lower":
        prov = "Table 1 row upper/lower spinors"
        if coulomb:
            return _clip(whole, gap, prov + " (Coulomb)")
        return _clip([(-1.0, -1.0 + sup_v), (1.0 + inf_v, 1.0)], gap, prov)
    if kind in ("dual", "dual_kinetic_balance"):
        prov = ("Table 1 row dual decomposition" if kind == "dual"
                else "Table 2 row dual kinetic balance")
        if coulomb:
            return _clip(whole, gap, prov + " (Coulomb)")
        eps = scheme.epsilon
        ivs = [(-1.0, min(-2.0 / eps + 1.0 + sup_v, 1.0)),
               (max(-1.0, 2.0 / eps - 1.0 + inf_v), 1.0)]
        return _clip(ivs, gap, prov + f" (epsilon={eps:g})")
    if kind == "free_split":
        return _clip([], gap, "Table 1 row free decomposition")
    if kind == "kinetic_balance":
        prov = "Table 2 row kinetic balance"
        if coulomb:
            return _clip(whole, gap, prov + " (Coulomb)")
        if not -1.0 + sup_v < 1.0 + inf_v:
            raise NoTheoryError("kinetic balance is covered only when -1 + sup V < 1 + inf V")
        return _clip([(-1.0, -1.0 + sup_v)], gap, prov)
    if kind == "atomic_balance":
        return _clip([(-1.0, -1.0 + sup_v)], gap, "Table 2 row atomic balance")
    raise NoTheoryError(f"no prediction for scheme {kind!r}")


def predicted_spurious(model, scheme: SchemeSpec | None = None) -> PredictedSpurious:
    """Closed-form spurious set for a (model, scheme) pair."""
    if isinstance(model, ToyRotatedModel):
        return _predicted_toy(model)
    if isinstance(model, DiracChannelModel):
        if scheme is None:
            raise ValidationError("a Dirac model needs a scheme")
        return _predicted_dirac(model, scheme)
    from .periodic import PeriodicModel

    if isinstance(model, PeriodicModel):
        return PredictedSpurious((), "Theorem (periodic Wannier splitting): no pollution")
    raise NoTheoryError(f"no prediction for model type {type(model).__name__}")


# --------------------------------------------------------------------------
# Problem factories
# --------------------------------------------------------------------------


def toy_spectrum_model(m: ToyRotatedModel) -> SpectrumModel:
    if m.variant == "bounded_below":
        # sigma(A) = {0} u {1, 2, ...}; 0 has infinite multiplicity
        return SpectrumModel((0.0, 1.0), ((0.0, 0.0),), (), (False, True))
    # sigma(A+B) = {+-1, +-2, ...}: only the infinities are essential
    return SpectrumModel((-1.0, 1.0), (), (), (True, True))


def toy_problem(m: ToyRotatedModel) -> Problem:
    def solve(n):
        return eig_hermitian(assemble_toy(m.with_size(n))).values

    try:
        pred = predicted_spurious(m)
    except NoTheoryError:
        pred = None
    return Problem(
        label=f"toy {m.variant} theta={m.theta_rule.describe()}",
        solve=solve,
        spectrum=toy_spectrum_model(m),
        predicted=pred,
        metadata={"model": "toy", "variant": m.variant, "theta_rule": m.theta_rule.describe(),
                  "nested": "leading subsets of one rotated frame"},
    )


def dirac_spectrum_model(model: DiracChannelModel, references=None, ref_tol: float = 1e-8):
    """Gap (-1, 1) with reference levels (closed form or shooting)."""
    if references is None:
        from .dirac_reference import reference_levels

        references = reference_levels(model.potential, model.kappa_d)
    refs = tuple((float(v), ref_tol) for v in references)
    return SpectrumModel((-1.0, 1.0), ((-np.inf, -1.0), (1.0, np.inf)), refs, (True, True))


def dirac_problem(model: DiracChannelModel, scheme: SchemeSpec, references=None,
                  predicted: bool = True) -> Problem:
    def solve(n):
        return solve_dirac(model.with_size(n), scheme).values

    try:
        pred = predicted_spurious(model, scheme) if predicted else None
    except NoTheoryError:
        pred = None
    b = model.basis
    return Problem(
        label=f"dirac kappa_d={model.kappa_d} {model.potential.describe()} {scheme.describe()}",
        solve=solve,
        spectrum=dirac_spectrum_model(model, references),
        predicted=pred,
        metadata={
            "model": "dirac",
            "kappa_d": model.kappa_d,
            "potential": model.potential.describe(),
            "scheme": scheme.describe(),
            "order": b.order,
            "r_max": b.domain[1],
            "nested": "same breakpoint family, refined per size",
        },
    )


def periodic_spectrum_model(m, references=None, reference_cells: int = 64,
                            ref_tol: float = 1e-8, gap_index: int = 1) -> SpectrumModel:
    """Band gap of the defect-free operator with supercell reference levels."""
    from .periodic import band_edges, supercell_reference

    lo, hi = band_edges(m, gap_index)
    if references is None:
        references = supercell_reference(m, reference_cells, gap_index=gap_index)
    refs = tuple((float(v), ref_tol) for v in references)
    return SpectrumModel((lo, hi), ((-np.inf, lo), (hi, np.inf)), refs, (False, True))


def periodic_problem(m, max_translates: int = 32, n_xi: int | None = None,
                     n_above: int | None = None, references=None,
                     reference_cells: int = 64, threads: int | None = None) -> Problem:
    """Wannier-split Galerkin sequence indexed by the translate radius ``R``."""
    from .periodic import DEFAULT_N_ABOVE, DEFAULT_N_XI, assemble_periodic, wannier_pair

    n_xi = DEFAULT_N_XI if n_xi is None else n_xi
    n_above = DEFAULT_N_ABOVE if n_above is None else n_above
    pair = wannier_pair(m, max_translates, n_xi, n_above, threads=threads)

    def solve(r):
        return eig_generalized(assemble_periodic(m, pair, r)).values

    return Problem(
        label=f"periodic a={m.a:g} cutoff={m.planewave_cutoff} defect={m.defect.kind}",
        solve=solve,
        spectrum=periodic_spectrum_model(m, references, reference_cells),
        predicted=predicted_spurious(m),
        metadata={
            "model": "periodic",
            "n_xi": n_xi,
            "n_above": n_above,
            "max_translates": max_translates,
            "reference_cells": reference_cells,
            "orthonormality_residual": max(w.orthonormality_residual for w in pair),
            "decay_rate": min(w.decay_rate for w in pair),
            "nested": "translates within radius R, nested",
        },
    )
