import numpy as np
import pytest

from spectral_pollution.dirac import DiracChannelModel, PotentialSpec, SchemeSpec
from spectral_pollution.errors import NoTheoryError, ProtocolError, ValidationError
from spectral_pollution.lab import (
    DetectorParams,
    PollutionReport,
    PredictedSpurious,
    Problem,
    RunSequence,
    SpectrumModel,
    SpuriousPoint,
    compare_report,
    detect_spurious,
    dirac_problem,
    predicted_spurious,
    run_sequence,
    toy_problem,
)
from spectral_pollution.periodic import DefectSpec, PeriodicModel
from spectral_pollution.toy import ThetaRule, ToyRotatedModel

GAP = SpectrumModel((-1.0, 1.0), ((-np.inf, -1.0), (1.0, np.inf)), ((0.3, 1e-8),))


def synthetic(sizes, fn):
    return RunSequence(tuple(sizes), tuple(np.atleast_1d(fn(n)) for n in sizes))


def dirac(potential, kappa_d=-1, r_max=40.0, graded=True, size=60):
    return DiracChannelModel.for_size(size, kappa_d, potential, r_max=r_max, graded=graded)


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------


def test_spectrum_model_rejects_overlap():
    with pytest.raises(ValidationError):
        SpectrumModel((-1.0, 1.0), ((0.5, 2.0),))
    with pytest.raises(ValidationError):
        SpectrumModel((1.0, -1.0))


def test_run_sequence_requires_increasing_sizes():
    with pytest.raises(ValidationError):
        RunSequence((4, 4), ([], []))
    with pytest.raises(ValidationError):
        RunSequence((4, 8), ([],))


def test_detector_params_absolute():
    assert DetectorParams().absolute(2.0) == {"cluster": 1e-2, "drift": 4e-3, "true": 2e-3,
                                              "margin": 2e-2}
    with pytest.raises(ValidationError):
        DetectorParams(drift=-1.0)


# --------------------------------------------------------------------------
# Detector on synthetic sequences
# --------------------------------------------------------------------------


def test_too_few_sizes():
    with pytest.raises(ProtocolError):
        detect_spurious(synthetic([1, 2, 3], lambda n: [0.5]), GAP)


def test_classification():
    sizes = [10, 20, 40, 80, 160, 320]
    run = synthetic(sizes, lambda n: [0.3 + 1e-4 / n, 0.6 + 1e-3 / n, -0.5 + 40.0 / n])
    rep = detect_spurious(run, GAP)
    assert rep.true_hits == [0.3]
    assert [round(p.location, 3) for p in rep.spurious_points] == [0.6]
    assert [p.verdict for p in rep.unresolved] == ["unresolved"]
    # the drifting point moved by 0.125 over the last half
    assert rep.unresolved[0].drift > 0.1


def test_true_level_never_spurious():
    sizes = [8, 16, 32, 64]
    run = synthetic(sizes, lambda n: [0.3 + 1e-3 / n])
    rep = detect_spurious(run, GAP)
    assert rep.spurious_points == [] and rep.true_hits == [0.3]


def test_margin_excludes_gap_edges():
    run = synthetic([8, 16, 32, 64], lambda n: [0.995, -0.995])
    rep = detect_spurious(run, GAP)
    assert rep.points == [] and rep.window == pytest.approx((-0.98, 0.98))


def test_monotone_persistence():
    def f(n):
        return [0.6]

    p4 = detect_spurious(synthetic([1, 2, 3, 4], f), GAP).spurious_points[0].persistence
    p6 = detect_spurious(synthetic([1, 2, 3, 4, 5, 6], f), GAP).spurious_points[0].persistence
    assert p6 >= p4


def test_compare_report_flags_point_outside():
    pred = PredictedSpurious(((0.5, 1.0),), "test interval")
    rep = PollutionReport([SpuriousPoint(0.2, 4, 0.0, "spurious"),
                           SpuriousPoint(0.7, 4, 0.0, "spurious")],
                          [], [], pred, (-1.0, 1.0), (-0.98, 0.98), {"drift": 4e-3}, (1, 2, 3, 4))
    cmp = compare_report(rep)
    assert cmp.verdict == "FAIL" and cmp.n_outside == 1
    assert cmp.violations[0][0] == pytest.approx(0.2)
    assert cmp.to_dict()["provenance"] == "test interval"


def test_compare_report_empty_prediction():
    pred = PredictedSpurious((), "empty")
    rep = PollutionReport([SpuriousPoint(0.7, 4, 0.0, "spurious")], [], [], pred,
                          (-1.0, 1.0), (-0.98, 0.98), {"drift": 4e-3}, (1, 2, 3, 4))
    assert compare_report(rep).verdict == "FAIL"
    rep.spurious_points = []
    assert compare_report(rep).verdict == "PASS"


# --------------------------------------------------------------------------
# Predicted sets
# --------------------------------------------------------------------------


def test_predicted_upper_lower_well():
    m = dirac(PotentialSpec.gaussian_well(0.5, 6.0))
    p = predicted_spurious(m, SchemeSpec("upper_lower"))
    assert p.intervals == ((0.5, 1.0),)
    assert p.provenance.startswith("Table 1 row")


def test_predicted_dual_free_is_empty():
    p = predicted_spurious(dirac(PotentialSpec.zero()), SchemeSpec("dual", epsilon=0.5))
    assert p.is_empty


def test_predicted_dual_threshold():
    well = dirac(PotentialSpec.gaussian_well(0.5, 6.0))
    assert predicted_spurious(well, SchemeSpec("dual", epsilon=0.4)).is_empty
    assert not predicted_spurious(well, SchemeSpec("dual", epsilon=1.0)).is_empty


def test_predicted_coulomb_rows():
    m = dirac(PotentialSpec.coulomb(0.5))
    assert predicted_spurious(m, SchemeSpec("kinetic_balance")).intervals == ((-1.0, 1.0),)
    assert predicted_spurious(m, SchemeSpec("atomic_balance")).is_empty
    assert predicted_spurious(m, SchemeSpec("free_split")).is_empty
    assert predicted_spurious(m, SchemeSpec("naive")).intervals == ((-1.0, 1.0),)


def test_predicted_kinetic_balance_bounded():
    m = dirac(PotentialSpec.gaussian_well(0.5, 6.0))
    assert predicted_spurious(m, SchemeSpec("kinetic_balance")).is_empty
    bump = dirac(PotentialSpec.gaussian_bump(0.3))
    assert predicted_spurious(bump, SchemeSpec("kinetic_balance")).intervals == ((-1.0, -0.7),)


def test_predicted_toy_and_periodic():
    toy = ToyRotatedModel("bounded_below", ThetaRule(), 1)
    p = predicted_spurious(toy)
    assert p.intervals == ((0.0, 0.5),) and "Theorem 2.1" in p.provenance
    pi4 = ToyRotatedModel("unbounded_both", ThetaRule("constant", value=np.pi / 4), 1)
    assert predicted_spurious(pi4).intervals == ((0.0, 0.0),)
    with pytest.raises(NoTheoryError):
        predicted_spurious(ToyRotatedModel("unbounded_both", ThetaRule("power", alpha=0.5), 1))
    assert predicted_spurious(PeriodicModel()).is_empty


def test_dirac_needs_scheme():
    with pytest.raises(ValidationError):
        predicted_spurious(dirac(PotentialSpec.zero()))


# --------------------------------------------------------------------------
# Sequences on real models
# --------------------------------------------------------------------------


def test_toy_sequence_values():
    prob = toy_problem(ToyRotatedModel("bounded_below", ThetaRule(), 1))
    run = run_sequence(prob, [4, 8, 16, 32])
    expected = [n * np.sin(1 / np.sqrt(2 * n)) ** 2 for n in (4, 8, 16, 32)]
    # the kernel sits at 0 and the rotated vector gives the single positive value below 1
    last = [s[(s > 1e-9) & (s < 1 - 1e-9)] for s in run.spectra]
    assert [v.tolist() for v in last] == [[pytest.approx(e, abs=1e-12)] for e in expected]


def test_free_dirac_upper_lower_empty():
    prob = dirac_problem(dirac(PotentialSpec.zero(), size=50), SchemeSpec("upper_lower"))
    run = run_sequence(prob, [20, 30, 40, 50])
    assert all(s.size == 0 for s in run.spectra)


def test_periodic_free_empty():
    from spectral_pollution.lab import periodic_problem

    m = PeriodicModel(defect=DefectSpec("none", 0.0, 1.0))
    run = run_sequence(periodic_problem(m, max_translates=8, n_xi=32), [2, 4, 6, 8])
    assert all(s.size == 0 for s in run.spectra)


def test_run_sequence_deterministic_across_threads():
    prob = dirac_problem(dirac(PotentialSpec.coulomb(0.5), r_max=80.0, size=60),
                         SchemeSpec("kinetic_balance"))
    a = run_sequence(prob, [30, 40, 50, 60], threads=1)
    b = run_sequence(prob, [30, 40, 50, 60], threads=3)
    for x, y in zip(a.spectra, b.spectra):
        assert np.array_equal(x, y)


def test_run_sequence_annotates_size():
    from spectral_pollution.errors import NumericalError

    def solve(n):
        if n == 3:
            raise NumericalError("boom")
        return np.array([0.5])

    prob = Problem("failing", solve, GAP)
    with pytest.raises(NumericalError, match="size 3"):
        run_sequence(prob, [1, 2, 3, 4])
