from math import pi

import numpy as np
import pytest

from spectral_pollution.eig import eig_generalized
from spectral_pollution.errors import BandCrossingError, DomainError, ResolutionError, ValidationError
from spectral_pollution.periodic import (
    DEFAULT_W0,
    DefectSpec,
    PeriodicModel,
    assemble_periodic,
    band_edges,
    bloch_bands,
    gauge_fix,
    supercell_reference,
    wannier_build,
    wannier_pair,
)

NO_DEFECT = DefectSpec("none", 0.0, 1.0)
STRONG = PeriodicModel(defect=NO_DEFECT)
EDGES = (7.820215271609103, 11.817650790314282)


@pytest.fixture(scope="module")
def pair():
    return wannier_pair(STRONG, 8, n_xi=64)


def test_free_bands():
    m = PeriodicModel(vper_coeffs={}, defect=NO_DEFECT, planewave_cutoff=6)
    b = bloch_bands(m, 16, 4)
    j = np.arange(-6, 7)
    for xi, row in zip(b.xi_grid, b.bands):
        assert np.allclose(row, np.sort((xi + 2 * pi * j) ** 2)[:4], atol=1e-10)


def test_weak_potential_gap():
    # a weak cosine opens the first gap at the zone edge with width close to 2 |v_1|
    m = PeriodicModel(vper_coeffs={1: 0.5, -1: 0.5}, defect=NO_DEFECT)
    lo, hi = band_edges(m)
    assert hi - lo == pytest.approx(1.0, rel=0.1)
    assert lo == pytest.approx(pi**2, rel=0.1)


def test_default_band_edges():
    assert band_edges(STRONG) == pytest.approx(EDGES, abs=1e-10)


def test_band_symmetry():
    b = bloch_bands(STRONG, 32, 4)
    # xi -> -xi on the grid maps s to -s; s = -n/2 is its own partner at the zone edge
    assert np.allclose(b.bands[1:], b.bands[1:][::-1], atol=1e-9)


def test_model_validation():
    with pytest.raises(ValidationError):
        PeriodicModel(vper_coeffs={1: 1.0, -1: 2.0})
    with pytest.raises(ValidationError):
        DefectSpec("gaussian_well", -1.0, 1.0)
    with pytest.raises(ValidationError):
        bloch_bands(STRONG, 7)


def test_gauge_is_smooth():
    b = bloch_bands(STRONG, 64, 6)
    g = gauge_fix(b, (1, 2, 3, 4))
    f = g.bloch_vectors[:, :, 1:5]
    raw = b.bloch_vectors[:, :, 1:5]
    for s in range(63):
        dev = np.linalg.norm(f[s].conj().T @ f[s + 1] - np.eye(4), 2)
        # the subspace itself turns fast where bands 5 and 6 nearly touch, so bound by its own rotation
        turn = 1 - np.linalg.svd(raw[s].conj().T @ raw[s + 1], compute_uv=False).min()
        assert dev <= turn + 0.06
    g0 = gauge_fix(b, (0,)).bloch_vectors[:, :, :1]
    assert max(abs(1 - (g0[s].conj().T @ g0[s + 1])[0, 0]) for s in range(63)) < 0.1
    # bands and subspaces are unchanged by the gauge
    p0 = b.bloch_vectors[:, :, 1:5] @ b.bloch_vectors[:, :, 1:5].conj().transpose(0, 2, 1)
    p1 = f @ f.conj().transpose(0, 2, 1)
    assert np.allclose(p0, p1, atol=1e-12)


def test_band_crossing_detected():
    m = PeriodicModel(vper_coeffs={}, defect=NO_DEFECT, planewave_cutoff=6)
    b = bloch_bands(m, 16, 4)
    with pytest.raises(BandCrossingError):
        gauge_fix(b, (0,))


def test_resolution_error():
    m = PeriodicModel(defect=NO_DEFECT, planewave_cutoff=1)
    with pytest.raises(ResolutionError):
        bloch_bands(m, 16, 3)


def test_wannier_orthonormal_and_localized(pair):
    below, above = pair
    assert below.orthonormality_residual <= 1e-8
    assert above.orthonormality_residual <= 1e-8
    assert below.decay_rate > 0.3
    assert above.decay_rate > 0


def test_wannier_requires_gauge():
    b = bloch_bands(STRONG, 32, 3)
    with pytest.raises(ValidationError):
        wannier_build(b, (0,))
    with pytest.raises(ValidationError):
        wannier_build(gauge_fix(b, (0,)), (0,), translates=16)


def test_no_defect_has_no_gap_values(pair):
    p = assemble_periodic(STRONG, pair)
    nb = pair[0].count
    assert np.abs(p.h.entries[:nb, nb:]).max() <= 1e-8
    assert np.abs(p.s.entries - np.eye(p.s.dim)).max() <= 1e-8
    vals = eig_generalized(p).values
    assert not np.any((vals > EDGES[0] + 1e-8) & (vals < EDGES[1] - 1e-8))


def test_ritz_values_within_bands(pair):
    # with no defect each block sees a spectral subspace, so its values lie inside its bands
    b = pair[0].bands
    vals = eig_generalized(assemble_periodic(STRONG, pair)).values
    assert vals.min() >= b.bands[:, 0].min() - 1e-8
    assert vals.max() <= b.bands[:, 4].max() + 1e-8


def test_defect_matches_supercell():
    m = PeriodicModel(defect=DefectSpec("gaussian_well", DEFAULT_W0, 1.0))
    ref = supercell_reference(m, 64)
    assert len(ref) == 1
    pair = wannier_pair(m, 16)
    vals = eig_generalized(assemble_periodic(m, pair, 16)).values
    gap = vals[(vals > EDGES[0]) & (vals < EDGES[1])]
    assert len(gap) == 1
    assert gap[0] == pytest.approx(ref[0], abs=1e-4)


def test_supercell_converged_in_cells():
    m = PeriodicModel(defect=DefectSpec("gaussian_well", DEFAULT_W0, 1.0))
    a, b = supercell_reference(m, 64), supercell_reference(m, 96)
    assert len(a) == len(b) == 1
    assert abs(a[0] - b[0]) < 1e-6
    assert a[0] == pytest.approx(9.8281058, abs=1e-7)
    assert supercell_reference(STRONG, 32).size == 0


def test_defect_domain_errors():
    wide = PeriodicModel(defect=DefectSpec("gaussian_well", 1.0, 20.0))
    with pytest.raises(DomainError):
        supercell_reference(wide, 8)
    with pytest.raises(DomainError):
        assemble_periodic(wide, wannier_pair(wide, 8, n_xi=32))


def test_assemble_radius_checks(pair):
    with pytest.raises(ValidationError):
        assemble_periodic(STRONG, pair, 0)
    with pytest.raises(ValidationError):
        assemble_periodic(STRONG, pair, 9)
    assert assemble_periodic(STRONG, pair, 4).h.dim == 5 * 9
