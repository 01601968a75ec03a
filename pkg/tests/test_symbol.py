import math

import numpy as np
import pytest

from mirt.fields import sol_projector
from mirt.geometry import Curve, frame_vectors
from mirt.symbol import (AdmissibilityError, NotElliptic, RankDeficient, SigmaProximity, SymbolMatrix, basis5,
                         constraint_rows, ellipticity_check, identity_defect, parametrix_symbol,
                         principal_symbol, sample_admissible, sample_symbols)

X0 = np.array([0.05, -0.1, 0.0])
XI = np.array([1.0, 0.3, 0.2])


@pytest.fixture(scope="module")
def symbols():
    return sample_symbols(Curve("helix"), np.random.default_rng(21), 40)


def test_symmetric_psd(symbols):
    for s in symbols:
        a = s.matrix
        assert np.allclose(a, a.T)
        assert np.linalg.eigvalsh(a).min() >= -1e-12 * np.linalg.norm(a)


def test_rank_five(symbols):
    for s in symbols:
        sv = s.singular_values()
        assert sv[4] / sv[0] >= 1e-6
        assert sv[5] / sv[0] <= 1e-10
        assert s.rank() == 5


def test_factor_invariants(symbols):
    for s in symbols:
        for v in np.concatenate([s.v_alpha, s.v_beta]):
            t = v.reshape(3, 3)
            assert abs(np.trace(t)) <= 1e-14
            assert np.allclose(s.xi0 @ t, 0.0, atol=1e-14)


def test_homogeneity(helix):
    a = principal_symbol(helix, X0, XI).matrix
    b = principal_symbol(helix, X0, 2 * XI).matrix
    assert np.allclose(b, a / 2, rtol=0, atol=1e-12 * np.abs(a).max())


def test_kronecker_form(symbols):
    for s in symbols:
        assert np.abs(s.matrix - s.kronecker_form()).max() <= 1e-12 * np.abs(s.matrix).max()


def test_range_is_solenoidal(symbols):
    for s in symbols:
        p = sol_projector(s.xi)
        a = s.matrix
        assert np.linalg.norm((np.eye(9) - p) @ a) <= 1e-12 * np.linalg.norm(a)
        assert np.allclose(a @ p, a, atol=1e-12 * np.abs(a).max())


def test_parametrix_identity(symbols):
    for s in symbols:
        assert identity_defect(s) <= 1e-8
        b0a0 = parametrix_symbol(s) @ s.matrix
        assert np.allclose(b0a0 @ b0a0, b0a0, atol=1e-8)


def test_parametrix_inverts_on_solenoidal(symbols, rng):
    for s in symbols[:10]:
        f = sol_projector(s.xi) @ rng.standard_normal(9)
        assert np.allclose(parametrix_symbol(s) @ (s.matrix @ f), f, atol=1e-8 * np.linalg.norm(f))
        b0 = parametrix_symbol(s)
        for v in np.eye(3):
            assert np.allclose(b0 @ np.outer(s.xi, v).ravel(), 0.0, atol=1e-10)


def test_basis5_certificate(symbols):
    for s in symbols[:10]:
        b = basis5(s)
        assert b.certificate > 1e-8 and b.vectors.shape == (9, 5)
        perm = np.random.default_rng(0).permutation(s.n_points)
        shuffled = SymbolMatrix(s.x, s.xi, s.t[perm], s.weights[perm], s.omegas[perm], s.e_alpha[perm],
                                s.e_beta[perm], s.matrix)
        assert basis5(shuffled).certificate == pytest.approx(b.certificate, rel=1e-12)


def test_basis5_repeated_chords():
    xi = np.array([0.0, 0.0, 1.0])
    om = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    s = SymbolMatrix.from_parts(np.zeros(3), xi, [0, 1, 2], [1, 1, 1], [1, 1, 1], om)
    with pytest.raises(RankDeficient):
        basis5(s)
    with pytest.raises(RankDeficient):
        parametrix_symbol(s)


def test_circle_rank_drops(circle):
    with pytest.raises(NotElliptic):
        principal_symbol(circle, X0, XI)
    s = principal_symbol(circle, X0, XI, require_elliptic=False)
    assert s.n_points == 2 and s.rank() < 5


def test_sigma_proximity_and_blowup(helix):
    # plane close to the osculating plane at t = 0: a single crossing with tiny |gamma'.xi0|
    d1 = helix.tangent(0.0)
    b = np.cross(d1, helix.second(0.0))
    b /= np.linalg.norm(b)
    xi = b + 1e-4 * d1 / (d1 @ d1)
    u = np.cross(xi, [1.0, 0.0, 0.0])
    x = helix.point(0.0) + 1.2 * u / np.linalg.norm(u)
    with pytest.raises(SigmaProximity):
        principal_symbol(helix, x, xi)
    s = principal_symbol(helix, x, xi, tau_sigma=1e-12, require_elliptic=False)
    assert s.n_points == 1 and s.weights.max() > 1e3


def _oracle_rows(alphas, beta1):
    rows = []
    frames = [frame_vectors(a, beta1) for a in alphas]
    xi = np.array([-math.sin(beta1), math.cos(beta1), 0.0])
    rows += [np.outer(w, wa).ravel() for w, wa, _ in frames]
    rows += [-np.outer(w, wb).ravel() for w, _, wb in frames[:2]]
    rows += [np.outer(xi, wa).ravel() for _, wa, _ in frames[:2]]
    rows.append(np.outer(xi, xi).ravel())
    rows.append(np.eye(3).ravel())
    rows += [np.outer(xi, e).ravel() for e in np.eye(3)]
    return np.array(rows)


def test_constraint_rows_match_frame_contractions():
    g = np.random.default_rng(2)
    for a1, a2, a3, b in sample_admissible(g, 50):
        assert np.allclose(constraint_rows((a1, a2, a3), b), _oracle_rows((a1, a2, a3), b), atol=1e-15)


def test_ellipticity_determinants():
    r = ellipticity_check(0.4, 1.3, 2.2, 0.7)
    assert r.det_a == pytest.approx(math.sin(0.4 - 1.3), abs=1e-12)
    assert r.det_b == pytest.approx(1.0, abs=1e-12)
    assert r.unique_zero


def test_ellipticity_random_tuples():
    g = np.random.default_rng(9)
    for row in sample_admissible(g, 200):
        r = ellipticity_check(*row)
        assert r.min_singular > 1e-8 and r.det_a_error <= 1e-12 and r.det_b_error <= 1e-12


def test_ellipticity_admissibility():
    with pytest.raises(AdmissibilityError):
        ellipticity_check(0.5, 0.5 + math.pi, 1.0, 0.0)
    # two equal angles leave a nontrivial solution: the check must not pass them
    with pytest.raises(AdmissibilityError):
        ellipticity_check(0.5, 0.5, 1.0, 0.0)
