import math

import numpy as np
import pytest

from mirt.geometry import (CovectorClass, Curve, DegeneratePlane, PoleError, classify_covector, conormal_coords,
                           frame_of, frame_vectors, kt_check, plane_intersections, sample_band_directions,
                           sigma_distance)


def crown_tangent_config():
    """Plane through gamma(0) of the crown with gamma'(0).xi = 0 and a transversal remainder."""
    c = Curve("crown")
    th = 0.6 * math.pi
    xi = np.array([math.cos(th), 0.0, math.sin(th)])
    x = np.array([0.0, 0.0, c.height + c.radius / math.tan(th)])
    return c, x, xi


def test_frame_of_axis_direction():
    fr = frame_of(np.array([1.0, 0.0, 0.0]))
    assert fr.alpha == pytest.approx(math.pi / 2) and fr.beta == pytest.approx(0.0)
    assert np.allclose(fr.xi_alpha, [0.0, 0.0, -1.0], atol=1e-15)
    assert np.allclose(fr.xi_beta, [0.0, 1.0, 0.0], atol=1e-15)


def test_frame_of_pole():
    with pytest.raises(PoleError):
        frame_of(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        frame_of(np.array([2.0, 0.0, 0.0]))


def test_frame_orthonormal_many_directions():
    rng = np.random.default_rng(0)
    d = sample_band_directions(rng, 100_000)
    alpha = np.arccos(d[:, 2])
    beta = np.arctan2(d[:, 1], d[:, 0])
    xi, xa, xb = frame_vectors(alpha, beta)
    dots = [np.abs(np.sum(u * v, axis=1)).max() for u, v in ((xi, xa), (xi, xb), (xa, xb))]
    assert max(dots) <= 1e-14
    norms = [np.abs(np.linalg.norm(v, axis=1) - 1).max() for v in (xi, xa, xb)]
    assert max(norms) <= 1e-14
    # right-handed: xi_alpha x xi_beta = xi
    assert np.abs(np.cross(xa, xb) - xi).max() <= 1e-14


def test_circle_degenerate_plane(circle):
    with pytest.raises(DegeneratePlane):
        plane_intersections(circle, [0, 0, 0], [0, 0, 1])
    assert plane_intersections(circle, [0, 0, 0], [0, 0, 1], raise_degenerate=False).degenerate
    assert classify_covector(circle, [0, 0, 0], [0, 0, 1]) is CovectorClass.DEGENERATE


def test_circle_two_roots(circle):
    ints = plane_intersections(circle, [0, 0, 0], [1, 0, 0])
    assert np.allclose(ints.t, [math.pi / 2, 3 * math.pi / 2], atol=1e-12)
    assert all(p.transversal for p in ints.points)


def _dense_sign_changes(curve, x, xi, factor=10):
    n = xi / np.linalg.norm(xi)
    count = 0
    for a, b, closed in curve.pieces():
        m = int(512 * factor * (b - a) / (2 * math.pi))
        t = np.linspace(a, b, m + 1)
        v = (curve.point(t) - x) @ n
        count += int(np.sum(v[:-1] * v[1:] < 0))
    return count


def test_helix_root_count_matches_dense_scan(helix):
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.uniform(-0.5, 0.5, 3)
        xi = rng.standard_normal(3)
        ints = plane_intersections(helix, x, xi)
        assert len(ints) == _dense_sign_changes(helix, x, xi)
        for p in ints.points:
            assert abs(float((helix.point(p.t) - x) @ (xi / np.linalg.norm(xi)))) <= 1e-10


def test_roots_stable_under_resampling(helix):
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, xi = rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)
        a = plane_intersections(helix, x, xi).t
        b = plane_intersections(helix, x, xi, per_period=1024).t
        assert len(a) == len(b) and np.max(np.abs(a - b), initial=0.0) <= 1e-8


def test_classification(circle, helix):
    rng = np.random.default_rng(6)
    for _ in range(20):
        x, xi = rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)
        assert classify_covector(circle, x, xi) in (CovectorClass.NOT_IN_XI, CovectorClass.DEGENERATE)
    assert classify_covector(helix, [0.05, -0.1, 0.0], [1.0, 0.3, 0.2]) is CovectorClass.XI_PRIME


def test_classification_scale_invariant(helix):
    rng = np.random.default_rng(7)
    for _ in range(20):
        x, xi = rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)
        assert classify_covector(helix, x, xi) is classify_covector(helix, x, 3.7 * xi)


def test_crown_tangential_point():
    c, x, xi = crown_tangent_config()
    ints = plane_intersections(c, x, xi)
    tangential = [p for p in ints.points if not p.transversal]
    assert len(tangential) == 1 and abs(tangential[0].t) < 1e-6
    assert abs(tangential[0].s2) > 1e-3
    assert classify_covector(c, x, xi) is CovectorClass.XI_DOUBLE_PRIME


def test_xi_prime_has_independent_chords(helix):
    rng = np.random.default_rng(8)
    for _ in range(20):
        x, xi = rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)
        if classify_covector(helix, x, xi) is not CovectorClass.XI_PRIME:
            continue
        om = np.array([p.omega for p in plane_intersections(helix, x, xi).points])
        cross = np.linalg.norm(np.cross(om[:, None], om[None, :]), axis=-1)
        assert any(cross[i, j] > 1e-6 and cross[i, k] > 1e-6 and cross[j, k] > 1e-6
                   for i in range(len(om)) for j in range(i + 1, len(om)) for k in range(j + 1, len(om)))


def test_kt_check_discriminates():
    assert kt_check(Curve("circle"), n_samples=256, seed=0).xi_prime == 0.0
    fr = [kt_check(Curve("helix", turns=t), n_samples=256, seed=0).xi_prime for t in (1, 2, 3)]
    assert fr[2] > 0.1
    assert fr[0] <= fr[1] <= fr[2]


def test_kt_check_deterministic(helix):
    a = kt_check(helix, n_samples=64, seed=3).as_dict()
    b = kt_check(helix, n_samples=64, seed=3).as_dict()
    assert a == b
    assert a["max_intersections"] >= 3


def test_conormal_coords_examples(helix):
    g, x, xi = conormal_coords(helix, 0.3, 1.0, 0.5, 0.0, 0.4, -0.7)
    assert g[1] == 0.0 and g[2] == 0.0
    g, x, xi = conormal_coords(helix, 0.3, 1.0, 0.5, 2.0, 1.0, 0.0)
    assert np.allclose(g, [-xi @ helix.tangent(0.3), -2.0, 0.0])
    with pytest.raises(PoleError):
        conormal_coords(helix, 0.3, 0.01, 0.5, 1.0, 1.0, 0.0)


def test_conormal_annihilates_tangents(helix):
    t, a, b, s, z1, z2 = 0.4, 1.1, 2.3, 0.8, 0.6, -0.9
    gam, x, xi = conormal_coords(helix, t, a, b, s, z1, z2)
    errs = []
    for h in (1e-3, 5e-4):
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            p = np.array([t, a, b, s])

            def pos(q):
                om = frame_vectors(q[1], q[2])[0]
                return helix.point(q[0]) + q[3] * om

            dx = (pos(p + e) - pos(p - e)) / (2 * h)
            dl = e[:3] / h
            errs.append(abs(gam @ dl + xi @ dx))
    assert max(errs) < 1e-5


def test_sigma_distance(circle, helix):
    for t in np.linspace(0, 6, 7):
        assert sigma_distance(circle, t, [0, 0, 1]) == 0.0
    assert sigma_distance(circle, 0.0, [0, 1, 0]) == pytest.approx(2.0)
    # sign changes of sigma_distance bracket the tangential parameters
    c, x, xi = crown_tangent_config()
    s = [sigma_distance(c, t, xi) for t in (-1e-3, 1e-3)]
    assert s[0] * s[1] < 0
