import numpy as np
import pytest

from mirt.fields import (Grid3, ScalarField, SupportError, Tensor2Field, VectorField, check_margin, curl_first,
                         decompose, delta_prime, dprime, lambda_embed, laplacian, mu_trace, project_solenoidal,
                         sol_projector, solenoidal_basis, sym_derivative, tensor_from_flat)
from mirt.phantoms import Phantom, make_phantom, potential_of


def smooth_scalar(grid, center=(0.1, -0.05, 0.0), width=0.2):
    x = grid.points() - np.asarray(center)
    return np.exp(-0.5 * np.sum(x * x, axis=-1) / width ** 2)


def test_grid_requires_unit_ball():
    with pytest.raises(ValueError):
        Grid3((8, 8, 8), (-0.9,) * 3, (0.3,) * 3)
    with pytest.raises(ValueError):
        Grid3((3, 8, 8), (-1.2,) * 3, (0.4,) * 3)


def test_grid_cube_geometry():
    g = Grid3.cube(16)
    assert np.allclose(g.center, 0.0)
    assert g.points().shape == (16, 16, 16, 3)
    assert np.isclose(g.points()[-1, -1, -1, 0], 1.2)


def test_field_shape_and_finiteness(grid12):
    with pytest.raises(ValueError):
        Tensor2Field(grid12, np.zeros((12, 12, 12, 3)))
    bad = np.zeros(grid12.shape + (3, 3))
    bad[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        Tensor2Field(grid12, bad)


def test_field_arithmetic_and_dot(grid12, rng):
    a = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    b = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    assert np.isclose((a + b).dot(a), a.dot(a) + b.dot(a))
    assert np.isclose((a * 2.0).norm(), 2.0 * a.norm())
    assert np.isclose(a.dot(a), np.sum(a.values ** 2) * grid12.voxel_volume)
    with pytest.raises(ValueError):
        a + VectorField.zeros(grid12)


def test_lambda_and_trace(grid12):
    w = ScalarField(grid12, smooth_scalar(grid12))
    f = lambda_embed(w)
    assert np.allclose(mu_trace(f).values, 3.0 * w.values)
    assert np.allclose(f.values[..., 0, 1], 0.0)


def test_dprime_is_gradient_of_components(grid16):
    phi = smooth_scalar(grid16)
    u = VectorField(grid16, np.stack([phi, 2 * phi, -phi], axis=-1))
    d = dprime(u)
    # d'u_ij = d_i u_j, sym_derivative is its symmetrisation
    assert np.allclose(d.values[..., 0, 1], 2 * d.values[..., 0, 0])
    s = sym_derivative(u)
    assert np.allclose(s.values, 0.5 * (d.values + np.swapaxes(d.values, -1, -2)))


def test_spectral_derivative_accuracy():
    g = Grid3.cube(32)
    x = g.points()
    width = 0.15
    phi = np.exp(-0.5 * np.sum(x * x, axis=-1) / width ** 2)
    u = VectorField(g, np.stack([phi, 0 * phi, 0 * phi], axis=-1))
    exact = -x[..., 1] / width ** 2 * phi
    assert np.max(np.abs(dprime(u).values[..., 1, 0] - exact)) < 1e-6 * np.max(np.abs(exact))


def test_delta_prime_is_adjoint_of_dprime(grid12, rng):
    f = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    u = VectorField(grid12, rng.standard_normal(grid12.shape + (3,)))
    assert np.isclose(dprime(u).dot(f), -delta_prime(f).dot(u), rtol=1e-10)


def test_laplacian_matches_delta_dprime(grid12):
    phi = smooth_scalar(grid12)
    u = VectorField(grid12, np.stack([phi, phi ** 2, -phi], axis=-1))
    assert np.allclose(delta_prime(dprime(u)).values, laplacian(u).values, atol=1e-10)


@pytest.mark.parametrize("xi", [(1.0, 0.0, 0.0), (0.3, -0.2, 0.9), (0.0, 0.0, 2.0)])
def test_sol_projector_properties(xi):
    p = sol_projector(xi)
    assert np.allclose(p, p.T)
    assert np.allclose(p @ p, p, atol=1e-14)
    assert np.isclose(np.trace(p), 5.0)
    v = np.array(xi)
    for j in range(3):
        assert np.allclose(p @ np.outer(v, np.eye(3)[j]).ravel(), 0.0, atol=1e-14)
    assert np.allclose(p @ np.eye(3).ravel(), 0.0, atol=1e-14)
    b = solenoidal_basis(xi)
    assert np.allclose(b.T @ b, np.eye(5), atol=1e-14)
    assert np.allclose(b @ b.T, p, atol=1e-13)


def test_sol_projector_rejects_zero():
    with pytest.raises(ValueError):
        sol_projector((0.0, 0.0, 0.0))


def test_check_margin(grid12):
    v = np.zeros(grid12.shape)
    v[6, 6, 6] = 1.0
    check_margin(v)
    v[1, 6, 6] = 1.0
    with pytest.raises(SupportError):
        check_margin(v)


def test_decompose_reassembly_and_constraints():
    g = Grid3.cube(24)
    f = make_phantom(Phantom("gaussian-tensor", width=0.2), g, seed=3)
    fs, u, w = decompose(f)
    re = fs + dprime(u) + lambda_embed(w)
    assert (re - f).norm() <= 1e-8 * f.norm()
    assert delta_prime(fs).norm() <= 1e-8 * fs.norm()
    assert mu_trace(fs).norm() <= 1e-10 * fs.norm()


def test_decompose_kernel_fields():
    g = Grid3.cube(24)
    spec = Phantom("potential-dprime", width=0.2)
    f = make_phantom(spec, g, seed=1)
    fs, _, _ = decompose(f)
    # analytic and spectral derivatives differ at discretisation level only
    assert fs.norm() <= 1e-3 * f.norm()
    w = ScalarField(g, smooth_scalar(g, width=0.15))
    fs, _, wr = decompose(lambda_embed(w))
    assert fs.norm() <= 1e-12 * w.norm()
    assert np.allclose(wr.values, w.values, atol=1e-12)


def test_decompose_rejects_edge_support(grid12, rng):
    f = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    with pytest.raises(SupportError):
        decompose(f)


def test_project_solenoidal_is_idempotent(grid12, rng):
    f = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    p = project_solenoidal(f)
    assert (project_solenoidal(p) - p).norm() <= 1e-12 * p.norm()


def test_curl_first_is_divergence_free(grid12, rng):
    a = Tensor2Field(grid12, rng.standard_normal(grid12.shape + (3, 3)))
    c = curl_first(a)
    assert delta_prime(c).norm() <= 1e-10 * c.norm()


def test_tensor_from_flat_is_row_major():
    t = tensor_from_flat(range(9))
    assert t[0, 1] == 1 and t[1, 0] == 3
