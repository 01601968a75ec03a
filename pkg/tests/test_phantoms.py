import numpy as np
import pytest

from mirt.fields import Grid3, decompose, delta_prime, dprime, lambda_embed, mu_trace
from mirt.phantoms import Phantom, make_phantom, potential_of, scalar_of, support_radius
from mirt.transform import LineSet, mirt_forward


def test_validation():
    with pytest.raises(ValueError):
        Phantom("cube")
    with pytest.raises(ValueError):
        Phantom(width=-1.0)
    with pytest.raises(ValueError):
        Phantom(amplitude=(1, 2, 3))


@pytest.mark.parametrize("kind", ["gaussian-tensor", "ball-tensor", "solenoidal-gaussian", "potential-dprime",
                                  "lambda-scalar"])
def test_support_margin(kind, grid16):
    f = make_phantom(Phantom(kind), grid16, seed=2)
    r = np.linalg.norm(grid16.points(), axis=-1)
    outside = r >= support_radius(Phantom(kind), grid16)
    assert f.norm() > 0 and np.all(f.values[outside] == 0.0)


def test_deterministic(grid16):
    a = make_phantom(Phantom(), grid16, seed=5).values
    b = make_phantom(Phantom(), grid16, seed=5).values
    c = make_phantom(Phantom(), grid16, seed=6).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_identity_amplitude_is_lambda(grid16):
    spec = Phantom("gaussian-tensor", amplitude=np.eye(3).ravel())
    lam = Phantom("lambda-scalar", amplitude=np.eye(3).ravel())
    assert np.array_equal(make_phantom(spec, grid16).values, make_phantom(lam, grid16).values)
    assert np.allclose(lambda_embed(scalar_of(lam, grid16)).values, make_phantom(lam, grid16).values)


def test_lambda_phantom_has_zero_sinogram(grid16, helix):
    f = make_phantom(Phantom("lambda-scalar"), grid16, seed=1)
    s = mirt_forward(f, LineSet.for_grid(helix, grid16, n_t=12, n_alpha=6, n_beta=12))
    assert max(np.abs(s.chan_a).max(), np.abs(s.chan_b).max()) <= 1e-12 * f.norm()


def test_potential_phantom_matches_spectral_dprime():
    g = Grid3.cube(32)
    spec = Phantom("potential-dprime", width=0.2)
    f = make_phantom(spec, g, seed=1)
    assert (dprime(potential_of(spec, g, 1)) - f).norm() <= 1e-4 * f.norm()


def test_solenoidal_phantom_constraints():
    """Analytic curl of a compactly supported bump: solenoidal up to discretisation."""
    errs = []
    for n in (16, 24, 32):
        g = Grid3.cube(n)
        f = make_phantom(Phantom("solenoidal-gaussian", width=0.2), g, seed=0)
        assert mu_trace(f).norm() <= 1e-12 * f.norm()
        fs = decompose(f)[0]
        errs.append((fs - f).norm() / f.norm())
        assert delta_prime(fs).norm() <= 1e-8 * fs.norm()
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4
