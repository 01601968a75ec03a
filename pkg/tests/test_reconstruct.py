import numpy as np
import pytest

from mirt import kernels
from mirt.fields import Grid3, ScalarField, Tensor2Field, lambda_embed, sol_projector, solenoidal_basis
from mirt.geometry import Curve
from mirt.reconstruct import (CutoffSpec, ParametrixPlan, apply_parametrix, calibrate, cutoff_chi, default_mask,
                              error_report, half_frequencies)
from mirt.symbol import NotElliptic, SigmaProximity, principal_symbol
from mirt.transform import LineSet, normal_op

BACKENDS = kernels.available()
X0 = np.array([0.1, -0.2, 0.3])


@pytest.fixture(scope="module")
def grid8():
    return Grid3.cube(8)


def frozen_oracle(plan, spec, fh, pts, x0, tikhonov):
    """Direct sum with geometry frozen at ``x0``, symbol from the Python path."""
    out = np.zeros((len(pts), 9))
    phase = (pts - np.asarray(plan.grid.origin)) @ plan.freqs.T
    spec9 = np.zeros_like(fh)
    for f, k in enumerate(plan.freqs):
        chi = cutoff_chi(spec, x0, k)
        try:
            a0 = principal_symbol(spec.curve, x0, k, tau_sigma=0.0, require_elliptic=False).matrix
        except (NotElliptic, SigmaProximity):
            a0 = np.zeros((9, 9))
        spec9[f] = a0 @ fh[f]
        if chi == 0.0:
            continue
        p = solenoidal_basis(k)
        m = p.T @ a0 @ p
        if tikhonov:
            m = m + spec.regularization * np.trace(m) / 5 * np.eye(5)
        term = chi * (p @ np.linalg.solve(m, p.T @ spec9[f]))
        out += 2 * np.real(np.exp(1j * phase[:, f])[:, None] * term[None, :])
    return spec9, out


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("options", [{}, {"regularization": 0.3}, {"cond_floor": 1e-3}])
def test_frozen_symbol_pipeline(backend, options, grid8, helix, rng):
    spec = CutoffSpec(helix, **options)
    plan = ParametrixPlan(grid8, spec)
    f = Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3)))
    fh = plan.spectrum(f)
    pts = grid8.points().reshape(-1, 3)[:: (7 if backend == "python" else 1)]
    spec9, ref = frozen_oracle(plan, spec, fh, pts, X0, "regularization" in options)
    out = plan.evaluate(spec9, points=np.broadcast_to(X0, pts.shape).copy(), phase_points=pts, backend=backend)
    assert np.linalg.norm(out - ref) <= 1e-6 * np.linalg.norm(ref)
    if not options:
        # exact inverse: the output is the inverse transform of chi * Pi_sol * f_hat
        phase = (pts - np.asarray(grid8.origin)) @ plan.freqs.T
        chi = np.array([cutoff_chi(spec, X0, k) for k in plan.freqs])
        term = chi[:, None] * np.einsum("fij,fj->fi", np.array([sol_projector(k) for k in plan.freqs]), fh)
        direct = 2 * np.real(np.exp(1j * phase) @ term)
        assert np.linalg.norm(out - direct) <= 1e-6 * np.linalg.norm(direct)


def test_half_frequencies_cover_pairs(grid8):
    flat, k = half_frequencies(grid8)
    assert len(flat) == len(set(flat.tolist()))
    keys = {tuple(np.round(v, 9)) for v in k}
    assert not any(tuple(np.round(-v, 9)) in keys for v in k)
    assert not np.any(np.all(k == 0, axis=1))


def test_cutoff_chi_values(helix, circle):
    spec = CutoffSpec(circle)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert cutoff_chi(spec, rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3)) == 0.0
    assert cutoff_chi(CutoffSpec(helix), [0.05, -0.1, 0.0], [1.0, 0.3, 0.2]) == 1.0
    assert cutoff_chi(CutoffSpec(helix), [0.05, -0.1, 0.0], [-2.0, -0.6, -0.4]) == 1.0


def test_cutoff_chi_continuous_across_margin(helix):
    # tilting xi towards the axis merges two intersections at a fold near theta = 1.331
    spec = CutoffSpec(helix, tau_sigma=1e-2, taper=5e-2)
    x = np.array([0.05, -0.1, 0.0])

    def chi(theta):
        return cutoff_chi(spec, x, [np.cos(theta), 0.2 * np.cos(theta), np.sin(theta)])

    jumps = []
    for n in (201, 2001):
        th = np.linspace(1.325, 1.335, n)
        v = np.array([chi(t) for t in th])
        assert v[0] == 1.0 and v[-1] == 0.0
        jumps.append(np.abs(np.diff(v)).max() / (th[1] - th[0]))
    # increments shrink with the step: bounded difference quotient
    assert jumps[1] <= 1.5 * jumps[0] and jumps[0] < 2e3


def test_zero_input(grid8, helix):
    out = apply_parametrix(Tensor2Field.zeros(grid8), CutoffSpec(helix))
    assert out.norm() == 0.0


def test_linearity(grid8, helix, rng):
    spec = CutoffSpec(helix)
    plan = ParametrixPlan(grid8, spec)
    a = Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3)))
    b = Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3)))
    lhs = apply_parametrix(a * 2.0 + b, spec, plan=plan)
    rhs = apply_parametrix(a, spec, plan=plan) * 2.0 + apply_parametrix(b, spec, plan=plan)
    assert (lhs - rhs).norm() <= 1e-10 * lhs.norm()


def test_lambda_fields_annihilated(grid8, helix):
    lines = LineSet.for_grid(helix, grid8, n_t=16, n_alpha=8, n_beta=16)
    x = grid8.points()
    w = ScalarField(grid8, np.exp(-np.sum(x * x, axis=-1) / 0.1))
    f = lambda_embed(w)
    spec = CutoffSpec(helix)
    plan = ParametrixPlan(grid8, spec)
    out = apply_parametrix(normal_op(f, lines), spec, plan=plan)
    # compare with a generic field of the same norm
    g = Tensor2Field(grid8, np.roll(f.values, 1, axis=-1))
    ref = apply_parametrix(normal_op(g, lines), spec, plan=plan)
    assert out.norm() <= 1e-12 * ref.norm()


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_parametrix_backends_agree(grid8, helix, rng):
    spec = CutoffSpec(helix, regularization=0.1, cond_floor=1e-4)
    plan = ParametrixPlan(grid8, spec)
    sp = plan.spectrum(Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3))))
    pts = grid8.points().reshape(-1, 3)[::5]
    a = plan.evaluate(sp, points=pts, backend="python")
    b = plan.evaluate(sp, points=pts, backend="cython")
    assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)


@pytest.mark.parametrize("backend", BACKENDS)
def test_parametrix_thread_determinism(backend, grid8, helix, rng):
    spec = CutoffSpec(helix)
    plan = ParametrixPlan(grid8, spec)
    sp = plan.spectrum(Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3))))
    pts = grid8.points().reshape(-1, 3)[::9]
    a = plan.evaluate(sp, points=pts, backend=backend, threads=1)
    b = plan.evaluate(sp, points=pts, backend=backend, threads=2)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_calibrate_examples(grid8, rng):
    f = Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3)))
    assert calibrate(f, f) == pytest.approx(1.0)
    assert calibrate(f * 2.0, f) == pytest.approx(0.5)
    g = Tensor2Field(grid8, rng.standard_normal(grid8.shape + (3, 3)))
    assert calibrate(f * 3.0, g * 3.0) == pytest.approx(calibrate(f, g))


def test_error_report_identical(grid16, rng):
    f = Tensor2Field(grid16, rng.standard_normal(grid16.shape + (3, 3)))
    rep = error_report(f, f)
    assert rep.rel_error == pytest.approx(0.0, abs=1e-14) and rep.correlation == pytest.approx(1.0)
    assert all(line.split(" = ")[0] for line in rep.lines())


def test_error_report_orthogonal_random(grid16):
    g = np.random.default_rng(99)
    a = Tensor2Field(grid16, g.standard_normal(grid16.shape + (3, 3)))
    b = Tensor2Field(grid16, g.standard_normal(grid16.shape + (3, 3)))
    assert abs(error_report(a, b, scale=False).correlation) < 0.1


def test_error_monotone_in_noise(grid16):
    g = np.random.default_rng(5)
    x = grid16.points()
    ref = Tensor2Field(grid16, np.exp(-np.sum(x * x, axis=-1) / 0.2)[..., None, None] * np.eye(3))
    noise = Tensor2Field(grid16, g.standard_normal(grid16.shape + (3, 3)))
    errs = [error_report(ref + noise * s, ref).rel_error for s in (0.0, 0.01, 0.05, 0.2)]
    assert all(a < b for a, b in zip(errs, errs[1:]))


def test_default_mask(grid16):
    x = grid16.points()
    ref = Tensor2Field(grid16, np.exp(-np.sum(x * x, axis=-1) / 0.05)[..., None, None] * np.eye(3))
    m = default_mask(ref)
    assert m[8, 8, 8] and not m[0, 0, 0]
    with pytest.raises(ValueError):
        default_mask(Tensor2Field.zeros(grid16))


def test_cutoff_spec_validation(helix):
    with pytest.raises(ValueError):
        CutoffSpec(helix, tau_sigma=0.0)
    with pytest.raises(ValueError):
        CutoffSpec(helix, regularization=-1.0)
