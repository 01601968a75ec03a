"""Time the compiled and pure-numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py --n 12 --repeat 3

Prints one row per (kernel, backend) with the best wall time and the
relative difference to the first backend's output.
"""

import argparse
import time

import numpy as np

from mirt import kernels
from mirt.fields import Grid3, Tensor2Field
from mirt.geometry import Curve
from mirt.reconstruct import CutoffSpec, ParametrixPlan
from mirt.transform import LineSet, Sinogram, mirt_adjoint, mirt_forward


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def sino_vector(s):
    return np.concatenate([s.chan_a.ravel(), s.chan_b.ravel()])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=12, help="grid size per axis")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--voxels", type=int, default=128, help="voxels for the parametrix kernel")
    args = ap.parse_args()

    grid = Grid3.cube(args.n)
    curve = Curve("helix")
    lines = LineSet.for_grid(curve, grid, n_t=48, n_alpha=24, n_beta=48)
    rng = np.random.default_rng(0)
    f = Tensor2Field(grid, rng.standard_normal(grid.shape + (3, 3)))
    shape = (lines.n_t, lines.n_alpha, lines.n_beta)
    g = Sinogram(lines, rng.standard_normal(shape), rng.standard_normal(shape))
    plan = ParametrixPlan(grid, CutoffSpec(curve, regularization=0.3))
    spec = plan.spectrum(f)
    pts = grid.points().reshape(-1, 3)[rng.choice(grid.size, args.voxels, replace=False)]

    jobs = {
        "forward": lambda b: sino_vector(mirt_forward(f, lines, b, args.threads)),
        "adjoint": lambda b: mirt_adjoint(g, grid, b, args.threads).values.ravel(),
        "parametrix": lambda b: plan.evaluate(spec, points=pts, backend=b, threads=args.threads).ravel(),
    }
    backends = sorted(kernels.available(), key=lambda b: b != "python")  # fallback is the reference
    print(f"grid {args.n}^3, {lines.n_lines} lines, {plan.n_freqs} frequencies x {args.voxels} voxels")
    print(f"{'kernel':<11}{'backend':<9}{'seconds':>10}{'speedup':>9}{'rel diff':>11}")
    for name, job in jobs.items():
        ref_t = ref_out = None
        for b in backends:
            t, out = best_of(args.repeat, lambda: job(b))
            if ref_out is None:
                ref_t, ref_out = t, out
            diff = np.linalg.norm(out - ref_out) / max(np.linalg.norm(ref_out), 1e-300)
            print(f"{name:<11}{b:<9}{t:>10.3f}{ref_t / t:>9.2f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
