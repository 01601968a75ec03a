"""Command-line driver.

Every subcommand reads the configuration (defaults if ``--config`` is not
given), writes its outputs under the run's output directory, and prints a
short ``key = value`` summary. Exit status is 0 on success, 2 for invalid
input and 3 when a numerical gate fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io, rng
from .config import Config, ConfigError, dump_config, load_config
from .fields import SupportError, Tensor2Field, decompose
from .geometry import kt_check
from .phantoms import make_phantom
from .reconstruct import ParametrixPlan, error_report, timed
from .symbol import AdmissibilityError, ellipticity_check, identity_defect, sample_admissible, sample_symbols
from .transform import Sinogram, adjoint_defect, mirt_adjoint, mirt_forward, normal_op

EXIT_OK, EXIT_INVALID, EXIT_GATE = 0, 2, 3


class GateFailure(RuntimeError):
    pass


def _emit(lines, path: Path | None = None) -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if path is not None:
        path.write_text(text)


def _fmt(key: str, value) -> str:
    if isinstance(value, float):
        return f"{key} = {value:.12e}"
    return f"{key} = {value}"


def _input_field(cfg: Config, args) -> Tensor2Field:
    grid = cfg.make_grid()
    if getattr(args, "input", None):
        f = io.read_volume(args.input)
        if not isinstance(f, Tensor2Field):
            raise ConfigError(f"{args.input}: expected a tensor volume")
        return f
    return make_phantom(cfg.make_phantom_spec(), grid, cfg.run.seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_phantom(cfg: Config, args, out: Path) -> None:
    f = make_phantom(cfg.make_phantom_spec(), cfg.make_grid(), cfg.run.seed)
    io.write_volume(out / "phantom.mrt", f)
    _emit([_fmt("kind", cfg.phantom.kind), _fmt("norm", f.norm()), _fmt("file", out / "phantom.mrt")])


def cmd_kt_check(cfg: Config, args, out: Path) -> None:
    rep = kt_check(cfg.make_curve(), ((0.0, 0.0, 0.0), cfg.run.kt_ball_radius), cfg.run.kt_samples,
                   cfg.run.seed, pole_band=cfg.lines.pole_band)
    _emit([_fmt(k, v) for k, v in rep.as_dict().items()], out / "kt_report.txt")


def cmd_forward(cfg: Config, args, out: Path) -> None:
    f = _input_field(cfg, args)
    lines = cfg.make_lines(f.grid)
    sino = mirt_forward(f, lines, threads=cfg.run.threads)
    if cfg.run.noise > 0:
        g = rng.stream(cfg.run.seed, rng.OFFSET_NOISE)
        # noise level is relative to the rms channel value
        scale = cfg.run.noise * np.sqrt(0.5 * np.mean(sino.chan_a ** 2 + sino.chan_b ** 2))
        sino = Sinogram(lines, sino.chan_a + scale * g.standard_normal(sino.chan_a.shape),
                        sino.chan_b + scale * g.standard_normal(sino.chan_b.shape))
    io.write_sinogram(out / "sinogram.msn", sino)
    _emit([_fmt("n_lines", lines.n_lines), _fmt("norm", sino.norm()), _fmt("file", out / "sinogram.msn")])


def cmd_adjoint_test(cfg: Config, args, out: Path) -> None:
    grid = cfg.make_grid()
    lines = cfg.make_lines(grid)
    g = rng.stream(cfg.run.seed, rng.OFFSET_ADJOINT_TEST)
    worst = 0.0
    for _ in range(cfg.run.adjoint_pairs):
        f = Tensor2Field(grid, g.standard_normal(grid.shape + (3, 3)))
        s = Sinogram(lines, g.standard_normal((lines.n_t, lines.n_alpha, lines.n_beta)),
                     g.standard_normal((lines.n_t, lines.n_alpha, lines.n_beta)))
        worst = max(worst, adjoint_defect(f, s, threads=cfg.run.threads))
    _emit([_fmt("pairs", cfg.run.adjoint_pairs), _fmt("adjoint_defect", worst),
           _fmt("tolerance", cfg.tolerances.adjoint)], out / "adjoint_report.txt")
    if not worst <= cfg.tolerances.adjoint:
        raise GateFailure(f"adjoint defect {worst:.3e} exceeds {cfg.tolerances.adjoint:g}")


def cmd_normal(cfg: Config, args, out: Path) -> None:
    f = _input_field(cfg, args)
    nf = normal_op(f, cfg.make_lines(f.grid), threads=cfg.run.threads)
    io.write_volume(out / "nf.mrt", nf)
    _emit([_fmt("norm", nf.norm()), _fmt("file", out / "nf.mrt")])


def cmd_decompose(cfg: Config, args, out: Path) -> None:
    f = _input_field(cfg, args)
    fs, u, w = decompose(f, pad=cfg.run.pad)
    io.write_volume(out / "fs.mrt", fs)
    io.write_volume(out / "u.mrv", u)
    io.write_volume(out / "w.mrs", w)
    _emit([_fmt("norm_f", f.norm()), _fmt("norm_fs", fs.norm()), _fmt("norm_u", u.norm()),
           _fmt("norm_w", w.norm())])


def cmd_symbol(cfg: Config, args, out: Path) -> None:
    g = rng.stream(cfg.run.seed, rng.OFFSET_SYMBOL)
    t = cfg.tolerances
    symbols = sample_symbols(cfg.make_curve(), g, cfg.run.symbol_samples, ((0.0, 0.0, 0.0), 1.0),
                             cfg.lines.pole_band, t.tau_sigma)
    head = "x1 x2 x3 xi1 xi2 xi3 rank " + " ".join(f"s{i}" for i in range(1, 10)) + " identity_defect"
    rows = [head]
    bad = 0
    for s in symbols:
        sv = s.singular_values()
        rank = s.rank(t.tau_rank)
        defect = identity_defect(s, t.tau_rank)
        bad += rank != 5 or not defect <= 1e-8
        vals = list(s.x) + list(s.xi) + [rank] + list(sv) + [defect]
        rows.append(" ".join(str(v) if isinstance(v, (int, np.integer)) else f"{v:.12e}" for v in vals))
    (out / "symbol_table.txt").write_text("\n".join(rows) + "\n")
    _emit([_fmt("samples", len(symbols)), _fmt("failures", bad), _fmt("file", out / "symbol_table.txt")])
    if bad:
        raise GateFailure(f"{bad} sample(s) without rank 5 or with |B0 A0 - Pi| > 1e-8")


def cmd_ellipticity(cfg: Config, args, out: Path) -> None:
    g = rng.stream(cfg.run.seed, rng.OFFSET_ELLIPTICITY)
    tuples = sample_admissible(g, cfg.run.ellipticity_samples)
    reps = [ellipticity_check(*row) for row in tuples]
    smin = min(r.min_singular for r in reps)
    da = max(r.det_a_error for r in reps)
    db = max(r.det_b_error for r in reps)
    fails = sum(not r.unique_zero for r in reps)
    _emit([_fmt("samples", len(reps)), _fmt("min_singular", smin), _fmt("det_a_error_max", da),
           _fmt("det_b_error_max", db), _fmt("failures", fails)], out / "ellipticity_report.txt")
    if fails or da > 1e-12 or db > 1e-12:
        raise GateFailure("constraint system is not uniquely solvable for every sample")


def cmd_reconstruct(cfg: Config, args, out: Path) -> None:
    grid = cfg.make_grid()
    lines = cfg.make_lines(grid)
    f_ref = None
    if args.sinogram:
        sino = io.read_sinogram(args.sinogram).to_sinogram(lines)
        if args.reference:
            f_ref = io.read_volume(args.reference)
    else:
        f_ref = _input_field(cfg, args)
        if f_ref.grid != grid:
            raise ConfigError("input volume grid does not match the configured grid")
        sino = mirt_forward(f_ref, lines, threads=cfg.run.threads)
    nf = mirt_adjoint(sino, grid, threads=cfg.run.threads)
    plan = ParametrixPlan(grid, cfg.make_cutoff(), cfg.run.pad)
    spec = plan.spectrum(nf)
    vals, runtime = timed(plan.evaluate, spec, threads=cfg.run.threads)
    f_rec = Tensor2Field(grid, vals.reshape(grid.shape + (3, 3)))
    io.write_volume(out / "nf.mrt", nf)
    io.write_volume(out / "f_rec.mrt", f_rec)
    lines_out = [_fmt("frequencies", plan.n_freqs)]
    if f_ref is not None:
        fs = decompose(f_ref, pad=cfg.run.pad)[0]
        io.write_volume(out / "fs.mrt", fs)
        rep = error_report(f_rec, fs)
        lines_out += rep.lines()
    (out / "recon_report.txt").write_text("\n".join(lines_out) + "\n")
    _emit(lines_out + [f"runtime_s = {runtime:.3f}"])


COMMANDS = {
    "phantom": (cmd_phantom, "write the configured phantom as a tensor volume"),
    "kt-check": (cmd_kt_check, "sampled plane-intersection statistics of the curve"),
    "forward": (cmd_forward, "compute the two-channel sinogram"),
    "adjoint-test": (cmd_adjoint_test, "inner-product test of forward and adjoint"),
    "normal": (cmd_normal, "apply the normal operator"),
    "decompose": (cmd_decompose, "split a field into solenoidal, potential and trace parts"),
    "symbol": (cmd_symbol, "tabulate symbol singular values at random covectors"),
    "ellipticity": (cmd_ellipticity, "solve the constraint system for random angle tuples"),
    "reconstruct": (cmd_reconstruct, "recover the solenoidal part from line data"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--threads", type=int, help="override run.threads")
    common.add_argument("--out", help="override run.output_dir")
    parser = argparse.ArgumentParser(prog="mirt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name in ("forward", "normal", "decompose", "reconstruct"):
            p.add_argument("--input", help="tensor volume to use instead of the configured phantom")
        if name == "reconstruct":
            p.add_argument("--sinogram", help="MSN1 file to reconstruct from")
            p.add_argument("--reference", help="tensor volume to compare against when --sinogram is used")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        cfg = load_config(args.config) if args.config else Config()
        cfg = cfg.with_overrides(args.seed, args.threads, args.out)
        out = Path(cfg.run.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
        COMMANDS[args.command][0](cfg, args, out)
    except GateFailure as exc:
        print(f"mirt {args.command}: gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (ConfigError, SupportError, AdmissibilityError, io.FormatError, ValueError, OSError) as exc:
        print(f"mirt {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
