"""Experiment configuration read from an INI file.

Every key has a default; a file only needs to list what it changes. Unknown
sections or keys are rejected so that typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .fields import Grid3
from .geometry import Curve
from .phantoms import Phantom
from .reconstruct import CutoffSpec
from .transform import LineSet


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CurveBlock:
    kind: str = "helix"
    radius: float = 2.0
    height: float = 1.0
    harmonic: int = 3
    turns: float = 3.0


@dataclass(frozen=True)
class GridBlock:
    n: int = 16
    half_width: float = 1.2


@dataclass(frozen=True)
class LinesBlock:
    n_t: int = 96
    n_alpha: int = 48
    n_beta: int = 96
    pole_band: float = 0.1


@dataclass(frozen=True)
class TolerancesBlock:
    tau_sigma: float = 1e-3
    tau_rank: float = 1e-8
    tau_tan: float = 1e-6
    tau_indep: float = 1e-6
    adjoint: float = 1e-12
    taper: float = 1e-3
    pole_taper: float = 0.05
    cond_floor: float = 0.0
    regularization: float = 0.3


@dataclass(frozen=True)
class PhantomBlock:
    kind: str = "solenoidal-gaussian"
    amplitude: tuple | None = None
    center: tuple = (0.0, 0.0, 0.0)
    width: tuple = (0.2, 0.2, 0.2)


@dataclass(frozen=True)
class RunBlock:
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    adjoint_pairs: int = 20
    kt_samples: int = 2048
    kt_ball_radius: float = 1.0
    symbol_samples: int = 64
    ellipticity_samples: int = 1000
    noise: float = 0.0
    pad: int = 1


@dataclass(frozen=True)
class Config:
    curve: CurveBlock = field(default_factory=CurveBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    lines: LinesBlock = field(default_factory=LinesBlock)
    tolerances: TolerancesBlock = field(default_factory=TolerancesBlock)
    phantom: PhantomBlock = field(default_factory=PhantomBlock)
    run: RunBlock = field(default_factory=RunBlock)

    # -- builders ----------------------------------------------------------
    def make_curve(self) -> Curve:
        c = self.curve
        return Curve(c.kind, c.radius, c.height, c.harmonic, c.turns)

    def make_grid(self) -> Grid3:
        return Grid3.cube(self.grid.n, self.grid.half_width)

    def make_lines(self, grid: Grid3 | None = None) -> LineSet:
        ln = self.lines
        return LineSet.for_grid(self.make_curve(), grid or self.make_grid(), ln.n_t, ln.n_alpha, ln.n_beta,
                                pole_band=ln.pole_band)

    def make_phantom_spec(self) -> Phantom:
        p = self.phantom
        return Phantom(p.kind, p.amplitude, p.center, p.width)

    def make_cutoff(self) -> CutoffSpec:
        t = self.tolerances
        return CutoffSpec(self.make_curve(), tau_sigma=t.tau_sigma, taper=t.taper, pole_band=self.lines.pole_band,
                          pole_taper=t.pole_taper, cond_floor=t.cond_floor, regularization=t.regularization,
                          tau_rank=t.tau_rank, tau_indep=t.tau_indep)

    def with_overrides(self, seed: int | None = None, threads: int | None = None,
                       output_dir: str | None = None) -> "Config":
        run = self.run
        if seed is not None:
            run = replace(run, seed=int(seed))
        if threads is not None:
            run = replace(run, threads=int(threads))
        if output_dir is not None:
            run = replace(run, output_dir=str(output_dir))
        out = replace(self, run=run)
        out.validate()
        return out

    def validate(self) -> None:
        try:
            self.make_curve()
            self.make_grid()
            self.make_phantom_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for f in fields(TolerancesBlock):
            v = getattr(self.tolerances, f.name)
            if f.name in ("cond_floor", "regularization"):
                if not (math.isfinite(v) and v >= 0):
                    raise ConfigError(f"tolerances.{f.name} must be non-negative")
            elif not (math.isfinite(v) and v > 0):
                raise ConfigError(f"tolerances.{f.name} must be positive")
        ln = self.lines
        if min(ln.n_t, ln.n_alpha, ln.n_beta) < 1 or not 0 < ln.pole_band < math.pi / 2:
            raise ConfigError("line set sizes must be positive and pole_band in (0, pi/2)")
        r = self.run
        if r.seed < 0 or r.threads < 1 or r.pad not in (1, 2) or r.noise < 0:
            raise ConfigError("run: need seed >= 0, threads >= 1, pad in {1, 2}, noise >= 0")
        if min(r.adjoint_pairs, r.kt_samples, r.symbol_samples, r.ellipticity_samples) < 1:
            raise ConfigError("run: sample counts must be positive")
        if self.grid.n < 4:
            raise ConfigError("grid.n must be at least 4")


_BLOCKS = {f.name: f.default_factory for f in fields(Config)}


def _parse_value(kind, text: str, where: str):
    text = text.strip()
    try:
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
        if kind in ("str", str):
            return text
        # tuples: comma or whitespace separated floats, "none" for unset
        if text.lower() == "none":
            return None
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r}") from None


def _coerce_tuple(name: str, value, where: str):
    if value is None:
        if name != "amplitude":
            raise ConfigError(f"{where}: value required")
        return None
    want = {"amplitude": (9,), "center": (3,), "width": (1, 3)}[name]
    if len(value) not in want:
        raise ConfigError(f"{where}: expected {' or '.join(map(str, want))} numbers, got {len(value)}")
    if name == "width" and len(value) == 1:
        value = value * 3
    return value


def parse_config(text: str, source: str = "<string>") -> Config:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    blocks = {}
    for section in parser.sections():
        if section not in _BLOCKS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        default = _BLOCKS[section]()
        known = {f.name: f for f in fields(default)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            where = f"{source}: {section}.{key}"
            value = _parse_value(known[key].type, raw, where)
            if known[key].type not in ("int", "float", "str", int, float, str):
                value = _coerce_tuple(key, value, where)
            updates[key] = value
        blocks[section] = replace(default, **updates)
    cfg = Config(**blocks)
    cfg.validate()
    return cfg


def load_config(path) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    return parse_config(text, str(p))


def dump_config(cfg: Config) -> str:
    """INI text that parses back to ``cfg``."""
    out = []
    for section in _BLOCKS:
        block = getattr(cfg, section)
        out.append(f"[{section}]")
        for f in fields(block):
            v = getattr(block, f.name)
            if v is None:
                text = "none"
            elif isinstance(v, tuple):
                text = ", ".join(repr(float(x)) for x in v)
            else:
                text = repr(v) if isinstance(v, float) else str(v)
            out.append(f"{f.name} = {text}")
        out.append("")
    return "\n".join(out)
