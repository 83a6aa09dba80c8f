"""TOML run configuration.

Sections: ``[constants]``, ``[column]`` (with ``[[column.layers]]``), ``[grid]``,
and per-command ``[verify]``, ``[characteristics]``, ``[converge]``.  Unknown
keys are rejected; every error names the dotted key path and the value.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import tomli

from betaplane import model
from betaplane.characteristics import CurveSampling
from betaplane.errors import ValidationError
from betaplane.stratification import (
    geometric_surfaces,
    harmonic_surfaces,
    nested_family,
    random_summable_surfaces,
)
from betaplane.verifier import EvaluationGrid, SurfaceSampling


class ConfigError(ValidationError):
    """Configuration problem; the message names the offending key and value."""


_MISSING = object()


class _Section:
    """Typed access to one config table that tracks which keys were consumed."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table, got {data!r}")
        self.data = data
        self.path = path
        self.used = set()

    def _key(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, default=_MISSING):
        self.used.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"{self._key(key)}: required key is missing")
            return default
        return self.data[key]

    def number(self, key, default=_MISSING, positive=False):
        value = self.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
            raise ConfigError(f"{self._key(key)}: expected a finite number, got {value!r}")
        if positive and value <= 0:
            raise ConfigError(f"{self._key(key)}: must be positive, got {value!r}")
        return float(value)

    def integer(self, key, default=_MISSING, minimum=None):
        value = self.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self._key(key)}: expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigError(f"{self._key(key)}: must be >= {minimum}, got {value!r}")
        return value

    def choice(self, key, options, default=_MISSING):
        value = self.get(key, default)
        if value not in options:
            raise ConfigError(f"{self._key(key)}: expected one of {sorted(options)}, got {value!r}")
        return value

    def numbers(self, key, length=None, default=_MISSING):
        value = self.get(key, default)
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v) for v in value
        ):
            raise ConfigError(f"{self._key(key)}: expected a list of numbers, got {value!r}")
        if length is not None and len(value) != length:
            raise ConfigError(f"{self._key(key)}: expected {length} numbers, got {value!r}")
        return [float(v) for v in value]

    def integers(self, key, default=_MISSING, minimum=0):
        value = self.get(key, default)
        if not isinstance(value, list) or not value or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigError(f"{self._key(key)}: expected a non-empty list of integers, got {value!r}")
        bad = [v for v in value if v < minimum]
        if bad:
            raise ConfigError(f"{self._key(key)}: entries must be >= {minimum}, got {value!r}")
        return list(value)

    def sub(self, key, default=_MISSING):
        value = self.get(key, default)
        if value is None:
            return None
        return _Section(value, self._key(key))

    def finish(self):
        unknown = sorted(set(self.data) - self.used)
        if unknown:
            k = unknown[0]
            raise ConfigError(f"{self._key(k)}: unknown key (value {self.data[k]!r})")


def _grid_range(section: _Section, key, default):
    raw = section.get(key, default)
    if not isinstance(raw, list) or len(raw) != 3:
        raise ConfigError(f"{section._key(key)}: expected [min, max, count], got {raw!r}")
    lo, hi, n = raw
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in (lo, hi)) or isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError(f"{section._key(key)}: expected [min, max, count] with integer count, got {raw!r}")
    if n < 1 or hi < lo:
        raise ConfigError(f"{section._key(key)}: empty range {raw!r}")
    return (float(lo), float(hi), n)


# ---------------------------------------------------------------- surfaces

def _surface_primitive(sec: _Section):
    kind = sec.choice("kind", {"constant", "affine", "sine"})
    if kind == "constant":
        value = sec.number("value")
        sec.finish()
        return (lambda x, y, t: np.full(np.broadcast(x, y, t).shape, value)), 0.0, f"{value!r}", value
    if kind == "affine":
        c0, cx, cy = sec.number("c0", 0.0), sec.number("cx", 0.0), sec.number("cy", 0.0)
        sec.finish()
        return (lambda x, y, t: c0 + cx * np.asarray(x) + cy * np.asarray(y) + 0.0 * np.asarray(t)), abs(cy), (
            f"{c0!r} + {cx!r}*x + {cy!r}*y"
        ), (c0 if cx == 0 and cy == 0 else None)
    off = sec.number("offset", 0.0)
    amp = sec.number("amplitude")
    kx, ky = sec.number("kx", 0.0), sec.number("ky", 0.0)
    om, ph = sec.number("omega", 0.0), sec.number("phase", 0.0)
    sec.finish()

    def f(x, y, t):
        return off + amp * np.sin(kx * np.asarray(x) + ky * np.asarray(y) - om * np.asarray(t) + ph)

    return f, abs(amp * ky), f"{off!r} + {amp!r}*sin({kx!r}*x + {ky!r}*y - {om!r}*t + {ph!r})", (off if amp == 0 else None)


def parse_surface(raw, path) -> model.SurfaceField:
    """A number, a primitive table, or a list of primitive tables (summed)."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return model.SurfaceField.flat(float(raw))
    items = raw if isinstance(raw, list) else [raw]
    if not items or not all(isinstance(it, dict) for it in items):
        raise ConfigError(f"{path}: expected a number, a surface table or a list of tables, got {raw!r}")
    parts = [_surface_primitive(_Section(it, f"{path}[{i}]" if isinstance(raw, list) else path)) for i, it in enumerate(items)]
    funcs = [p[0] for p in parts]

    def eval_(x, y, t):
        return sum(f(x, y, t) for f in funcs)

    slope = sum(p[1] for p in parts)
    desc = " + ".join(p[2] for p in parts)
    const = sum(p[3] for p in parts) if all(p[3] is not None for p in parts) else None
    return model.SurfaceField(eval_, slope, desc, const)


# ---------------------------------------------------------------- run config

@dataclass
class VerifyOptions:
    tolerance: float = 1e-8
    sign: str = "oracle"
    y_span: float = 1.0e6
    y_bound: Optional[float] = None


@dataclass
class ConvergeOptions:
    n_values: List[int] = field(default_factory=lambda: [2, 4, 8])
    p_values: List[int] = field(default_factory=lambda: [0, 1, 2, 4])
    family: Any = None
    family_description: Dict[str, Any] = field(default_factory=dict)
    sampling: SurfaceSampling = field(default_factory=SurfaceSampling)


@dataclass
class RunConfig:
    constants: model.PhysicalConstants
    column: Optional[model.StratifiedColumn]
    grid: Optional[EvaluationGrid]
    verify: VerifyOptions
    curves: CurveSampling
    seeds: Optional[np.ndarray]
    converge: Optional[ConvergeOptions]
    sha256: str
    source: str = ""
    surface_descriptions: List[str] = field(default_factory=list)


def _parse_constants(sec: Optional[_Section]) -> model.PhysicalConstants:
    if sec is None:
        return model.make_constants()
    omega = sec.number("omega", model.EARTH_OMEGA, positive=True)
    beta = sec.get("beta", "standard")
    if isinstance(beta, str):
        if beta != "standard":
            raise ConfigError(f"constants.beta: expected a positive number or 'standard', got {beta!r}")
    else:
        beta = sec.number("beta", positive=True)
    radius = sec.number("radius", model.EARTH_RADIUS, positive=True)
    gravity = sec.number("gravity", model.GRAVITY, positive=True)
    sec.finish()
    return model.make_constants(omega, beta, radius, gravity)


def _parse_column(sec: _Section):
    depth = sec.number("depth", positive=True)
    patm = sec.number("atm_pressure", model.STANDARD_ATMOSPHERE)
    raw_layers = sec.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ConfigError(f"column.layers: expected a non-empty array of tables, got {raw_layers!r}")
    layers, surfaces, desc = [], [], []
    for i, raw in enumerate(raw_layers, start=1):
        lsec = _Section(raw, f"column.layers[{i - 1}]")
        rho = lsec.number("density", positive=True)
        vort = lsec.numbers("vorticity", 3, [0.0, 0.0, 0.0])
        surface = parse_surface(lsec.get("surface"), lsec._key("surface"))
        lsec.finish()
        layers.append(model.LayerSpec(i, rho, model.Vorticity(*vort)))
        surfaces.append(surface)
        desc.append(surface.description)
    sec.finish()
    return model.StratifiedColumn(depth, tuple(layers), tuple(surfaces), patm), desc


def _parse_grid(sec: _Section) -> EvaluationGrid:
    d = EvaluationGrid()
    grid = EvaluationGrid(
        _grid_range(sec, "x", list(d.x_range)),
        _grid_range(sec, "y", list(d.y_range)),
        _grid_range(sec, "z", list(d.z_range)),
        _grid_range(sec, "t", list(d.t_range)),
        bool(sec.get("interior_only", False)),
    )
    sec.finish()
    return grid


def _parse_family(sec: _Section):
    depth = sec.number("depth", positive=True)
    patm = sec.number("atm_pressure", model.STANDARD_ATMOSPHERE)
    top = sec.get("top", None)
    if top is not None and (isinstance(top, bool) or not isinstance(top, (int, float))):
        raise ConfigError(f"converge.family.top: expected a number, got {top!r}")

    ssec = sec.sub("surfaces")
    rule = ssec.choice("rule", {"geometric", "harmonic", "random"})
    if rule == "geometric":
        surfaces = geometric_surfaces(ssec.number("scale", 1.0, positive=True), ssec.number("ratio", 0.5, positive=True))
    elif rule == "harmonic":
        surfaces = harmonic_surfaces(ssec.number("scale", 1.0, positive=True))
    else:
        surfaces = random_summable_surfaces(
            ssec.integer("seed", 0), ssec.number("scale", 1.0, positive=True), ssec.number("spread", 0.5)
        )
    ssec.finish()

    dsec = sec.sub("densities", {"rule": "constant"})
    drule = dsec.choice("rule", {"constant", "random"})
    if drule == "constant":
        value = dsec.number("value", 1000.0, positive=True)
        densities = lambda j: value  # noqa: E731
    else:
        lo = dsec.number("low", 1000.0, positive=True)
        hi = dsec.number("high", 1030.0, positive=True)
        seed = dsec.integer("seed", 0)
        table = np.random.default_rng(seed).uniform(lo, hi, 512)
        densities = lambda j: float(table[j - 1])  # noqa: E731
    dsec.finish()
    sec.finish()

    fam = nested_family(depth, surfaces, densities, patm, None if top is None else float(top))
    description = {
        "depth": depth,
        "atm_pressure": patm,
        "top": top,
        "surfaces": dict(ssec.data),
        "densities": dict(dsec.data),
    }
    return fam, description


def _parse_sampling(sec: Optional[_Section]) -> SurfaceSampling:
    d = SurfaceSampling()
    if sec is None:
        return d
    out = SurfaceSampling(
        _grid_range(sec, "x", list(d.x_range)), _grid_range(sec, "y", list(d.y_range)), _grid_range(sec, "t", list(d.t_range))
    )
    sec.finish()
    return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    root = _Section(data, "")
    constants = _parse_constants(root.sub("constants", None))

    column, descs = None, []
    csec = root.sub("column", None)
    if csec is not None:
        column, descs = _parse_column(csec)

    gsec = root.sub("grid", None)
    grid = _parse_grid(gsec) if gsec is not None else None

    verify = VerifyOptions()
    vsec = root.sub("verify", None)
    if vsec is not None:
        verify = VerifyOptions(
            vsec.number("tolerance", 1e-8, positive=True),
            vsec.choice("sign", {"paper", "oracle"}, "oracle"),
            vsec.number("y_span", 1.0e6, positive=True),
            None if vsec.get("y_bound", None) is None else vsec.number("y_bound", positive=True),
        )
        vsec.finish()

    curves = CurveSampling()
    seeds = None
    chsec = root.sub("characteristics", None)
    if chsec is not None:
        raw_seeds = chsec.get("seeds", None)
        if raw_seeds is not None:
            if not isinstance(raw_seeds, list) or not raw_seeds:
                raise ConfigError(f"characteristics.seeds: expected a list of [x, y, z], got {raw_seeds!r}")
            rows = []
            for i, s in enumerate(raw_seeds):
                if not isinstance(s, list) or len(s) != 3 or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in s):
                    raise ConfigError(f"characteristics.seeds[{i}]: expected [x, y, z], got {s!r}")
                rows.append([float(v) for v in s])
            seeds = np.array(rows)
        lattice = chsec.integers("lattice", [4, 2, 2], minimum=1)
        if len(lattice) != 3:
            raise ConfigError(f"characteristics.lattice: expected 3 integers, got {lattice!r}")
        s_span = chsec.get("s_span", None)
        if s_span is not None:
            s_span = chsec.numbers("s_span", 2)
            if s_span[1] < s_span[0]:
                raise ConfigError(f"characteristics.s_span: must be increasing, got {s_span!r}")
        times = chsec.numbers("times", default=[0.0, 1800.0, 3600.0])
        steps = chsec.integer("steps", 64, minimum=1)
        chsec.finish()
        curves = CurveSampling(lattice=tuple(lattice), steps=steps, s_span=None if s_span is None else tuple(s_span), times=tuple(times))
    if grid is not None:
        curves = CurveSampling(
            x_range=grid.x_range[:2],
            y_range=grid.y_range[:2],
            z_range=grid.z_range[:2],
            times=curves.times,
            lattice=curves.lattice,
            steps=curves.steps,
            s_span=curves.s_span,
        )

    converge = None
    cvsec = root.sub("converge", None)
    if cvsec is not None:
        n_values = cvsec.integers("n", [2, 4, 8], minimum=1)
        p_values = cvsec.integers("p", [0, 1, 2, 4], minimum=0)
        fam, fdesc = _parse_family(cvsec.sub("family"))
        sampling = _parse_sampling(cvsec.sub("sample", None))
        cvsec.finish()
        converge = ConvergeOptions(n_values, p_values, fam, fdesc, sampling)
    root.finish()

    sha = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return RunConfig(constants, column, grid, verify, curves, seeds, converge, sha, source, descs)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    return parse_config(text, str(path))
