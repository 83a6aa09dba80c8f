"""Layered hydrostatic pressure: interface propagation, the closed n-layer formula,
equal-density collapses and the uniform-convergence study of the bottom-layer
pressure as the number of layers grows.

All constructions take the vertical coefficient ``kappa`` (pressure gradient
per unit density) as a parameter, so either sign convention can be fed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from betaplane.errors import ValidationError
from betaplane.model import (
    LayerSpec,
    PressureAffine,
    PressureField,
    StratifiedColumn,
    SurfaceField,
    Vorticity,
)
from betaplane.verifier import SurfaceSampling


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa == 0.0:
        raise ValidationError(f"vertical coefficient must be finite and nonzero, got {kappa!r}")
    return kappa


def anchor_pressures(column: StratifiedColumn, kappa: float, x, y, t, check: bool = True):
    """Surface heights and the pressure each layer takes at its own upper surface.

    Returns ``(etas, anchors)``, both shaped (n, *broadcast_shape); layer i has
    P_i(z) = rho_i*kappa*(z - eta_i) + anchors[i].
    """
    kappa = _check_kappa(kappa)
    if check:
        column.check_ordering(x, y, t)
    etas = column.surface_values(x, y, t)
    rho = column.densities
    anchors = np.empty_like(etas)
    anchors[-1] = column.atm_pressure
    for i in range(column.n_layers - 2, -1, -1):
        # the layer above, evaluated at this layer's upper surface
        anchors[i] = rho[i + 1] * kappa * (etas[i] - etas[i + 1]) + anchors[i + 1]
    return etas, anchors


@dataclass(frozen=True)
class LayeredPressureSolution:
    """Per-layer affine pressures at one horizontal position and time."""

    layers: Tuple[PressureAffine, ...]
    kappa: float
    provenance: str = "oracle-sign"
    sample_point: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def pressure(self, i: int, z):
        """Pressure of layer ``i`` (1-based) at height z."""
        x, y, t = self.sample_point
        return self.layers[i - 1](x, y, z, t)


def propagate_pressures(
    column: StratifiedColumn, kappa: float, sample_point=(0.0, 0.0, 0.0), provenance: str = "oracle-sign"
) -> LayeredPressureSolution:
    """Build layer pressures top-down from P_n(eta_n) = P_atm and continuity at each interface."""
    x, y, t = (float(v) for v in sample_point)
    etas, anchors = anchor_pressures(column, kappa, x, y, t)
    layers = tuple(
        PressureAffine(0.0, 0.0, layer.density * kappa, float(anchors[i]), float(etas[i]))
        for i, layer in enumerate(column.layers)
    )
    return LayeredPressureSolution(layers, float(kappa), provenance, (x, y, t))


def layer_pressure_fields(column: StratifiedColumn, kappa: float, check: bool = True) -> List[PressureField]:
    """Vectorised per-layer pressure fields over (x, y, z, t)."""
    kappa = _check_kappa(kappa)

    def make(i):
        rho_k = column.layers[i].density * kappa

        def p(x, y, z, t):
            etas, anchors = anchor_pressures(column, kappa, x, y, t, check)
            return rho_k * (np.asarray(z, dtype=float) - etas[i]) + anchors[i]

        return PressureField(p)

    return [make(i) for i in range(column.n_layers)]


def column_pressure(column: StratifiedColumn, kappa: float) -> PressureField:
    """Pressure of whichever layer contains the point; NaN outside the fluid."""
    fields = layer_pressure_fields(column, kappa)

    def p(x, y, z, t):
        x, y, z, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, z, t)))
        idx = column.layer_index_at(x, y, z, t)
        out = np.full(x.shape, np.nan)
        for i, f in enumerate(fields, start=1):
            mask = idx == i
            if np.any(mask):
                out[mask] = f(x[mask], y[mask], z[mask], t[mask])
        return out

    return PressureField(p)


def pressure_n_layer_formula(i: int, column: StratifiedColumn, kappa: float, point) -> np.ndarray:
    """Closed form for layer i:

        P_i = rho_i*kappa*z + sum_{j=i}^{n-1} kappa*rho_{j+1}*(eta_j - eta_{j+1}) - kappa*rho_i*eta_i + P_atm
    """
    n = column.n_layers
    if not (isinstance(i, (int, np.integer)) and 1 <= i <= n):
        raise ValidationError(f"layer index must be in 1..{n}, got {i!r}")
    kappa = _check_kappa(kappa)
    x, y, z, t = (np.asarray(v, dtype=float) for v in point)
    etas = column.surface_values(x, y, t)
    rho = column.densities
    total = rho[i - 1] * kappa * z
    for j in range(i, n):
        total = total + kappa * rho[j] * (etas[j - 1] - etas[j])
    return total - kappa * rho[i - 1] * etas[i - 1] + column.atm_pressure


def two_layer_printed(column: StratifiedColumn, kappa: float, point) -> Tuple[np.ndarray, np.ndarray]:
    """Two-layer pressures in the displayed form (P_1, P_2), with P_atm kept in P_1."""
    if column.n_layers != 2:
        raise ValidationError(f"two-layer form needs n = 2, got {column.n_layers}")
    x, y, z, t = (np.asarray(v, dtype=float) for v in point)
    eta1, eta2 = column.surface_values(x, y, t)
    r1, r2 = column.densities
    p2 = kappa * r2 * (z - eta2) + column.atm_pressure
    p1 = r1 * kappa * z + (r2 - r1) * kappa * eta1 + column.atm_pressure - r2 * kappa * eta2
    return p1, p2


def flat_top_collapse(
    column: StratifiedColumn,
    kappa: float,
    sample_spec: Optional[SurfaceSampling] = None,
    rtol: float = 1e-10,
) -> PressureField:
    """For equal densities under a flat free surface z = d0, every layer has
    P(z) = rho*kappa*(z - d0) + P_atm; this is checked on ``sample_spec``."""
    kappa = _check_kappa(kappa)
    rho = column.densities
    if not np.all(rho == rho[0]):
        raise ValidationError(f"flat-top collapse needs equal densities, got {rho.tolist()}")
    top = column.surfaces[-1]
    spec = sample_spec or SurfaceSampling()
    x, y, t = spec.points().T
    top_vals = top(x, y, t)
    d0 = top.constant if top.constant is not None else float(top_vals.flat[0])
    if not np.all(top_vals == d0):
        raise ValidationError("flat-top collapse needs a constant free surface")
    rho0 = float(rho[0])
    patm = column.atm_pressure

    def p(x, y, z, t):
        return rho0 * kappa * (np.asarray(z, dtype=float) - d0) + patm

    field_ = PressureField(p)
    etas, _ = anchor_pressures(column, kappa, x, y, t)
    fields = layer_pressure_fields(column, kappa)
    lower = np.concatenate([np.full((1, len(x)), -column.depth), etas[:-1]])
    for i, f in enumerate(fields):
        for frac in (0.0, 0.5, 1.0):
            z = lower[i] + frac * (etas[i] - lower[i])
            a, b = f(x, y, z, t), field_(x, y, z, t)
            err = np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))
            if err > rtol:
                raise AssertionError(f"layer {i + 1} deviates from the collapsed pressure by {err:.3e} (relative)")
    return field_


@dataclass
class ConvergenceRow:
    n: int
    p: int
    observed: float
    bound: float
    satisfied: bool
    surface_gap: float


@dataclass
class ConvergenceStudy:
    n_values: List[int]
    p_values: List[int]
    rows: List[ConvergenceRow]
    kappa: float
    sup_density: float
    densities_bounded: bool
    surfaces_uniformly_convergent: bool
    bounds_satisfied: bool
    monotone: bool
    cauchy: bool
    slack: float = 1e-10
    notes: List[str] = field(default_factory=list)

    @property
    def sup_differences(self) -> Dict[Tuple[int, int], float]:
        return {(r.n, r.p): r.observed for r in self.rows}

    @property
    def bounds(self) -> Dict[Tuple[int, int], float]:
        return {(r.n, r.p): r.bound for r in self.rows}

    @property
    def passed(self) -> bool:
        return self.bounds_satisfied and self.monotone


def _bottom_points(column: StratifiedColumn, hp: np.ndarray, fractions=(0.25, 0.5, 0.75)) -> np.ndarray:
    x, y, t = hp.T
    eta1 = column.surfaces[0](x, y, t)
    pts = [np.stack([x, y, -column.depth + f * (eta1 + column.depth), t], axis=1) for f in fractions]
    return np.concatenate(pts)


def convergence_study(
    column_family: Callable[[int], StratifiedColumn],
    n_values: Sequence[int],
    p_values: Sequence[int],
    kappa: float,
    sample_spec: Optional[SurfaceSampling] = None,
    slack: float = 1e-10,
) -> ConvergenceStudy:
    """Compare bottom-layer pressures of the n- and (n+p)-layer columns of a family.

    For each (n, p) the observed sup over the sample lattice of |P_1^{n+p} - P_1^n|
    is compared pointwise with

        |kappa| * sup_j rho_j * (|eta_n^(n) - eta_n^(n+p)| + sum_{j=n}^{n+p} |eta_j - eta_{j+1}|)

    where the sum uses the (n+p)-column surfaces and, for its last term, the
    (n+p+1)-column.  For nested families the first term is zero and this is
    the usual Cauchy tail estimate.
    """
    kappa = _check_kappa(kappa)
    spec = sample_spec or SurfaceSampling()
    hp = spec.points()
    x, y, t = hp.T
    n_values = sorted(int(n) for n in n_values)
    p_values = sorted(int(p) for p in p_values)
    if not n_values or n_values[0] < 1 or not p_values or p_values[0] < 0:
        raise ValidationError(f"need n >= 1 and p >= 0, got n={n_values!r}, p={p_values!r}")

    cache: Dict[int, StratifiedColumn] = {}

    def get(n):
        if n not in cache:
            col = column_family(n)
            if col.n_layers != n:
                raise ValidationError(f"family returned {col.n_layers} layers for n={n}")
            col.check_ordering(x, y, t)
            cache[n] = col
        return cache[n]

    base = get(n_values[0])
    pts = _bottom_points(base, hp)
    rows: List[ConvergenceRow] = []
    sup_rho = 0.0
    for n in n_values:
        col_n = get(n)
        p1_n = layer_pressure_fields(col_n, kappa, check=False)[0](*pts.T)
        for p in p_values:
            col_np = get(n + p)
            if col_np.depth != base.depth or col_np.layers[0].density != base.layers[0].density:
                raise ValidationError(
                    f"family is inconsistent at n={n + p}: bottom layer (depth {col_np.depth!r}, "
                    f"density {col_np.layers[0].density!r}) differs from n={n_values[0]}"
                )
            eta_n = col_n.surface_values(x, y, t)
            eta_np = col_np.surface_values(x, y, t)
            if n > 1 and not np.array_equal(eta_n[: n - 1], eta_np[: n - 1]):
                raise ValidationError(f"family is inconsistent: internal surfaces of n={n} and n={n + p} differ")
            if not np.array_equal(col_n.densities, col_np.densities[:n]):
                raise ValidationError(f"family is inconsistent: densities of n={n} and n={n + p} differ")
            rho_sup = float(np.max(col_np.densities))
            sup_rho = max(sup_rho, rho_sup)
            p1_np = layer_pressure_fields(col_np, kappa, check=False)[0](*pts.T)
            diff = np.abs(p1_np - p1_n)
            eta_next = get(n + p + 1).surface_values(x, y, t)
            gaps = (
                np.abs(eta_n[n - 1] - eta_np[n - 1])
                + np.sum(np.abs(np.diff(eta_np[n - 1 :], axis=0)), axis=0)
                + np.abs(eta_next[n + p - 1] - eta_next[n + p])
            )
            bound_hp = abs(kappa) * rho_sup * gaps
            bound_pts = np.tile(bound_hp, len(pts) // len(hp))
            satisfied = bool(np.all(diff <= bound_pts + slack))
            surface_gap = float(np.max(np.abs(eta_np[n - 1] - eta_np[-1]))) if p > 0 else 0.0
            rows.append(ConvergenceRow(n, p, float(np.max(diff)), float(np.max(bound_hp)), satisfied, surface_gap))

    by_p: Dict[int, List[ConvergenceRow]] = {}
    for r in rows:
        by_p.setdefault(r.p, []).append(r)
    monotone = all(
        later.observed <= earlier.observed + slack
        for series in by_p.values()
        for earlier, later in zip(series, series[1:])
    )
    decreasing_to_zero = all(
        series[-1].observed <= series[0].observed + slack for series in by_p.values()
    )
    surf_conv = all(
        later.surface_gap <= earlier.surface_gap + 1e-15
        for series in by_p.values()
        for earlier, later in zip(series, series[1:])
    )
    bounds_ok = all(r.satisfied for r in rows)
    return ConvergenceStudy(
        n_values=n_values,
        p_values=p_values,
        rows=rows,
        kappa=kappa,
        sup_density=sup_rho,
        densities_bounded=bool(np.isfinite(sup_rho)),
        surfaces_uniformly_convergent=surf_conv,
        bounds_satisfied=bounds_ok,
        monotone=monotone,
        cauchy=bool(monotone and decreasing_to_zero),
        slack=slack,
    )


def nested_family(
    depth: float,
    surface: Callable[[int], SurfaceField],
    density: Callable[[int], float],
    atm_pressure: float = 101325.0,
    top: Optional[float] = None,
) -> Callable[[int], StratifiedColumn]:
    """Family whose n-layer column uses surfaces eta_1..eta_n and densities rho_1..rho_n
    of shared sequences; ``top`` pins the free surface of every member to a constant."""

    def build(n: int) -> StratifiedColumn:
        layers = tuple(LayerSpec(j, float(density(j)), Vorticity()) for j in range(1, n + 1))
        surfaces = [surface(j) for j in range(1, n + 1)]
        if top is not None:
            surfaces[-1] = SurfaceField.flat(top)
        return StratifiedColumn(float(depth), layers, tuple(surfaces), float(atm_pressure))

    return build


def geometric_surfaces(scale: float = 1.0, ratio: float = 0.5) -> Callable[[int], SurfaceField]:
    """eta_j = -scale * ratio**(j-1)."""
    if not 0 < ratio < 1:
        raise ValidationError(f"geometric ratio must lie in (0, 1), got {ratio!r}")
    return lambda j: SurfaceField.flat(-scale * ratio ** (j - 1))


def harmonic_surfaces(scale: float = 1.0) -> Callable[[int], SurfaceField]:
    """eta_j = -scale / j, gaps scale/(j*(j+1))."""
    return lambda j: SurfaceField.flat(-scale / j)


def random_summable_surfaces(seed: int = 0, scale: float = 1.0, spread: float = 0.5, j_max: int = 256):
    """Surfaces rising toward 0 with random gaps scale*2**-j*(1 + spread*U_j), U_j uniform in [0, 1)."""
    rng = np.random.default_rng(seed)
    gaps = scale * 0.5 ** np.arange(1, j_max + 1) * (1.0 + spread * rng.random(j_max))
    # eta_j = -(sum of gaps j..j_max) + tail correction so that eta_j -> 0
    tails = np.cumsum(gaps[::-1])[::-1]
    levels = -tails

    def surface(j: int) -> SurfaceField:
        if j > j_max:
            raise ValidationError(f"random surface sequence only defined up to j={j_max}")
        return SurfaceField.flat(float(levels[j - 1]))

    return surface
