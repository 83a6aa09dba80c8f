"""Finite-difference residuals of the governing equations.

Candidate fields are substituted into the momentum, mass, vorticity and
characteristic-form equations; every derivative is a second-order central
difference.  Residuals are reported absolute and relative to the largest term
of the equation at the same point.

Momentum residuals carry units of force per volume (Pa/m): the per-mass
equations are multiplied through by the density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from betaplane.errors import EvaluationError, ValidationError
from betaplane.model import (
    FlowField,
    PhysicalConstants,
    PressureAffine,
    PressureField,
    StratifiedColumn,
    SurfaceField,
    Vorticity,
    balanced_pressure,
    planetary_coefficient,
    tilde_sign,
    vertical_coefficient,
)

AXES = ("x", "y", "z", "t")

EQUATIONS = (
    "momentum-x",
    "momentum-y",
    "momentum-z",
    "divergence",
    "transformed-momentum-x",
    "transformed-momentum-y",
    "transformed-momentum-z",
    "vorticity-consistency",
    "linear-system-u",
    "linear-system-v",
    "linear-system-w",
    "bottom-bc",
    "surface-bc",
    "interface-bc",
    "y-boundedness",
)


@dataclass(frozen=True)
class EvaluationGrid:
    """Tensor grid; each range is (min, max, count)."""

    x_range: Tuple[float, float, int] = (-1.0e3, 1.0e3, 3)
    y_range: Tuple[float, float, int] = (-1.0e3, 1.0e3, 3)
    z_range: Tuple[float, float, int] = (-50.0, -1.0, 3)
    t_range: Tuple[float, float, int] = (0.0, 3600.0, 2)
    interior_only: bool = False

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range", "t_range"):
            lo, hi, n = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValidationError(f"grid {name} must be finite, got {(lo, hi)!r}")
            if int(n) != n or n < 1:
                raise ValidationError(f"grid {name} count must be a positive integer, got {n!r}")
            if hi < lo:
                raise ValidationError(f"grid {name} has max < min: {(lo, hi)!r}")
            # an axis is active when it spans an interval
            if hi > lo and n < 2:
                raise ValidationError(f"grid {name} spans an interval and needs count >= 2, got {n!r}")
            if hi == lo and n != 1:
                raise ValidationError(f"grid {name} is degenerate (min == max) and needs count 1, got {n!r}")

    def axis(self, name: str) -> np.ndarray:
        lo, hi, n = getattr(self, f"{name}_range")
        return np.linspace(lo, hi, int(n))

    def points(self) -> np.ndarray:
        """All grid points as an (N, 4) array of (x, y, z, t), x varying slowest."""
        mesh = np.meshgrid(*(self.axis(a) for a in AXES), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def horizontal_points(self) -> np.ndarray:
        """(N, 3) array of (x, y, t) for surface sampling."""
        mesh = np.meshgrid(self.axis("x"), self.axis("y"), self.axis("t"), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def scale(self, name: str) -> float:
        lo, hi, _ = getattr(self, f"{name}_range")
        return max(abs(lo), abs(hi), hi - lo)

    def default_steps(self) -> Dict[str, float]:
        return {a: max(1e-4 * self.scale(a), 1e-6) for a in AXES}

    def count(self) -> int:
        return int(np.prod([getattr(self, f"{a}_range")[2] for a in AXES]))


@dataclass
class EquationResidual:
    max_abs: float
    mean_abs: float
    max_rel: float
    worst_point: Tuple[float, ...]
    extra: dict = field(default_factory=dict)

    def passes(self, tolerance: float) -> bool:
        return self.max_rel <= tolerance


@dataclass
class ResidualReport:
    residuals: Dict[str, EquationResidual] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.residuals[key]

    def __contains__(self, key):
        return key in self.residuals

    def merge(self, other: "ResidualReport", prefix: str = "") -> "ResidualReport":
        for k, v in other.residuals.items():
            self.residuals[prefix + k] = v
        return self

    def max_rel(self) -> float:
        return max((r.max_rel for r in self.residuals.values()), default=0.0)

    def failures(self, tolerance: float):
        return sorted(k for k, r in self.residuals.items() if not r.passes(tolerance))


def _evaluate(func, pts, what):
    try:
        vals = np.asarray(func(*pts.T), dtype=float)
    except Exception as exc:  # noqa: BLE001 - re-raised with the offending point
        raise EvaluationError(f"evaluating {what} failed: {exc}", tuple(pts[0])) from exc
    vals = np.broadcast_to(vals, (pts.shape[0],))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        p = tuple(float(v) for v in pts[np.argmax(bad)])
        raise EvaluationError(f"{what} is not finite at point {p}", p)
    return vals


def partial(func, pts: np.ndarray, axis: int, h: float, what: str = "field") -> np.ndarray:
    """Central difference of ``func(x, y, z, t)`` along ``axis`` at each row of ``pts``."""
    shift = np.zeros(pts.shape[1])
    shift[axis] = h
    return (_evaluate(func, pts + shift, what) - _evaluate(func, pts - shift, what)) / (2.0 * h)


def _summarize(abs_res: np.ndarray, scale: np.ndarray, pts: np.ndarray, **extra) -> EquationResidual:
    abs_res = np.abs(abs_res)
    scale = np.abs(scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, abs_res / np.where(scale > 0, scale, 1.0), np.where(abs_res > 0, np.inf, 0.0))
    worst = int(np.argmax(abs_res)) if abs_res.size else 0
    return EquationResidual(
        max_abs=float(np.max(abs_res)) if abs_res.size else 0.0,
        mean_abs=float(np.mean(abs_res)) if abs_res.size else 0.0,
        max_rel=float(np.max(rel)) if rel.size else 0.0,
        worst_point=tuple(float(v) for v in pts[worst]) if abs_res.size else (),
        extra=extra,
    )


def _steps(grid: EvaluationGrid, steps: Optional[Dict[str, float]]) -> Dict[str, float]:
    h = grid.default_steps()
    if steps:
        h.update(steps)
    return h


def _gradients(func, pts, h, what):
    return [partial(func, pts, i, h[a], what) for i, a in enumerate(AXES)]


def _momentum_terms(flow, pressure, density, constants, pts, h, gravity_terms=True):
    """Per-equation lists of rho-scaled terms (each an array over pts)."""
    x, y, z, t = pts.T
    u = _evaluate(flow.u, pts, "u")
    v = _evaluate(flow.v, pts, "v")
    w = _evaluate(flow.w, pts, "w")
    du = _gradients(flow.u, pts, h, "u")
    dv = _gradients(flow.v, pts, h, "v")
    dw = _gradients(flow.w, pts, h, "w")
    dp = [partial(pressure, pts, i, h[a], "pressure") for i, a in enumerate(AXES[:3])]
    om, beta = constants.omega, constants.beta
    rho = density

    def advect(d):
        return [rho * d[3], rho * u * d[0], rho * v * d[1], rho * w * d[2]]

    ex = advect(du) + [rho * 2.0 * om * w, -rho * beta * y * v, dp[0]]
    ey = advect(dv) + [rho * beta * y * u, dp[1]]
    ez = advect(dw) + [-rho * 2.0 * om * u, dp[2]]
    if gravity_terms:
        ey.append(rho * om**2 * y)
        ez += [-rho * om**2 * constants.radius, np.full_like(x, rho * constants.gravity)]
    return ex, ey, ez


def _reduce(terms, pts, **extra):
    terms = np.stack(np.broadcast_arrays(*(np.asarray(term, dtype=float) for term in terms)))
    total = np.sum(terms, axis=0)
    scale = np.max(np.abs(terms), axis=0)
    return _summarize(total, scale, pts, **extra)


def momentum_residual(
    flow: FlowField,
    pressure: PressureField,
    density: float,
    constants: PhysicalConstants,
    grid: EvaluationGrid,
    steps: Optional[Dict[str, float]] = None,
) -> ResidualReport:
    """Residuals of the three momentum equations, scaled by density."""
    pts = grid.points()
    h = _steps(grid, steps)
    ex, ey, ez = _momentum_terms(flow, pressure, density, constants, pts, h)
    return ResidualReport(
        {
            "momentum-x": _reduce(ex, pts),
            "momentum-y": _reduce(ey, pts),
            "momentum-z": _reduce(ez, pts),
        }
    )


def transformed_momentum_residual(
    flow: FlowField,
    pressure: PressureField,
    density: float,
    constants: PhysicalConstants,
    grid: EvaluationGrid,
    convention: str = "consistent",
    steps: Optional[Dict[str, float]] = None,
) -> ResidualReport:
    """Momentum equations without centripetal/gravity terms, applied to the reduced pressure.

    The reduced pressure differs from P by a known quadratic, so its gradient
    is the finite-difference gradient of P plus the exact gradient of that
    shift; differencing the (large) reduced pressure directly would lose
    about seven digits to rounding in the y-direction.
    """
    pts = grid.points()
    h = _steps(grid, steps)
    s = tilde_sign(convention)
    om2 = constants.omega**2
    grad_shift = (0.0, -s * density * om2 * pts[:, 1], s * density * (om2 * constants.radius - constants.gravity))

    ex, ey, ez = _momentum_terms(flow, pressure, density, constants, pts, h, gravity_terms=False)
    # the pressure-gradient term is the last entry of each list
    for eq, g in zip((ex, ey, ez), grad_shift):
        eq[-1] = eq[-1] + g
    return ResidualReport(
        {
            "transformed-momentum-x": _reduce(ex, pts, convention=convention),
            "transformed-momentum-y": _reduce(ey, pts, convention=convention),
            "transformed-momentum-z": _reduce(ez, pts, convention=convention),
        }
    )


def divergence_residual(
    flow: FlowField, grid: EvaluationGrid, steps: Optional[Dict[str, float]] = None
) -> ResidualReport:
    pts = grid.points()
    h = _steps(grid, steps)
    terms = [
        partial(flow.u, pts, 0, h["x"], "u"),
        partial(flow.v, pts, 1, h["y"], "v"),
        partial(flow.w, pts, 2, h["z"], "w"),
    ]
    return ResidualReport({"divergence": _reduce(terms, pts)})


def curl(flow: FlowField, pts: np.ndarray, h: Dict[str, float]) -> np.ndarray:
    """(w_y - v_z, u_z - w_x, v_x - u_y) at each point, shape (N, 3)."""
    w_y = partial(flow.w, pts, 1, h["y"], "w")
    v_z = partial(flow.v, pts, 2, h["z"], "v")
    u_z = partial(flow.u, pts, 2, h["z"], "u")
    w_x = partial(flow.w, pts, 0, h["x"], "w")
    v_x = partial(flow.v, pts, 0, h["x"], "v")
    u_y = partial(flow.u, pts, 1, h["y"], "u")
    return np.stack([w_y - v_z, u_z - w_x, v_x - u_y], axis=1)


def vorticity_residual(
    flow: FlowField,
    declared: Vorticity,
    grid: EvaluationGrid,
    constants: Optional[PhysicalConstants] = None,
    steps: Optional[Dict[str, float]] = None,
) -> ResidualReport:
    """Compare the finite-difference curl with the declared constant vorticity.

    Relative residuals are normalised by max(|declared|, 2*Omega): the planetary
    vorticity is the natural scale when the declared value is zero.
    """
    pts = grid.points()
    h = _steps(grid, steps)
    omega = curl(flow, pts, h)
    lam = declared.as_array()
    diff = np.abs(omega - lam)
    per_component = diff.max(axis=0)
    variation = omega.max(axis=0) - omega.min(axis=0)
    floor = 2.0 * constants.omega if constants is not None else 0.0
    scale = np.full(len(pts), max(float(np.max(np.abs(lam))), floor))
    res = _summarize(
        diff.max(axis=1),
        scale,
        pts,
        per_component=[float(v) for v in per_component],
        computed_mean=[float(v) for v in omega.mean(axis=0)],
        spatial_variation=[float(v) for v in variation],
    )
    return ResidualReport({"vorticity-consistency": res})


def linear_system_residual(
    flow: FlowField,
    vorticity: Vorticity,
    constants: PhysicalConstants,
    grid: EvaluationGrid,
    steps: Optional[Dict[str, float]] = None,
) -> ResidualReport:
    """Residuals of the first-order system L u = 0, L v = 0, L w - beta*v = 0,
    with L = Lambda1 d/dx + (2*Omega + Lambda2) d/dy + (Lambda3 + beta*y) d/dz."""
    c = planetary_coefficient(vorticity, constants)
    pts = grid.points()
    h = _steps(grid, steps)
    y = pts[:, 1]
    l1, l3, beta = vorticity.lambda1, vorticity.lambda3, constants.beta

    def operator(func, what):
        d = [partial(func, pts, i, h[a], what) for i, a in enumerate(AXES[:3])]
        return [l1 * d[0], c * d[1], (l3 + beta * y) * d[2]]

    out = {}
    out["linear-system-u"] = _reduce(operator(flow.u, "u"), pts)
    out["linear-system-v"] = _reduce(operator(flow.v, "v"), pts)
    v = _evaluate(flow.v, pts, "v")
    out["linear-system-w"] = _reduce(operator(flow.w, "w") + [-beta * v], pts)
    return ResidualReport(out)


@dataclass(frozen=True)
class SurfaceSampling:
    """(x, y, t) lattice on which boundary conditions are sampled."""

    x_range: Tuple[float, float, int] = (-1.0e3, 1.0e3, 9)
    y_range: Tuple[float, float, int] = (-1.0e3, 1.0e3, 9)
    t_range: Tuple[float, float, int] = (0.0, 3600.0, 5)

    def points(self) -> np.ndarray:
        axes = [np.linspace(lo, hi, int(n)) for lo, hi, n in (self.x_range, self.y_range, self.t_range)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def from_grid(cls, grid: EvaluationGrid) -> "SurfaceSampling":
        return cls(grid.x_range, grid.y_range, grid.t_range)


def boundary_residuals(
    column: StratifiedColumn,
    flows: Sequence[FlowField],
    pressures: Sequence[PressureField],
    constants: PhysicalConstants,
    sample_spec: Optional[SurfaceSampling] = None,
) -> ResidualReport:
    """Bottom kinematic condition, free-surface pressure and interface continuity.

    Relative values: bottom |w| against the local speed, pressure conditions
    against |P_atm|.
    """
    n = column.n_layers
    if len(flows) != n or len(pressures) != n:
        raise ValidationError(
            f"expected {n} flows and {n} pressures for the column, got {len(flows)} and {len(pressures)}"
        )
    spec = sample_spec or SurfaceSampling()
    hp = spec.points()
    x, y, t = hp.T
    etas = column.surface_values(x, y, t)
    p_ref = np.full(len(hp), abs(column.atm_pressure))

    bottom = np.stack([x, y, np.full_like(x, -column.depth), t], axis=1)
    u, v, w = flows[0](*bottom.T)
    speed = np.max(np.abs(np.stack([u, v, w])), axis=0)
    out = {"bottom-bc": _summarize(w, speed, bottom)}

    top = np.stack([x, y, etas[-1], t], axis=1)
    p_top = _evaluate(pressures[-1], top, f"P_{n}")
    out["surface-bc"] = _summarize(p_top - column.atm_pressure, p_ref, top)

    if n > 1:
        diffs, where = [], []
        for i in range(n - 1):
            pts = np.stack([x, y, etas[i], t], axis=1)
            diffs.append(_evaluate(pressures[i], pts, f"P_{i + 1}") - _evaluate(pressures[i + 1], pts, f"P_{i + 2}"))
            where.append(pts)
        out["interface-bc"] = _summarize(np.concatenate(diffs), np.concatenate([p_ref] * (n - 1)), np.concatenate(where))
    else:
        out["interface-bc"] = EquationResidual(0.0, 0.0, 0.0, (), {"note": "single layer, no interfaces"})
    return ResidualReport(out)


@dataclass
class BoundednessReport:
    bounded: bool
    slope: float
    slope_threshold: float
    max_abs: float
    bound: Optional[float]
    within_bound: bool
    n_samples: int


def y_boundedness_check(
    pressure: PressureField,
    surface: SurfaceField,
    density: float,
    constants: PhysicalConstants,
    bound: Optional[float] = None,
    y_span: float = 1.0e6,
    sample_spec: Optional[SurfaceSampling] = None,
    n_y: int = 201,
    h_surface: float = 1.0,
    h_z: float = 1.0,
) -> BoundednessReport:
    """Sample P_y + P_z * eta_y on z = eta over |y| <= y_span and fit its linear growth in y.

    The verdict is "bounded" when the fitted slope is below 1e-12*rho*Omega^2
    and, if ``bound`` is given, every sample lies within it.
    """
    if bound is not None and bound <= 0:
        raise ValidationError(f"bound must be positive, got {bound!r}")
    spec = sample_spec or SurfaceSampling()
    xt = np.unique(spec.points()[:, [0, 2]], axis=0)
    ys = np.linspace(-y_span, y_span, n_y)
    h_y = max(1e-4 * y_span, 1e-6)

    X = np.repeat(xt[:, 0], n_y)
    T = np.repeat(xt[:, 1], n_y)
    Y = np.tile(ys, len(xt))
    Z = surface(X, Y, T)
    pts = np.stack([X, Y, Z, T], axis=1)
    p_y = partial(pressure, pts, 1, h_y, "pressure")
    p_z = partial(pressure, pts, 2, h_z, "pressure")
    eta_y = surface.sampled_y_slope(X, Y, T, h_surface)
    q = p_y + p_z * eta_y

    # fit each (x, t) line separately and keep the steepest
    q_lines = q.reshape(len(xt), n_y)
    slopes = np.polyfit(ys, q_lines.T, 1)[0]
    slope = float(np.max(np.abs(slopes)))
    threshold = 1e-12 * density * constants.omega**2
    max_abs = float(np.max(np.abs(q)))
    within = bound is None or max_abs <= bound
    return BoundednessReport(
        bounded=bool(slope <= threshold and within),
        slope=slope,
        slope_threshold=threshold,
        max_abs=max_abs,
        bound=bound,
        within_bound=bool(within),
        n_samples=len(q),
    )


def boundedness_as_residual(report: BoundednessReport) -> EquationResidual:
    """Fold a boundedness verdict into the residual table: relative 0 when bounded, 1 otherwise."""
    return EquationResidual(
        max_abs=report.slope,
        mean_abs=report.slope,
        max_rel=0.0 if report.bounded else 1.0,
        worst_point=(),
        extra={
            "bounded": report.bounded,
            "slope_threshold": report.slope_threshold,
            "max_abs": report.max_abs,
            "bound": report.bound,
        },
    )


@dataclass
class RigidityCandidate:
    u: float
    label: str
    bounded: bool
    slope: float
    momentum_max_rel: float
    momentum_ok: bool

    @property
    def passes(self) -> bool:
        return self.bounded and self.momentum_ok


def rigidity_sweep(
    constants: PhysicalConstants,
    density: float = 1000.0,
    grid: Optional[EvaluationGrid] = None,
    tolerance: float = 1e-8,
    y_span: float = 1.0e6,
):
    """Try zonal speeds u in {0, +-Omega^2/beta, +-2*Omega^2/beta} with v = w = 0.

    For each candidate two tests are run: (i) momentum residuals with the
    z-only pressure rho*(2*Omega*u + Omega^2*R - g)*z; (ii) y-boundedness of the
    pressure that balances all three momentum equations.  Only a candidate that
    passes both is an admissible solution.
    """
    grid = grid or EvaluationGrid()
    s = constants.equatorial_speed
    candidates = [(0.0, "0"), (s, "+Omega^2/beta"), (-s, "-Omega^2/beta"), (2 * s, "+2Omega^2/beta"), (-2 * s, "-2Omega^2/beta")]
    out = []
    flat = SurfaceField.flat(0.0)
    for u, label in candidates:
        flow = FlowField.constant(u)
        z_only = PressureAffine(0.0, 0.0, density * vertical_coefficient(constants, u).oracle, 0.0).as_field()
        mom = momentum_residual(flow, z_only, density, constants, grid)
        mom_rel = max(r.max_rel for r in mom.residuals.values())
        bal = balanced_pressure(constants, density, u).as_field()
        b = y_boundedness_check(bal, flat, density, constants, y_span=y_span)
        out.append(RigidityCandidate(u, label, b.bounded, b.slope, mom_rel, mom_rel < tolerance))
    return out
