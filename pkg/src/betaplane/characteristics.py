"""Characteristic curves of the constant-vorticity linear system.

Along dx/ds = Lambda1, dy/ds = Lambda2 + 2*Omega, dz/ds = Lambda3 + beta*y the
quantities

    m = (Lambda2 + 2*Omega) x - Lambda1 y
    n = Lambda3 y + (beta/2) y^2 - (Lambda2 + 2*Omega) z

are conserved, so any solution of the system is a function of (m, n, t)
(with the extra beta*y*V/(Lambda2 + 2*Omega) correction in w).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from betaplane.errors import IntegrationError, ValidationError
from betaplane.model import FlowField, PhysicalConstants, Vorticity, planetary_coefficient

# "constant along a curve": relative 1e-9 with an absolute floor
REL_TOL = 1e-9
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class CharacteristicInvariants:
    m: np.ndarray
    n: np.ndarray


def invariants_at(point, vorticity: Vorticity, constants: PhysicalConstants) -> CharacteristicInvariants:
    """Evaluate (m, n) at ``point = (x, y, z)``; arrays broadcast."""
    c = planetary_coefficient(vorticity, constants)
    x, y, z = (np.asarray(p, dtype=float) for p in point)
    m = c * x - vorticity.lambda1 * y
    n = vorticity.lambda3 * y + 0.5 * constants.beta * y**2 - c * z
    return CharacteristicInvariants(m, n)


@dataclass(frozen=True)
class CharacteristicCurve:
    """Samples of one curve as rows (s, x, y, z)."""

    samples: np.ndarray

    @property
    def s(self):
        return self.samples[:, 0]

    @property
    def points(self):
        return self.samples[:, 1:]

    @property
    def start(self):
        return self.samples[0, 1:]

    @property
    def end(self):
        return self.samples[-1, 1:]

    def invariant_drift(self, vorticity: Vorticity, constants: PhysicalConstants) -> Tuple[float, float]:
        """Largest |m - m_start| and |n - n_start| over the curve."""
        inv = invariants_at(self.points.T, vorticity, constants)
        return float(np.max(np.abs(inv.m - inv.m[0]))), float(np.max(np.abs(inv.n - inv.n[0])))


def _rhs(state, vorticity, c, beta):
    return np.array([vorticity.lambda1, c, vorticity.lambda3 + beta * state[1]])


def exact_characteristic(start, vorticity: Vorticity, constants: PhysicalConstants, s) -> np.ndarray:
    """Closed-form curve: x and y linear in s, z quadratic. Returns rows (x, y, z)."""
    c = planetary_coefficient(vorticity, constants)
    x0, y0, z0 = (float(v) for v in start)
    s = np.asarray(s, dtype=float)
    beta = constants.beta
    x = x0 + vorticity.lambda1 * s
    y = y0 + c * s
    z = z0 + (vorticity.lambda3 + beta * y0) * s + 0.5 * beta * c * s**2
    return np.stack([x, y, z], axis=-1)


def integrate_characteristic(
    start,
    vorticity: Vorticity,
    constants: PhysicalConstants,
    s_span: Tuple[float, float] = (0.0, 1.0),
    steps: int = 64,
) -> CharacteristicCurve:
    """Classical RK4 with ``steps`` fixed steps over ``s_span``.

    The right-hand side is affine in the state, so RK4 reproduces the exact
    quadratic z(s) up to rounding.
    """
    c = planetary_coefficient(vorticity, constants)
    s0, s1 = (float(v) for v in s_span)
    if not (np.isfinite(s0) and np.isfinite(s1)):
        raise ValidationError(f"s_span must be finite, got {s_span!r}")
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps!r}")
    state = np.array([float(v) for v in start])
    if s1 == s0:
        return CharacteristicCurve(np.array([[s0, *state]]))
    if s1 < s0:
        raise ValidationError(f"s_span must be increasing, got {s_span!r}")

    beta = constants.beta
    h = (s1 - s0) / steps
    out = np.empty((steps + 1, 4))
    out[0] = (s0, *state)
    for i in range(steps):
        k1 = _rhs(state, vorticity, c, beta)
        k2 = _rhs(state + 0.5 * h * k1, vorticity, c, beta)
        k3 = _rhs(state + 0.5 * h * k2, vorticity, c, beta)
        k4 = _rhs(state + h * k3, vorticity, c, beta)
        new = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(new)):
            raise IntegrationError(f"non-finite state after step {i + 1}", tuple(out[i]))
        state = new
        # evaluate s directly to avoid accumulating h
        out[i + 1] = (s0 + (i + 1) * h if i + 1 < steps else s1, *state)
    return CharacteristicCurve(out)


@dataclass(frozen=True)
class GeneralSolutionFamily:
    """Velocity components as functions of (m, n, t).

    ``a`` and ``b`` record the reduced constants (zonal speed and the additive
    part of w) when the family is the terminal one.
    """

    U: Callable
    V: Callable
    W: Callable
    a: Optional[float] = None
    b: Optional[float] = None


def _const(value):
    return lambda m, n, t: np.full(np.broadcast(np.asarray(m), np.asarray(n), np.asarray(t)).shape, float(value))


def terminal_family(constants: PhysicalConstants) -> GeneralSolutionFamily:
    """U = -Omega^2/beta, V = W = 0: the state left once the bottom condition forces b = 0."""
    a = -constants.equatorial_speed
    return GeneralSolutionFamily(_const(a), _const(0.0), _const(0.0), a=a, b=0.0)


def reconstruct_flow(family: GeneralSolutionFamily, vorticity: Vorticity, constants: PhysicalConstants) -> FlowField:
    c = planetary_coefficient(vorticity, constants)
    beta = constants.beta

    def mn(x, y, z):
        inv = invariants_at((x, y, z), vorticity, constants)
        return inv.m, inv.n

    def u(x, y, z, t):
        m, n = mn(x, y, z)
        return family.U(m, n, np.asarray(t, dtype=float))

    def v(x, y, z, t):
        m, n = mn(x, y, z)
        return family.V(m, n, np.asarray(t, dtype=float))

    def w(x, y, z, t):
        m, n = mn(x, y, z)
        t = np.asarray(t, dtype=float)
        return family.W(m, n, t) + beta * np.asarray(y, dtype=float) / c * family.V(m, n, t)

    return FlowField(u, v, w)


@dataclass(frozen=True)
class CurveSampling:
    """Where to seed curves for ``check_characteristic_form``.

    Seeds form a ``lattice`` over the x/y/z ranges; ``s_span`` defaults to the
    parameter length that carries a curve across the y-range.
    """

    x_range: Tuple[float, float] = (-1.0e3, 1.0e3)
    y_range: Tuple[float, float] = (-1.0e3, 1.0e3)
    z_range: Tuple[float, float] = (-50.0, -1.0)
    times: Sequence[float] = (0.0, 1800.0, 3600.0)
    lattice: Tuple[int, int, int] = (4, 2, 2)
    steps: int = 64
    s_span: Optional[Tuple[float, float]] = None

    def seeds(self) -> np.ndarray:
        axes = [
            np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
            for (lo, hi), n in zip((self.x_range, self.y_range, self.z_range), self.lattice)
        ]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def span_for(self, c: float) -> Tuple[float, float]:
        if self.s_span is not None:
            return tuple(self.s_span)
        extent = self.y_range[1] - self.y_range[0]
        return (0.0, extent / abs(c) if extent > 0 else 1.0)


@dataclass
class CharacteristicFormReport:
    max_deviation: dict
    tolerance: dict
    n_curves: int
    passed: bool
    worst: dict = field(default_factory=dict)


def check_characteristic_form(
    flow: FlowField,
    vorticity: Vorticity,
    constants: PhysicalConstants,
    sample_spec: Optional[CurveSampling] = None,
) -> CharacteristicFormReport:
    """Check that u, v and w - beta*y*v/(Lambda2 + 2*Omega) are constant along integrated curves."""
    spec = sample_spec or CurveSampling()
    c = planetary_coefficient(vorticity, constants)
    beta = constants.beta
    span = spec.span_for(c)

    dev = {"u": 0.0, "v": 0.0, "w_reduced": 0.0}
    tol = {"u": ABS_FLOOR, "v": ABS_FLOOR, "w_reduced": ABS_FLOOR}
    worst = {}
    seeds = spec.seeds()
    for seed in seeds:
        curve = integrate_characteristic(seed, vorticity, constants, span, spec.steps)
        x, y, z = curve.points.T
        for t in spec.times:
            u, v, w = flow(x, y, z, t)
            values = {"u": u, "v": v, "w_reduced": w - beta * y / c * v}
            for key, arr in values.items():
                d = float(np.max(np.abs(arr - arr[0])))
                tol[key] = max(tol[key], REL_TOL * float(np.max(np.abs(arr))), ABS_FLOOR)
                if d > dev[key]:
                    dev[key] = d
                    worst[key] = {"seed": [float(v_) for v_ in seed], "t": float(t)}
    passed = all(dev[k] <= tol[k] for k in dev)
    return CharacteristicFormReport(dev, tol, len(seeds), passed, worst)
