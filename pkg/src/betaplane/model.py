"""Physical constants, layer descriptions and the closed-form equatorial solution.

Coordinates follow the usual local tangent-plane convention: x points east,
y north, z up; the bottom sits at ``z = -depth``.  Every field is a vectorised
callable of ``(x, y, z, t)`` (or ``(x, y, t)`` for surfaces) that accepts
numpy arrays and broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from betaplane.errors import DegenerateSystemError, ValidationError

# The rotation rate is printed as 7.29e5 rad/s in the source derivation; the
# physical value is 7.29e-5.
EARTH_OMEGA = 7.29e-5  # rad/s
EARTH_RADIUS = 6.378e6  # m
GRAVITY = 9.81  # m/s^2
STANDARD_ATMOSPHERE = 101325.0  # Pa

ScalarField4 = Callable[..., np.ndarray]


def _constant_field(value: float) -> ScalarField4:
    def f(*args):
        shape = np.broadcast(*[np.asarray(a, dtype=float) for a in args]).shape
        return np.full(shape, float(value))

    return f


@dataclass(frozen=True)
class PhysicalConstants:
    """Rotation rate, beta-plane parameter, planetary radius and gravity (SI units)."""

    omega: float
    beta: float
    radius: float
    gravity: float
    beta_source: str = "explicit"

    def __post_init__(self):
        for name in ("omega", "beta", "radius", "gravity"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
        if self.beta_source not in ("explicit", "standard"):
            raise ValidationError(f"beta_source must be 'explicit' or 'standard', got {self.beta_source!r}")

    @property
    def beta_standard(self) -> float:
        """Conventional equatorial value 2*Omega/R."""
        return 2.0 * self.omega / self.radius

    @property
    def equatorial_speed(self) -> float:
        """Omega^2 / beta, the magnitude of the zonal closed-form velocity."""
        return self.omega**2 / self.beta


def make_constants(
    omega: float = EARTH_OMEGA,
    beta_choice: Union[float, str] = "standard",
    radius: float = EARTH_RADIUS,
    gravity: float = GRAVITY,
) -> PhysicalConstants:
    """Build validated constants; ``beta_choice="standard"`` derives beta = 2*Omega/R."""
    for name, value in (("omega", omega), ("radius", radius), ("gravity", gravity)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{name} must be a number, got {value!r}")
        if not np.isfinite(value) or value <= 0:
            raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    if isinstance(beta_choice, str):
        if beta_choice != "standard":
            raise ValidationError(f"beta must be a positive number or 'standard', got {beta_choice!r}")
        return PhysicalConstants(float(omega), 2.0 * omega / radius, float(radius), float(gravity), "standard")
    if isinstance(beta_choice, bool) or not isinstance(beta_choice, (int, float)):
        raise ValidationError(f"beta must be a positive number or 'standard', got {beta_choice!r}")
    return PhysicalConstants(float(omega), float(beta_choice), float(radius), float(gravity), "explicit")


@dataclass(frozen=True)
class Vorticity:
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3])

    def is_zero(self) -> bool:
        return self.lambda1 == 0.0 and self.lambda2 == 0.0 and self.lambda3 == 0.0


def planetary_coefficient(vorticity: Vorticity, constants: PhysicalConstants) -> float:
    """Lambda2 + 2*Omega; must be nonzero for the characteristic construction."""
    c = vorticity.lambda2 + 2.0 * constants.omega
    if c == 0.0 or abs(c) <= 1e-15 * constants.omega:
        raise DegenerateSystemError(
            f"Lambda2 + 2*Omega = {c!r} vanishes (Lambda2={vorticity.lambda2!r}, Omega={constants.omega!r})"
        )
    return c


@dataclass(frozen=True)
class LayerSpec:
    """One fluid layer; ``index`` 1 is the lowest."""

    index: int
    density: float
    vorticity: Vorticity = field(default_factory=Vorticity)

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"layer index must be >= 1, got {self.index!r}")
        if not np.isfinite(self.density) or self.density <= 0:
            raise ValidationError(f"layer {self.index}: density must be positive, got {self.density!r}")


@dataclass(frozen=True)
class SurfaceField:
    """A surface z = eval(x, y, t), optionally with a known bound on |d eval/dy|."""

    eval: Callable[..., np.ndarray]
    y_slope_bound: Optional[float] = None
    description: str = ""
    constant: Optional[float] = None

    def __call__(self, x, y, t):
        return np.asarray(self.eval(x, y, t), dtype=float)

    @classmethod
    def flat(cls, level: float) -> "SurfaceField":
        level = float(level)
        return cls(_constant_field(level), 0.0, f"constant {level!r}", level)

    def sampled_y_slope(self, x, y, t, h: float = 1.0) -> np.ndarray:
        return (self(x, y + h, t) - self(x, y - h, t)) / (2.0 * h)

    def check_slope_bound(self, x, y, t, h: float = 1.0, tol: float = 1e-9) -> bool:
        if self.y_slope_bound is None:
            return True
        slope = np.abs(self.sampled_y_slope(x, y, t, h))
        return bool(np.all(slope <= self.y_slope_bound + tol))


@dataclass(frozen=True)
class StratifiedColumn:
    """Bottom depth, layers (lowest first), their upper surfaces and the atmospheric pressure."""

    depth: float
    layers: tuple
    surfaces: tuple
    atm_pressure: float = STANDARD_ATMOSPHERE

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        if not np.isfinite(self.depth) or self.depth <= 0:
            raise ValidationError(f"depth must be positive, got {self.depth!r}")
        if len(self.layers) == 0:
            raise ValidationError("column needs at least one layer")
        if len(self.layers) != len(self.surfaces):
            raise ValidationError(
                f"layers and surfaces must have equal length, got {len(self.layers)} and {len(self.surfaces)}"
            )
        for i, layer in enumerate(self.layers, start=1):
            if layer.index != i:
                raise ValidationError(f"layer at position {i} has index {layer.index}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def densities(self) -> np.ndarray:
        return np.array([layer.density for layer in self.layers])

    def surface_values(self, x, y, t) -> np.ndarray:
        """Stack of surface heights with shape (n, *broadcast_shape)."""
        x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
        return np.stack([np.broadcast_to(s(x, y, t), x.shape) for s in self.surfaces])

    def check_ordering(self, x, y, t) -> None:
        """Raise unless -depth < eta_1 < ... < eta_n at every given (x, y, t)."""
        x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
        etas = self.surface_values(x, y, t)
        lower = np.concatenate([np.full((1,) + etas.shape[1:], -self.depth), etas[:-1]])
        bad = ~(etas > lower)
        if np.any(bad):
            idx = tuple(np.argwhere(bad)[0])
            j, pos = idx[0] + 1, idx[1:]
            raise ValidationError(
                f"surfaces not strictly ordered: eta_{j}={float(etas[idx])!r} is not above "
                f"{float(lower[idx])!r} at (x={float(x[pos])!r}, y={float(y[pos])!r}, t={float(t[pos])!r})"
            )

    def layer_index_at(self, x, y, z, t) -> np.ndarray:
        """1-based layer containing each point, 0 outside the fluid."""
        x, y, z, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, z, t)))
        etas = self.surface_values(x, y, t)
        idx = np.zeros(etas.shape[1:], dtype=int)
        inside = (z >= -self.depth) & (z <= etas[-1])
        # first surface at or above z
        above = z[None, ...] <= etas
        first = np.argmax(above, axis=0) + 1
        idx[inside] = first[inside]
        return idx


@dataclass(frozen=True)
class FlowField:
    u: ScalarField4
    v: ScalarField4
    w: ScalarField4

    def __call__(self, x, y, z, t):
        shape = np.broadcast(*[np.asarray(a, dtype=float) for a in (x, y, z, t)]).shape
        return tuple(np.broadcast_to(np.asarray(f(x, y, z, t), dtype=float), shape) for f in (self.u, self.v, self.w))

    @classmethod
    def constant(cls, u: float, v: float = 0.0, w: float = 0.0) -> "FlowField":
        return cls(_constant_field(u), _constant_field(v), _constant_field(w))


@dataclass(frozen=True)
class PressureField:
    eval: ScalarField4

    def __call__(self, x, y, z, t):
        return np.asarray(self.eval(x, y, z, t), dtype=float)


@dataclass(frozen=True)
class PressureAffine:
    """P = x_coeff*x + y2_coeff*y**2 + z_coeff*(z - z_ref) + offset.

    ``z_ref`` lets a layer be anchored at its upper surface so that the
    boundary value is reproduced exactly at ``z = z_ref``.
    """

    x_coeff: float = 0.0
    y2_coeff: float = 0.0
    z_coeff: float = 0.0
    offset: float = 0.0
    z_ref: float = 0.0

    def __call__(self, x, y, z, t=0.0):
        x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
        return self.x_coeff * x + self.y2_coeff * y**2 + self.z_coeff * (z - self.z_ref) + self.offset

    def as_field(self) -> PressureField:
        return PressureField(self.__call__)

    @property
    def depends_on_z_only(self) -> bool:
        return self.x_coeff == 0.0 and self.y2_coeff == 0.0


def make_closed_form_flow(constants: PhysicalConstants, layer: Optional[LayerSpec] = None) -> FlowField:
    """The equatorial solution (u, v, w) = (-Omega^2/beta, 0, 0).

    The westward sign is the only one for which the y-momentum balance admits
    a pressure with bounded meridional variation.  The layer's declared
    vorticity does not enter; whether it is consistent is a job for
    ``verifier.vorticity_residual``.
    """
    if layer is not None:
        planetary_coefficient(layer.vorticity, constants)
    return FlowField.constant(-constants.equatorial_speed, 0.0, 0.0)


@dataclass(frozen=True)
class VerticalCoefficient:
    """Vertical pressure gradient per unit density, as printed and as forced by z-momentum."""

    paper: float
    oracle: float
    u: float

    def select(self, sign: str) -> float:
        if sign == "paper":
            return self.paper
        if sign == "oracle":
            return self.oracle
        raise ValidationError(f"sign must be 'paper' or 'oracle', got {sign!r}")


def vertical_coefficient(constants: PhysicalConstants, flow_u: Optional[float] = None) -> VerticalCoefficient:
    """Return both k = 2*Omega^3/beta - Omega^2*R + g and P_z/rho = 2*Omega*u + Omega^2*R - g.

    ``flow_u`` defaults to the closed-form zonal velocity -Omega^2/beta.
    """
    om, beta, R, g = constants.omega, constants.beta, constants.radius, constants.gravity
    u = -constants.equatorial_speed if flow_u is None else float(flow_u)
    paper = 2.0 * om**3 / beta - om**2 * R + g
    oracle = 2.0 * om * u + om**2 * R - g
    return VerticalCoefficient(paper, oracle, u)


def balanced_pressure(
    constants: PhysicalConstants, density: float, u: float, offset: float = 0.0
) -> PressureAffine:
    """Pressure balancing the steady momentum equations for the zonal flow (u, 0, 0).

    y-momentum gives P_y = -rho*(beta*u + Omega^2)*y, z-momentum gives
    P_z = rho*(2*Omega*u + Omega^2*R - g); ``offset`` plays the role of c_1.
    """
    om = constants.omega
    y2 = -0.5 * density * (constants.beta * u + om**2)
    kz = density * vertical_coefficient(constants, u).oracle
    return PressureAffine(0.0, y2, kz, offset)


def printed_pressure(constants: PhysicalConstants, density: float, offset: float = 0.0) -> PressureAffine:
    """Lower-layer pressure exactly as printed: rho*(k*z + c_1)."""
    k = vertical_coefficient(constants).paper
    return PressureAffine(0.0, 0.0, density * k, density * offset)


def tilde_sign(convention: str) -> float:
    """+1 for the printed reduced pressure, -1 for the one consistent with the momentum equations."""
    # printed: P~/rho = P/rho - (Omega^2/2) y^2 + (Omega^2 R - g) z
    # consistent: the opposite sign, which is what actually removes the
    # centripetal and gravity terms from the momentum equations
    if convention == "printed":
        return 1.0
    if convention == "consistent":
        return -1.0
    raise ValidationError(f"convention must be 'printed' or 'consistent', got {convention!r}")


def tilde_transform(
    pressure: PressureField, density: float, constants: PhysicalConstants, convention: str = "printed"
) -> PressureField:
    """Reduced pressure P~ with the centripetal and gravity potentials shifted out."""
    if density <= 0:
        raise ValidationError(f"density must be positive, got {density!r}")
    s = tilde_sign(convention)
    om2 = constants.omega**2
    vert = om2 * constants.radius - constants.gravity

    def p_tilde(x, y, z, t):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        return pressure(x, y, z, t) + s * density * (-0.5 * om2 * y**2 + vert * z)

    return PressureField(p_tilde)


def inverse_tilde_transform(
    p_tilde: PressureField, density: float, constants: PhysicalConstants, convention: str = "printed"
) -> PressureField:
    if density <= 0:
        raise ValidationError(f"density must be positive, got {density!r}")
    s = tilde_sign(convention)
    om2 = constants.omega**2
    vert = om2 * constants.radius - constants.gravity

    def p(x, y, z, t):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        return p_tilde(x, y, z, t) - s * density * (-0.5 * om2 * y**2 + vert * z)

    return PressureField(p)


def make_column(
    depth: float,
    densities: Sequence[float],
    surfaces: Sequence[Union[float, SurfaceField]],
    atm_pressure: float = STANDARD_ATMOSPHERE,
    vorticities: Optional[Sequence[Vorticity]] = None,
) -> StratifiedColumn:
    """Convenience constructor; plain numbers become flat surfaces."""
    if vorticities is None:
        vorticities = [Vorticity()] * len(densities)
    layers = [LayerSpec(i, float(rho), vort) for i, (rho, vort) in enumerate(zip(densities, vorticities), start=1)]
    surf = [s if isinstance(s, SurfaceField) else SurfaceField.flat(s) for s in surfaces]
    return StratifiedColumn(float(depth), tuple(layers), tuple(surf), float(atm_pressure))
