import numpy as np
import pytest

from betaplane.characteristics import GeneralSolutionFamily, invariants_at, reconstruct_flow
from betaplane.errors import EvaluationError, ValidationError
from betaplane.model import (
    FlowField,
    PressureAffine,
    PressureField,
    SurfaceField,
    Vorticity,
    balanced_pressure,
    make_closed_form_flow,
    make_column,
    make_constants,
    printed_pressure,
    vertical_coefficient,
)
from betaplane.stratification import layer_pressure_fields
from betaplane.verifier import (
    EvaluationGrid,
    SurfaceSampling,
    boundary_residuals,
    divergence_residual,
    linear_system_residual,
    momentum_residual,
    rigidity_sweep,
    transformed_momentum_residual,
    vorticity_residual,
    y_boundedness_check,
)

C = make_constants()
RHO = 1000.0
GRID = EvaluationGrid(z_range=(-90.0, -10.0, 3))


def _field(f):
    return lambda x, y, z, t: np.asarray(f(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float), np.asarray(t, float)), float) + 0 * np.asarray(x, float)


def test_grid_validation():
    with pytest.raises(ValidationError):
        EvaluationGrid(x_range=(0.0, 1.0, 1))
    with pytest.raises(ValidationError):
        EvaluationGrid(x_range=(1.0, 0.0, 3))
    with pytest.raises(ValidationError):
        EvaluationGrid(t_range=(0.0, float("inf"), 3))
    g = EvaluationGrid(t_range=(5.0, 5.0, 1))
    assert g.count() == 3 * 3 * 3 * 1


def test_momentum_closed_form_oracle_pressure():
    flow = make_closed_form_flow(C)
    p = balanced_pressure(C, RHO, -C.equatorial_speed, 101325.0).as_field()
    rep = momentum_residual(flow, p, RHO, C, GRID)
    for key in ("momentum-x", "momentum-y", "momentum-z"):
        assert rep[key].max_rel < 1e-8, key


def test_momentum_closed_form_printed_pressure():
    flow = make_closed_form_flow(C)
    p = printed_pressure(C, RHO, 101.325).as_field()
    rep = momentum_residual(flow, p, RHO, C, GRID)
    k = vertical_coefficient(C).paper
    # rho*k on the right-hand side plus P_z = +rho*k
    assert rep["momentum-z"].max_abs == pytest.approx(2 * RHO * abs(k), abs=1e-8)
    assert rep["momentum-z"].max_rel > 1.0
    assert rep["momentum-x"].max_rel == 0.0


def test_momentum_static_balance():
    c = make_constants(1e-30, 1e-40, 6.378e6, 9.81)
    flow = FlowField.constant(0.0)
    p = PressureAffine(0.0, 0.0, -RHO * 9.81, 0.0).as_field()
    rep = momentum_residual(flow, p, RHO, c, GRID)
    # per unit mass, as the equations are written; the y equation holds only
    # the vanishing Omega^2*y term, so its pointwise relative value is 1
    assert max(r.max_abs for r in rep.residuals.values()) / RHO < 1e-10
    assert rep["momentum-z"].max_rel < 1e-10


def test_transformed_momentum_conventions():
    flow = make_closed_form_flow(C)
    p = balanced_pressure(C, RHO, -C.equatorial_speed, 101325.0).as_field()
    good = transformed_momentum_residual(flow, p, RHO, C, GRID, "consistent")
    assert good.max_rel() < 1e-8
    bad = transformed_momentum_residual(flow, p, RHO, C, GRID, "printed")
    # the printed shift leaves 2*rho*(g - Omega^2 R) in the z equation
    assert bad["transformed-momentum-z"].max_abs == pytest.approx(2 * RHO * (C.gravity - C.omega**2 * C.radius), rel=1e-9)
    assert bad["transformed-momentum-y"].max_rel > 0.5


def test_divergence_cases():
    assert divergence_residual(FlowField.constant(1.0, 2.0, 3.0), GRID)["divergence"].max_abs == 0.0
    lin = FlowField(_field(lambda x, y, z, t: x), _field(lambda x, y, z, t: y), _field(lambda x, y, z, t: -2 * z))
    assert divergence_residual(lin, GRID)["divergence"].max_abs < 1e-10
    ux = FlowField(_field(lambda x, y, z, t: x), _field(lambda x, y, z, t: 0 * x), _field(lambda x, y, z, t: 0 * x))
    assert divergence_residual(ux, GRID)["divergence"].max_abs == pytest.approx(1.0, rel=1e-9)


def _trig_flow():
    # u = sin x, v = -y cos x: divergence-free, truncation error -cos(x) h^2 / 6
    return FlowField(
        _field(lambda x, y, z, t: np.sin(x)),
        _field(lambda x, y, z, t: -y * np.cos(x)),
        _field(lambda x, y, z, t: 0 * x),
    )


def test_fd_second_order_on_smooth_field():
    grid = EvaluationGrid((0.1, 1.2, 5), (-1.0, 1.0, 3), (-1.0, 0.0, 2), (0.0, 0.0, 1))
    errs = []
    for h in (2e-2, 1e-2, 5e-3):
        r = divergence_residual(_trig_flow(), grid, steps={"x": h, "y": h, "z": h})["divergence"]
        errs.append(r.max_abs)
        # leading term cos(x) h^2 / 6 at the smallest x
        assert r.max_abs == pytest.approx(np.cos(0.1) * h**2 / 6, rel=1e-3)
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 <= q <= 4.5 for q in ratios)


def test_fd_linear_field_exact_at_any_step():
    lin = FlowField(_field(lambda x, y, z, t: x), _field(lambda x, y, z, t: y), _field(lambda x, y, z, t: -2 * z))
    for h in (1e-1, 5e-2):
        assert divergence_residual(lin, GRID, steps={"x": h, "y": h, "z": h})["divergence"].max_abs < 1e-10


def test_vorticity_cases():
    assert vorticity_residual(FlowField.constant(2.0), Vorticity(), GRID, C)["vorticity-consistency"].max_abs == 0.0
    shear = FlowField(_field(lambda x, y, z, t: 0 * x), _field(lambda x, y, z, t: x), _field(lambda x, y, z, t: 0 * x))
    assert vorticity_residual(shear, Vorticity(0, 0, 1.0), GRID, C)["vorticity-consistency"].max_abs < 1e-10
    r = vorticity_residual(make_closed_form_flow(C), Vorticity(0, 0.1, 0), GRID, C)["vorticity-consistency"]
    assert r.max_abs == pytest.approx(0.1, abs=1e-12)
    assert r.extra["per_component"] == pytest.approx([0.0, 0.1, 0.0], abs=1e-12)
    assert r.extra["spatial_variation"] == [0.0, 0.0, 0.0]


def test_linear_system_closed_form():
    rep = linear_system_residual(make_closed_form_flow(C), Vorticity(), C, GRID)
    assert max(r.max_abs for r in rep.residuals.values()) < 1e-10


def test_linear_system_constant_v_leaves_beta_v():
    vort = Vorticity(1e-5, 2e-5, -1e-5)
    vel = 0.3

    def w(x, y, z, t):
        inv = invariants_at((x, y, z), vort, C)
        return 0.1 * np.sin(inv.m) + 1e-3 * inv.n

    flow = FlowField(_field(lambda x, y, z, t: 0 * x), _field(lambda x, y, z, t: 0 * x + vel), w)
    rep = linear_system_residual(flow, vort, C, GRID)
    assert rep["linear-system-w"].max_abs == pytest.approx(C.beta * vel, rel=1e-4)
    assert rep["linear-system-u"].max_abs == 0.0


def test_linear_system_reconstructed_family():
    vort = Vorticity(1e-5, 2e-5, -1e-5)
    fam = GeneralSolutionFamily(
        lambda m, n, t: 1.0 + 0.1 * np.cos(m),
        lambda m, n, t: 0.3 + 1e-2 * np.sin(n),
        lambda m, n, t: 1e-3 * m * n,
    )
    rep = linear_system_residual(reconstruct_flow(fam, vort, C), vort, C, GRID)
    assert rep.max_rel() < 1e-6


def _two_layer():
    col = make_column(100.0, [1027.0, 1000.0], [-40.0, 0.0])
    kappa = vertical_coefficient(C).oracle
    flows = [make_closed_form_flow(C)] * 2
    return col, flows, layer_pressure_fields(col, kappa)


def test_boundary_residuals_closed_form():
    col, flows, ps = _two_layer()
    rep = boundary_residuals(col, flows, ps, C)
    for key in ("bottom-bc", "surface-bc", "interface-bc"):
        assert rep[key].max_rel < 1e-8
    assert rep["bottom-bc"].max_abs == 0.0


def test_boundary_residuals_offset_and_lengths():
    col, flows, ps = _two_layer()
    shifted = PressureField(lambda x, y, z, t: ps[1](x, y, z, t) + 10.0)
    rep = boundary_residuals(col, flows, [ps[0], shifted], C)
    assert rep["interface-bc"].max_abs == pytest.approx(10.0, abs=1e-9)
    with pytest.raises(ValidationError):
        boundary_residuals(col, flows[:1], ps, C)


def test_y_boundedness_cases():
    flat = SurfaceField.flat(0.0)
    good = balanced_pressure(C, RHO, -C.equatorial_speed, 101325.0).as_field()
    r = y_boundedness_check(good, flat, RHO, C)
    assert r.bounded and r.slope <= r.slope_threshold

    still = balanced_pressure(C, RHO, 0.0).as_field()
    r = y_boundedness_check(still, flat, RHO, C)
    assert not r.bounded
    assert r.slope == pytest.approx(RHO * C.omega**2, rel=1e-6)

    zonly = PressureAffine(0.0, 0.0, -RHO * 9.81, 0.0).as_field()
    r = y_boundedness_check(zonly, SurfaceField.flat(-3.0), RHO, C, bound=1.0)
    assert r.bounded and r.max_abs == 0.0


def test_y_boundedness_sloped_surface_respects_bound():
    s = SurfaceField(lambda x, y, t: 1e-6 * np.asarray(y) + 0 * np.asarray(x), y_slope_bound=1e-6)
    p = PressureAffine(0.0, 0.0, -RHO * 9.81, 0.0).as_field()
    r = y_boundedness_check(p, s, RHO, C, bound=1.0)
    assert r.bounded
    assert r.max_abs == pytest.approx(RHO * 9.81 * 1e-6, rel=1e-6)
    r = y_boundedness_check(p, s, RHO, C, bound=1e-3)
    assert not r.bounded and not r.within_bound


def test_rigidity_sweep_selects_westward_flow():
    out = rigidity_sweep(C, RHO)
    passing = [c for c in out if c.passes]
    assert len(passing) == 1
    assert passing[0].u == -C.equatorial_speed


def test_evaluation_error_names_point():
    bad = FlowField(_field(lambda x, y, z, t: np.where(x > 500, np.nan, 0.0)), _field(lambda *a: 0 * a[0]), _field(lambda *a: 0 * a[0]))
    with pytest.raises(EvaluationError) as info:
        divergence_residual(bad, GRID)
    assert info.value.point is not None and info.value.point[0] > 500
