import numpy as np
import pytest

from betaplane.errors import ValidationError
from betaplane.model import SurfaceField, make_column, make_constants, vertical_coefficient
from betaplane.stratification import (
    column_pressure,
    convergence_study,
    flat_top_collapse,
    geometric_surfaces,
    harmonic_surfaces,
    layer_pressure_fields,
    nested_family,
    pressure_n_layer_formula,
    propagate_pressures,
    random_summable_surfaces,
    two_layer_printed,
)
from betaplane.verifier import SurfaceSampling

C = make_constants()
KAPPA = vertical_coefficient(C).oracle
PATM = 101325.0
SMALL = SurfaceSampling((-1.0, 1.0, 3), (-1.0, 1.0, 3), (0.0, 1.0, 2))


def wavy(level, amp, kx, ky, phase=0.0):
    return SurfaceField(
        lambda x, y, t: level + amp * np.sin(kx * np.asarray(x) + ky * np.asarray(y) + phase),
        y_slope_bound=abs(amp * ky),
    )


def test_two_layer_hand_value():
    col = make_column(50.0, [1000.0, 900.0], [-10.0, 0.0], PATM)
    sol = propagate_pressures(col, KAPPA)
    # 900*9.81*10 + 1000*9.81*10
    assert sol.pressure(1, -20.0) - PATM == pytest.approx(186390.0, rel=1e-12)
    assert sol.pressure(2, 0.0) == PATM


def test_single_layer_surface_at_origin():
    col = make_column(30.0, [1025.0], [0.0], PATM)
    sol = propagate_pressures(col, KAPPA)
    zs = np.linspace(-30.0, 0.0, 7)
    assert np.allclose(sol.pressure(1, zs), 1025.0 * KAPPA * zs + PATM, rtol=1e-15, atol=0)


def test_equal_density_two_layer_ignores_eta1():
    a = make_column(50.0, [1000.0, 1000.0], [-10.0, 2.0], PATM)
    b = make_column(50.0, [1000.0, 1000.0], [-37.0, 2.0], PATM)
    zs = np.linspace(-50.0, -40.0, 5)
    pa = propagate_pressures(a, KAPPA).pressure(1, zs)
    pb = propagate_pressures(b, KAPPA).pressure(1, zs)
    assert np.allclose(pa, pb, rtol=1e-14, atol=0)
    assert np.allclose(pa, 1000.0 * KAPPA * (zs - 2.0) + PATM, rtol=1e-14, atol=0)


def test_two_layer_printed_form_matches_recursion():
    col = make_column(80.0, [1030.0, 1010.0], [wavy(-30.0, 2.0, 1e-3, 2e-3), wavy(0.5, 0.3, 5e-4, -1e-3)], PATM)
    rng = np.random.default_rng(1)
    x, y, t = rng.uniform(-2e3, 2e3, (3, 50))
    z = rng.uniform(-80.0, 0.0, 50)
    p1, p2 = two_layer_printed(col, KAPPA, (x, y, z, t))
    f1, f2 = layer_pressure_fields(col, KAPPA)
    assert np.max(np.abs(p1 - f1(x, y, z, t)) / np.abs(p1)) < 1e-12
    assert np.max(np.abs(p2 - f2(x, y, z, t)) / np.abs(p2)) < 1e-12


def test_formula_top_layer_is_empty_sum():
    col = make_column(60.0, [1040.0, 1020.0, 1000.0], [-40.0, -15.0, 1.0], PATM)
    z = np.array([-5.0, 0.0])
    got = pressure_n_layer_formula(3, col, KAPPA, (0.0, 0.0, z, 0.0))
    assert np.allclose(got, 1000.0 * KAPPA * (z - 1.0) + PATM, rtol=1e-15, atol=0)


def test_formula_index_checked():
    col = make_column(60.0, [1040.0, 1000.0], [-40.0, 0.0])
    for bad in (0, 3, 1.0):
        with pytest.raises(ValidationError):
            pressure_n_layer_formula(bad, col, KAPPA, (0.0, 0.0, -1.0, 0.0))


def test_zero_kappa_rejected():
    col = make_column(60.0, [1000.0], [0.0])
    with pytest.raises(ValidationError):
        propagate_pressures(col, 0.0)
    with pytest.raises(ValidationError):
        layer_pressure_fields(col, float("nan"))


def test_unordered_surfaces_rejected():
    col = make_column(60.0, [1000.0, 990.0], [0.0, -5.0])
    with pytest.raises(ValidationError, match="eta_"):
        propagate_pressures(col, KAPPA)


def test_pressure_increases_with_depth():
    col = make_column(100.0, [1030.0, 1020.0, 1000.0], [-60.0, -25.0, 0.0], PATM)
    p = column_pressure(col, KAPPA)
    zs = np.linspace(-99.9, -0.1, 400)
    vals = p(0.0, 0.0, zs, 0.0)
    assert np.all(np.diff(vals) < 0)
    assert np.isnan(p(0.0, 0.0, 5.0, 0.0))


def test_flat_top_collapse_hand_value():
    col = make_column(40.0, [1000.0] * 3, [-30.0, -12.0, 0.0], PATM)
    f = flat_top_collapse(col, KAPPA)
    assert float(f(0.0, 0.0, -15.0, 0.0)) - PATM == pytest.approx(147150.0, rel=1e-12)
    assert float(f(3.0, -2.0, 0.0, 7.0)) == PATM
    for i, g in enumerate(layer_pressure_fields(col, KAPPA), start=1):
        assert float(g(0.0, 0.0, -15.0, 0.0)) == pytest.approx(PATM + 147150.0, rel=1e-12), i


def test_flat_top_one_vs_five_layers():
    rng = np.random.default_rng(5)
    internal = np.sort(rng.uniform(-45.0, -1.0, 4))
    one = make_column(50.0, [1000.0], [0.0], PATM)
    five = make_column(50.0, [1000.0] * 5, [*internal, 0.0], PATM)
    pts = rng.uniform([-1e3, -1e3, -50.0, 0.0], [1e3, 1e3, 0.0, 3600.0], (100, 4))
    a = column_pressure(one, KAPPA)(*pts.T)
    b = column_pressure(five, KAPPA)(*pts.T)
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-10


def test_flat_top_preconditions():
    with pytest.raises(ValidationError):
        flat_top_collapse(make_column(40.0, [1000.0, 990.0], [-10.0, 0.0]), KAPPA)
    with pytest.raises(ValidationError):
        flat_top_collapse(make_column(40.0, [1000.0, 1000.0], [-10.0, wavy(0.0, 1.0, 1e-3, 0.0)]), KAPPA)


def _rho(j):
    return 1000.0


def test_geometric_family_converges():
    fam = nested_family(4.0, geometric_surfaces(1.0, 0.5), _rho)
    study = convergence_study(fam, [2, 4, 8], [1, 2, 4], KAPPA, SMALL)
    assert study.passed and study.cauchy
    diffs = study.sup_differences
    assert diffs[(8, 1)] < diffs[(2, 1)]
    for (n, p), b in study.bounds.items():
        # the geometric tail never exceeds 9.81 * 1000 * 2^(1-n)
        assert b <= 9.81 * 1000.0 * 2.0 ** (1 - n) * (1 + 1e-12)


def test_fixed_free_surface_family_has_zero_differences():
    fam = nested_family(4.0, geometric_surfaces(), _rho, top=0.0)
    study = convergence_study(fam, [1, 2, 4], [1, 3], KAPPA, SMALL)
    assert all(v == 0.0 for v in study.sup_differences.values())
    assert study.passed


def test_p_zero_rows_vanish():
    fam = nested_family(4.0, harmonic_surfaces(1.0), lambda j: 1000.0 + 10.0 * j)
    study = convergence_study(fam, [1, 3], [0, 2], KAPPA, SMALL)
    for r in study.rows:
        if r.p == 0:
            assert r.observed == 0.0 and r.bound >= 0.0
    assert study.bounds_satisfied


@pytest.mark.parametrize("surfaces", [harmonic_surfaces(2.0), random_summable_surfaces(seed=3)])
def test_other_families(surfaces):
    fam = nested_family(5.0, surfaces, lambda j: 1000.0 + 5.0 / j)
    study = convergence_study(fam, [2, 4, 8, 16], [1, 2, 4], KAPPA, SMALL)
    assert study.bounds_satisfied and study.monotone


def test_inconsistent_family_rejected():
    def fam(n):
        return make_column(4.0 + n, [1000.0] * n, [-2.0 ** (1 - j) for j in range(1, n + 1)])

    with pytest.raises(ValidationError, match="inconsistent"):
        convergence_study(fam, [2], [1], KAPPA, SMALL)


def test_wrong_layer_count_rejected():
    with pytest.raises(ValidationError):
        convergence_study(lambda n: make_column(4.0, [1000.0], [0.0]), [2], [0], KAPPA, SMALL)


def test_paper_sign_keeps_structure():
    k = vertical_coefficient(C).paper
    col = make_column(50.0, [1000.0, 900.0], [-10.0, 0.0], PATM)
    sol = propagate_pressures(col, k, provenance="paper-sign")
    assert sol.pressure(1, -10.0) == pytest.approx(sol.pressure(2, -10.0), abs=1e-8 * PATM)
    assert sol.provenance == "paper-sign"
