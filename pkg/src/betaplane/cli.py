"""Command line entry point: ``betaplane {evaluate,verify,characteristics,converge}``.

Exit status: 0 PASS, 1 verification FAIL, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from betaplane import characteristics as chars
from betaplane import model, report, stratification, verifier
from betaplane.config import ConfigError, RunConfig, load_config
from betaplane.errors import DegenerateSystemError, EvaluationError, ValidationError

log = logging.getLogger("betaplane")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SIGN_NOTES = {
    "paper": "P_z = +rho*k with k = 2*Omega^3/beta - Omega^2*R + g (as printed)",
    "oracle": "P_z = rho*(2*Omega*u + Omega^2*R - g) from the z-momentum balance with u = -Omega^2/beta",
}


def _provenance(cfg: RunConfig, sign: str, tolerance=None):
    c = cfg.constants
    out = {
        "config_sha256": cfg.sha256,
        "constants": {
            "omega": c.omega,
            "beta": c.beta,
            "beta_source": c.beta_source,
            "radius": c.radius,
            "gravity": c.gravity,
        },
        "sign_convention": sign,
    }
    if tolerance is not None:
        out["tolerance"] = tolerance
    return out


def _kappa_block(constants, sign):
    vc = model.vertical_coefficient(constants)
    return vc, {
        "paper_k": vc.paper,
        "oracle_k": vc.oracle,
        "used": vc.select(sign),
        "abs_used": abs(vc.select(sign)),
        "conventions": dict(SIGN_NOTES),
        "closed_form_u": vc.u,
    }


def _require(cfg: RunConfig, what: str):
    if what == "column" and cfg.column is None:
        raise ConfigError("column: required section is missing")
    if what == "grid" and cfg.grid is None:
        raise ConfigError("grid: required section is missing")
    if what == "converge" and cfg.converge is None:
        raise ConfigError("converge: required section is missing")


def _residual_dict(res: verifier.EquationResidual, tolerance: float):
    return {
        "max_abs": res.max_abs,
        "mean_abs": res.mean_abs,
        "max_rel": res.max_rel,
        "worst_point": list(res.worst_point),
        "pass": res.passes(tolerance),
        **({"details": res.extra} if res.extra else {}),
    }


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(cfg: RunConfig, out_dir: Path, sign: str) -> int:
    _require(cfg, "column")
    _require(cfg, "grid")
    column, grid = cfg.column, cfg.grid
    kappa = model.vertical_coefficient(cfg.constants).select(sign)
    pts = grid.points()
    x, y, z, t = pts.T
    column.check_ordering(x, y, t)
    flow = model.make_closed_form_flow(cfg.constants)
    u, v, w = flow(x, y, z, t)
    p = stratification.column_pressure(column, kappa)(x, y, z, t)
    layer = column.layer_index_at(x, y, z, t)
    header = ["x[m]", "y[m]", "z[m]", "t[s]", "u[m/s]", "v[m/s]", "w[m/s]", "P[Pa]", "layer"]
    rows = (
        (x[i], y[i], z[i], t[i], u[i], v[i], w[i], p[i], int(layer[i]))
        for i in range(len(pts))
    )
    path = report.write_table(out_dir / "evaluate.csv", header, rows)
    log.info("wrote %d rows to %s", len(pts), path)
    return EXIT_PASS


# ---------------------------------------------------------------- verify

def run_verify(cfg: RunConfig, sign: str, tolerance: float) -> dict:
    """Build the verification report document for a parsed config."""
    _require(cfg, "column")
    _require(cfg, "grid")
    constants, column, grid = cfg.constants, cfg.column, cfg.grid
    vc, kappa_info = _kappa_block(constants, sign)
    kappa = vc.select(sign)

    hp = grid.horizontal_points()
    column.check_ordering(*hp.T)
    flows = [model.make_closed_form_flow(constants) for _ in column.layers]
    pressures = stratification.layer_pressure_fields(column, kappa, check=False)
    sampling = verifier.SurfaceSampling.from_grid(grid)

    layers_doc = {}
    failures = []
    for i, (layer, flow, pressure) in enumerate(zip(column.layers, flows, pressures), start=1):
        rep = verifier.ResidualReport()
        rep.merge(verifier.momentum_residual(flow, pressure, layer.density, constants, grid))
        rep.merge(verifier.divergence_residual(flow, grid))
        rep.merge(verifier.transformed_momentum_residual(flow, pressure, layer.density, constants, grid, "consistent"))
        rep.merge(verifier.vorticity_residual(flow, layer.vorticity, grid, constants))
        notes = []
        try:
            rep.merge(verifier.linear_system_residual(flow, layer.vorticity, constants, grid))
        except DegenerateSystemError as exc:
            notes.append(str(exc))
            rep.residuals["linear-system"] = verifier.EquationResidual(np.inf, np.inf, np.inf, (), {"degenerate": str(exc)})
        bound = cfg.verify.y_bound
        b = verifier.y_boundedness_check(
            pressure, column.surfaces[i - 1], layer.density, constants, bound, cfg.verify.y_span, sampling
        )
        rep.residuals["y-boundedness"] = verifier.boundedness_as_residual(b)

        diag = verifier.transformed_momentum_residual(flow, pressure, layer.density, constants, grid, "printed")
        layer_doc = {k: _residual_dict(r, tolerance) for k, r in sorted(rep.residuals.items())}
        layers_doc[str(i)] = {
            "density": layer.density,
            "declared_vorticity": [layer.vorticity.lambda1, layer.vorticity.lambda2, layer.vorticity.lambda3],
            "residuals": layer_doc,
            "diagnostics": {
                "printed-transform-" + k: _residual_dict(r, tolerance) for k, r in sorted(diag.residuals.items())
            },
            "notes": notes,
        }
        failures += [f"layer {i}: {k}" for k in rep.failures(tolerance)]

    bc = verifier.boundary_residuals(column, flows, pressures, constants, sampling)
    column_doc = {k: _residual_dict(r, tolerance) for k, r in sorted(bc.residuals.items())}
    failures += [f"column: {k}" for k in bc.failures(tolerance)]

    return {
        "command": "verify",
        "provenance": _provenance(cfg, sign, tolerance),
        "vertical_coefficient": kappa_info,
        "layers": layers_doc,
        "boundary": column_doc,
        "failures": failures,
        "verdict": "PASS" if not failures else "FAIL",
    }


def cmd_verify(cfg: RunConfig, out_dir: Path, sign: str, tolerance: float) -> int:
    doc = run_verify(cfg, sign, tolerance)
    report.write_document(out_dir / "verify_report.json", doc)
    print(f"verify [{sign}]: {doc['verdict']}")
    for f in doc["failures"]:
        print(f"  FAIL {f}")
    return EXIT_PASS if doc["verdict"] == "PASS" else EXIT_FAIL


# ---------------------------------------------------------------- characteristics

def run_characteristics(cfg: RunConfig):
    _require(cfg, "column")
    constants = cfg.constants
    spec = cfg.curves
    rows = []
    layers_doc = {}
    ok = True
    for layer in cfg.column.layers:
        vort = layer.vorticity
        try:
            c = model.planetary_coefficient(vort, constants)
        except DegenerateSystemError as exc:
            layers_doc[str(layer.index)] = {"status": "degenerate", "notice": str(exc)}
            ok = False
            continue
        seeds = cfg.seeds if cfg.seeds is not None else spec.seeds()
        span = spec.span_for(c)
        curves_doc = []
        for k, seed in enumerate(seeds):
            curve = chars.integrate_characteristic(seed, vort, constants, span, spec.steps)
            exact = chars.exact_characteristic(seed, vort, constants, curve.s)
            inv = chars.invariants_at(curve.points.T, vort, constants)
            dm, dn = curve.invariant_drift(vort, constants)
            m0, n0 = float(inv.m[0]), float(inv.n[0])
            rel_m = dm / (1.0 + abs(m0))
            rel_n = dn / (1.0 + abs(n0))
            err = float(np.max(np.abs(curve.points - exact) / np.maximum(np.abs(exact), 1.0)))
            passed = rel_m < chars.REL_TOL and rel_n < chars.REL_TOL and err < 1e-10
            ok &= passed
            curves_doc.append(
                {
                    "curve": k,
                    "seed": [float(v) for v in seed],
                    "drift_m": dm,
                    "drift_n": dn,
                    "rel_drift_m": rel_m,
                    "rel_drift_n": rel_n,
                    "exact_rel_error": err,
                    "pass": passed,
                }
            )
            for row, (im, in_) in zip(curve.samples, zip(inv.m, inv.n)):
                rows.append((layer.index, k, *row, im, in_))
        form = chars.check_characteristic_form(model.make_closed_form_flow(constants), vort, constants, spec)
        ok &= form.passed
        layers_doc[str(layer.index)] = {
            "status": "ok",
            "s_span": list(span),
            "curves": curves_doc,
            "closed_form_flow_check": dataclasses.asdict(form),
        }
    doc = {
        "command": "characteristics",
        "provenance": _provenance(cfg, "n/a"),
        "layers": layers_doc,
        "verdict": "PASS" if ok else "FAIL",
    }
    return doc, rows


def cmd_characteristics(cfg: RunConfig, out_dir: Path) -> int:
    doc, rows = run_characteristics(cfg)
    header = ["layer", "curve", "s", "x[m]", "y[m]", "z[m]", "m", "n"]
    report.write_table(out_dir / "characteristics.csv", header, rows)
    report.write_document(out_dir / "characteristics_report.json", doc)
    print(f"characteristics: {doc['verdict']}")
    for idx, layer in doc["layers"].items():
        if layer["status"] == "degenerate":
            print(f"  layer {idx}: {layer['notice']}")
    return EXIT_PASS if doc["verdict"] == "PASS" else EXIT_FAIL


# ---------------------------------------------------------------- converge

def run_converge(cfg: RunConfig, sign: str) -> dict:
    _require(cfg, "converge")
    opts = cfg.converge
    _, kappa_info = _kappa_block(cfg.constants, sign)
    study = stratification.convergence_study(
        opts.family, opts.n_values, opts.p_values, kappa_info["used"], opts.sampling
    )
    table = [
        {"n": r.n, "p": r.p, "observed_sup_diff": r.observed, "bound": r.bound, "bound_satisfied": r.satisfied}
        for r in study.rows
    ]
    return {
        "command": "converge",
        "provenance": _provenance(cfg, sign),
        "vertical_coefficient": kappa_info,
        "family": opts.family_description,
        "table": table,
        "sup_density": study.sup_density,
        "densities_bounded": study.densities_bounded,
        "surfaces_uniformly_convergent": study.surfaces_uniformly_convergent,
        "bounds_satisfied": study.bounds_satisfied,
        "monotone_in_n": study.monotone,
        "cauchy": study.cauchy,
        "verdict": "PASS" if study.passed else "FAIL",
    }


def cmd_converge(cfg: RunConfig, out_dir: Path, sign: str) -> int:
    doc = run_converge(cfg, sign)
    header = ["n", "p", "observed_sup_diff[Pa]", "bound[Pa]", "bound_satisfied"]
    rows = [(r["n"], r["p"], r["observed_sup_diff"], r["bound"], int(r["bound_satisfied"])) for r in doc["table"]]
    report.write_table(out_dir / "converge.csv", header, rows)
    report.write_document(out_dir / "converge_report.json", doc)
    print(f"converge: {doc['verdict']}")
    return EXIT_PASS if doc["verdict"] == "PASS" else EXIT_FAIL


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="betaplane", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")
    parser.add_argument("--tolerance", type=float, default=None, help="relative residual tolerance for verify")
    parser.add_argument("--sign", choices=("paper", "oracle"), default=None, help="vertical pressure sign convention")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("command", choices=("evaluate", "verify", "characteristics", "converge"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        sign = args.sign or cfg.verify.sign
        tolerance = args.tolerance if args.tolerance is not None else cfg.verify.tolerance
        if not tolerance > 0:
            raise ConfigError(f"--tolerance: must be positive, got {tolerance!r}")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out_dir, sign)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir, sign, tolerance)
        if args.command == "characteristics":
            return cmd_characteristics(cfg, out_dir)
        return cmd_converge(cfg, out_dir, sign)
    except (ValidationError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
