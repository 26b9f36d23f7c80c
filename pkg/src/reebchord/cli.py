"""Command-line front end: ``reebchord <verb> [--config file] [flags]``."""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import capacities as cap
from .integrate import FlowError
from .moment_region import (
    TOL_AXIS,
    TOL_MONO,
    TOL_ROOT,
    RegionError,
    boundary_point,
    boundary_scale,
    build,
    classify_monotonicity,
)
from .report import (
    COMMANDS,
    ConfigError,
    ReportEnvelope,
    RunConfig,
    load_config,
    trajectory_header,
    write_csv,
)
from .starshaped_flow import (
    DIST_TOL,
    GENUINE_SEP,
    c1_distance,
    fiber_point,
    find_chords,
    integrate_flow,
    perturb,
    toric_domain,
    transported_legendrian,
)
from .toric_reeb import (
    ANG_TOL,
    chord_polyline,
    enumerate_rational_fibers,
    legendrian_fiber,
    min_chord_period,
    primitive_vectors,
    sup_chord_over_fibers,
)

log = logging.getLogger("reebchord")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERDICT = 0, 2, 3, 4
FLOW_RTOL = 1e-10


@dataclass
class RunResult:
    envelope: ReportEnvelope
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)

    @property
    def exit_code(self) -> int:
        return EXIT_VERDICT if self.envelope.status == "verdict-failure" else EXIT_OK


def _region(cfg: RunConfig):
    try:
        return build(cfg.builder, cfg.params)
    except RegionError as exc:
        raise ConfigError(str(exc)) from None


def _require_planar(region, what: str):
    if region.dim != 2:
        raise ConfigError(f"{what} is implemented for two-dimensional moment images (R^4) only")


def _flow_tolerances() -> dict:
    return {"rtol": FLOW_RTOL, "max_drift": 1e-6, "dist_tol": DIST_TOL, "genuine_separation": GENUINE_SEP}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _capacities(cfg, region, warnings):
    mono = classify_monotonicity(region)
    payload = {"region": region.label, "dim": region.dim, "monotonicity": mono.to_dict(),
               "tolerances": {"root": TOL_ROOT, "monotonicity": TOL_MONO}}
    if not mono.is_monotone:
        warnings.append("region is not monotone: capacity formulas are not applicable")
        payload.update(c_gromov=None, c_cube=None, c_lagrangian=None, kappa=None,
                       lagrangian_assumption_free=None)
        return payload, {}
    lag = cap.lagrangian_capacity(region, mono)
    cg = cap.gromov_width(region, monotonicity=mono)
    payload.update(c_gromov=cg, c_cube=lag.value, c_lagrangian=lag.value,
                   lagrangian_assumption_free=lag.assumption_free, kappa=cg - lag.value)
    if not lag.assumption_free:
        warnings.append("c_Lag = c_cube relies on a transversality assumption for n > 2")
    rows = [(k, payload[k]) for k in ("c_gromov", "c_cube", "c_lagrangian", "kappa")]
    return payload, {"capacities": (["quantity", "value"], rows)}


def _orbits(cfg, region, warnings):
    mono = classify_monotonicity(region)
    enum = enumerate_rational_fibers(region, cfg.height, grid=cfg.grid, threads=cfg.threads)
    best = enum.minimum()
    if best is None:
        raise FlowError(f"no rational fibres up to height {cfg.height}")
    n = region.dim
    fibers = sorted(enum.fibers, key=lambda f: (f.period, f.m))
    payload = {
        "region": region.label,
        "height": cfg.height,
        "ground_truth": mono.is_strict,
        "a_min": best.period,
        "witness": {"m": list(best.m), "w": best.fiber.w, "kind": best.kind},
        "fibers": [{"m": list(f.m), "w": f.fiber.w, "period": f.period, "kind": f.kind} for f in fibers],
        "skipped": [{"m": list(m), "reason": r} for m, r in enum.skipped],
        "tolerances": {"angle": ANG_TOL, "root": TOL_ROOT, "axis": TOL_AXIS, **_flow_tolerances()},
    }
    if not mono.is_strict:
        warnings.append("region is not strictly monotone: a_min is an upper bound from the enumeration")
    if enum.skipped:
        warnings.append(f"{len(enum.skipped)} primitive directions carry no fibre (skipped)")
    header = [f"m{i + 1}" for i in range(n)] + [f"w{i + 1}" for i in range(n)] + ["period", "kind"]
    tables = {"orbits": (header, [(*f.m, *f.fiber.w, f.period, f.kind) for f in fibers])}
    if n == 2 and best.period <= 10:
        dom = toric_domain(region)
        z0 = dom.project(fiber_point(best.fiber.w, np.zeros(2)))
        traj = integrate_flow(dom, z0, best.period, rtol=FLOW_RTOL)
        payload["numerical_check"] = {
            "closure_distance": float(np.linalg.norm(traj.z[-1] - z0)),
            "max_surface_drift": traj.max_surface_drift(),
            "max_raw_drift": traj.max_raw_drift,
            "max_lambda_defect": traj.max_lambda_defect(),
            "action": traj.action(),
            "steps": traj.steps,
        }
        tables["orbits_trajectory"] = (trajectory_header(4), traj.rows())
    return payload, tables


def _default_t_max(cfg, region):
    if cfg.t_max is not None:
        return cfg.t_max
    mono = classify_monotonicity(region)
    if mono.is_monotone:
        return 2.0 * cap.gromov_width(region, monotonicity=mono)
    return 2.0 * region.dim * float(boundary_scale(region, np.ones(region.dim))[0])


def _chords(cfg, region, warnings):
    n = region.dim
    sup = sup_chord_over_fibers(region, cfg.chord_height)
    diag = legendrian_fiber(region, (1,) * n)
    closed = min_chord_period(diag)
    table = []
    for m in primitive_vectors(n, cfg.chord_height, positive=True):
        torus = legendrian_fiber(region, m)
        rec = min_chord_period(torus)
        table.append((*m, *torus.fiber.w, rec.period, int(rec.genuine)))
    payload = {
        "region": region.label,
        "chord_height": cfg.chord_height,
        "sup_chord": sup.value,
        "sup_witness": list(sup.witness),
        "diagonal": {"w": diag.fiber.w, **closed.to_dict()},
        "fibre_chords": len(table),
        "tolerances": {"root": TOL_ROOT, "angle": ANG_TOL, **_flow_tolerances()},
    }
    header = [f"m{i + 1}" for i in range(n)] + [f"w{i + 1}" for i in range(n)] + ["period", "genuine"]
    tables = {"chords": (header, table),
              "chord_torus": (["theta1", "theta2", "t"] if n == 2 else
                               [f"theta{i + 1}" for i in range(n)] + ["t"], chord_polyline(diag, closed))}
    if n == 2:
        t_max = _default_t_max(cfg, region)
        dom = toric_domain(region)
        torus = transported_legendrian(dom, diag)
        search = find_chords(dom, torus, t_max, tuple(cfg.chord_grid), threads=cfg.threads)
        best = search.minimal()
        payload["numerical"] = {
            "t_max": t_max,
            "message": search.message,
            "legendrian_defect": torus.legendrian_defect,
            "candidates": search.candidates,
            "chords": [c.to_dict() for c in search.chords],
            "minimal_period": None if best is None else best.period,
            "closed_form_residual": None if best is None else abs(best.period - closed.period),
        }
        tables["numerical_chords"] = (
            ["period", "parameter", "genuine", "endpoint_distance", "surface_drift"],
            [(c.period, c.parameter, int(c.genuine), c.endpoint_distance, c.surface_drift) for c in search.chords],
        )
        if best is None:
            warnings.append(search.message)
    return payload, tables


def _verify(cfg, region, warnings):
    rep = cap.verify_claims(region, cfg.height, cfg.chord_height, cfg.tol_claim, cfg.threads)
    warnings.extend(rep.warnings)
    warnings.extend(f"verdict {k} not applicable: {v.detail}" for k, v in rep.verdicts.items()
                    if not v.applicable)
    payload = rep.to_dict()
    payload["all_applicable_pass"] = rep.applicable_pass()
    rows = [(k, v.status, v.residual if v.residual is not None else "", v.detail)
            for k, v in sorted(rep.verdicts.items())]
    return payload, {"verify": (["verdict", "status", "residual", "detail"], rows)}, rep.applicable_pass()


def _perturb_study(cfg, region, warnings):
    _require_planar(region, "perturb-study")
    mono = classify_monotonicity(region)
    if not mono.is_strict:
        raise ConfigError("perturb-study needs a strictly monotone region (the margin uses kappa)")
    orbit = cap.min_orbit_period(region, cfg.height, grid=cfg.grid, threads=cfg.threads, monotonicity=mono)
    kappa = cap.kappa_gap(region, mono)
    margin = orbit.period - 0.5 * kappa
    base = toric_domain(region)
    diag = legendrian_fiber(region, (1, 1))
    t_max = cfg.t_max if cfg.t_max is not None else 2.0 * orbit.period
    runs, ok_all = [], True
    for amp in cfg.perturb.amplitudes:
        dom = perturb(base, cfg.seed, amp, cfg.perturb.width, cfg.perturb.count)
        torus = transported_legendrian(dom, diag)
        search = find_chords(dom, torus, t_max, tuple(cfg.chord_grid), threads=cfg.threads)
        best = search.minimal()
        ok = best is not None and best.period < margin
        ok_all &= ok
        runs.append({
            "amplitude": amp,
            "c1_distance": c1_distance(base, dom, seed=cfg.seed),
            "legendrian_defect": torus.legendrian_defect,
            "message": search.message,
            "minimal_period": None if best is None else best.period,
            "genuine": None if best is None else best.genuine,
            "below_margin": ok,
        })
        if torus.legendrian_defect > 0.1 * max(amp, 1e-12):
            warnings.append(f"amplitude {amp}: Legendrian defect {torus.legendrian_defect:.3g} is large")
    payload = {
        "region": region.label,
        "a_min_toric": orbit.period,
        "kappa": kappa,
        "margin": margin,
        "t_max": t_max,
        "width": cfg.perturb.width,
        "count": cfg.perturb.count,
        "runs": runs,
        "note": "property check at fixed amplitudes; not a verification of a C1 neighbourhood",
        "tolerances": {"claim": cfg.tol_claim, **_flow_tolerances()},
    }
    rows = [(r["amplitude"], r["c1_distance"], r["legendrian_defect"],
             "" if r["minimal_period"] is None else r["minimal_period"], int(r["below_margin"])) for r in runs]
    header = ["amplitude", "c1_distance", "legendrian_defect", "minimal_period", "below_margin"]
    return payload, {"perturb_study": (header, rows)}, ok_all


def _counterexample(cfg, region, warnings):
    rep = cap.verify_claims(region, cfg.height, cfg.chord_height, cfg.tol_claim, cfg.threads)
    v = rep.verdicts["counterexample_violation"]
    diag = rep.diagonal_chord
    payload = {
        "region": region.label,
        "monotonicity": rep.monotonicity.to_dict(),
        "a_min_orbit": rep.a_min_orbit,
        "a_min_witness": rep.a_min_witness,
        "diagonal_chord": diag,
        "diagonal_chord_relative_to_one": abs(diag["period"] - 1.0),
        "sup_chord": rep.sup_chord_min,
        "counterexample_violation": v.value,
        "verdict": v.to_dict(),
        "tolerances": rep.tolerances,
    }
    warnings.extend(rep.warnings)
    rows = [("a_min_orbit", rep.a_min_orbit), ("diagonal_chord", diag["period"]), ("sup_chord", rep.sup_chord_min)]
    return payload, {"counterexample": (["quantity", "value"], rows)}, v.status == "pass"


def _plot_data(cfg, region, warnings):
    _require_planar(region, "plot-data")
    phi = np.linspace(0.0, 0.5 * np.pi, 513)
    pts = boundary_point(region, np.column_stack([np.cos(phi), np.sin(phi)]))
    rows = [("boundary", p[0], p[1]) for p in pts]
    payload = {"region": region.label, "boundary_samples": len(pts),
               "tolerances": {"root": TOL_ROOT, "monotonicity": TOL_MONO}}
    mono = classify_monotonicity(region)
    if mono.is_monotone:
        a = cap.cube_capacity(region, mono)
        cg = cap.gromov_width(region, monotonicity=mono)
        rows += [("simplex", 0.0, 0.0), ("simplex", cg, 0.0), ("simplex", 0.0, cg), ("simplex", 0.0, 0.0)]
        rows += [("cube", 0.0, 0.0), ("cube", a, 0.0), ("cube", a, a), ("cube", 0.0, a), ("cube", 0.0, 0.0)]
        payload.update(cube_corner=[a, a], simplex_scale=cg)
    else:
        warnings.append("region is not monotone: no simplex or cube markers")
    diag = legendrian_fiber(region, (1, 1))
    chord = min_chord_period(diag)
    poly = chord_polyline(diag, chord)
    payload["chord"] = chord.to_dict()
    return payload, {"moment_boundary": (["series", "w1", "w2"], rows),
                     "chord_torus": (["theta1", "theta2", "t"], poly)}


_DISPATCH = {
    "capacities": _capacities,
    "orbits": _orbits,
    "chords": _chords,
    "verify": _verify,
    "perturb-study": _perturb_study,
    "counterexample": _counterexample,
    "plot-data": _plot_data,
}


def run(cfg: RunConfig, created: Optional[str] = None) -> RunResult:
    """Execute one command; raises ConfigError or a numerical error on failure."""
    warnings: list = []
    if cfg.command == "counterexample" and cfg.builder != "counterexample":
        warnings.append(f"builder {cfg.builder!r} replaced by the default counterexample")
        cfg = replace(cfg, builder="counterexample", params={})
    region = _region(cfg)
    out = _DISPATCH[cfg.command](cfg, region, warnings)
    status = "ok"
    if len(out) == 3:
        payload, tables, passed = out
        status = "ok" if passed else "verdict-failure"
    else:
        payload, tables = out
    env = ReportEnvelope(cfg.command, cfg.echo(), payload, warnings, status,
                         created or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    return RunResult(env, tables)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reebchord", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--out", help="output directory (JSON goes to stdout when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--threads", type=int)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"command": args.command, "out": args.out, "seed": args.seed,
                                        "height": args.height, "threads": args.threads,
                                        "format": args.format})
        if (cfg.format == "csv" or cfg.command == "plot-data") and cfg.out is None:
            raise ConfigError("--out is required for CSV output")
        result = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowError, RegionError, cap.NotApplicable, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    env = result.envelope
    try:
        if cfg.out is not None:
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            stem = cfg.command.replace("-", "_")
            if cfg.format == "csv" or cfg.command == "plot-data":
                for name, (header, rows) in sorted(result.tables.items()):
                    env.files.append(write_csv(out / f"{name}.csv", header, rows))
            if cfg.format == "json":
                text = env.to_json()
                (out / f"{stem}.json").write_text(text, encoding="utf-8")
                env.files.append(str(out / f"{stem}.json"))
            for f in env.files:
                print(f)
        else:
            sys.stdout.write(env.to_json())
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in env.warnings:
        log.info("warning: %s", w)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
