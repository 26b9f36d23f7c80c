"""Capacities of monotone toric domains and the checks that relate them.

For a downward-closed moment image the Gromov width is the largest simplex
``R * Delta`` inside ``Omega`` (the minimum of ``w_1 + ... + w_n`` over the
boundary) and the cube capacity is the largest cube corner ``(a, ..., a)``.
Both are cross-checked against Reeb dynamics: the shortest closed orbit and
the longest minimal chord over Legendrian fibre tori.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .moment_region import (
    MomentRegion,
    MonotonicityClass,
    boundary_point,
    boundary_scale,
    classify_monotonicity,
)
from .toric_reeb import (
    RationalFiber,
    direction_angle,
    enumerate_rational_fibers,
    legendrian_fiber,
    min_chord_period,
    sup_chord_over_fibers,
)

TOL_CLAIM = 1e-6


class NotApplicable(ValueError):
    """The formula is not justified for this region (e.g. it is not monotone)."""


def _require_monotone(region: MomentRegion, mono: Optional[MonotonicityClass]) -> MonotonicityClass:
    mono = mono or classify_monotonicity(region)
    if not mono.is_monotone:
        raise NotApplicable(f"{region.label} is not monotone")
    return mono


def gromov_width(region: MomentRegion, grid: int = 10_000, monotonicity: Optional[MonotonicityClass] = None) -> float:
    """Minimum of ``sum(w)`` over the boundary of a monotone region."""
    _require_monotone(region, monotonicity)
    n = region.dim
    if n == 2:
        phi = np.linspace(0.0, 0.5 * np.pi, grid)
        d = np.column_stack([np.cos(phi), np.sin(phi)])
        sums = boundary_point(region, d).sum(axis=1)
        k = int(np.argmin(sums))
        a, b = phi[max(k - 1, 0)], phi[min(k + 1, grid - 1)]
        f = lambda p: float(boundary_point(region, [np.cos(p), np.sin(p)]).sum())
        res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        return float(min(sums[k], res.fun))
    scale = max(1, grid // 10)
    pts = qmc.Halton(d=n, scramble=False).random(scale * n + 1)[1:]
    d = np.vstack([pts, np.eye(n), (np.ones((n, n)) - np.eye(n)), np.ones((1, n))])
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros(n)
            e[[i, j]] = 1.0
            d = np.vstack([d, e])
    sums = boundary_point(region, d).sum(axis=1)
    best = float(sums.min())
    f = lambda u: float(boundary_point(region, np.maximum(u, 0) + 1e-300).sum())
    for k in np.argsort(sums)[:3]:
        u0 = d[k] / d[k].max()
        res = optimize.minimize(f, u0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * n,
                                options={"ftol": 1e-15, "gtol": 1e-12})
        best = min(best, float(res.fun))
    return best


def cube_capacity(region: MomentRegion, monotonicity: Optional[MonotonicityClass] = None) -> float:
    """Side ``a`` of the cube corner ``(a, ..., a)`` on the boundary."""
    _require_monotone(region, monotonicity)
    return float(boundary_scale(region, np.ones(region.dim))[0])


@dataclass(frozen=True)
class LagrangianCapacity:
    value: float
    assumption_free: bool


def lagrangian_capacity(region: MomentRegion, monotonicity: Optional[MonotonicityClass] = None) -> LagrangianCapacity:
    """Lagrangian capacity, equal to the cube capacity on monotone toric domains.

    The identification is unconditional only in real dimension four.
    """
    return LagrangianCapacity(cube_capacity(region, monotonicity), region.dim == 2)


@dataclass(frozen=True)
class OrbitMinimum:
    period: float
    witness: RationalFiber
    height: int
    ground_truth: bool  # enumeration is exact only for strictly monotone regions
    fibers: int
    skipped: int


def min_orbit_period(region: MomentRegion, height: int = 50, grid: int = 4097, threads: int = 1,
                     monotonicity: Optional[MonotonicityClass] = None) -> OrbitMinimum:
    """Shortest closed Reeb orbit over fibres with ``|m|_inf <= height``.

    An upper bound for the minimal period that converges from above in
    ``height``; it is the true minimum when the region is strictly monotone.
    """
    mono = monotonicity or classify_monotonicity(region)
    enum = enumerate_rational_fibers(region, height, grid=grid, threads=threads)
    best = enum.minimum()
    if best is None:
        raise NotApplicable(f"{region.label}: no rational fibres up to height {height}")
    return OrbitMinimum(best.period, best, height, mono.is_strict, len(enum.fibers), len(enum.skipped))


def kappa_gap(region: MomentRegion, monotonicity: Optional[MonotonicityClass] = None, grid: int = 10_000) -> float:
    """Largest ``kappa`` with ``c_cube + kappa <= c_Gr``."""
    mono = _require_monotone(region, monotonicity)
    return gromov_width(region, grid, mono) - cube_capacity(region, mono)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    status: str  # "pass" | "fail" | "not-applicable"
    residual: Optional[float] = None
    detail: str = ""
    value: Optional[bool] = None

    @property
    def applicable(self) -> bool:
        return self.status != "not-applicable"

    def to_dict(self) -> dict:
        return {"status": self.status, "residual": self.residual, "detail": self.detail,
                "value": self.value}


def _verdict(ok: bool, residual: Optional[float], detail: str = "") -> Verdict:
    return Verdict("pass" if ok else "fail", residual, detail)


@dataclass
class CapacityReport:
    label: str
    dim: int
    monotonicity: MonotonicityClass
    c_gromov: Optional[float] = None
    c_cube: Optional[float] = None
    c_lagrangian: Optional[float] = None
    lagrangian_assumption_free: Optional[bool] = None
    a_min_orbit: Optional[float] = None
    a_min_witness: Optional[dict] = None
    sup_chord_min: Optional[float] = None
    sup_chord_witness: Optional[list] = None
    diagonal_chord: Optional[dict] = None
    kappa: Optional[float] = None
    verdicts: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def applicable_pass(self) -> bool:
        return all(v.status == "pass" for v in self.verdicts.values() if v.applicable)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dim": self.dim,
            "monotonicity": self.monotonicity.to_dict(),
            "c_gromov": self.c_gromov,
            "c_cube": self.c_cube,
            "c_lagrangian": self.c_lagrangian,
            "lagrangian_assumption_free": self.lagrangian_assumption_free,
            "a_min_orbit": self.a_min_orbit,
            "a_min_witness": self.a_min_witness,
            "sup_chord_min": self.sup_chord_min,
            "sup_chord_witness": self.sup_chord_witness,
            "diagonal_chord": self.diagonal_chord,
            "kappa": self.kappa,
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "tolerances": self.tolerances,
            "warnings": list(self.warnings),
        }


def verify_claims(region: MomentRegion, height: int = 50, chord_height: int = 20,
                        tol_claim: float = TOL_CLAIM, threads: int = 1) -> CapacityReport:
    """Compute every quantity for one region and render the verdicts."""
    mono = classify_monotonicity(region)
    rep = CapacityReport(region.label, region.dim, mono,
                         tolerances={"claim": tol_claim, "root": 1e-10, "monotonicity": 1e-7,
                                     "orbit_height": height, "chord_height": chord_height})
    names = ("orbit_gromov", "chord_cube", "strict_gap", "concave_identity", "counterexample_violation")
    if not mono.is_monotone:
        rep.verdicts = {k: Verdict("not-applicable", None, "region is not monotone") for k in names}
        rep.warnings.append("capacities not computed: region is not monotone")
        return rep

    rep.c_gromov = gromov_width(region, monotonicity=mono)
    rep.c_cube = cube_capacity(region, mono)
    lag = lagrangian_capacity(region, mono)
    rep.c_lagrangian, rep.lagrangian_assumption_free = lag.value, lag.assumption_free
    rep.kappa = rep.c_gromov - rep.c_cube
    orbit = min_orbit_period(region, height, threads=threads, monotonicity=mono)
    rep.a_min_orbit = orbit.period
    rep.a_min_witness = {"m": list(orbit.witness.m), "w": orbit.witness.fiber.w.tolist(),
                         "kind": orbit.witness.kind, "ground_truth": orbit.ground_truth}
    if orbit.skipped:
        rep.warnings.append(f"{orbit.skipped} primitive directions carry no fibre (skipped)")
    sup = sup_chord_over_fibers(region, chord_height)
    rep.sup_chord_min, rep.sup_chord_witness = sup.value, list(sup.witness)
    diag = legendrian_fiber(region, (1,) * region.dim)
    chord = min_chord_period(diag)
    rep.diagonal_chord = {"w": diag.fiber.w.tolist(), **chord.to_dict()}
    if not lag.assumption_free:
        rep.warnings.append("c_Lag = c_cube relies on a transversality assumption for n > 2")

    strict = mono.is_strict
    v = {}
    if strict:
        r = abs(rep.a_min_orbit - rep.c_gromov)
        v["orbit_gromov"] = _verdict(r <= tol_claim, r, "A_min(orbit) vs Gromov width")
    else:
        v["orbit_gromov"] = Verdict("not-applicable", None, "region is not strictly monotone")
    r = abs(rep.sup_chord_min - rep.c_cube)
    v["chord_cube"] = _verdict(r <= tol_claim, r, "sup of minimal chord periods vs cube capacity")
    if strict:
        margin = rep.a_min_orbit - rep.sup_chord_min
        ok = rep.kappa > 0 and rep.sup_chord_min < rep.a_min_orbit and margin >= rep.kappa - tol_claim
        v["strict_gap"] = _verdict(ok, margin, f"margin vs kappa = {rep.kappa:.17g}")
    else:
        v["strict_gap"] = Verdict("not-applicable", None, "region is not strictly monotone")
    if region.family in ("concave", "convex-concave"):
        nu = region.grad(boundary_point(region, np.ones(region.dim)))
        if direction_angle(nu, np.ones(region.dim)) <= 1e-9:
            r = abs(region.dim * rep.c_cube - rep.c_gromov)
            v["concave_identity"] = _verdict(r <= tol_claim, r, "n * c_cube vs Gromov width")
        else:
            v["concave_identity"] = Verdict("not-applicable", None,
                                            "normal at the cube corner is not diagonal")
    else:
        v["concave_identity"] = Verdict("not-applicable", None, "region is not a concave builder")
    violated = rep.sup_chord_min >= rep.a_min_orbit
    expected = region.family == "counterexample"
    v["counterexample_violation"] = Verdict(
        "pass" if violated == expected else "fail",
        rep.sup_chord_min - rep.a_min_orbit,
        f"violation observed = {violated}, expected = {expected}",
        value=violated,
    )
    rep.verdicts = v
    return rep
