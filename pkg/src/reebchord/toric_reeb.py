"""Reeb dynamics on the boundary of a toric domain, in action-angle form.

Over a boundary point ``w`` of the moment image the Reeb field is linear in
the angles, with angular velocity ``2 pi nu~ / (w . nu~)``.  Rational normal
directions carry tori of closed orbits; tori ``{m . theta = c}`` inside the
fibre over ``w = s m`` are Legendrian, and their shortest chord has period ``s``.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .moment_region import (
    TOL_AXIS,
    MomentRegion,
    RegionError,
    boundary_point,
    boundary_scale,
    primitive,
    tilde_normal,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
ANG_TOL = 1e-9
_SCAN_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class TorusFiber:
    w: np.ndarray
    nu: np.ndarray
    nu_tilde: np.ndarray
    primitive_dir: Optional[tuple] = None

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.w > TOL_AXIS))

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "nu": self.nu.tolist(),
            "nu_tilde": self.nu_tilde.tolist(),
            "primitive_dir": None if self.primitive_dir is None else list(self.primitive_dir),
            "n_positive": self.n_positive,
        }


def direction_angle(a, b) -> float:
    """Chordal angle between two nonzero vectors (accurate for tiny angles)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a / np.linalg.norm(a) - b / np.linalg.norm(b)))


def rational_direction(v, max_height: int = 1000, ang_tol: float = ANG_TOL) -> Optional[tuple]:
    """Primitive integer vector parallel to ``v`` within ``ang_tol``, or None."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or not np.any(v > 0):
        return None
    base = v / v[v > 0].min()
    k = np.arange(1, max_height + 1, dtype=float)[:, None]
    cand = np.rint(k * base)
    ok = np.all(cand <= max_height, axis=1) & np.any(cand > 0, axis=1)
    unit = v / np.linalg.norm(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.linalg.norm(cand / np.linalg.norm(cand, axis=1, keepdims=True) - unit, axis=1)
    hit = np.flatnonzero(ok & (err <= ang_tol))
    if hit.size == 0:
        return None
    return primitive(cand[hit[0]])


def make_fiber(region: MomentRegion, w, m: Optional[tuple] = None, max_height: int = 1000) -> TorusFiber:
    """Fibre over the boundary point ``w``; ``m`` is detected when not given."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = region.grad(w)
    nt = tilde_normal(w, nu)
    nu = np.where(np.isfinite(nu), nu, nt)
    if m is None:
        m = rational_direction(nt, max_height)
    elif direction_angle(nt, m) > ANG_TOL:
        raise RegionError(f"modified normal {nt} is not parallel to {m}")
    return TorusFiber(w, nu, nt, None if m is None else tuple(int(x) for x in m))


def reeb_angular_velocity(fiber: TorusFiber, tol: float = 1e-14) -> np.ndarray:
    """Angular velocity of the Reeb flow on the fibre torus."""
    pairing = float(fiber.w @ fiber.nu_tilde)
    if not pairing > tol:
        raise RegionError(f"degenerate pairing w . nu~ = {pairing:.3g}")
    return TWO_PI * fiber.nu_tilde / pairing


def closed_orbit_period(fiber: TorusFiber) -> Optional[float]:
    """Common period ``w . m`` of the closed orbits foliating a rational fibre."""
    if fiber.primitive_dir is None:
        return None
    return float(fiber.w @ np.asarray(fiber.primitive_dir, dtype=float))


# ---------------------------------------------------------------------------
# enumeration of rational fibres
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RationalFiber:
    m: tuple
    fiber: TorusFiber
    period: float
    kind: str  # "axis", "root" or "plateau" (flat piece of boundary) or "newton"


@dataclass
class FiberEnumeration:
    height: int
    fibers: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (m, reason)

    def minimum(self) -> Optional[RationalFiber]:
        if not self.fibers:
            return None
        return min(self.fibers, key=lambda f: (f.period, f.m))


def primitive_vectors(n: int, height: int, positive: bool = False) -> list:
    """Primitive vectors of ``Z^n_{>=0} \\ {0}`` with sup-norm at most ``height``, lexicographic."""
    lo = 1 if positive else 0
    out = []
    for m in itertools.product(range(lo, height + 1), repeat=n):
        if any(m) and math.gcd(*m) == 1:
            out.append(m)
    return out


def _plane_directions(n: int, i: int, j: int, phi: np.ndarray) -> np.ndarray:
    d = np.zeros((len(phi), n))
    d[:, i] = np.cos(phi)
    d[:, j] = np.sin(phi)
    return d


def _plane_cross(region, i, j, phi, mu):
    """Signed sine between the in-plane modified normal and ``mu`` (rows)."""
    d = _plane_directions(region.dim, i, j, phi)
    w = boundary_point(region, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = region.grad(w)
    nt = np.where(w > TOL_AXIS, nu, 0.0)[:, [i, j]]
    nt = nt / np.linalg.norm(nt, axis=1, keepdims=True)
    g = nt[:, 0] * mu[:, 1] - nt[:, 1] * mu[:, 0]
    dot = nt[:, 0] * mu[:, 0] + nt[:, 1] * mu[:, 1]
    return g, dot, w


def _scan_plane(region: MomentRegion, i: int, j: int, ms: list, grid: int, out: FiberEnumeration):
    """Locate fibres in the coordinate plane ``(i, j)`` whose normal is parallel to each m."""
    if not ms:
        return set()
    u = np.linspace(0.0, 1.0, grid)
    phi = _SCAN_MARGIN + (0.5 * np.pi - 2 * _SCAN_MARGIN) * 0.5 * (1.0 - np.cos(np.pi * u))
    d = _plane_directions(region.dim, i, j, phi)
    w = boundary_point(region, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = region.grad(w)
    nt = np.where(w > TOL_AXIS, nu, 0.0)[:, [i, j]]
    nt = nt / np.linalg.norm(nt, axis=1, keepdims=True)
    M = np.array([[m[i], m[j]] for m in ms], dtype=float)
    mu = M / np.linalg.norm(M, axis=1, keepdims=True)
    g = nt[None, :, 0] * mu[:, 1:2] - nt[None, :, 1] * mu[:, 0:1]
    dot = nt[None, :, 0] * mu[:, 0:1] + nt[None, :, 1] * mu[:, 1:2]
    plateau = (np.abs(g) <= ANG_TOL) & (dot > 0)
    cross = (g[:, :-1] * g[:, 1:] < 0) & (dot[:, :-1] > 0) & (dot[:, 1:] > 0)
    cross &= ~plateau[:, :-1] & ~plateau[:, 1:]
    found = set()
    full = np.array(ms, dtype=float)
    periods = w @ full.T  # (grid, M)
    for r in np.flatnonzero(plateau.any(axis=1)):
        idx = np.flatnonzero(plateau[r])
        runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
        for run in runs:
            k = run[np.argmin(periods[run, r])]
            fib = make_fiber(region, w[k], ms[r])
            out.fibers.append(RationalFiber(ms[r], fib, float(periods[k, r]), "plateau"))
            found.add(ms[r])
    rows, cols = np.nonzero(cross)
    if rows.size:
        lo, hi = phi[cols].copy(), phi[cols + 1].copy()
        g_lo = g[rows, cols]
        mu_b = mu[rows]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm, _, _ = _plane_cross(region, i, j, mid, mu_b)
            same = np.sign(gm) == np.sign(g_lo)
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        root = 0.5 * (lo + hi)
        gr, dr, wr = _plane_cross(region, i, j, root, mu_b)
        for b, r in enumerate(rows):
            m = ms[r]
            if abs(gr[b]) <= ANG_TOL and dr[b] > 0:
                fib = make_fiber(region, wr[b], m)
                out.fibers.append(RationalFiber(m, fib, float(wr[b] @ np.asarray(m, float)), "root"))
                found.add(m)
            else:
                out.skipped.append((m, f"normal-direction root not localized (residual {abs(gr[b]):.2e})"))
    return found


def _newton_fiber(region: MomentRegion, m: tuple) -> Optional[np.ndarray]:
    """Damped least-squares solve for a boundary point with normal parallel to ``m``."""
    W = [k for k, v in enumerate(m) if v > 0]
    mu = np.asarray([m[k] for k in W], dtype=float)
    mu /= np.linalg.norm(mu)

    def point(x):
        d = np.zeros(region.dim)
        d[W] = np.exp(np.concatenate([[0.0], x]))
        return boundary_point(region, d)

    def resid(x):
        w = point(x)
        nt = region.grad(w)[W]
        return nt / np.linalg.norm(nt) - mu

    starts = [np.log(mu[1:] / mu[0]), np.zeros(len(W) - 1)]
    for x0 in starts:
        try:
            sol = optimize.least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except RegionError:
            continue
        if np.linalg.norm(sol.fun) <= ANG_TOL:
            return point(sol.x)
    return None


def enumerate_rational_fibers(region: MomentRegion, height: int = 50, grid: int = 4097,
                              threads: int = 1) -> FiberEnumeration:
    """All fibres whose modified normal is parallel to a primitive ``m`` with ``|m|_inf <= height``.

    Axis fibres come from the coordinate rays; fibres in a coordinate plane are
    found by a dense scan of ray directions plus bisection on the sign of the
    normal/direction cross product (flat boundary pieces are reported once per
    connected run); higher-dimensional faces use a damped Newton solve.
    """
    n = region.dim
    out = FiberEnumeration(height)
    ms = primitive_vectors(n, height)
    found = set()
    for k in range(n):
        e = tuple(int(a == k) for a in range(n))
        w = boundary_point(region, np.asarray(e, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            nu_k = region.grad(w)[k]
        if np.isfinite(nu_k) and nu_k > 0:
            out.fibers.append(RationalFiber(e, make_fiber(region, w, e), float(w[k]), "axis"))
            found.add(e)
        else:
            out.skipped.append((e, "axis normal not positive"))
    planes = list(itertools.combinations(range(n), 2))
    plane_ms = {(i, j): [m for m in ms if all(m[a] == 0 for a in range(n) if a not in (i, j))]
                for i, j in planes}
    chunks = []
    for (i, j), sub in plane_ms.items():
        size = max(1, math.ceil(len(sub) / max(threads, 1)))
        chunks += [(i, j, sub[s:s + size]) for s in range(0, len(sub), size)]
    def scan(chunk):
        part = FiberEnumeration(height)
        return part, _scan_plane(region, chunk[0], chunk[1], chunk[2], grid, part)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(scan, chunks))
    else:
        results = [scan(c) for c in chunks]
    for part, f in results:
        out.fibers += part.fibers
        out.skipped += part.skipped
        found |= f
    for m in ms:
        if sum(v > 0 for v in m) >= 3:
            w = _newton_fiber(region, m)
            if w is not None:
                out.fibers.append(RationalFiber(m, make_fiber(region, w, m), float(w @ np.asarray(m, float)), "newton"))
                found.add(m)
    for m in ms:
        if m not in found and not any(s[0] == m for s in out.skipped):
            out.skipped.append((m, "no boundary point with modified normal parallel to m"))
    out.fibers.sort(key=lambda f: (f.m, tuple(f.fiber.w)))
    out.skipped.sort(key=lambda s: s[0])
    if out.skipped:
        log.debug("%s: %d directions skipped", region.label, len(out.skipped))
    return out


# ---------------------------------------------------------------------------
# Legendrian tori and chords
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LegendrianFiberTorus:
    """The torus ``{m . theta = c}`` in the fibre over ``w = scale * m``."""

    fiber: TorusFiber
    m: tuple
    phase: float
    scale: float

    def base_angles(self) -> np.ndarray:
        m = np.asarray(self.m, dtype=float)
        return self.phase * m / (m @ m)

    def curve_angles(self, s) -> np.ndarray:
        """Angles of the knot ``theta(s)``, ``s in [0, 2 pi)`` (four-dimensional case)."""
        if len(self.m) != 2:
            raise ValueError("curve parametrization exists only for n = 2")
        s = np.asarray(s, dtype=float)
        v = np.array([-self.m[1], self.m[0]], dtype=float)
        return self.base_angles() + s[..., None] * v

    def to_dict(self) -> dict:
        return {"fiber": self.fiber.to_dict(), "m": list(self.m), "phase": self.phase,
                "scale": self.scale, "derived_family": tuple(self.m) != (1,) * len(self.m)}


@dataclass(frozen=True, eq=False)
class ChordRecord:
    start_angles: np.ndarray
    end_angles: np.ndarray
    period: float
    genuine: bool
    residual: float

    def to_dict(self) -> dict:
        return {"start_angles": self.start_angles.tolist(), "end_angles": self.end_angles.tolist(),
                "period": self.period, "genuine": self.genuine, "residual": self.residual}


def legendrian_fiber(region: MomentRegion, m, phase: float = 0.0) -> LegendrianFiberTorus:
    """Legendrian torus ``{m . theta = phase}`` over the boundary point on the ray through ``m``."""
    m = tuple(int(v) for v in m)
    if len(m) != region.dim:
        raise RegionError("m has the wrong dimension")
    if any(v <= 0 for v in m):
        raise RegionError("m must have strictly positive entries (axis fibres drop dimension)")
    if math.gcd(*m) != 1:
        raise RegionError("m must be primitive")
    s = float(boundary_scale(region, np.asarray(m, dtype=float))[0])
    w = s * np.asarray(m, dtype=float)
    return LegendrianFiberTorus(make_fiber(region, w), m, float(phase) % TWO_PI, s)


def _wrap(a):
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


def min_chord_period(torus: LegendrianFiberTorus, start=None) -> ChordRecord:
    """Shortest Reeb chord from ``start`` (angles on the torus) back to the torus."""
    m = np.asarray(torus.m, dtype=float)
    omega = reeb_angular_velocity(torus.fiber)
    theta0 = torus.base_angles() if start is None else np.asarray(start, dtype=float)
    if abs(_wrap(m @ theta0 - torus.phase)) > 1e-9:
        raise ValueError("start point is not on the torus")
    T = TWO_PI / float(m @ omega)
    disp = T * omega
    theta1 = (theta0 + disp) % TWO_PI
    genuine = bool(np.max(np.abs(_wrap(disp))) > 1e-9)
    defect = abs(float(_wrap(m @ theta1 - m @ theta0)))
    return ChordRecord(theta0 % TWO_PI, theta1, T, genuine, defect)


@dataclass(frozen=True)
class SupChord:
    value: float
    witness: tuple
    enumerated: float
    continuum: float


def sup_chord_over_fibers(region: MomentRegion, height: int = 20) -> SupChord:
    """Largest minimal-chord period over the Legendrian fibre tori ``w = s m``."""
    if height < 1:
        raise ValueError("height must be >= 1")
    ms = primitive_vectors(region.dim, height, positive=True)
    M = np.asarray(ms, dtype=float)
    s = boundary_scale(region, M)
    best = int(np.argmax(s))  # lexicographic tie-break via first occurrence
    enumerated = float(s[best])
    n = region.dim

    def neg_scale(y):
        return -float(boundary_scale(region, 1.0 + np.asarray(y))[0])

    res = optimize.minimize(neg_scale, np.full(n, 0.5), method="L-BFGS-B",
                            bounds=[(0.0, float(height - 1 if height > 1 else 1))] * n)
    continuum = -float(res.fun)
    return SupChord(max(enumerated, continuum), ms[best], enumerated, continuum)


def chord_polyline(torus: LegendrianFiberTorus, chord: ChordRecord, samples: int = 65) -> np.ndarray:
    """Rows ``(theta..., t)`` of the chord on the flat torus, angles reduced mod 2 pi."""
    omega = reeb_angular_velocity(torus.fiber)
    t = np.linspace(0.0, chord.period, samples)
    theta = (chord.start_angles + t[:, None] * omega) % TWO_PI
    return np.column_stack([theta, t])
