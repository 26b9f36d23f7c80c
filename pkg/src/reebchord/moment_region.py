"""Moment images of toric domains as smooth implicit regions.

A region is ``Omega = {G <= 0}`` inside the closed positive orthant, where the
moment coordinates are ``w_i = pi |z_i|^2``.  Builders supply ``G`` together
with its analytic gradient; everything downstream (capacities, Reeb periods,
ambient flows) only consumes boundary points and outward normals.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit
from scipy.stats import qmc

TOL_ROOT = 1e-10
TOL_AXIS = 1e-8
TOL_MONO = 1e-7
# A normal entry may vanish like (w_i/|w|)**AXIS_ORDER when the boundary meets
# an axis tangentially; that is not a failure of strict monotonicity.
AXIS_ORDER = 16
_DEGENERATE_GRAD = 1e-14

ArrayFn = Callable[[np.ndarray], np.ndarray]


class RegionError(ValueError):
    """Invalid region parameters or a failed boundary computation."""


@dataclass(frozen=True, eq=False)
class MomentRegion:
    dim: int
    defining_function: ArrayFn
    gradient: ArrayFn
    bounding_box: np.ndarray
    label: str
    params: dict = field(default_factory=dict)
    # optional closed-form Minkowski gauge of Omega (1-homogeneous, = 1 on the boundary)
    gauge_function: Optional[ArrayFn] = None
    family: str = "generic"

    def G(self, w) -> np.ndarray:
        return self.defining_function(np.asarray(w, dtype=float))

    def grad(self, w) -> np.ndarray:
        return self.gradient(np.asarray(w, dtype=float))

    def gauge(self, w) -> np.ndarray:
        """Minkowski gauge ``F(w) = inf{l > 0 : w/l in Omega}``."""
        w = np.asarray(w, dtype=float)
        if self.gauge_function is not None:
            return self.gauge_function(w)
        flat = w.reshape(-1, self.dim)
        out = np.zeros(flat.shape[0])
        nz = np.any(flat > 0, axis=1)
        if np.any(nz):
            out[nz] = 1.0 / boundary_scale(self, flat[nz])
        return out.reshape(w.shape[:-1])

    def gauge_gradient(self, w) -> np.ndarray:
        """Gradient of the gauge: ``nu(v) / (nu(v) . v)`` at ``v = w / F(w)``."""
        w = np.asarray(w, dtype=float)
        F = self.gauge(w)
        v = w / F[..., None]
        nu = self.grad(v)
        return nu / np.sum(nu * v, axis=-1, keepdims=True)

    def scaled(self, s: float) -> "MomentRegion":
        """The region ``s * Omega``."""
        if not s > 0:
            raise RegionError("scale factor must be positive")
        G, dG, Fg = self.defining_function, self.gradient, self.gauge_function
        return MomentRegion(
            dim=self.dim,
            defining_function=lambda w: G(np.asarray(w, dtype=float) / s),
            gradient=lambda w: dG(np.asarray(w, dtype=float) / s) / s,
            bounding_box=self.bounding_box * s,
            label=f"{self.label}*{s:g}",
            params={**self.params, "scale": s},
            gauge_function=None if Fg is None else (lambda w: Fg(np.asarray(w, dtype=float)) / s),
            family=self.family,
        )


class Monotonicity(str, enum.Enum):
    STRICT = "StrictlyMonotone"
    MONOTONE = "MonotoneNotStrict"
    NOT_MONOTONE = "NotMonotone"


@dataclass(frozen=True)
class MonotonicityClass:
    kind: Monotonicity
    witness_point: np.ndarray
    witness_normal: np.ndarray
    min_entry: float
    samples: int
    dynamically_convex: Optional[bool] = None
    note: str = "sampled, not certified"

    @property
    def is_monotone(self) -> bool:
        return self.kind is not Monotonicity.NOT_MONOTONE

    @property
    def is_strict(self) -> bool:
        return self.kind is Monotonicity.STRICT

    def to_dict(self) -> dict:
        return {
            "class": self.kind.value,
            "witness_point": self.witness_point.tolist(),
            "witness_normal": self.witness_normal.tolist(),
            "min_entry": self.min_entry,
            "samples": self.samples,
            "dynamically_convex": self.dynamically_convex,
            "note": self.note,
        }


def _as_point(w, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != dim:
        raise RegionError(f"expected points of dimension {dim}, got shape {w.shape}")
    if np.any(w < 0):
        raise RegionError("moment coordinates must be nonnegative")
    return w


def contains(region: MomentRegion, w, tol: float = TOL_ROOT):
    """True iff ``G(w) <= 0`` (boundary points within ``tol`` count as inside)."""
    w = _as_point(w, region.dim)
    inside = region.G(w) <= tol
    return bool(inside) if np.ndim(inside) == 0 else inside


def boundary_scale(region: MomentRegion, directions, tol: float = TOL_ROOT) -> np.ndarray:
    """Ray parameters ``t`` with ``G(t d) = 0`` for each row ``d`` of ``directions``.

    Vectorized bisection on ``[0, t_box]`` followed by a guarded Newton polish.
    ``d`` need not be normalized.
    """
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    if d.shape[-1] != region.dim:
        raise RegionError("direction dimension mismatch")
    if np.any(d < 0) or np.any(np.all(d <= 0, axis=1)):
        raise RegionError("directions must be nonnegative and nonzero")
    with np.errstate(divide="ignore"):
        t_hi = np.min(np.where(d > 0, region.bounding_box / d, np.inf), axis=1)
    lo = np.zeros(len(d))
    hi = t_hi.copy()
    if np.any(region.G(hi[:, None] * d) <= 0):
        raise RegionError(f"{region.label}: no sign change along ray inside bounding box")
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = region.G(mid[:, None] * d) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    t = 0.5 * (lo + hi)
    with np.errstate(all="ignore"):
        for _ in range(3):
            p = t[:, None] * d
            slope = np.sum(region.grad(p) * d, axis=1)
            step = region.G(p) / slope
            cand = t - step
            ok = np.isfinite(cand) & (cand >= lo) & (cand <= hi)
            t = np.where(ok, cand, t)
    resid = np.abs(region.G(t[:, None] * d))
    if np.any(~(resid <= tol)):
        raise RegionError(f"{region.label}: boundary root not resolved (|G| = {resid.max():.3g})")
    return t


def boundary_point(region: MomentRegion, direction, tol: float = TOL_ROOT) -> np.ndarray:
    """Intersection of the ray ``t * direction`` with the boundary of the region."""
    d = np.asarray(direction, dtype=float)
    single = d.ndim == 1
    d2 = np.atleast_2d(d)
    t = boundary_scale(region, d2, tol)
    pts = t[:, None] * d2
    return pts[0] if single else pts


def outward_normal(region: MomentRegion, w, tol: float = TOL_ROOT) -> np.ndarray:
    """Unnormalized outward normal ``grad G(w)`` at a boundary point."""
    w = _as_point(w, region.dim)
    if np.any(np.abs(region.G(w)) > tol):
        raise RegionError("point is not on the boundary")
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = region.grad(w)
    if np.any(~np.isfinite(nu)) or np.any(np.linalg.norm(nu, axis=-1) < _DEGENERATE_GRAD):
        raise RegionError("degenerate gradient at boundary point")
    return nu


def tilde_normal(w, nu, tol_axis: float = TOL_AXIS) -> np.ndarray:
    """Normal with the entries zeroed on coordinates where ``w`` vanishes."""
    w = np.asarray(w, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return np.where(w > tol_axis, nu, 0.0)


def positive_orthant_directions(n: int, count: int, margin: float = TOL_AXIS) -> np.ndarray:
    """Deterministic low-discrepancy unit directions in the open positive orthant."""
    if n == 1:
        return np.ones((count, 1))
    if n == 2:
        u = qmc.Halton(d=1, scramble=False).random(count + 1)[1:, 0]
    else:
        u = qmc.Halton(d=n - 1, scramble=False).random(count + 1)[1:]
    u = np.atleast_2d(u.T).T
    ang = margin + (0.5 * np.pi - 2 * margin) * u
    d = np.ones((count, n))
    for j in range(n - 1):
        d[:, j] *= np.cos(ang[:, j])
        d[:, j + 1 :] *= np.sin(ang[:, j])[:, None]
    return d


def classify_monotonicity(region: MomentRegion, samples: int = 4096) -> MonotonicityClass:
    """Sample normals on the open part of the boundary and classify their signs."""
    if samples < 100:
        raise RegionError("classification needs at least 100 samples")
    d = positive_orthant_directions(region.dim, samples)
    w = boundary_point(region, d)
    nu = region.grad(w)
    unit = nu / np.linalg.norm(nu, axis=1, keepdims=True)
    wrel = w / np.linalg.norm(w, axis=1, keepdims=True)
    allowance = TOL_MONO * wrel**AXIS_ORDER
    neg = unit < -TOL_MONO
    flat = unit <= allowance
    if np.any(neg):
        k = int(np.argmin(unit.min(axis=1)))
        kind = Monotonicity.NOT_MONOTONE
    elif np.any(flat):
        k = int(np.argmax(np.any(flat, axis=1)))
        kind = Monotonicity.MONOTONE
    else:
        k = int(np.argmin((unit / allowance).min(axis=1)))
        kind = Monotonicity.STRICT
    dyn = (kind is Monotonicity.STRICT) if region.dim == 2 else None
    return MonotonicityClass(kind, w[k], nu[k], float(unit[k].min()), samples, dyn)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _check_positive(**kw):
    for name, v in kw.items():
        if not (np.all(np.isfinite(v)) and np.all(np.asarray(v) > 0)):
            raise RegionError(f"{name} must be positive, got {v!r}")


def build_ellipsoid(*axes: float) -> MomentRegion:
    """``Omega = {sum w_i / a_i <= 1}``."""
    if len(axes) == 1 and np.ndim(axes[0]) == 1:
        axes = tuple(axes[0])
    a = np.asarray(axes, dtype=float)
    if a.size < 2:
        raise RegionError("need n >= 2 axes")
    _check_positive(axes=a)
    inv = 1.0 / a
    return MomentRegion(
        dim=a.size,
        defining_function=lambda w: w @ inv - 1.0,
        gradient=lambda w: np.broadcast_to(inv, np.shape(w)).copy(),
        bounding_box=1.05 * a,
        label="ellipsoid(" + ",".join(f"{x:g}" for x in a) + ")",
        params={"axes": a.tolist()},
        gauge_function=lambda w: w @ inv,
        family="convex-concave",
    )


def build_ball(n: int, R: float) -> MomentRegion:
    """The ball ``B^{2n}(R)``: ``Omega = {sum w_i <= R}``."""
    if int(n) != n or n < 2:
        raise RegionError("n must be an integer >= 2")
    _check_positive(R=R)
    reg = build_ellipsoid(*([float(R)] * int(n)))
    return MomentRegion(reg.dim, reg.defining_function, reg.gradient, reg.bounding_box,
                        f"ball(n={int(n)},R={R:g})", {"n": int(n), "R": float(R)},
                        reg.gauge_function, "convex-concave")


def build_concave_sqrt(c: float, n: int = 2) -> MomentRegion:
    """Concave region ``{sum sqrt(w_i / c) <= 1}``; normals blow up at the axes."""
    _check_positive(c=c)
    if int(n) != n or n < 2:
        raise RegionError("n must be an integer >= 2")
    c = float(c)

    def G(w):
        return np.sum(np.sqrt(np.maximum(w, 0.0) / c), axis=-1) - 1.0

    def dG(w):
        with np.errstate(divide="ignore"):
            return 0.5 / np.sqrt(c * np.maximum(w, 0.0))

    return MomentRegion(
        dim=int(n), defining_function=G, gradient=dG,
        bounding_box=np.full(int(n), 1.05 * c),
        label=f"concave_sqrt(c={c:g})", params={"c": c, "n": int(n)},
        gauge_function=lambda w: np.sum(np.sqrt(np.maximum(w, 0.0) / c), axis=-1) ** 2,
        family="concave",
    )


def build_convex_power(a: float, p: float, n: int = 2) -> MomentRegion:
    """Convex region ``{sum (w_i / a)^p <= 1}`` with ``p >= 1``."""
    _check_positive(a=a)
    if not p >= 1:
        raise RegionError("p must be >= 1")
    if int(n) != n or n < 2:
        raise RegionError("n must be an integer >= 2")
    a, p = float(a), float(p)

    def norm(w):
        x = np.maximum(w, 0.0) / a
        m = np.max(x, axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        return m[..., 0] * np.sum((x / safe) ** p, axis=-1) ** (1.0 / p)

    def dG(w):
        x = np.maximum(w, 0.0) / a
        N = norm(w)[..., None]
        N = np.where(N > 0, N, 1.0)
        return (x / N) ** (p - 1.0) / a

    return MomentRegion(
        dim=int(n), defining_function=lambda w: norm(w) - 1.0, gradient=dG,
        bounding_box=np.full(int(n), 1.05 * a),
        label=f"convex_power(a={a:g},p={p:g})", params={"a": a, "p": p, "n": int(n)},
        gauge_function=norm, family="convex",
    )


def build_counterexample(eps: float = 0.1, beta: float = 200.0, q: float = 16.0,
                         corner: float = 2.5) -> MomentRegion:
    """Smoothed union of the strip ``{x <= eps, y <= 3}`` and the simplex ``{x + y <= 2}``.

    The strip is rounded only above ``y = corner`` (q-norm corner of exponent
    ``q``), so its vertical edge is exactly flat below the corner; the two
    pieces are joined by a log-sum-exp smooth minimum of sharpness ``beta``.
    """
    _check_positive(eps=eps, beta=beta, q=q)
    if beta < 10:
        raise RegionError("beta must be >= 10")
    if q < 8:
        raise RegionError("q must be >= 8")
    if not (eps < 1.0 and 2.0 - eps < corner < 3.0):
        raise RegionError("need eps < 1 and 2 - eps < corner < 3")
    eps, beta, q, corner = float(eps), float(beta), float(q), float(corner)
    height = 3.0 - corner

    def parts(w):
        x = np.maximum(w[..., 0], 0.0) / eps
        y = np.maximum(w[..., 1] - corner, 0.0) / height
        m = np.maximum(x, y)
        safe = np.where(m > 0, m, 1.0)
        N = m * ((x / safe) ** q + (y / safe) ** q) ** (1.0 / q)
        Nsafe = np.where(N > 0, N, 1.0)
        g1 = N - 1.0
        dg1 = np.stack([(x / Nsafe) ** (q - 1.0) / eps, (y / Nsafe) ** (q - 1.0) / height], axis=-1)
        g2 = 0.5 * (w[..., 0] + w[..., 1]) - 1.0
        return g1, dg1, g2

    def G(w):
        g1, _, g2 = parts(np.asarray(w, dtype=float))
        return -np.logaddexp(-beta * g1, -beta * g2) / beta

    def dG(w):
        g1, dg1, g2 = parts(np.asarray(w, dtype=float))
        lam = expit(beta * (g2 - g1))  # softmin weight of the strip
        return lam[..., None] * dg1 + expit(beta * (g1 - g2))[..., None] * 0.5

    return MomentRegion(
        dim=2, defining_function=G, gradient=dG,
        bounding_box=np.array([2.2, 3.3]),
        label=f"counterexample(eps={eps:g},beta={beta:g},q={q:g})",
        params={"eps": eps, "beta": beta, "q": q, "corner": corner},
        family="counterexample",
    )


BUILDERS = {
    "ball": build_ball,
    "ellipsoid": build_ellipsoid,
    "concave_sqrt": build_concave_sqrt,
    "convex_power": build_convex_power,
    "counterexample": build_counterexample,
}


def build(name: str, params: dict) -> MomentRegion:
    """Construct a region from a builder name and a parameter map."""
    try:
        fn = BUILDERS[name]
    except KeyError:
        raise RegionError(f"unknown builder {name!r}; choose from {sorted(BUILDERS)}") from None
    params = dict(params or {})
    if name == "ellipsoid":
        axes = params.pop("axes", None)
        if axes is None or params:
            raise RegionError("ellipsoid takes exactly one parameter: axes")
        return fn(*axes)
    try:
        return fn(**params)
    except TypeError as exc:
        raise RegionError(f"bad parameters for {name}: {exc}") from None


def downward_closed_violations(region: MomentRegion, pairs: int = 1000, seed: int = 0) -> int:
    """Count sampled pairs ``w in Omega, w' <= w`` with ``w'`` outside ``Omega``."""
    rng = np.random.default_rng(seed)
    box = region.bounding_box
    w = rng.uniform(0, 1, size=(8 * pairs, region.dim)) * box
    w = w[region.G(w) <= 0][:pairs]
    shrink = rng.uniform(0, 1, size=w.shape)
    return int(np.sum(region.G(w * shrink) > TOL_ROOT))


def primitive(m) -> tuple:
    m = [int(v) for v in m]
    g = 0
    for v in m:
        g = math.gcd(g, v)
    return tuple(v // g for v in m) if g > 1 else tuple(m)
