"""Reeb dynamics on star-shaped hypersurfaces of R^{2n}.

A domain is described by its radial function ``rho`` on the unit sphere.  The
2-homogeneous function ``H(z) = (|z| / rho(z/|z|))^2`` has ``{H = 1}`` as the
boundary, and its Hamiltonian vector field ``J grad H`` restricted there is the
Reeb field of ``lambda = 1/2 sum (x dy - y dx)`` (``lambda(J grad H) = H``).

Coordinates are interleaved: ``z = (x_1, y_1, ..., x_n, y_n)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .integrate import FlowError, integrate_batch
from .moment_region import MomentRegion
from .toric_reeb import LegendrianFiberTorus

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DIST_TOL = 1e-6
GENUINE_SEP = 1e-4
_FD_STEP = 1e-6


def complex_J(v) -> np.ndarray:
    """Blockwise rotation ``(x_i, y_i) -> (-y_i, x_i)``."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0::2] = -v[..., 1::2]
    out[..., 1::2] = v[..., 0::2]
    return out


def lambda_eval(z, v) -> np.ndarray:
    """Liouville form ``1/2 sum (x_i dy_i - y_i dx_i)`` at ``z`` on the vector ``v``."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    return 0.5 * np.sum(z[..., 0::2] * v[..., 1::2] - z[..., 1::2] * v[..., 0::2], axis=-1)


def moment_map(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.pi * (z[..., 0::2] ** 2 + z[..., 1::2] ** 2)


def fiber_point(w, theta) -> np.ndarray:
    """Ambient point over moment coordinates ``w`` with angles ``theta``."""
    w = np.asarray(w, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r = np.sqrt(w / np.pi)
    shape = np.broadcast_shapes(r.shape, theta.shape)
    z = np.empty(shape[:-1] + (2 * shape[-1],))
    z[..., 0::2] = r * np.cos(theta)
    z[..., 1::2] = r * np.sin(theta)
    return z


def angles(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.arctan2(z[..., 1::2], z[..., 0::2])


def _tangential(u, g):
    return g - np.sum(g * u, axis=-1, keepdims=True) * u


@dataclass(frozen=True, eq=False)
class StarShapedDomain:
    dim: int
    radial: Callable[[np.ndarray], np.ndarray]
    radial_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""
    params: dict = field(default_factory=dict)

    def rho(self, u) -> np.ndarray:
        return self.radial(np.asarray(u, dtype=float))

    def grad_rho(self, u) -> np.ndarray:
        """Tangential gradient of ``rho`` on the sphere."""
        u = np.asarray(u, dtype=float)
        if self.radial_gradient is not None:
            return self.radial_gradient(u)
        # central differences of the 0-homogeneous extension
        g = np.empty(u.shape)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = _FD_STEP
            up, um = u + e, u - e
            g[..., k] = (self.radial(up / np.linalg.norm(up, axis=-1, keepdims=True))
                         - self.radial(um / np.linalg.norm(um, axis=-1, keepdims=True))) / (2 * _FD_STEP)
        return _tangential(u, g)

    def hamiltonian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        return (r / self.rho(z / r[..., None])) ** 2

    def hamiltonian_gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        u = z / r
        rho = self.rho(u)[..., None]
        return 2 * r / rho**2 * u - 2 * r / rho**3 * self.grad_rho(u)

    def project(self, z) -> np.ndarray:
        """Radial rescaling onto ``{H = 1}``."""
        z = np.asarray(z, dtype=float)
        return z / np.sqrt(self.hamiltonian(z))[..., None]

    def dilate(self, factor: float) -> "StarShapedDomain":
        rad, grad = self.radial, self.grad_rho
        return StarShapedDomain(self.dim, lambda u: factor * rad(u), lambda u: factor * grad(u),
                                f"{self.label}*{factor:g}", {**self.params, "dilation": factor})


def toric_domain(region: MomentRegion) -> StarShapedDomain:
    """Star-shaped domain ``mu^{-1}(Omega)``: ``rho(u) = F(mu(u))^{-1/2}`` for the gauge ``F``."""

    def radial(u):
        return region.gauge(moment_map(u)) ** -0.5

    def radial_gradient(u):
        w = moment_map(u)
        F = region.gauge(w)[..., None]
        dF = region.gauge_gradient(w)
        g = np.empty(u.shape)
        g[..., 0::2] = 2 * np.pi * u[..., 0::2] * dF
        g[..., 1::2] = 2 * np.pi * u[..., 1::2] * dF
        return _tangential(u, -0.5 * F**-1.5 * g)

    return StarShapedDomain(2 * region.dim, radial, radial_gradient, f"toric[{region.label}]",
                            {"region": region.label})


def reeb_field(domain: StarShapedDomain, z, check: bool = True) -> np.ndarray:
    """Reeb vector field ``J grad H`` at points of ``{H = 1}``."""
    z = np.asarray(z, dtype=float)
    R = complex_J(domain.hamiltonian_gradient(z))
    if check:
        H = domain.hamiltonian(z)
        if np.any(np.abs(H - 1) > 1e-8):
            raise FlowError("point is not on the hypersurface H = 1")
        lam = lambda_eval(z, R)
        if np.any(np.abs(lam - 1) > 1e-6):
            raise FlowError(f"lambda(R) = {lam} is not 1: inconsistent radial model")
    return R


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    H: np.ndarray
    lambda_R: np.ndarray
    max_raw_drift: float
    projected: bool
    steps: int

    def max_surface_drift(self) -> float:
        return float(np.max(np.abs(self.H - 1.0)))

    def max_lambda_defect(self) -> float:
        return float(np.max(np.abs(self.lambda_R - 1.0)))

    def action(self) -> float:
        """Integral of ``lambda`` along the trajectory."""
        return float(trapezoid(self.lambda_R, self.t))

    def rows(self):
        """CSV rows ``t, x1, y1, ..., H, lambdaR``."""
        return np.column_stack([self.t, self.z, self.H, self.lambda_R])


def _flow_field(domain: StarShapedDomain):
    return lambda z: complex_J(domain.hamiltonian_gradient(z))


def integrate_flow(domain: StarShapedDomain, z0, T: float, *, rtol: float = 1e-10, atol: float = 1e-12,
                   project: bool = True, max_drift: float = 1e-6, max_step: Optional[float] = None) -> Trajectory:
    """Follow the Reeb flow from ``z0`` for time ``T``."""
    z0 = np.asarray(z0, dtype=float)
    if not T > 0:
        raise ValueError("T must be positive")
    if abs(float(domain.hamiltonian(z0)) - 1) > 1e-8:
        raise FlowError("initial point is not on the hypersurface")
    res = integrate_batch(
        _flow_field(domain), z0[None, :], T, rtol=rtol, atol=atol,
        max_step=min(0.05, max_step / T) if max_step else 0.05,
        invariant=lambda z: domain.hamiltonian(z) - 1.0,
        project=domain.project if project else None, max_drift=max_drift,
    )
    zs = res.states[:, 0, :]
    H = domain.hamiltonian(zs)
    lam = lambda_eval(zs, reeb_field(domain, zs, check=False))
    return Trajectory(res.tau * T, zs, H, lam, res.max_raw_drift, project, res.steps)


# ---------------------------------------------------------------------------
# perturbations and distances
# ---------------------------------------------------------------------------

def _bump(u, centers, width):
    """Smooth compactly supported bumps in geodesic distance and their sphere gradients."""
    cos = np.clip(u @ centers.T, -1.0, 1.0)  # (..., k)
    d = np.arccos(cos)
    x = d / width
    inside = x < 1
    xs = np.where(inside, x, 0.0)
    with np.errstate(over="ignore", divide="ignore"):
        b = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - xs**2)), 0.0)
        db = np.where(inside, -b * 2 * xs / (width * (1.0 - xs**2) ** 2), 0.0)  # d b / d dist
    sin = np.sqrt(np.maximum(1.0 - cos**2, 0.0))
    ratio = np.where(sin > 1e-12, 1.0 / np.where(sin > 1e-12, sin, 1.0), 0.0)
    # grad_S dist = -(c - (u.c) u) / sin(dist)
    tang = centers[None, ...] - cos[..., None] * u[..., None, :] if u.ndim > 1 else centers - cos[:, None] * u
    grad = -(db * ratio)[..., None] * tang
    return b.sum(axis=-1), grad.sum(axis=-2)


def perturb(domain: StarShapedDomain, seed: int, amplitude: float, width: float = 0.5, count: int = 3) -> StarShapedDomain:
    """``rho' = rho * (1 + amplitude * sum of bumps)`` with seeded random bump centres."""
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if not 0 < width <= np.pi:
        raise ValueError("width must lie in (0, pi]")
    if int(count) != count or count < 1:
        raise ValueError("count must be a positive integer")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((int(count), domain.dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    base_r, base_g = domain.rho, domain.grad_rho

    def radial(u):
        b, _ = _bump(u, centers, width)
        out = base_r(u) * (1.0 + amplitude * b)
        if np.any(out <= 0):
            raise ValueError("perturbation makes the radial function nonpositive")
        return out

    def radial_gradient(u):
        b, gb = _bump(u, centers, width)
        return base_g(u) * (1.0 + amplitude * b)[..., None] + amplitude * base_r(u)[..., None] * gb

    return StarShapedDomain(domain.dim, radial, radial_gradient,
                            f"{domain.label}+bumps(seed={seed},eta={amplitude:g},sigma={width:g},k={count})",
                            {**domain.params, "seed": seed, "amplitude": amplitude, "width": width,
                             "count": int(count), "centers": centers.tolist()})


def sphere_samples(dim: int, samples: int, seed: int = 0) -> np.ndarray:
    x = np.random.default_rng(seed).standard_normal((samples, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def c1_distance(A: StarShapedDomain, B: StarShapedDomain, samples: int = 2000, seed: int = 0) -> float:
    """``max |rho_A - rho_B| + |grad_S (rho_A - rho_B)|`` over sampled unit vectors."""
    if A.dim != B.dim:
        raise ValueError("domains have different dimensions")
    u = sphere_samples(A.dim, samples, seed)
    diff = np.abs(A.rho(u) - B.rho(u)) + np.linalg.norm(A.grad_rho(u) - B.grad_rho(u), axis=1)
    return float(diff.max())


# ---------------------------------------------------------------------------
# Legendrian knots and chords (four-dimensional case)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransportedTorus:
    """Radial projection of a toric Legendrian knot onto another hypersurface."""

    domain: StarShapedDomain
    source: LegendrianFiberTorus
    legendrian_defect: float

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(self.source.fiber.w / np.pi)

    def base(self, s) -> np.ndarray:
        return fiber_point(self.source.fiber.w, self.source.curve_angles(s))

    def point(self, s) -> np.ndarray:
        b = self.base(s)
        u = b / np.linalg.norm(b, axis=-1, keepdims=True)
        return self.domain.rho(u)[..., None] * u

    def tangent(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        th = self.source.curve_angles(s)
        v = np.array([-self.source.m[1], self.source.m[0]], dtype=float)
        b = fiber_point(self.source.fiber.w, th)
        db = complex_J(b) * np.repeat(v, 2)
        nb = np.linalg.norm(b, axis=-1, keepdims=True)
        u, du = b / nb, db / nb
        rho = self.domain.rho(u)[..., None]
        drho = np.sum(self.domain.grad_rho(u) * du, axis=-1, keepdims=True)
        return rho * du + drho * u

    def defect_coordinates(self, z) -> np.ndarray:
        """Two functions vanishing exactly on the knot: log radius ratio and phase."""
        z = np.asarray(z, dtype=float)
        m = self.source.m
        r = self.radii
        a = 0.5 * (np.log(z[..., 0] ** 2 + z[..., 1] ** 2) - np.log(z[..., 2] ** 2 + z[..., 3] ** 2)) \
            - np.log(r[0] / r[1])
        th = angles(z)
        p = m[0] * th[..., 0] + m[1] * th[..., 1] - self.source.phase
        return np.stack([a, (p + np.pi) % TWO_PI - np.pi], axis=-1)

    def defect_jacobian(self, z) -> np.ndarray:
        """Derivative of :meth:`defect_coordinates` with respect to ``z`` (rows per coordinate)."""
        z = np.asarray(z, dtype=float)
        m = self.source.m
        q1 = z[..., 0] ** 2 + z[..., 1] ** 2
        q2 = z[..., 2] ** 2 + z[..., 3] ** 2
        da = np.stack([z[..., 0] / q1, z[..., 1] / q1, -z[..., 2] / q2, -z[..., 3] / q2], axis=-1)
        dp = np.stack([-m[0] * z[..., 1] / q1, m[0] * z[..., 0] / q1,
                       -m[1] * z[..., 3] / q2, m[1] * z[..., 2] / q2], axis=-1)
        return np.stack([da, dp], axis=-2)

    def distance(self, z) -> float:
        """Euclidean distance from ``z`` to the knot."""
        s = np.linspace(0.0, TWO_PI, 2049)[:-1]
        d = np.linalg.norm(self.point(s) - z, axis=1)
        x = np.array([s[int(np.argmin(d))]])
        # Gauss-Newton on the foot point
        for _ in range(30):
            g, dg = self.point(x)[0], self.tangent(x)[0]
            dx = float((z - g) @ dg / (dg @ dg))
            x = x + dx
            if abs(dx) < 1e-15:
                break
        return float(min(d.min(), np.linalg.norm(self.point(x)[0] - z)))


def transported_legendrian(domain: StarShapedDomain, source: LegendrianFiberTorus, samples: int = 512) -> TransportedTorus:
    """Radially project the toric Legendrian ``source`` onto ``domain`` and measure ``lambda`` on it."""
    if domain.dim != 4 or len(source.m) != 2:
        raise ValueError("knot transport is implemented for R^4")
    tt = TransportedTorus(domain, source, 0.0)
    s = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    g, dg = tt.point(s), tt.tangent(s)
    defect = float(np.max(np.abs(lambda_eval(g, dg)) / np.linalg.norm(dg, axis=1)))
    return TransportedTorus(domain, source, defect)


@dataclass
class NumericalChord:
    start: np.ndarray
    end: np.ndarray
    period: float
    parameter: float
    legendrian_defect: float
    surface_drift: float
    endpoint_distance: float
    genuine: bool

    def to_dict(self) -> dict:
        return {"start": self.start.tolist(), "end": self.end.tolist(), "period": self.period,
                "parameter": self.parameter, "legendrian_defect": self.legendrian_defect,
                "surface_drift": self.surface_drift, "endpoint_distance": self.endpoint_distance,
                "genuine": self.genuine}


@dataclass
class ChordSearch:
    chords: list
    T_max: float
    candidates: int
    rejected: list

    @property
    def message(self) -> str:
        if not self.chords:
            return f"no chord found up to T_max = {self.T_max:g}"
        return f"{len(self.chords)} chord(s) found up to T_max = {self.T_max:g}"

    def minimal(self) -> Optional[NumericalChord]:
        return self.chords[0] if self.chords else None


def _shoot(domain, torus, s, T, h, rtol):
    z0 = torus.point(np.concatenate([s, s + h]))
    res = integrate_batch(_flow_field(domain), z0, np.concatenate([T, T]), rtol=rtol, atol=rtol * 1e-2,
                          invariant=lambda z: domain.hamiltonian(z) - 1.0, project=domain.project,
                          record=False)
    k = len(s)
    return res.final[:k], res.final[k:], res.max_raw_drift


def find_chords(domain: StarShapedDomain, torus: TransportedTorus, T_max: float, grid=(8, 400), *,
                trigger: float = 0.5, rtol: float = 1e-10, newton_steps: int = 12,
                dist_tol: float = DIST_TOL, threads: int = 1) -> ChordSearch:
    """Reeb chords from the knot back to itself with period up to ``T_max``.

    A coarse scan integrates ``s_count`` starts to ``T_max`` (step at most
    ``T_max / t_count``) and keeps local minima of the defect coordinates; each
    candidate ``(s, T)`` is then refined by Newton iterations in which the
    ``s``-derivative comes from a shifted shot and the ``T``-derivative from the
    Reeb field at the endpoint.
    """
    if domain.dim != 4:
        raise ValueError("chord search is implemented for R^4")
    s_count, t_count = grid
    field_ = _flow_field(domain)
    s0 = TWO_PI * (np.arange(s_count) + 0.25) / s_count

    def scan(chunk):
        res = integrate_batch(field_, torus.point(chunk), T_max, rtol=rtol, atol=rtol * 1e-2,
                              max_step=1.0 / t_count, invariant=lambda z: domain.hamiltonian(z) - 1.0,
                              project=domain.project)
        D = np.linalg.norm(torus.defect_coordinates(res.states), axis=-1)  # (K, B)
        found = []
        for b in range(len(chunk)):
            d = D[:, b]
            mins = np.flatnonzero((d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:]) & (d[1:-1] < trigger)) + 1
            found.extend((chunk[b], res.tau[k] * T_max) for k in mins)
        return found, res.max_raw_drift

    chunks = np.array_split(s0, max(1, min(threads, s_count)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, chunks))
    else:
        parts = [scan(c) for c in chunks]
    found = sorted(p for part, _ in parts for p in part)
    cand_s = [p[0] for p in found]
    cand_T = [p[1] for p in found]
    drift = max(dr for _, dr in parts)
    log.debug("chord scan: %d candidates from %d starts", len(cand_s), s_count)
    rejected = []
    if not cand_s:
        return ChordSearch([], T_max, 0, rejected)
    s = np.array(cand_s)
    T = np.array(cand_T)
    h = 1e-6
    z1 = np.empty((len(s), domain.dim))
    active = np.ones(len(s), dtype=bool)
    for _ in range(newton_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        za, zh, dr = _shoot(domain, torus, s[idx], T[idx], h, rtol)
        drift = max(drift, dr)
        z1[idx] = za
        F = torus.defect_coordinates(za)
        dFs = torus.defect_coordinates(zh) - F
        dFs[:, 1] = (dFs[:, 1] + np.pi) % TWO_PI - np.pi
        dFs /= h
        dFT = np.einsum("bij,bj->bi", torus.defect_jacobian(za), field_(za))
        for j, b in enumerate(idx):
            if np.max(np.abs(F[j])) <= 1e-13:
                active[b] = False
                continue
            step = np.linalg.lstsq(np.column_stack([dFs[j], dFT[j]]), -F[j], rcond=1e-6)[0]
            step[0] = np.clip(step[0], -0.5, 0.5)
            step[1] = np.clip(step[1], -0.1 * T_max, 0.1 * T_max)
            s[b] += step[0]
            T[b] = max(T[b] + step[1], 1e-3 * T_max)
            if np.max(np.abs(step)) <= 1e-11:
                active[b] = False
    idx = np.flatnonzero(active)
    if idx.size:
        z1[idx], _, dr = _shoot(domain, torus, s[idx], T[idx], h, rtol)
        drift = max(drift, dr)
    chords = []
    for b in range(len(s)):
        if T[b] <= 1e-3 * T_max * (1 + 1e-9) or T[b] > T_max * (1 + 1e-9):
            rejected.append((float(s[b]), float(T[b]), "period outside (0, T_max]"))
            continue
        dist = torus.distance(z1[b])
        if dist > dist_tol:
            rejected.append((float(s[b]), float(T[b]), f"endpoint distance {dist:.2e}"))
            continue
        start = torus.point(np.array([s[b]]))[0]
        chords.append(NumericalChord(start, z1[b], float(T[b]), float(s[b] % TWO_PI),
                                     torus.legendrian_defect, drift, dist,
                                     bool(np.linalg.norm(z1[b] - start) > GENUINE_SEP)))
    chords.sort(key=lambda c: (c.period, c.parameter))
    unique = []
    for c in chords:
        if not any(abs(c.period - u.period) < 1e-6 and
                   abs((c.parameter - u.parameter + np.pi) % TWO_PI - np.pi) < 1e-6 for u in unique):
            unique.append(c)
    return ChordSearch(unique, T_max, len(cand_s), rejected)
