"""Batched Dormand-Prince 5(4) integration of autonomous flows.

All trajectories in a batch share one adaptive step; each member carries its
own time scale so that ``tau in [0, 1]`` maps to ``t = scale * tau``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class FlowError(RuntimeError):
    """Integration failed (step underflow, excessive drift, bad initial data)."""


@dataclass
class BatchResult:
    tau: np.ndarray  # (K,)
    states: Optional[np.ndarray]  # (K, B, d) when recorded
    final: np.ndarray  # (B, d)
    max_raw_drift: float
    steps: int
    rejected: int
    projections: int


def integrate_batch(
    field: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    scales,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: float = 0.05,
    invariant: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_drift: float = 1e-6,
    record: bool = True,
    min_step: float = 1e-14,
) -> BatchResult:
    """Integrate ``dz/dtau = scale * field(z)`` from ``tau = 0`` to ``1``.

    ``invariant`` (if given) should vanish along exact trajectories; its largest
    excursion before projection is returned and checked against ``max_drift``.
    ``project`` maps a state back onto the invariant set after each step.
    """
    z = np.array(z0, dtype=float, copy=True)
    if z.ndim != 2:
        raise ValueError("z0 must have shape (batch, dim)")
    sc = np.broadcast_to(np.asarray(scales, dtype=float), (z.shape[0],))[:, None]
    f = lambda y: sc * field(y)
    tau, h = 0.0, min(max_step, 1e-3)
    taus, states = [0.0], [z.copy()] if record else None
    k1 = f(z)
    raw = 0.0
    steps = rejected = nproj = 0
    while tau < 1.0:
        h = min(h, 1.0 - tau)
        k = [k1]
        for i in range(1, 7):
            yi = z + h * sum(a * kk for a, kk in zip(_A[i], k) if a != 0.0)
            k.append(f(yi))
        znew = z + h * sum(b * kk for b, kk in zip(_B, k) if b != 0.0)
        err = h * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(z), np.abs(znew))
        enorm = float(np.max(np.sqrt(np.mean((err / scale) ** 2, axis=1))))
        if not np.isfinite(enorm):
            enorm = np.inf
        if enorm <= 1.0:
            tau += h
            steps += 1
            k1 = k[6]
            if invariant is not None:
                drift = float(np.max(np.abs(invariant(znew))))
                raw = max(raw, drift)
                if drift > max_drift:
                    raise FlowError(f"invariant drift {drift:.3e} exceeds {max_drift:.1e} at tau={tau:.6g}")
            if project is not None:
                znew = project(znew)
                k1 = f(znew)
                nproj += 1
            z = znew
            if record:
                taus.append(tau)
                states.append(z.copy())
            fac = 5.0 if enorm == 0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
            h = min(max_step, h * fac)
        else:
            rejected += 1
            h *= max(0.2, 0.9 * enorm ** -0.2) if np.isfinite(enorm) else 0.2
            if h < min_step:
                raise FlowError(f"step size underflow at tau={tau:.6g}")
    return BatchResult(
        np.asarray(taus),
        np.stack(states) if record else None,
        z,
        raw,
        steps,
        rejected,
        nproj,
    )
