"""
Angular-interval occlusion primitives for disc-shaped agents seen from a
monostatic radar at the origin.

Every agent is a disc of radius ``rho`` whose centre lies in the quadrant
``Q = {(r, theta) : rho <= r <= r_max, 0 <= theta <= pi/2}``.  The radar sees
an agent iff some ray inside the agent's visibility interval is not cut by a
nearer disc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from numpy.typing import NDArray

# Endpoint tolerance for closed-interval comparisons (radians).
EPS_ANG = 1e-12

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class SceneConfig:
    """Scene geometry: agent radius and field-of-view outer radius (metres)."""

    rho: float = 0.25
    r_max: float = 14.5
    theta_min: float = field(default=0.0, init=False)
    theta_max: float = field(default=HALF_PI, init=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < self.r_max):
            raise ValueError(f"need 0 < rho < r_max, got rho={self.rho}, r_max={self.r_max}")

    @property
    def area(self) -> float:
        """Area of the annular quadrant Q."""
        return 0.25 * math.pi * (self.r_max**2 - self.rho**2)

    def contains(self, r, theta, tol: float = 1e-12):
        """Vectorised membership test for Q."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return (
            (r >= self.rho - tol)
            & (r <= self.r_max + tol)
            & (theta >= -tol)
            & (theta <= HALF_PI + tol)
        )


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float

    def to_xy(self) -> tuple[float, float]:
        return self.r * math.cos(self.theta), self.r * math.sin(self.theta)


@dataclass(frozen=True)
class AngularInterval:
    """Closed interval ``[lo, hi]`` of azimuths in radians."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def intersection(self, other: AngularInterval) -> AngularInterval | None:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            return None
        return AngularInterval(lo, hi)


@dataclass(frozen=True)
class CrowdRealization:
    """One snapshot of ``N`` agents; ``r`` and ``theta`` are parallel arrays."""

    r: NDArray[np.float64]
    theta: NDArray[np.float64]

    def __post_init__(self) -> None:
        r = np.ascontiguousarray(self.r, dtype=np.float64)
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if r.shape != theta.shape or r.ndim != 1 or r.size == 0:
            raise ValueError("r and theta must be equal-length non-empty 1-D arrays")
        r.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_points(cls, points: Sequence[PolarPoint]) -> CrowdRealization:
        return cls(np.array([p.r for p in points]), np.array([p.theta for p in points]))

    @property
    def n(self) -> int:
        return int(self.r.size)

    def agents(self) -> list[PolarPoint]:
        return [PolarPoint(float(r), float(t)) for r, t in zip(self.r, self.theta)]


def half_width(r, rho: float):
    """Angular half-width ``asin(rho / r)`` of a disc at range ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < rho):
        raise ValueError("agent centre closer than one disc radius to the radar (r < rho)")
    return np.arcsin(np.minimum(rho / r, 1.0))


def visibility_interval(p: PolarPoint, cfg: SceneConfig) -> AngularInterval:
    """Angular interval subtended at the radar by the disc centred at ``p``.

    The interval is not clipped to the field of view.

    Raises:
        ValueError: if ``p.r < cfg.rho``.
    """
    if p.r < cfg.rho:
        raise ValueError(f"r={p.r} < rho={cfg.rho}: visibility interval undefined")
    h = math.asin(min(cfg.rho / p.r, 1.0))
    return AngularInterval(p.theta - h, p.theta + h)


def intervals(r, theta, rho: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorised ``visibility_interval``; returns ``(lo, hi)`` arrays."""
    h = half_width(r, rho)
    theta = np.asarray(theta, dtype=float)
    return theta - h, theta + h


def contains(outer: AngularInterval, inner: AngularInterval, eps: float = EPS_ANG) -> bool:
    return outer.lo <= inner.lo + eps and inner.hi <= outer.hi + eps


def is_complete_1_blockage(a: AngularInterval, b: AngularInterval, eps: float = EPS_ANG) -> bool:
    """True iff ``a`` is contained in ``b`` (closed, equality counts)."""
    return contains(b, a, eps)


def is_partial_1_blockage(a: AngularInterval, b: AngularInterval, eps: float = EPS_ANG) -> bool:
    """True iff ``b`` shadows a non-empty strict part of ``a``."""
    g = a.intersection(b)
    if g is None:
        return False
    return not contains(b, a, eps)


def covers(a: AngularInterval, blockers: Sequence[AngularInterval], eps: float = EPS_ANG) -> bool:
    """True iff the union of ``blockers`` covers ``a`` up to a measure-zero set."""
    if not blockers:
        return False
    lo = np.array([b.lo for b in blockers])
    hi = np.array([b.hi for b in blockers])
    return bool(_covered(a.lo, a.hi, lo, hi, eps))


def is_simultaneous_2_blockage(
    a: AngularInterval, b1: AngularInterval, b2: AngularInterval, eps: float = EPS_ANG
) -> bool:
    """Pair ``(b1, b2)`` covers ``a`` jointly while neither covers it alone.

    Radial order is not checked here; callers filter for nearer blockers.
    """
    if contains(b1, a, eps) or contains(b2, a, eps):
        return False
    return covers(a, [b1, b2], eps)


@numba.njit(cache=True)
def _covered(a_lo, a_hi, lo, hi, eps):
    # Sweep blockers by left endpoint, advancing the covered frontier over [a_lo, a_hi].
    order = np.argsort(lo)
    frontier = a_lo
    for k in range(order.size):
        j = order[k]
        if hi[j] < frontier - eps:
            continue
        if lo[j] > frontier + eps:
            return False
        if hi[j] > frontier:
            frontier = hi[j]
        if frontier >= a_hi - eps:
            return True
    return False


@numba.njit(cache=True)
def _visible_mask(r, lo, hi, eps):
    n = r.size
    order = np.argsort(r)
    out = np.zeros(n, dtype=np.bool_)
    buf_lo = np.empty(n)
    buf_hi = np.empty(n)
    for pos in range(n):
        i = order[pos]
        m = 0
        for q in range(pos):
            j = order[q]
            if r[j] >= r[i]:
                continue
            if hi[j] < lo[i] or lo[j] > hi[i]:
                continue
            buf_lo[m] = lo[j]
            buf_hi[m] = hi[j]
            m += 1
        if m == 0:
            out[i] = True
        else:
            out[i] = not _covered(lo[i], hi[i], buf_lo[:m], buf_hi[:m], eps)
    return out


@numba.njit(cache=True)
def count_visible_batch(r, theta, rho, eps):
    """Visible-agent counts for a batch of realizations stored row-wise."""
    n_real, n = r.shape
    out = np.empty(n_real, dtype=np.int64)
    for k in range(n_real):
        h = np.arcsin(rho / r[k])
        out[k] = _visible_mask(r[k], theta[k] - h, theta[k] + h, eps).sum()
    return out


def visible_mask(crowd: CrowdRealization, cfg: SceneConfig, eps: float = EPS_ANG) -> NDArray[np.bool_]:
    lo, hi = intervals(crowd.r, crowd.theta, cfg.rho)
    return _visible_mask(crowd.r, lo, hi, eps)


def visible_agents(crowd: CrowdRealization, cfg: SceneConfig, eps: float = EPS_ANG) -> set[int]:
    """Indices of agents with an uncovered arc of positive length.

    Only strictly nearer agents cast shadows; equal ranges do not block each
    other.
    """
    return {int(i) for i in np.flatnonzero(visible_mask(crowd, cfg, eps))}


def count_visible(crowd: CrowdRealization, cfg: SceneConfig, eps: float = EPS_ANG) -> int:
    return int(visible_mask(crowd, cfg, eps).sum())


@numba.njit(cache=True)
def _pair_or_single_explains(i, r, lo, hi, eps):
    # Is agent i hidden by one nearer blocker, or by a nearer overlapping pair?
    a = lo[i]
    b = hi[i]
    n = r.size
    for j in range(n):
        if r[j] < r[i] and lo[j] <= a + eps and hi[j] >= b - eps:
            return True
    for j in range(n):
        if not (r[j] < r[i] and lo[j] <= a + eps and hi[j] >= a):
            continue
        for k in range(n):
            if r[k] < r[i] and hi[k] >= b - eps and lo[k] <= b and lo[k] <= hi[j] + eps:
                return True
    return False


@numba.njit(cache=True)
def audit_batch(r, theta, rho, eps):
    """Per realization: number of hidden agents not explained by a single or pair blockage."""
    n_real, n = r.shape
    out = np.zeros(n_real, dtype=np.int64)
    for k in range(n_real):
        h = np.arcsin(rho / r[k])
        lo = theta[k] - h
        hi = theta[k] + h
        vis = _visible_mask(r[k], lo, hi, eps)
        for i in range(n):
            if not vis[i] and not _pair_or_single_explains(i, r[k], lo, hi, eps):
                out[k] += 1
    return out
