"""
Analytical blockage model.

For an agent at ``x`` the model needs two location-dependent probabilities:

* ``p1(x)``: a single i.i.d. blocker completely hides ``x`` on its own;
* ``p2(x)``: an i.i.d. blocker pair hides ``x`` jointly while neither does
  alone.

``p1`` is integrated over the analytical blockage cone, ``p2`` over pairs of
Sobol cloud points.  Both feed the per-location visibility likelihood
``P(V | N, x)`` and its spatial average ``P(V | N)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from .geometry import EPS_ANG, PolarPoint, SceneConfig
from .spatial import SobolCloud, SpatialDensity, sobol_unit

log = logging.getLogger(__name__)

FIELD_COLUMNS = ("r", "theta", "p1", "p2")


def theta_c(r, r_x: float, rho: float):
    """Half-opening of the complete-blockage cone at blocker range ``r``."""
    r = np.asarray(r, dtype=float)
    if r_x <= rho:
        return np.full(r.shape, -np.inf)
    return np.arctan(rho / r - rho / math.sqrt(r_x**2 - rho**2))


def r1_membership(x: PolarPoint, y: PolarPoint, cfg: SceneConfig) -> bool:
    """Whether a blocker at ``y`` lies in the complete-blockage region of ``x``."""
    if not (cfg.rho <= y.r < x.r):
        return False
    return bool(abs(y.theta - x.theta) <= theta_c(y.r, x.r, cfg.rho))


@numba.njit(cache=True)
def _p1_kernel(xr, xt, cr, ct, cw, rho, exact):
    out = np.zeros(xr.size)
    for i in range(xr.size):
        rx = xr[i]
        if rx <= rho:
            continue
        s = math.sqrt(rx * rx - rho * rho)
        hx = math.asin(rho / rx)
        acc = 0.0
        for j in range(cr.size):
            ry = cr[j]
            if ry >= rx or cw[j] == 0.0:
                continue
            d = abs(ct[j] - xt[i])
            if exact:
                lim = math.asin(rho / ry) - hx
            else:
                lim = math.atan(rho / ry - rho / s)
            if d <= lim:
                acc += cw[j]
        out[i] = acc
    return out


@numba.njit(cache=True)
def _p2_kernel(xr, xt, cr, clo, chi, cw, rho, eps):
    out = np.zeros(xr.size)
    left_hi = np.empty(cr.size)
    left_w = np.empty(cr.size)
    right_lo = np.empty(cr.size)
    right_w = np.empty(cr.size)
    for i in range(xr.size):
        rx = xr[i]
        if rx <= rho:
            continue
        h = math.asin(rho / rx)
        a = xt[i] - h
        b = xt[i] + h
        nl = 0
        nr = 0
        for j in range(cr.size):
            if cr[j] >= rx or cw[j] == 0.0:
                continue
            lo = clo[j]
            hi = chi[j]
            covers_a = lo <= a + eps and hi >= a
            covers_b = hi >= b - eps and lo <= b
            if covers_a and covers_b:
                continue  # complete blocker, not part of a 2-blockage
            if covers_a:
                left_hi[nl] = hi
                left_w[nl] = cw[j]
                nl += 1
            elif covers_b:
                right_lo[nr] = lo
                right_w[nr] = cw[j]
                nr += 1
        if nl == 0 or nr == 0:
            continue
        order = np.argsort(right_lo[:nr])
        keys = right_lo[:nr][order]
        cum = np.cumsum(right_w[:nr][order])
        acc = 0.0
        for k in range(nl):
            # right blockers whose left edge does not leave a gap after this left blocker
            m = np.searchsorted(keys, left_hi[k] + eps, side="right")
            if m > 0:
                acc += left_w[k] * cum[m - 1]
        out[i] = 2.0 * acc  # ordered pairs (y, z) and (z, y)
    return out


def _as_arrays(x):
    if isinstance(x, PolarPoint):
        return np.array([x.r]), np.array([x.theta])
    r, t = x
    return np.atleast_1d(np.asarray(r, dtype=float)), np.atleast_1d(np.asarray(t, dtype=float))


def _cloud_weights(density: SpatialDensity, cloud: SobolCloud) -> NDArray[np.float64]:
    return density(cloud.r, cloud.theta) * cloud.weight


def _cone_nodes(xr, xt, rho: float, unit):
    """QMC nodes and area weights filling each complete-blockage cone.

    Blocker range runs over ``[rho, sqrt(r_x^2 - rho^2)]`` (where the cone
    closes) and azimuth over ``theta_x ± theta_c(r)``.
    """
    top = np.sqrt(np.maximum(xr**2 - rho**2, 0.0))
    span = np.maximum(top - rho, 0.0)[:, None]
    r = rho + unit[:, 0] * span
    with np.errstate(divide="ignore", invalid="ignore"):
        half = np.arctan(rho / r - rho / top[:, None])
    half = np.where(span > 0, np.maximum(half, 0.0), 0.0)
    theta = xt[:, None] + (2.0 * unit[:, 1] - 1.0) * half
    w = span * 2.0 * half * r / unit.shape[0]
    return r, theta, w


def compute_p1(
    x,
    density: SpatialDensity,
    cloud: SobolCloud | None = None,
    method: str = "cone",
    cone_m: int = 10,
    weights=None,
    chunk: int = 64,
):
    """Probability that one i.i.d. blocker completely hides ``x``.

    ``x`` is a ``PolarPoint`` (scalar result) or an ``(r, theta)`` pair of
    arrays.  Methods:

    ``"cone"``
        integrate the density over the analytical blockage cone
        ``|theta_y - theta_x| <= theta_c(r_y)`` with ``2**cone_m`` Sobol
        nodes mapped into the cone (default);
    ``"cloud"``
        sum cloud weights of the cloud points inside the same cone;
    ``"exact"``
        sum cloud weights of nearer cloud points whose interval contains
        ``I_x``.
    """
    xr, xt = _as_arrays(x)
    rho = density.cfg.rho
    if method == "cone":
        unit = sobol_unit(cone_m)
        p = np.empty(xr.size)
        for s in range(0, xr.size, chunk):
            r, t, w = _cone_nodes(xr[s : s + chunk], xt[s : s + chunk], rho, unit)
            p[s : s + chunk] = np.sum(w * density(r, t), axis=1)
    elif method in ("cloud", "exact"):
        if cloud is None:
            raise ValueError(f"method {method!r} needs a Sobol cloud")
        w = _cloud_weights(density, cloud) if weights is None else weights
        p = _p1_kernel(xr, xt, cloud.r, cloud.theta, w, rho, method == "exact")
    else:
        raise ValueError(f"unknown p1 method {method!r}")
    p = np.clip(p, 0.0, 1.0)
    return float(p[0]) if isinstance(x, PolarPoint) else p


def compute_p2(x, density: SpatialDensity, cloud: SobolCloud, weights=None, eps: float = EPS_ANG):
    """QMC estimate of the probability that an i.i.d. blocker pair jointly hides ``x``.

    Only nearer cloud points that partially shadow ``x`` take part.  Those
    shadowing the left edge of ``I_x`` are paired with those shadowing the
    right edge whenever their intervals leave no gap, which is exactly the
    set of pairs that cover ``I_x`` without either covering it alone.
    """
    xr, xt = _as_arrays(x)
    w = _cloud_weights(density, cloud) if weights is None else weights
    p = _p2_kernel(xr, xt, cloud.r, cloud.lo, cloud.hi, w, density.cfg.rho, eps)
    p = np.clip(p, 0.0, 1.0)
    return float(p[0]) if isinstance(x, PolarPoint) else p


def _log_pow1m(k, p):
    """``k * log(1 - p)`` with ``0 * log(0) = 0``."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = k * np.log1p(-np.asarray(p, dtype=float))
    return np.where(k == 0, 0.0, v)


def _comb2(n: int) -> int:
    return n * (n - 1) // 2 if n >= 2 else 0


def visibility_likelihood(n: int, p1, p2, clamp: bool = True):
    """Probability that an agent with blockage probabilities ``p1, p2`` is visible in a crowd of ``n``.

    Composes ``1 - P(D1) - P(D2) + P(D1 ∩ D2)`` with
    ``P(D1) = 1 - (1-p1)^(n-1)``, ``P(D2) ≈ 1 - (1-p2)^C(n-1,2)`` and the
    alternating series for the intersection (empty for ``n < 4``).
    ``p1``/``p2`` may be arrays.
    """
    if n < 1:
        raise ValueError(f"crowd size must be >= 1, got {n}")
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    v = np.exp(_log_pow1m(n - 1, p1)) + np.exp(_log_pow1m(_comb2(n - 1), p2)) - 1.0
    if n >= 4:
        with np.errstate(divide="ignore"):
            log_p1 = np.log(p1)
        for k in range(1, n - 2):
            log_binom = gammaln(n) - gammaln(k + 1) - gammaln(n - k)
            term = np.exp(log_binom + k * log_p1) * -np.expm1(_log_pow1m(_comb2(n - k - 1), p2))
            v = v + (term if k % 2 == 1 else -term)
    if clamp:
        excursion = float(np.max(np.maximum(v - 1.0, -v), initial=0.0))
        if excursion > 0:
            log.debug("P(V|N=%d,x) left [0, 1] by %.3g; clamped", n, excursion)
        v = np.clip(v, 0.0, 1.0)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True, eq=False)
class BlockageField:
    """Per-cloud-point tabulation of ``p1`` and ``p2`` for one density."""

    cloud: SobolCloud
    density: SpatialDensity
    p1: NDArray[np.float64]
    p2: NDArray[np.float64]

    @property
    def mass(self) -> NDArray[np.float64]:
        """Density values at the cloud points."""
        return self.density(self.cloud.r, self.cloud.theta)

    def summary(self) -> dict:
        out = {"density": self.density.name, "points": self.cloud.size, "sobol_m": self.cloud.m}
        for key in ("p1", "p2"):
            v = getattr(self, key)
            out[key] = {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean())}
        return out

    def to_csv(self, path: str | Path) -> None:
        table = np.column_stack([self.cloud.r, self.cloud.theta, self.p1, self.p2])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(FIELD_COLUMNS), comments="")

    @classmethod
    def from_csv(cls, path: str | Path, density: SpatialDensity, cloud: SobolCloud) -> BlockageField:
        """Load a cached table; raises ``ValueError`` if it was built on a different cloud."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if tuple(header) != FIELD_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(FIELD_COLUMNS)}, got {','.join(header)}")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if table.shape != (cloud.size, 4) or not (
            np.array_equal(table[:, 0], cloud.r) and np.array_equal(table[:, 1], cloud.theta)
        ):
            raise ValueError(f"{path}: field table does not match the Sobol cloud (m={cloud.m})")
        return cls(cloud, density, table[:, 2].copy(), table[:, 3].copy())


def _field_chunk(args):
    idx, density, cloud, weights = args
    xs = (cloud.r[idx], cloud.theta[idx])
    return compute_p1(xs, density), compute_p2(xs, density, cloud, weights=weights)


def build_field(density: SpatialDensity, cloud: SobolCloud, workers: int = 1, chunk: int = 1024) -> BlockageField:
    """Evaluate ``p1`` and ``p2`` at every cloud point.

    Chunks are fixed-size and merged in order, so the result does not depend
    on ``workers``.
    """
    weights = _cloud_weights(density, cloud)
    chunks = [np.arange(s, min(s + chunk, cloud.size)) for s in range(0, cloud.size, chunk)]
    jobs = [(idx, density, cloud, weights) for idx in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_field_chunk, jobs))
    else:
        parts = [_field_chunk(j) for j in jobs]
    p1 = np.concatenate([a for a, _ in parts])
    p2 = np.concatenate([b for _, b in parts])
    return BlockageField(cloud, density, p1, p2)


class VisibilityCurve:
    """Expected visibility ``P(V | N)`` for ``N = 1..n_max``; index with ``curve[N]``."""

    def __init__(self, values, name: str = ""):
        self.values = np.asarray(values, dtype=float)
        self.name = name

    @property
    def n_max(self) -> int:
        return int(self.values.size)

    def __getitem__(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise IndexError(f"curve covers N=1..{self.n_max}, asked for {n}")
        return float(self.values[n - 1])

    def __len__(self) -> int:
        return self.n_max

    def to_dict(self) -> dict:
        return {"name": self.name, "p_visible": {str(n): self[n] for n in range(1, self.n_max + 1)}}


def expected_visibility(n: int, field: BlockageField, mass=None) -> float:
    """Density-weighted average of ``P(V | n, x)`` over the cloud, clamped to [0, 1].

    The QMC sum is divided by the QMC estimate of the total mass, so that
    ``n = 1`` yields exactly 1.
    """
    mass = field.mass if mass is None else mass
    v = visibility_likelihood(n, field.p1, field.p2)
    return float(np.clip(np.dot(mass, v) / mass.sum(), 0.0, 1.0))


def visibility_curve(field: BlockageField, n_max: int = 30) -> VisibilityCurve:
    mass = field.mass
    return VisibilityCurve(
        [expected_visibility(n, field, mass) for n in range(1, n_max + 1)], name=field.density.name
    )
