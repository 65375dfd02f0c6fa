"""
Spatial priors over the quadrant Q and quasi-Monte Carlo integration.

All densities are vectorised: ``density(r, theta)`` takes polar coordinate
arrays and returns normalised values (m^-2), zero outside Q.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import shapely
from numpy.typing import NDArray
from scipy.stats import qmc

from .geometry import HALF_PI, SceneConfig, intervals

# Arc discretisation used when mask shapes are converted to polygons.
ARC_SEGMENTS = 4096
# Polar midpoint grid used for normalising constants.
QUAD_NR = 1536
QUAD_NT = 1536


class SamplingError(RuntimeError):
    pass


def polar_quadrature(cfg: SceneConfig, nr: int = QUAD_NR, nt: int = QUAD_NT):
    """Midpoint nodes and area weights on a polar grid over Q."""
    dr = (cfg.r_max - cfg.rho) / nr
    dt = HALF_PI / nt
    r = cfg.rho + (np.arange(nr) + 0.5) * dr
    t = (np.arange(nt) + 0.5) * dt
    rr, tt = np.meshgrid(r, t, indexing="ij")
    return rr.ravel(), tt.ravel(), (rr * dr * dt).ravel()


class SpatialDensity:
    """Base class for normalised priors P(x) on Q."""

    kind: str = ""

    def __init__(self, cfg: SceneConfig, name: str | None = None):
        self.cfg = cfg
        self.name = name or self.kind

    def _raw(self, r: NDArray, theta: NDArray) -> NDArray:
        raise NotImplementedError

    def _raw_bound(self) -> float:
        raise NotImplementedError

    def _normaliser(self) -> float:
        r, t, w = polar_quadrature(self.cfg)
        return float(np.dot(self._raw(r, t), w))

    def _finish(self) -> None:
        self.z = self._normaliser()
        if not self.z > 0:
            raise ValueError(f"density {self.name!r} has no mass inside Q")
        self.bound = self._raw_bound() / self.z

    def __call__(self, r, theta) -> NDArray[np.float64]:
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        inside = self.cfg.contains(r, theta)
        out = np.zeros(np.broadcast(r, theta).shape)
        if np.any(inside):
            rb, tb = np.broadcast_arrays(r, theta)
            out[inside] = self._raw(rb[inside], tb[inside]) / self.z
        return out

    def density_at(self, r: float, theta: float) -> float:
        return float(self(np.array([r]), np.array([theta]))[0])

    def sample(
        self, n: int, rng: np.random.Generator, max_iter: int = 10_000
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Draw ``n`` i.i.d. agent centres by rejection against ``self.bound``.

        The proposal is area-uniform on Q.  Raises ``SamplingError`` when
        ``max_iter`` proposal rounds do not yield enough accepted points.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        cfg = self.cfg
        r_out = np.empty(n)
        t_out = np.empty(n)
        filled = 0
        accept = getattr(self, "_accept_rate", None) or 0.5
        for _ in range(max_iter):
            need = n - filled
            k = max(8, int(1.25 * need / accept) + 4)
            u = rng.random((3, k))
            r = np.sqrt(cfg.rho**2 + u[0] * (cfg.r_max**2 - cfg.rho**2))
            t = u[1] * HALF_PI
            ok = u[2] * self.bound < self(r, t)
            got = np.flatnonzero(ok)[:need]
            r_out[filled : filled + got.size] = r[got]
            t_out[filled : filled + got.size] = t[got]
            filled += got.size
            if filled == n:
                return r_out, t_out
        raise SamplingError(
            f"rejection sampler for {self.name!r} accepted {filled}/{n} points in {max_iter} rounds"
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "params": self.params(),
            "scene": {"rho": self.cfg.rho, "r_max": self.cfg.r_max},
        }

    def params(self) -> dict:
        return {}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"


class UniformDensity(SpatialDensity):
    kind = "uniform"

    def __init__(self, cfg: SceneConfig, name: str | None = None):
        super().__init__(cfg, name)
        self.z = cfg.area
        self.bound = 1.0 / cfg.area
        self._accept_rate = 1.0

    def _raw(self, r, theta):
        return np.ones_like(r)


def _arc(r: float, t0: float, t1: float, n: int) -> list[tuple[float, float]]:
    t = np.linspace(t0, t1, n)
    return list(zip(r * np.cos(t), r * np.sin(t)))


def annular_sector(r0: float, r1: float, t0: float, t1: float, segments: int = ARC_SEGMENTS):
    n = max(4, int(segments * (t1 - t0) / HALF_PI))
    outer = _arc(r1, t0, t1, n)
    inner = _arc(r0, t1, t0, n) if r0 > 0 else [(0.0, 0.0)]
    return shapely.Polygon(outer + inner)


def shape_from_dict(spec: dict):
    """Build a shapely polygon from a mask-shape record.

    Supported: ``{"rect": [x0, y0, x1, y1]}``, ``{"sector": [r0, r1, t0, t1]}``
    (angles in radians) and ``{"polygon": [[x, y], ...]}``.
    """
    if "rect" in spec:
        x0, y0, x1, y1 = spec["rect"]
        return shapely.box(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
    if "sector" in spec:
        return annular_sector(*spec["sector"])
    if "polygon" in spec:
        return shapely.Polygon(spec["polygon"])
    raise ValueError(f"unknown mask shape {spec!r}")


class MaskedUniformDensity(SpatialDensity):
    """Uniform over ``(Q ∩ union(include)) minus union(exclude)``.

    An empty ``include`` list means the whole of Q is navigable.
    """

    kind = "masked-uniform"

    def __init__(
        self,
        cfg: SceneConfig,
        include: Sequence[dict] = (),
        exclude: Sequence[dict] = (),
        name: str | None = None,
    ):
        super().__init__(cfg, name)
        self.include = [dict(s) for s in include]
        self.exclude = [dict(s) for s in exclude]
        quad = annular_sector(cfg.rho, cfg.r_max, 0.0, HALF_PI)
        region = shapely.union_all([shape_from_dict(s) for s in include]) if include else quad
        if exclude:
            region = region.difference(shapely.union_all([shape_from_dict(s) for s in exclude]))
        self.region = region
        shapely.prepare(self.region)
        self.z = float(region.intersection(quad).area)
        if not self.z > 0:
            raise ValueError(f"density {self.name!r} has no navigable area inside Q")
        self.bound = 1.0 / self.z
        self._accept_rate = self.z / cfg.area

    def _raw(self, r, theta):
        return shapely.contains_xy(self.region, r * np.cos(theta), r * np.sin(theta)).astype(float)

    def params(self) -> dict:
        return {"include": self.include, "exclude": self.exclude}


class GaussianMixtureDensity(SpatialDensity):
    """Isotropic Gaussian hotspots truncated to Q.

    ``components`` holds ``(x, y, sigma, weight)`` with Cartesian centres in
    metres.  An optional ``floor`` adds a uniform background of that raw
    intensity (m^-2 before normalisation).
    """

    kind = "gaussian-mixture"

    def __init__(
        self,
        cfg: SceneConfig,
        components: Sequence[Sequence[float]],
        floor: float = 0.0,
        name: str | None = None,
    ):
        super().__init__(cfg, name)
        comp = np.asarray(components, dtype=float).reshape(-1, 4)
        if np.any(comp[:, 2] <= 0) or np.any(comp[:, 3] < 0):
            raise ValueError("sigma must be > 0 and weights >= 0")
        self.components = comp
        self.floor = float(floor)
        self._finish()
        self._accept_rate = 1.0 / (self.bound * cfg.area)

    def _raw(self, r, theta):
        x = (r * np.cos(theta))[..., None]
        y = (r * np.sin(theta))[..., None]
        cx, cy, s, w = self.components.T
        g = w / (2 * np.pi * s**2) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s**2))
        return g.sum(axis=-1) + self.floor

    def _raw_bound(self) -> float:
        cx, cy, s, w = self.components.T
        return float(np.sum(w / (2 * np.pi * s**2)) + self.floor)

    def params(self) -> dict:
        return {"components": self.components.tolist(), "floor": self.floor}


class RasterGridDensity(SpatialDensity):
    """Cartesian raster of non-negative cell intensities.

    ``values[iy, ix]`` is the intensity of the cell whose centre is at
    ``(x0 + (ix + 0.5) dx, y0 + (iy + 0.5) dy)``.  Values are bilinearly
    interpolated between cell centres, held constant in the half-cell border
    and zero outside the raster.
    """

    kind = "raster-grid"

    def __init__(
        self,
        cfg: SceneConfig,
        values: NDArray,
        x0: float,
        y0: float,
        dx: float,
        dy: float,
        name: str | None = None,
    ):
        super().__init__(cfg, name)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 2 or np.any(self.values < 0):
            raise ValueError("raster values must be a non-negative 2-D table")
        self.x0, self.y0, self.dx, self.dy = float(x0), float(y0), float(dx), float(dy)
        self._finish()
        self._accept_rate = 1.0 / (self.bound * cfg.area)

    def _raw(self, r, theta):
        ny, nx = self.values.shape
        x = r * np.cos(theta)
        y = r * np.sin(theta)
        inside = (
            (x >= self.x0) & (x <= self.x0 + nx * self.dx) & (y >= self.y0) & (y <= self.y0 + ny * self.dy)
        )
        fx = np.clip((x - self.x0) / self.dx - 0.5, 0, nx - 1)
        fy = np.clip((y - self.y0) / self.dy - 0.5, 0, ny - 1)
        ix = np.minimum(fx.astype(int), max(nx - 2, 0))
        iy = np.minimum(fy.astype(int), max(ny - 2, 0))
        ax = fx - ix if nx > 1 else np.zeros_like(fx)
        ay = fy - iy if ny > 1 else np.zeros_like(fy)
        ix1 = np.minimum(ix + 1, nx - 1)
        iy1 = np.minimum(iy + 1, ny - 1)
        v = self.values
        out = (
            v[iy, ix] * (1 - ax) * (1 - ay)
            + v[iy, ix1] * ax * (1 - ay)
            + v[iy1, ix] * (1 - ax) * ay
            + v[iy1, ix1] * ax * ay
        )
        return np.where(inside, out, 0.0)

    def _raw_bound(self) -> float:
        return float(self.values.max())

    def params(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "dx": self.dx, "dy": self.dy, "values": self.values.tolist()}


def read_raster_csv(path: str | Path) -> NDArray[np.float64]:
    """Read a row-major cell table; the first CSV row is ``iy = 0``."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    return np.array(rows)


def density_from_dict(spec: dict, base_dir: str | Path | None = None) -> SpatialDensity:
    """Build a density from the JSON schema ``{kind, params, scene:{rho, r_max}}``."""
    try:
        kind = spec["kind"]
        scene = spec.get("scene", {})
        params = spec.get("params", {})
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed density spec: {exc}") from None
    cfg = SceneConfig(rho=float(scene.get("rho", 0.25)), r_max=float(scene.get("r_max", 14.5)))
    name = spec.get("name")
    if kind == "uniform":
        return UniformDensity(cfg, name)
    if kind == "masked-uniform":
        return MaskedUniformDensity(cfg, params.get("include", ()), params.get("exclude", ()), name)
    if kind == "gaussian-mixture":
        return GaussianMixtureDensity(cfg, params["components"], params.get("floor", 0.0), name)
    if kind == "raster-grid":
        values = params.get("values")
        if values is None:
            csv_path = Path(params["csv"])
            if base_dir is not None and not csv_path.is_absolute():
                csv_path = Path(base_dir) / csv_path
            values = read_raster_csv(csv_path)
        return RasterGridDensity(cfg, values, params["x0"], params["y0"], params["dx"], params["dy"], name)
    raise ValueError(f"unknown density kind {kind!r}")


def load_density(path: str | Path) -> SpatialDensity:
    path = Path(path)
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    spec.setdefault("name", path.stem)
    return density_from_dict(spec, base_dir=path.parent)


DATA_DIR = Path(__file__).parent / "data" / "densities"
CANONICAL = ("plaza", "arcade", "horseshoe", "twin_hotspots", "three_hotspots")


def canonical_suite() -> list[SpatialDensity]:
    """The five shipped non-uniform test densities, in fixed order."""
    return [load_density(DATA_DIR / f"{name}.json") for name in CANONICAL]


@dataclass(frozen=True, eq=False)
class SobolCloud:
    """Area-uniform unscrambled Sobol points over Q with cached intervals."""

    cfg: SceneConfig
    m: int
    r: NDArray[np.float64]
    theta: NDArray[np.float64]
    lo: NDArray[np.float64]
    hi: NDArray[np.float64]

    @property
    def size(self) -> int:
        return int(self.r.size)

    @property
    def weight(self) -> float:
        return self.cfg.area / self.size


def sobol_unit(m: int) -> NDArray[np.float64]:
    return qmc.Sobol(d=2, scramble=False).random_base2(m)


def build_sobol_cloud(cfg: SceneConfig, m: int = 14) -> SobolCloud:
    """Map ``2**m`` Sobol points to Q with ``r = sqrt(rho^2 + u1 (r_max^2 - rho^2))``."""
    if not 8 <= m <= 22:
        raise ValueError(f"sobol exponent m={m} outside [8, 22]")
    u = sobol_unit(m)
    r = np.sqrt(cfg.rho**2 + u[:, 0] * (cfg.r_max**2 - cfg.rho**2))
    theta = u[:, 1] * HALF_PI
    lo, hi = intervals(r, theta, cfg.rho)
    for a in (r, theta, lo, hi):
        a.flags.writeable = False
    return SobolCloud(cfg, m, r, theta, lo, hi)


def qmc_integrate(cloud: SobolCloud, f: Callable | NDArray) -> float:
    """``(|Q| / |S|) * sum_i f(x_i)``; ``f`` is a callable of ``(r, theta)`` or precomputed values."""
    values = f(cloud.r, cloud.theta) if callable(f) else np.asarray(f)
    return float(cloud.weight * np.sum(values))
