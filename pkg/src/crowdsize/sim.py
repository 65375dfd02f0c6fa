"""
Monte Carlo experiment engine.

Realization ``k`` of crowd size ``N`` draws its agent positions from its own
random stream seeded with ``(seed, N, k)``, so results never depend on how
realizations are split across workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .estimator import VisiblePmf, empirical_pmf, estimate_crowd_size
from .geometry import EPS_ANG, SceneConfig, audit_batch, count_visible_batch
from .model import BlockageField, VisibilityCurve, build_field, visibility_curve
from .spatial import SpatialDensity, UniformDensity, build_sobol_cloud

log = logging.getLogger(__name__)

CHUNK = 1000
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentSpec:
    density: SpatialDensity
    n_values: tuple[int, ...] = tuple(range(1, 31))
    realizations: int = 10_000
    n_max: int = 30
    seed: int = 0
    sobol_m: int = 14
    baseline: bool = True
    audit: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.n_values or min(self.n_values) < 1 or max(self.n_values) > self.n_max:
            raise ValueError(f"n_values must lie in [1, {self.n_max}]")
        if self.realizations < 1:
            raise ValueError("need at least one realization per N")

    @property
    def scene(self) -> SceneConfig:
        return self.density.cfg


def _sample_chunk(density: SpatialDensity, n: int, seed: int, start: int, stop: int):
    r = np.empty((stop - start, n))
    t = np.empty((stop - start, n))
    for row, k in enumerate(range(start, stop)):
        rng = np.random.default_rng([seed, n, k])
        r[row], t[row] = density.sample(n, rng)
    return r, t


def _count_chunk(args):
    density, n, seed, start, stop, audit = args
    r, t = _sample_chunk(density, n, seed, start, stop)
    counts = count_visible_batch(r, t, density.cfg.rho, EPS_ANG)
    unexplained = int(audit_batch(r, t, density.cfg.rho, EPS_ANG).sum()) if audit else 0
    return counts, unexplained


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def simulate(spec: ExperimentSpec, n: int, workers: int = 1, audit: bool = False) -> tuple[NDArray[np.int64], int]:
    """Visible counts for crowd size ``n`` plus the audit tally.

    The tally counts hidden agents that no single nearer blocker or
    overlapping nearer pair explains; it is 0 when ``audit`` is off.
    """
    if n < 1:
        raise ValueError("crowd size must be >= 1")
    jobs = [
        (spec.density, n, spec.seed, s, min(s + CHUNK, spec.realizations), audit)
        for s in range(0, spec.realizations, CHUNK)
    ]
    parts = _map(_count_chunk, jobs, workers)
    return np.concatenate([c for c, _ in parts]), sum(u for _, u in parts)


def simulate_counts(spec: ExperimentSpec, n: int, workers: int = 1) -> NDArray[np.int64]:
    """Visible counts of ``spec.realizations`` independent crowds of size ``n``."""
    return simulate(spec, n, workers)[0]


@dataclass
class NResult:
    true_n: int
    n_star: int
    n_star_baseline: int | None
    pmf: VisiblePmf
    kl: dict[int, float]
    kl_baseline: dict[int, float] | None
    visible_fraction: float
    model_visibility: float
    unexplained: int = 0

    @property
    def abs_err(self) -> int:
        return abs(self.n_star - self.true_n)

    @property
    def abs_err_baseline(self) -> int | None:
        return None if self.n_star_baseline is None else abs(self.n_star_baseline - self.true_n)


def _kl_json(kl: dict[int, float] | None):
    if kl is None:
        return None
    return {str(n): (v if math.isfinite(v) else "inf") for n, v in sorted(kl.items())}


@dataclass
class SweepResult:
    density: str
    seed: int
    realizations: int
    sobol_m: int
    rows: list[NResult] = field(default_factory=list)

    @property
    def mae(self) -> float:
        return float(np.mean([row.abs_err for row in self.rows]))

    @property
    def mae_baseline(self) -> float | None:
        errs = [row.abs_err_baseline for row in self.rows]
        return None if any(e is None for e in errs) else float(np.mean(errs))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "density": self.density,
            "seed": self.seed,
            "realizations": self.realizations,
            "sobol_m": self.sobol_m,
            "mae": self.mae,
            "mae_baseline": self.mae_baseline,
            "per_n": [
                {
                    "true_n": row.true_n,
                    "n_star": row.n_star,
                    "n_star_baseline": row.n_star_baseline,
                    "visible_fraction": row.visible_fraction,
                    "model_visibility": row.model_visibility,
                    "unexplained_blockages": row.unexplained,
                    "pmf": row.pmf.mass.tolist(),
                    "kl": _kl_json(row.kl),
                    "kl_baseline": _kl_json(row.kl_baseline),
                }
                for row in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def summary_rows(self) -> list[list]:
        return [
            [self.density, row.true_n, row.n_star, row.n_star_baseline, row.abs_err, row.abs_err_baseline]
            for row in self.rows
        ]

    def pmf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true_n", "n_v", "mass"])
        for row in self.rows:
            for k, p in enumerate(row.pmf.mass):
                w.writerow([row.true_n, k, repr(float(p))])
        return buf.getvalue()


SUMMARY_HEADER = ["density", "true_N", "n_star", "n_star_baseline", "abs_err", "abs_err_baseline"]


def summary_csv(results: Sequence[SweepResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for res in results:
        w.writerows(["" if v is None else v for v in row] for row in res.summary_rows())
    return buf.getvalue()


def field_for(
    density: SpatialDensity, sobol_m: int, workers: int = 1, cache_dir: str | Path | None = None
) -> BlockageField:
    """Build the blockage field, reusing ``<cache_dir>/<name>_m<m>.csv`` when it matches."""
    cloud = build_sobol_cloud(density.cfg, sobol_m)
    path = Path(cache_dir) / f"{density.name}_m{sobol_m}.csv" if cache_dir else None
    if path is not None and path.exists():
        try:
            return BlockageField.from_csv(path, density, cloud)
        except ValueError as exc:
            log.warning("ignoring stale cache: %s", exc)
    fld = build_field(density, cloud, workers=workers)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fld.to_csv(path)
    return fld


def run_sweep(
    spec: ExperimentSpec,
    workers: int = 1,
    curve: VisibilityCurve | None = None,
    baseline_curve: VisibilityCurve | None = None,
    cache_dir: str | Path | None = None,
) -> SweepResult:
    """Simulate, estimate and score every true ``N`` in ``spec.n_values``.

    Curves are built from the density (and a uniform density on the same
    scene for the baseline) unless supplied.
    """
    if curve is None:
        curve = visibility_curve(field_for(spec.density, spec.sobol_m, workers, cache_dir), spec.n_max)
    if spec.baseline and baseline_curve is None:
        uniform = UniformDensity(spec.scene, name="uniform")
        baseline_curve = visibility_curve(field_for(uniform, spec.sobol_m, workers, cache_dir), spec.n_max)
    result = SweepResult(spec.density.name, spec.seed, spec.realizations, spec.sobol_m)
    for n in spec.n_values:
        counts, unexplained = simulate(spec, n, workers, spec.audit)
        pe = empirical_pmf(counts, spec.n_max)
        est = estimate_crowd_size(pe, curve, spec.n_max)
        base = estimate_crowd_size(pe, baseline_curve, spec.n_max) if spec.baseline else None
        result.rows.append(
            NResult(
                true_n=n,
                n_star=est.n_star,
                n_star_baseline=None if base is None else base.n_star,
                pmf=pe,
                kl=est.kl_by_n,
                kl_baseline=None if base is None else base.kl_by_n,
                visible_fraction=float(counts.mean() / n),
                model_visibility=curve[n],
                unexplained=unexplained,
            )
        )
        log.info(
            "%s N=%d: N*=%d baseline=%s vis=%.4f model=%.4f",
            spec.density.name, n, est.n_star, None if base is None else base.n_star,
            counts.mean() / n, curve[n],
        )
    return result
