"""Crowd-size inference by KL matching of visible-count distributions."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import xlogy
from scipy.stats import binom

from .model import VisibilityCurve


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class VisiblePmf:
    """Distribution of the visible count ``N_v`` over ``0..len(mass)-1``.

    ``provenance`` is ``"analytical"`` (``n`` = crowd size) or
    ``"empirical"`` (``n`` = number of observations).
    """

    mass: NDArray[np.float64]
    provenance: str
    n: int

    def __post_init__(self) -> None:
        m = np.asarray(self.mass, dtype=float)
        if m.ndim != 1 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
            raise ValueError("mass must be a non-negative vector summing to 1")
        m.flags.writeable = False
        object.__setattr__(self, "mass", m)

    @property
    def support_max(self) -> int:
        return self.mass.size - 1

    def padded(self, size: int) -> NDArray[np.float64]:
        if size < self.mass.size:
            if np.any(self.mass[size:] > 0):
                raise ValueError(f"cannot truncate a PMF with mass beyond N_v={size - 1}")
            return self.mass[:size]
        return np.pad(self.mass, (0, size - self.mass.size))

    def mean(self) -> float:
        return float(np.dot(np.arange(self.mass.size), self.mass))

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "n": self.n, "mass": self.mass.tolist()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mass"])
        for k, p in enumerate(self.mass):
            w.writerow([k, repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, provenance: str = "empirical", n: int = 0) -> VisiblePmf:
        rows = list(csv.DictReader(io.StringIO(text)))
        mass = np.zeros(max(int(r["n"]) for r in rows) + 1)
        for r in rows:
            mass[int(r["n"])] = float(r["mass"])
        return cls(mass, provenance, n)

    @classmethod
    def from_dict(cls, d: dict) -> VisiblePmf:
        return cls(np.array(d["mass"], dtype=float), d["provenance"], int(d["n"]))


def analytical_pmf(n: int, p_visible: float) -> VisiblePmf:
    """Binomial(n, p_visible) law of the visible count."""
    if n < 1 or not 0.0 <= p_visible <= 1.0:
        raise ValueError(f"need n >= 1 and p in [0, 1], got n={n}, p={p_visible}")
    k = np.arange(n + 1)
    mass = np.exp(binom.logpmf(k, n, p_visible))
    return VisiblePmf(mass / mass.sum(), "analytical", n)


def empirical_pmf(counts: Sequence[int] | NDArray, n_max: int) -> VisiblePmf:
    """Normalised histogram of observed visible counts over ``0..n_max``."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("no observations")
    if counts.min() < 0 or counts.max() > n_max:
        raise ValueError(f"observation outside [0, {n_max}]: min={counts.min()}, max={counts.max()}")
    hist = np.bincount(counts.astype(np.int64), minlength=n_max + 1).astype(float)
    return VisiblePmf(hist / counts.size, "empirical", int(counts.size))


def kl_divergence(pe: VisiblePmf, pa: VisiblePmf) -> float:
    """``D_KL(pe || pa)`` in nats; ``inf`` when ``pe`` has mass where ``pa`` has none."""
    size = max(pe.mass.size, pa.mass.size)
    p = pe.padded(size)
    q = pa.padded(size)
    if np.any((p > 0) & (q == 0)):
        return math.inf
    live = p > 0
    return float(max(np.sum(xlogy(p[live], p[live]) - xlogy(p[live], q[live])), 0.0))


@dataclass(frozen=True)
class EstimationResult:
    n_star: int
    kl_by_n: dict[int, float] = field(repr=False)

    @property
    def candidates(self) -> list[int]:
        return sorted(self.kl_by_n)

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "kl_by_n": {str(n): (v if math.isfinite(v) else "inf") for n, v in sorted(self.kl_by_n.items())},
        }


def estimate_crowd_size(pe: VisiblePmf, curve: VisibilityCurve, n_max: int | None = None) -> EstimationResult:
    """Candidate ``N`` in ``1..n_max`` whose binomial model is KL-closest to ``pe``.

    Ties go to the smaller ``N``.  Raises ``EstimationError`` if every
    candidate has infinite divergence.
    """
    n_max = curve.n_max if n_max is None else n_max
    if n_max > curve.n_max:
        raise ValueError(f"curve covers N <= {curve.n_max}, asked for n_max={n_max}")
    kl = {n: kl_divergence(pe, analytical_pmf(n, curve[n])) for n in range(1, n_max + 1)}
    best = min(kl, key=lambda n: (kl[n], n))
    if not math.isfinite(kl[best]):
        raise EstimationError(
            f"observed N_v up to {int(np.flatnonzero(pe.mass)[-1])} cannot be explained by any N <= {n_max}"
        )
    return EstimationResult(best, kl)


def dumps_result(result: EstimationResult) -> str:
    return json.dumps(result.to_dict(), indent=2)
