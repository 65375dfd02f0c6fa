"""
Randomised property suites for the occlusion geometry.

Each suite returns a plain dict ``{"samples", "counterexamples", "example",
"passed"}`` so reports serialise straight to JSON.  ``radial="any"`` drops
the nearer-blocker requirement when blockers are drawn; it exists to show
that the suites catch a broken radial predicate.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .geometry import EPS_ANG, CrowdRealization, SceneConfig, visible_agents

BATCH = 200_000


def _blocker_ranges(rng, r_a, k, cfg: SceneConfig, radial: str):
    u = rng.random((r_a.size, k))
    if radial == "nearer":
        return cfg.rho + u * (r_a[:, None] - cfg.rho)
    if radial == "any":
        return cfg.rho + u * (cfg.r_max - cfg.rho)
    raise ValueError(f"radial must be 'nearer' or 'any', got {radial!r}")


def _agents(rng, m, cfg: SceneConfig):
    # keep agents away from rho so nearer blockers exist
    r = cfg.rho + 0.5 + rng.random(m) * (cfg.r_max - cfg.rho - 0.5)
    t = rng.random(m) * (math.pi / 2)
    return r, t


def _report(samples: int, bad: int, example, **extra) -> dict:
    return {"samples": samples, "counterexamples": bad, "example": example, "passed": bad == 0, **extra}


def _contains(lo, hi, a, b):
    return (lo <= a + EPS_ANG) & (hi >= b - EPS_ANG)


def _chain(l1, h1, l2, h2, a, b):
    # [l1,h1] then [l2,h2] cover [a,b] left to right without a gap
    return (l1 <= a + EPS_ANG) & (h2 >= b - EPS_ANG) & (l2 <= h1 + EPS_ANG)


def _pair_covers(l1, h1, l2, h2, a, b):
    return _chain(l1, h1, l2, h2, a, b) | _chain(l2, h2, l1, h1, a, b)


def _union_covers(lo, hi, a, b):
    """Vectorised frontier sweep: does the union of the rows' intervals cover ``[a, b]``?"""
    order = np.argsort(lo, axis=1)
    lo = np.take_along_axis(lo, order, axis=1)
    hi = np.take_along_axis(hi, order, axis=1)
    frontier = a.copy()
    ok = np.ones(a.size, dtype=bool)
    for j in range(lo.shape[1]):
        gap = (lo[:, j] > frontier + EPS_ANG) & (frontier < b - EPS_ANG)
        ok &= ~gap
        frontier = np.where(ok, np.maximum(frontier, hi[:, j]), frontier)
    return ok & (frontier >= b - EPS_ANG)


def lemma1_suite(samples: int, rng: np.random.Generator) -> dict:
    """Disjoint blocker intervals never produce a simultaneous 2-blockage."""
    bad = 0
    example = None
    done = 0
    while done < samples:
        m = min(BATCH, samples - done)
        c = rng.random((3, m)) * 2.0
        w = rng.random((3, m)) * 0.6
        lo, hi = c - w, c + w
        a, b = lo[0], hi[0]
        disjoint = (hi[1] < lo[2]) | (hi[2] < lo[1])
        single = _contains(lo[1], hi[1], a, b) | _contains(lo[2], hi[2], a, b)
        sim2 = _pair_covers(lo[1], hi[1], lo[2], hi[2], a, b) & ~single
        hit = np.flatnonzero(disjoint & sim2)
        bad += hit.size
        if hit.size and example is None:
            i = hit[0]
            example = {"a": [lo[0, i], hi[0, i]], "b1": [lo[1, i], hi[1, i]], "b2": [lo[2, i], hi[2, i]]}
        done += m
    return _report(samples, bad, example)


def _near_blockers(rng, r_a, t_a, k, cfg, radial):
    """Blockers whose intervals touch the agent's interval."""
    rb = _blocker_ranges(rng, r_a, k, cfg, radial)
    h_a = np.arcsin(cfg.rho / r_a)[:, None]
    h_b = np.arcsin(cfg.rho / rb)
    tb = t_a[:, None] + (2 * rng.random(rb.shape) - 1) * (h_a + h_b)
    return rb, tb, h_b


def lemma2_suite(samples: int, rng: np.random.Generator, cfg: SceneConfig, radial: str = "nearer", k: int = 4) -> dict:
    """Same-side partial shadows are nested; the widest one alone accounts for their union."""
    bad = 0
    example = None
    done = 0
    while done < samples:
        m = min(BATCH, samples - done)
        r_a, t_a = _agents(rng, m, cfg)
        h_a = np.arcsin(cfg.rho / r_a)
        a, b = t_a - h_a, t_a + h_a
        rb, tb, h_b = _near_blockers(rng, r_a, t_a, k, cfg, radial)
        side = np.where(rng.random(m) < 0.5, -1.0, 1.0)[:, None]
        tb = t_a[:, None] + side * np.abs(tb - t_a[:, None])
        lo, hi = tb - h_b, tb + h_b
        g_lo = np.maximum(lo, a[:, None])
        g_hi = np.minimum(hi, b[:, None])
        complete = _contains(lo, hi, a[:, None], b[:, None])
        partial = (g_lo <= g_hi) & ~complete
        rows = np.flatnonzero(partial.sum(axis=1) >= 2)
        for i in rows:
            sel = np.flatnonzero(partial[i])
            gl, gh = g_lo[i, sel], g_hi[i, sel]
            order = np.argsort(-(gh - gl))
            gl, gh = gl[order], gh[order]
            nested = np.all(gl[1:] >= gl[0] - EPS_ANG) and np.all(gh[1:] <= gh[0] + EPS_ANG)
            if not nested:
                bad += 1
                if example is None:
                    example = {
                        "agent": [float(r_a[i]), float(t_a[i])],
                        "blockers": [[float(rb[i, j]), float(tb[i, j])] for j in sel],
                    }
        done += m
    return _report(samples, bad, example)


def k_blockage_suite(
    samples: int, rng: np.random.Generator, cfg: SceneConfig, k: int = 3, radial: str = "nearer"
) -> dict:
    """No ``k`` blockers cover an agent unless some smaller subset already does."""
    bad = 0
    covered = 0
    example = None
    done = 0
    while done < samples:
        m = min(BATCH, samples - done)
        r_a, t_a = _agents(rng, m, cfg)
        h_a = np.arcsin(cfg.rho / r_a)
        a, b = t_a - h_a, t_a + h_a
        rb, tb, h_b = _near_blockers(rng, r_a, t_a, k, cfg, radial)
        lo, hi = tb - h_b, tb + h_b
        full = _union_covers(lo, hi, a, b)
        covered += int(full.sum())
        smaller = np.zeros(m, dtype=bool)
        for sub in itertools.combinations(range(k), k - 1):
            smaller |= _union_covers(lo[:, sub], hi[:, sub], a, b)
        hit = np.flatnonzero(full & ~smaller)
        bad += hit.size
        if hit.size and example is None:
            i = hit[0]
            example = {
                "agent": [float(r_a[i]), float(t_a[i])],
                "blockers": [[float(rb[i, j]), float(tb[i, j])] for j in range(k)],
            }
        done += m
    return _report(samples, bad, example, covered=covered)


def uncovered_measure(a: tuple[float, float], blockers) -> float:
    """Length of ``a`` left after subtracting each blocker interval in turn."""
    pieces = [a]
    for lo, hi in blockers:
        nxt = []
        for p0, p1 in pieces:
            if hi <= p0 or lo >= p1:
                nxt.append((p0, p1))
                continue
            if lo > p0:
                nxt.append((p0, lo))
            if hi < p1:
                nxt.append((hi, p1))
        pieces = nxt
    return sum(p1 - p0 for p0, p1 in pieces)


def brute_force_visible(r, theta, rho: float, tol: float = 1e-12) -> set[int]:
    """Visible set by exhaustive search over every subset of nearer blockers.

    An agent is hidden if a single nearer blocker contains it, a nearer pair
    chains over it, or some subset leaves at most ``tol`` of its interval
    uncovered.  Exponential in crowd size; meant for ``N <= 10``.
    """
    n = len(r)
    ivs = [(t - math.asin(rho / rr), t + math.asin(rho / rr)) for rr, t in zip(r, theta)]
    visible = set()
    for i in range(n):
        a = ivs[i]
        nearer = [ivs[j] for j in range(n) if r[j] < r[i]]
        hidden = any(lo <= a[0] + EPS_ANG and a[1] <= hi + EPS_ANG for lo, hi in nearer)
        if not hidden:
            hidden = any(
                l1 <= a[0] + EPS_ANG and h2 >= a[1] - EPS_ANG and l2 <= h1 + EPS_ANG
                for (l1, h1), (l2, h2) in itertools.permutations(nearer, 2)
            )
        k = 3
        while not hidden and k <= len(nearer):
            hidden = any(uncovered_measure(a, sub) <= tol for sub in itertools.combinations(nearer, k))
            k += 1
        if not hidden:
            visible.add(i)
    return visible


def clustered_crowd(rng: np.random.Generator, n: int, cfg: SceneConfig) -> CrowdRealization:
    """A crowd packed into a small wedge so that occlusions are frequent."""
    r = cfg.rho + 0.3 + rng.random(n) * 4.0
    t = 0.6 + rng.random(n) * 0.3
    return CrowdRealization(r, t)


def equivalence_suite(crowds: int, rng: np.random.Generator, cfg: SceneConfig, n_max: int = 10) -> dict:
    """Sweep-based visibility equals the brute-force oracle on small crowds."""
    bad = 0
    example = None
    for k in range(crowds):
        crowd = clustered_crowd(rng, 1 + k % n_max, cfg)
        got = visible_agents(crowd, cfg)
        want = brute_force_visible(crowd.r, crowd.theta, cfg.rho)
        if got != want:
            bad += 1
            if example is None:
                example = {"r": crowd.r.tolist(), "theta": crowd.theta.tolist(), "sweep": sorted(got), "oracle": sorted(want)}
    return _report(crowds, bad, example)


def run_all(samples: int, seed: int = 0, cfg: SceneConfig | None = None, radial: str = "nearer") -> dict:
    """Run every suite; ``samples`` sets the randomised suites, a thousandth of it the crowd count."""
    cfg = cfg or SceneConfig()
    if samples <= 0:
        return {}
    rng = np.random.default_rng(seed)
    report = {
        "lemma1": lemma1_suite(samples, rng),
        "lemma2": lemma2_suite(samples, rng, cfg, radial),
        "three_blockage": k_blockage_suite(samples, rng, cfg, 3, radial),
        "four_blockage": k_blockage_suite(max(1, samples // 10), rng, cfg, 4, radial),
        "visible_equivalence": equivalence_suite(max(1, samples // 1000), rng, cfg),
    }
    return report
