import json
import math

import numpy as np
import pytest
from scipy import stats

from crowdsize.estimator import (
    EstimationError,
    VisiblePmf,
    analytical_pmf,
    dumps_result,
    empirical_pmf,
    estimate_crowd_size,
    kl_divergence,
)
from crowdsize.model import VisibilityCurve, visibility_curve


def pmf(values):
    return VisiblePmf(np.array(values, dtype=float), "empirical", 1)


def test_analytical_examples():
    np.testing.assert_allclose(analytical_pmf(2, 0.5).mass, [0.25, 0.5, 0.25])
    np.testing.assert_array_equal(analytical_pmf(4, 1.0).mass, [0, 0, 0, 0, 1])
    assert analytical_pmf(30, 0.7).mean() == pytest.approx(21, abs=1e-9)
    with pytest.raises(ValueError):
        analytical_pmf(0, 0.5)
    with pytest.raises(ValueError):
        analytical_pmf(3, 1.5)


def test_empirical_examples():
    np.testing.assert_array_equal(empirical_pmf([3, 3, 3], 5).mass, [0, 0, 0, 1, 0, 0])
    np.testing.assert_array_equal(empirical_pmf([1, 2, 1, 2], 4).mass, [0, 0.5, 0.5, 0, 0])
    with pytest.raises(ValueError):
        empirical_pmf([1, 7], 5)
    with pytest.raises(ValueError):
        empirical_pmf([], 5)


def test_empirical_concentrates():
    draws = np.random.default_rng(0).binomial(20, 0.8, 10_000)
    pe = empirical_pmf(draws, 20)
    tv = 0.5 * np.abs(pe.mass - stats.binom.pmf(np.arange(21), 20, 0.8)).sum()
    assert tv < 0.03


def test_pmf_validation_and_csv():
    with pytest.raises(ValueError):
        pmf([0.5, 0.4])
    with pytest.raises(ValueError):
        pmf([1.5, -0.5])
    p = analytical_pmf(7, 0.6180339887498949)
    back = VisiblePmf.from_csv(p.to_csv(), "analytical", 7)
    np.testing.assert_array_equal(back.mass, p.mass)
    assert VisiblePmf.from_dict(json.loads(json.dumps(p.to_dict()))).mass.tolist() == p.mass.tolist()


def test_kl_examples():
    assert kl_divergence(pmf([0.5, 0.5]), pmf([0.25, 0.75])) == pytest.approx(0.14384103622589042, rel=1e-12)
    assert kl_divergence(pmf([0.5, 0.5]), pmf([0.25, 0.75])) == pytest.approx(
        0.5 * math.log(2) + 0.5 * math.log(2 / 3), rel=1e-12
    )
    p = analytical_pmf(9, 0.4)
    assert kl_divergence(p, p) == 0.0
    seven = pmf([0] * 7 + [1])
    assert kl_divergence(seven, analytical_pmf(5, 0.9)) == math.inf


def test_kl_nonnegative():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.dirichlet(np.ones(6))
        b = rng.dirichlet(np.ones(6))
        assert kl_divergence(pmf(a), pmf(b)) >= 0


def test_self_consistency(uniform_field):
    curve = visibility_curve(uniform_field, 30)
    for n in range(1, 31):
        assert estimate_crowd_size(analytical_pmf(n, curve[n]), curve).n_star == n


def test_single_agent():
    curve = VisibilityCurve(np.linspace(1.0, 0.7, 30))
    res = estimate_crowd_size(pmf([0, 1]), curve)
    assert res.n_star == 1
    assert res.candidates == list(range(1, 31))


def test_small_candidates_are_infinite():
    curve = VisibilityCurve(np.linspace(1.0, 0.7, 30))
    res = estimate_crowd_size(pmf([0] * 6 + [0.5, 0.5]), curve)
    assert all(math.isinf(res.kl_by_n[n]) for n in range(1, 7))
    assert res.n_star >= 7
    doc = json.loads(dumps_result(res))
    assert doc["kl_by_n"]["3"] == "inf"


def test_ties_go_to_smaller_n():
    curve = VisibilityCurve(np.zeros(10))
    assert estimate_crowd_size(pmf([1.0]), curve).n_star == 1


def test_unexplainable_observation():
    curve = VisibilityCurve(np.linspace(1.0, 0.9, 3))
    with pytest.raises(EstimationError):
        estimate_crowd_size(pmf([0] * 5 + [1]), curve)
    with pytest.raises(ValueError):
        estimate_crowd_size(pmf([0, 1]), curve, n_max=4)
