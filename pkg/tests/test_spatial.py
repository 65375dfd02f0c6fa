import json
import math

import numpy as np
import pytest
from scipy import stats

from crowdsize.geometry import SceneConfig
from crowdsize.spatial import (
    CANONICAL,
    GaussianMixtureDensity,
    MaskedUniformDensity,
    RasterGridDensity,
    SamplingError,
    UniformDensity,
    build_sobol_cloud,
    density_from_dict,
    load_density,
    qmc_integrate,
    sobol_unit,
)


def cartesian_mass(density, n=2000):
    """Independent normaliser check on a Cartesian midpoint grid."""
    cfg = density.cfg
    h = cfg.r_max / n
    c = (np.arange(n) + 0.5) * h
    x, y = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(x, y)
    t = np.arctan2(y, x)
    return float(density(r, t).sum() * h * h)


def test_uniform_value(cfg, uniform):
    assert uniform.density_at(3.0, 0.4) == pytest.approx(0.00605763684679233, rel=1e-12)
    assert uniform.density_at(3.0, 0.4) == pytest.approx(1 / (math.pi / 4 * (14.5**2 - 0.25**2)), rel=1e-12)


def test_zero_outside_q(uniform, suite):
    for d in [uniform, *suite]:
        assert d.density_at(0.1, 0.5) == 0.0
        assert d.density_at(15.0, 0.5) == 0.0
        assert d.density_at(5.0, -0.1) == 0.0
        assert d.density_at(5.0, math.pi / 2 + 0.1) == 0.0


def test_masked_exclusion(suite):
    arcade = {d.name: d for d in suite}["arcade"]
    # centre of the excluded block
    assert arcade.density_at(math.hypot(7.25, 7.25), math.pi / 4) == 0.0
    assert arcade.density_at(10.0, 0.3) == pytest.approx(1 / arcade.z)


@pytest.mark.parametrize("name", CANONICAL)
def test_canonical_normalised(suite, name):
    d = {d.name: d for d in suite}[name]
    assert cartesian_mass(d) == pytest.approx(1.0, abs=5e-3)


def test_mixture_bound_dominates_grid_max(suite):
    for d in suite:
        if isinstance(d, GaussianMixtureDensity):
            r = np.linspace(d.cfg.rho, d.cfg.r_max, 600)
            t = np.linspace(0, math.pi / 2, 600)
            rr, tt = np.meshgrid(r, t)
            assert d(rr, tt).max() <= d.bound


def test_uniform_sampling_chi_square(cfg, uniform):
    rng = np.random.default_rng(1)
    r, t = uniform.sample(40_000, rng)
    assert np.all(cfg.contains(r, t))
    # r^2 and theta are uniform under the area measure
    u = (r**2 - cfg.rho**2) / (cfg.r_max**2 - cfg.rho**2)
    v = t / (math.pi / 2)
    cells = np.minimum((u * 8).astype(int), 7) * 8 + np.minimum((v * 8).astype(int), 7)
    obs = np.bincount(cells, minlength=64)
    assert stats.chisquare(obs).pvalue > 1e-3


def test_masked_samples_inside_region(suite):
    rng = np.random.default_rng(2)
    for d in suite:
        if isinstance(d, MaskedUniformDensity):
            r, t = d.sample(5000, rng)
            assert np.all(d(r, t) > 0)


def test_mixture_sample_mean(suite):
    d = {d.name: d for d in suite}["twin_hotspots"]
    rng = np.random.default_rng(3)
    r, t = d.sample(60_000, rng)
    x = r * np.cos(t)
    n = 1500
    h = d.cfg.r_max / n
    c = (np.arange(n) + 0.5) * h
    gx, gy = np.meshgrid(c, c, indexing="ij")
    p = d(np.hypot(gx, gy), np.arctan2(gy, gx)) * h * h
    want = float((gx * p).sum() / p.sum())
    assert x.mean() == pytest.approx(want, abs=4 * x.std() / math.sqrt(x.size))


def test_sampling_error():
    with pytest.raises(SamplingError):
        UniformDensity(SceneConfig()).sample(10, np.random.default_rng(0), max_iter=0)
    with pytest.raises(ValueError):
        UniformDensity(SceneConfig()).sample(0, np.random.default_rng(0))


def test_sobol_deterministic():
    u = sobol_unit(2)
    np.testing.assert_array_equal(u, [[0, 0], [0.5, 0.5], [0.75, 0.25], [0.25, 0.75]])
    np.testing.assert_array_equal(sobol_unit(10), sobol_unit(10))


def test_cloud_in_q(cfg, cloud14):
    assert cloud14.size == 2**14
    assert np.all(cfg.contains(cloud14.r, cloud14.theta))
    assert cloud14.weight == pytest.approx(cfg.area / 2**14)
    with pytest.raises(ValueError):
        build_sobol_cloud(cfg, 7)
    with pytest.raises(ValueError):
        build_sobol_cloud(cfg, 23)


def test_qmc_integrates_area(cfg, cloud14):
    assert qmc_integrate(cloud14, np.ones(cloud14.size)) == pytest.approx(cfg.area)
    # fraction of Q with r < 7: exact annulus ratio
    frac = qmc_integrate(cloud14, lambda r, t: (r < 7).astype(float)) / cfg.area
    assert frac == pytest.approx((49 - cfg.rho**2) / (cfg.r_max**2 - cfg.rho**2), abs=2e-3)


@pytest.mark.parametrize("name", CANONICAL)
def test_qmc_mass_per_density(suite, cloud14, name):
    d = {d.name: d for d in suite}[name]
    assert qmc_integrate(cloud14, d) == pytest.approx(1.0, abs=1e-3)


def test_raster_interpolation(tmp_path):
    (tmp_path / "grid.csv").write_text("# header\n1,1,1\n1,3,1\n1,1,1\n")
    spec = {
        "kind": "raster-grid",
        "params": {"csv": "grid.csv", "x0": 2.0, "y0": 2.0, "dx": 2.0, "dy": 2.0},
        "scene": {"rho": 0.25, "r_max": 14.5},
    }
    (tmp_path / "d.json").write_text(json.dumps(spec))
    d = load_density(tmp_path / "d.json")
    assert isinstance(d, RasterGridDensity)
    assert d.name == "d"
    centre = d.density_at(math.hypot(5, 5), math.pi / 4)
    half = d.density_at(math.hypot(6, 5), math.atan2(5, 6))
    assert half / centre == pytest.approx(2 / 3)
    assert d.density_at(math.hypot(12, 12) - 0.1, math.pi / 4) == 0.0


def test_round_trip_dict(suite):
    for d in suite:
        back = density_from_dict(json.loads(json.dumps(d.to_dict())))
        r = np.linspace(0.3, 14, 50)
        t = np.linspace(0.01, 1.5, 50)
        np.testing.assert_allclose(back(r, t), d(r, t), rtol=1e-12)


def test_bad_json_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "kind": "uniform",\n  oops\n}')
    with pytest.raises(ValueError, match=r"broken.json:3:3"):
        load_density(p)
    with pytest.raises(ValueError, match="unknown density kind"):
        density_from_dict({"kind": "nope"})
