import math

import numpy as np
import pytest

from landergnc.terrain import (HazardMap, SfdConfig, TerrainModel,
                               compute_hazard_map, crater_bin_edges,
                               elevation_at, expected_bin_counts,
                               generate_terrain, load_terrain, save_terrain,
                               spiral_search)


def flat_model(size=401, res=0.05, value=0.0):
    return TerrainModel(grid=np.full((size, size), float(value)),
                        res_m=res, origin_e_m=-(size - 1) / 2 * res,
                        origin_n_m=-(size - 1) / 2 * res, seed=0,
                        sfd=SfdConfig(), craters=np.zeros((0, 4)),
                        boulders=np.zeros((0, 4)))


def test_generation_deterministic_per_seed():
    a = generate_terrain(7, 500.0, raster_res_m=0.5)
    b = generate_terrain(7, 500.0, raster_res_m=0.5)
    assert np.array_equal(a.craters, b.craters)
    assert np.array_equal(a.boulders, b.boulders)
    ma = a.rasterize(0, 0, 20, 0.1)
    mb = b.rasterize(0, 0, 20, 0.1)
    assert np.array_equal(ma.grid, mb.grid)
    c = generate_terrain(8, 500.0, raster_res_m=0.5)
    assert not np.array_equal(a.craters, c.craters)


def test_crater_counts_match_sfd_poisson_3sigma():
    """100 seeds: per-bin totals within 3 sigma of the configured SFD."""
    sfd = SfdConfig(crater_d_max_m=8000.0)
    extent = 1000.0
    area = (2 * extent) ** 2 / 1e6
    lam = expected_bin_counts(sfd, area)
    edges = crater_bin_edges(sfd)
    n_seeds = 100
    totals = np.zeros(lam.size)
    for s in range(n_seeds):
        f = generate_terrain(s, extent, sfd=sfd, raster_res_m=0.5,
                             base_relief=False)
        idx = np.clip(np.searchsorted(edges, f.craters[:, 2], side="right") - 1,
                      0, lam.size - 1)
        for i in idx:
            totals[i] += 1
    expect = lam * n_seeds
    sigma = np.sqrt(np.maximum(expect, 1e-12))
    # only statistically meaningful bins (small-count tail is pure Poisson noise)
    mask = expect > 5
    assert mask.sum() >= 6
    assert np.all(np.abs(totals[mask] - expect[mask]) <= 3.0 * sigma[mask])


def test_zero_density_gives_flat_terrain():
    sfd = SfdConfig(crater_k_per_km2=0.0, boulder_k_per_km2=0.0,
                    boulder_small_extension=False)
    f = generate_terrain(3, 500.0, sfd=sfd, base_relief=False)
    assert f.craters.shape[0] == 0
    assert f.boulders.shape[0] == 0
    m = f.rasterize(0, 0, 50, 0.1)
    assert np.allclose(m.grid, 0.0)


def test_boulder_min_diameter_without_extension():
    sfd = SfdConfig(boulder_small_extension=False)
    f = generate_terrain(5, 800.0, sfd=sfd, raster_res_m=0.5)
    assert f.boulders.shape[0] > 0
    assert np.all(f.boulders[:, 2] >= sfd.boulder_d_min_m)


def test_infeasible_bins_skipped_with_warning():
    with pytest.warns(UserWarning):
        f = generate_terrain(2, 300.0, raster_res_m=5.0)
    assert len(f.warnings) > 0
    if f.craters.shape[0]:
        assert np.all(f.craters[:, 2] >= 10.0)  # 2 px at 5 m/px


def test_elevation_scalar_matches_raster_nodes():
    f = generate_terrain(11, 300.0, raster_res_m=0.5)
    m = f.rasterize(5.0, -3.0, 30.0, 0.5)
    for j, i in [(0, 0), (10, 17), (40, 55)]:
        e = m.origin_e_m + i * m.res_m
        n = m.origin_n_m + j * m.res_m
        assert f.elevation(e, n) == pytest.approx(m.grid[j, i], abs=1e-9)


# elevation_at (gridded bilinear) -------------------------------------------

def test_elevation_at_grid_node():
    m = flat_model()
    m.grid[20, 30] = 2.5
    e = m.origin_e_m + 30 * m.res_m
    n = m.origin_n_m + 20 * m.res_m
    assert elevation_at(m, e, n) == pytest.approx(2.5)


def test_elevation_at_flat_everywhere():
    m = flat_model(value=-1.25)
    rng = np.random.default_rng(0)
    for _ in range(20):
        e, n = rng.uniform(-9, 9, 2)
        assert elevation_at(m, e, n) == pytest.approx(-1.25)


def test_elevation_at_reproduces_plane():
    m = flat_model(size=101, res=0.1)
    a, b, c = 0.3, -0.7, 1.1
    for j in range(101):
        for i in range(101):
            e = m.origin_e_m + i * 0.1
            n = m.origin_n_m + j * 0.1
            m.grid[j, i] = a * e + b * n + c
    rng = np.random.default_rng(1)
    for _ in range(50):
        e, n = rng.uniform(-4.9, 4.9, 2)
        assert elevation_at(m, e, n) == pytest.approx(a * e + b * n + c, abs=1e-12)


def test_elevation_at_clamps_outside():
    m = flat_model(size=11, res=1.0, value=3.0)
    assert elevation_at(m, 100.0, 100.0) == pytest.approx(3.0)
    assert not m.contains(100.0, 100.0)


# hazard map ------------------------------------------------------------------

def test_flat_plane_interior_safe():
    m = flat_model()
    h = compute_hazard_map(m)
    n = int(round(h.footprint_radius_m / h.res_m)) + 2
    assert not h.hazard[n:-n, n:-n].any()


def test_uniform_15deg_slope_all_hazardous():
    m = flat_model(size=201, res=0.1)
    slope = math.tan(math.radians(15.0))
    for i in range(201):
        m.grid[:, i] = slope * (m.origin_e_m + i * 0.1)
    h = compute_hazard_map(m, slope_threshold_deg=10.0)
    assert h.hazard.all()


def test_single_boulder_hazard_disk_radius():
    f = generate_terrain(0, 100.0, sfd=SfdConfig(
        crater_k_per_km2=0.0, boulder_k_per_km2=0.0,
        boulder_small_extension=False), base_relief=False)
    f.boulders = np.array([[0.0, 0.0, 3.0, 1.5]])
    m = f.rasterize(0, 0, 15.0, 0.05)
    fp = 1.5
    h = compute_hazard_map(m, footprint_radius_m=fp)
    jj, ii = np.where(h.hazard)
    e = h.origin_e_m + ii * h.res_m
    n = h.origin_n_m + jj * h.res_m
    r = np.hypot(e, n)
    interior = r < 12.0  # ignore the forced border band
    r_haz = r[interior]
    expect = 1.5 + fp  # boulder radius + footprint dilation
    assert r_haz.max() <= expect + 2.0 * fp  # kernel overlap tail
    assert r_haz.max() >= expect - 0.2
    # the disk core is solidly hazardous
    assert h.hazard[(np.hypot(*np.meshgrid(
        h.origin_e_m + np.arange(h.hazard.shape[1]) * h.res_m,
        h.origin_n_m + np.arange(h.hazard.shape[0]) * h.res_m)) < 1.4)].all()


def test_adding_crater_grows_hazard_set():
    rng = np.random.default_rng(4)
    for trial in range(5):
        f = generate_terrain(20 + trial, 200.0, raster_res_m=0.5)
        m0 = f.rasterize(0, 0, 25.0, 0.1)
        h0 = compute_hazard_map(m0)
        f2 = generate_terrain(20 + trial, 200.0, raster_res_m=0.5)
        new = np.array([[rng.uniform(-15, 15), rng.uniform(-15, 15), 6.0, 1.2]])
        f2.craters = np.vstack([f2.craters, new])
        h1 = compute_hazard_map(f2.rasterize(0, 0, 25.0, 0.1))
        assert np.all(h1.hazard | ~h0.hazard)  # h0 subset of h1


# spiral search ---------------------------------------------------------------

def empty_hazard(size=401, res=0.1):
    return HazardMap(hazard=np.zeros((size, size), dtype=bool), res_m=res,
                     origin_e_m=-(size - 1) / 2 * res,
                     origin_n_m=-(size - 1) / 2 * res,
                     footprint_radius_m=1.5)


def test_safe_nadir_costs_nothing():
    h = empty_hazard()
    spot = spiral_search(h, np.array([0.0, 0.0]))
    assert spot is not None
    assert spot.cost_m == pytest.approx(0.0, abs=h.res_m)
    assert np.allclose(spot.position_en_m, [0, 0], atol=h.res_m)


def test_safe_annulus_found_at_expected_distance():
    h = empty_hazard()
    jj, ii = np.mgrid[0:401, 0:401]
    e = h.origin_e_m + ii * h.res_m
    n = h.origin_n_m + jj * h.res_m
    r = np.hypot(e, n)
    h.hazard[r < 8.0] = True
    spot = spiral_search(h, np.array([0.0, 0.0]))
    assert spot is not None
    assert abs(spot.cost_m - 8.0) <= 1.5 * h.res_m


def test_fully_hazardous_returns_none():
    h = empty_hazard(size=101)
    h.hazard[:] = True
    assert spiral_search(h, np.array([0.0, 0.0])) is None


def test_divert_cap_respected():
    h = empty_hazard(size=601)
    h.hazard[:] = True
    # lone safe cell 25 m east: outside the 20 m budget
    j = 300
    i = int(round((25.0 - h.origin_e_m) / h.res_m))
    h.hazard[j, i] = False
    assert spiral_search(h, np.array([0.0, 0.0]), max_divert_m=20.0) is None


def test_spiral_matches_brute_force_on_random_maps():
    rng = np.random.default_rng(9)
    for _ in range(300):
        size = 181
        res = 0.25
        h = HazardMap(hazard=rng.random((size, size)) < 0.6, res_m=res,
                      origin_e_m=-22.5, origin_n_m=-22.5,
                      footprint_radius_m=1.0)
        nadir = rng.uniform(-5, 5, 2)
        spot = spiral_search(h, nadir, max_divert_m=20.0)
        # brute force over every cell
        jj, ii = np.mgrid[0:size, 0:size]
        e = h.origin_e_m + ii * res
        n = h.origin_n_m + jj * res
        d = np.hypot(e - nadir[0], n - nadir[1])
        ok = (~h.hazard) & (d <= 20.0)
        if not ok.any():
            assert spot is None
            continue
        dmin = d[ok].min()
        assert spot is not None
        assert spot.cost_m == pytest.approx(dmin, abs=1e-12)
        bj, bi = np.argwhere(ok & (d == dmin))[0]
        # exact cell match under the lexicographic tie-break
        flat_ok = np.where(ok.ravel())[0]
        order = np.lexsort((flat_ok, d.ravel()[flat_ok]))
        bj, bi = divmod(flat_ok[order[0]], size)
        assert np.allclose(spot.position_en_m,
                           [h.origin_e_m + bi * res, h.origin_n_m + bj * res],
                           atol=1e-12)


def test_save_load_roundtrip(tmp_path):
    f = generate_terrain(13, 200.0, raster_res_m=0.5)
    m = f.rasterize(0, 0, 10.0, 0.1)
    prefix = str(tmp_path / "site")
    save_terrain(m, prefix)
    m2 = load_terrain(prefix)
    assert m2.res_m == m.res_m
    assert np.allclose(m2.grid, m.grid, atol=1e-4)  # float32 on disk
