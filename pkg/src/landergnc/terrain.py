"""Synthetic lunar terrain, hazard maps, and safe-spot search.

Terrain truth is procedural: a smooth seeded base field that extends
over the whole descent ground track, plus crater and boulder
populations sampled from power-law size-frequency distributions inside
a detailed extent around the landing site.  Craters are parabolic bowls
with raised rims; boulders are spherical caps.  Everything is
deterministic in the seed.

Coordinates are site-local east/north meters.  Rasterized windows are
regular grids (``TerrainModel``) used for hazard mapping, ground
contact, and the on-disk format; point queries hit the procedural
field directly so the far field never needs to be gridded.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass
class SfdConfig:
    """Size-frequency distribution settings.

    Cumulative densities are per km^2: N(>D) = k * (D/D_ref)^slope.
    """

    crater_k_per_km2: float = 2000.0      # at D_ref = 1 m
    crater_slope: float = -2.0
    crater_d_min_m: float = 3.9
    crater_d_max_m: float = 8000.0
    crater_bins_per_decade: int = 4
    crater_depth_ratio: float = 0.2       # depth / diameter, fresh bowl
    crater_rim_ratio: float = 0.04        # rim height / diameter
    boulder_k_per_km2: float = 60.0       # at D_ref = 1.5 m
    boulder_slope: float = -4.0
    boulder_d_min_m: float = 1.5          # carpet distribution floor
    boulder_height_ratio: float = 0.5
    boulder_small_extension: bool = True  # extra small rocks near the site
    boulder_small_d_min_m: float = 0.4
    boulder_small_radius_m: float = 250.0


def crater_bin_edges(sfd: SfdConfig) -> np.ndarray:
    """Logarithmic diameter bin edges spanning the configured range."""
    n_dec = math.log10(sfd.crater_d_max_m / sfd.crater_d_min_m)
    n_bins = max(1, int(round(n_dec * sfd.crater_bins_per_decade)))
    return np.geomspace(sfd.crater_d_min_m, sfd.crater_d_max_m, n_bins + 1)


def expected_bin_counts(sfd: SfdConfig, area_km2: float) -> np.ndarray:
    """Expected crater count per log bin for a given area."""
    edges = crater_bin_edges(sfd)
    cum = sfd.crater_k_per_km2 * edges ** sfd.crater_slope
    return (cum[:-1] - cum[1:]) * area_km2


@dataclass
class TerrainField:
    """Procedural truth terrain around (and far from) the landing site."""

    seed: int
    extent_m: float                       # detailed half-extent for features
    sfd: SfdConfig
    base_amp_m: np.ndarray
    base_wavevec: np.ndarray              # (K, 2) rad/m
    base_phase: np.ndarray
    craters: np.ndarray                   # (Nc, 4) e, n, diameter, depth
    boulders: np.ndarray                  # (Nb, 4) e, n, diameter, height
    warnings: list = field(default_factory=list)

    def elevation(self, e, n):
        """Elevation (m) at site-local coordinates; vectorized.

        Intended for point and small-batch queries (sensor rays, ground
        contact spot checks); use :meth:`rasterize` for dense windows.
        """
        e = np.asarray(e, dtype=float)
        n = np.asarray(n, dtype=float)
        scalar = e.ndim == 0 and n.ndim == 0
        eb, nb = np.broadcast_arrays(e, n)
        z = self._base_only(eb, nb)
        qe0, qe1 = float(eb.min()), float(eb.max())
        qn0, qn1 = float(nb.min()), float(nb.max())
        reach = self.extent_m + 0.9 * (
            float(self.craters[:, 2].max()) if self.craters.size else 0.0)
        if (qe0 > reach or qe1 < -reach or qn0 > reach or qn1 < -reach):
            # far from the feature field: base relief only
            return float(z) if scalar else z
        for ce, cn, d, depth in self.craters:
            r_out = 0.9 * d
            if (ce + r_out < qe0 or ce - r_out > qe1
                    or cn + r_out < qn0 or cn - r_out > qn1):
                continue
            r = np.hypot(eb - ce, nb - cn)
            rad = 0.5 * d
            rim_h = self.sfd.crater_rim_ratio * d
            bowl = -depth + (depth + rim_h) * (r / rad) ** 2
            t = (r_out - r) / (r_out - rad)
            z = z + np.where(r <= rad, bowl,
                             np.where(r < r_out, rim_h * t * t, 0.0))
        for be, bn, d, h in self.boulders:
            rad = 0.5 * d
            if (be + rad < qe0 or be - rad > qe1
                    or bn + rad < qn0 or bn - rad > qn1):
                continue
            r2 = (eb - be) ** 2 + (nb - bn) ** 2
            cap = h * np.sqrt(np.maximum(1.0 - r2 / (rad * rad), 0.0))
            z = z + np.where(r2 < rad * rad, cap, 0.0)
        return float(z) if scalar else z

    @property
    def _base_offset(self) -> float:
        off = 0.0
        for i in range(self.base_amp_m.shape[0]):
            off += self.base_amp_m[i] * math.sin(self.base_phase[i])
        return off

    def rasterize(self, center_e: float, center_n: float, half_extent_m: float,
                  res_m: float) -> "TerrainModel":
        """Grid a window of the field (features applied vectorized)."""
        n_cells = int(round(2 * half_extent_m / res_m)) + 1
        e0 = center_e - half_extent_m
        n0 = center_n - half_extent_m
        es = e0 + np.arange(n_cells) * res_m
        ns = n0 + np.arange(n_cells) * res_m
        ee, nn = np.meshgrid(es, ns)   # grid[j, i] at (es[i], ns[j])
        z = self._base_only(ee, nn)
        craters_in = []
        for ce, cn, d, depth in self.craters:
            r_out = 0.9 * d
            if (ce + r_out < e0 or ce - r_out > es[-1]
                    or cn + r_out < n0 or cn - r_out > ns[-1]):
                continue
            craters_in.append((ce, cn, d, depth))
            _add_crater(z, es, ns, ce, cn, d, depth, self.sfd.crater_rim_ratio * d)
        boulders_in = []
        for be, bn, d, h in self.boulders:
            if (be + d < e0 or be - d > es[-1] or bn + d < n0 or bn - d > ns[-1]):
                continue
            boulders_in.append((be, bn, d, h))
            _add_boulder(z, es, ns, be, bn, d, h)
        return TerrainModel(
            grid=z, res_m=res_m, origin_e_m=e0, origin_n_m=n0,
            seed=self.seed, sfd=self.sfd,
            craters=np.array(craters_in).reshape(-1, 4),
            boulders=np.array(boulders_in).reshape(-1, 4))

    def _base_only(self, ee, nn):
        z = np.zeros_like(ee)
        for i in range(self.base_amp_m.shape[0]):
            z += self.base_amp_m[i] * np.sin(
                self.base_wavevec[i, 0] * ee + self.base_wavevec[i, 1] * nn
                + self.base_phase[i])
        return z - self._base_offset


def generate_terrain(seed: int, extent_m: float, sfd: SfdConfig = None,
                     raster_res_m: float = 0.05, base_relief: bool = True) -> TerrainField:
    """Sample a terrain field: Poisson counts per log-spaced crater bin,
    power-law boulders, seeded smooth base.

    Bins whose craters would span fewer than two raster cells at the
    declared resolution are skipped with a warning.
    """
    if extent_m <= 0 or raster_res_m <= 0:
        raise ValueError("extent and resolution must be positive")
    sfd = sfd or SfdConfig()
    rng = np.random.default_rng(np.random.SeedSequence([0x7E44A1, seed]))
    area_km2 = (2 * extent_m) ** 2 / 1e6
    edges = crater_bin_edges(sfd)
    counts = expected_bin_counts(sfd, area_km2)
    craters = []
    warns = []
    for b in range(edges.size - 1):
        d_lo, d_hi = edges[b], edges[b + 1]
        if d_lo < 2.0 * raster_res_m:
            msg = (f"crater bin {d_lo:.2f}-{d_hi:.2f} m below raster "
                   f"resolution {raster_res_m} m; skipped")
            warns.append(msg)
            warnings.warn(msg)
            rng.poisson(counts[b])  # keep the stream aligned regardless
            continue
        n = rng.poisson(counts[b])
        if n == 0:
            continue
        # inverse-CDF sample of the truncated power law within the bin
        u = rng.uniform(size=n)
        a = sfd.crater_slope
        d = (d_lo ** a + u * (d_hi ** a - d_lo ** a)) ** (1.0 / a)
        ce = rng.uniform(-extent_m, extent_m, n)
        cn = rng.uniform(-extent_m, extent_m, n)
        depth = sfd.crater_depth_ratio * d
        craters.append(np.column_stack([ce, cn, d, depth]))
    crater_arr = np.concatenate(craters) if craters else np.zeros((0, 4))

    boulders = []
    a = sfd.boulder_slope
    n_big = rng.poisson(sfd.boulder_k_per_km2 * area_km2)
    if n_big:
        u = rng.uniform(size=n_big)
        # Pareto tail above the carpet floor
        d = sfd.boulder_d_min_m * u ** (1.0 / a)
        d = np.minimum(d, 30.0)
        be = rng.uniform(-extent_m, extent_m, n_big)
        bn = rng.uniform(-extent_m, extent_m, n_big)
        boulders.append(np.column_stack([be, bn, d, sfd.boulder_height_ratio * d]))
    if sfd.boulder_small_extension:
        r_det = min(sfd.boulder_small_radius_m, extent_m)
        area_det = (2 * r_det) ** 2 / 1e6
        k_small = sfd.boulder_k_per_km2 * (
            (sfd.boulder_small_d_min_m / sfd.boulder_d_min_m) ** a - 1.0)
        n_small = rng.poisson(max(k_small, 0.0) * area_det)
        if n_small:
            u = rng.uniform(size=n_small)
            lo, hi = sfd.boulder_small_d_min_m, sfd.boulder_d_min_m
            d = (lo ** a + u * (hi ** a - lo ** a)) ** (1.0 / a)
            be = rng.uniform(-r_det, r_det, n_small)
            bn = rng.uniform(-r_det, r_det, n_small)
            boulders.append(np.column_stack([be, bn, d, sfd.boulder_height_ratio * d]))
    boulder_arr = np.concatenate(boulders) if boulders else np.zeros((0, 4))

    if base_relief:
        wavelengths = np.array([40e3, 22e3, 9e3, 900.0, 260.0, 80.0])
        amps = np.array([120.0, 70.0, 30.0, 1.2, 0.5, 0.15])
        az = rng.uniform(0, 2 * math.pi, wavelengths.size)
        wavevec = (2 * math.pi / wavelengths)[:, None] * np.column_stack(
            [np.cos(az), np.sin(az)])
        phase = rng.uniform(0, 2 * math.pi, wavelengths.size)
    else:
        amps = np.zeros(1)
        wavevec = np.zeros((1, 2))
        phase = np.zeros(1)
    return TerrainField(seed=seed, extent_m=extent_m, sfd=sfd,
                        base_amp_m=amps, base_wavevec=wavevec,
                        base_phase=phase, craters=crater_arr,
                        boulders=boulder_arr, warnings=warns)


# --- gridded window product -------------------------------------------------

@dataclass
class TerrainModel:
    """Regular elevation grid over a window, plus the features inside it."""

    grid: np.ndarray          # (N, N), grid[j, i] at (e0 + i*res, n0 + j*res)
    res_m: float
    origin_e_m: float
    origin_n_m: float
    seed: int
    sfd: SfdConfig
    craters: np.ndarray
    boulders: np.ndarray

    @property
    def extent(self):
        ncol, nrow = self.grid.shape[1], self.grid.shape[0]
        return (self.origin_e_m, self.origin_e_m + (ncol - 1) * self.res_m,
                self.origin_n_m, self.origin_n_m + (nrow - 1) * self.res_m)

    def contains(self, e, n) -> bool:
        e0, e1, n0, n1 = self.extent
        return bool(e0 <= e <= e1 and n0 <= n <= n1)


def elevation_at(model: TerrainModel, e: float, n: float) -> float:
    """Bilinear interpolation of the grid, clamped at the edges."""
    ge = (e - model.origin_e_m) / model.res_m
    gn = (n - model.origin_n_m) / model.res_m
    nrow, ncol = model.grid.shape
    i = int(np.clip(math.floor(ge), 0, ncol - 2))
    j = int(np.clip(math.floor(gn), 0, nrow - 2))
    te = min(max(ge - i, 0.0), 1.0)
    tn = min(max(gn - j, 0.0), 1.0)
    g = model.grid
    return float((1 - te) * (1 - tn) * g[j, i] + te * (1 - tn) * g[j, i + 1]
                 + (1 - te) * tn * g[j + 1, i] + te * tn * g[j + 1, i + 1])


def save_terrain(model: TerrainModel, path_prefix: str):
    """Write grid as flat float32 binary plus a JSON header."""
    model.grid.astype(np.float32).tofile(path_prefix + ".bin")
    hdr = {
        "rows": model.grid.shape[0], "cols": model.grid.shape[1],
        "res_m": model.res_m, "origin_e_m": model.origin_e_m,
        "origin_n_m": model.origin_n_m, "seed": model.seed,
        "dtype": "float32",
        "sfd": {k: (v if not isinstance(v, np.ndarray) else v.tolist())
                for k, v in vars(model.sfd).items()},
        "n_craters": int(model.craters.shape[0]),
        "n_boulders": int(model.boulders.shape[0]),
    }
    with open(path_prefix + ".json", "w") as f:
        json.dump(hdr, f, indent=2)


def load_terrain(path_prefix: str) -> TerrainModel:
    with open(path_prefix + ".json") as f:
        hdr = json.load(f)
    grid = np.fromfile(path_prefix + ".bin", dtype=np.float32).astype(float)
    grid = grid.reshape(hdr["rows"], hdr["cols"])
    sfd = SfdConfig(**hdr["sfd"])
    return TerrainModel(grid=grid, res_m=hdr["res_m"],
                        origin_e_m=hdr["origin_e_m"],
                        origin_n_m=hdr["origin_n_m"], seed=hdr["seed"],
                        sfd=sfd, craters=np.zeros((0, 4)),
                        boulders=np.zeros((0, 4)))


# --- hazard mapping ----------------------------------------------------------

@dataclass
class HazardMap:
    hazard: np.ndarray        # bool grid, same indexing as the source window
    res_m: float
    origin_e_m: float
    origin_n_m: float
    footprint_radius_m: float


@dataclass
class SafeSpot:
    position_en_m: np.ndarray
    clearance_m: float
    cost_m: float             # distance from the nadir point


def compute_hazard_map(model: TerrainModel, footprint_radius_m: float = 1.5,
                       slope_threshold_deg: float = 10.0,
                       roughness_threshold_m: float = 0.15,
                       shadow_azimuth_deg: float = None,
                       shadow_threshold_deg: float = 8.0) -> HazardMap:
    """Slope + roughness (+ shadow proxy) hazard classification.

    Listed craters and boulders additionally mask their full support
    disk (plus kernel margins), which keeps the hazardous set monotone
    under feature insertion.  The final map is dilated by the lander
    footprint radius so a safe cell guarantees a safe footprint.
    """
    if model.res_m > 0.1 + 1e-12:
        raise ValueError("hazard mapping needs a window at <= 0.1 m/px")
    z = model.grid
    res = model.res_m
    gn, ge = np.gradient(z, res)
    slope = np.hypot(ge, gn)
    hazard = slope > math.tan(math.radians(slope_threshold_deg))
    # roughness: local standard deviation over the footprint kernel
    k = max(3, int(round(2 * footprint_radius_m / res)) | 1)
    mean = ndimage.uniform_filter(z, size=k, mode="nearest")
    mean2 = ndimage.uniform_filter(z * z, size=k, mode="nearest")
    var = np.maximum(mean2 - mean * mean, 0.0)
    hazard |= np.sqrt(var) > roughness_threshold_m
    if shadow_azimuth_deg is not None:
        az = math.radians(shadow_azimuth_deg)
        away = ge * math.sin(az) + gn * math.cos(az)
        # terrain descending away from the sun casts unusable shadow
        hazard |= -away > math.tan(math.radians(shadow_threshold_deg))
    # crater disks are masked outright over their full region of influence
    # (support + stats kernel + dilation) so inserting a crater can only
    # grow the hazardous set; boulders are left to the roughness statistic
    margin = 2.0 * footprint_radius_m + 2.0 * res
    for ce, cn, d, depth in model.craters:
        if depth > 0.5 * roughness_threshold_m:
            _mask_disk(hazard, model, ce, cn, 0.9 * d + margin)
    # dilate by footprint; unknown border band is hazardous
    n_dil = int(round(footprint_radius_m / res))
    if n_dil > 0:
        hazard = ndimage.binary_dilation(hazard, _disk(n_dil))
    hazard[:n_dil + 1, :] = True
    hazard[-(n_dil + 1):, :] = True
    hazard[:, :n_dil + 1] = True
    hazard[:, -(n_dil + 1):] = True
    return HazardMap(hazard=hazard, res_m=res, origin_e_m=model.origin_e_m,
                     origin_n_m=model.origin_n_m,
                     footprint_radius_m=footprint_radius_m)


def spiral_search(hmap: HazardMap, nadir_en_m, max_divert_m: float = 20.0):
    """Nearest safe cell to the nadir point, scanned in distance order.

    Returns a SafeSpot or None.  Ties break lexicographically on
    (distance, row, col) so the result is deterministic and matches an
    exhaustive scan exactly.
    """
    res = hmap.res_m
    nrow, ncol = hmap.hazard.shape
    ci = (nadir_en_m[0] - hmap.origin_e_m) / res
    cj = (nadir_en_m[1] - hmap.origin_n_m) / res
    r_px = int(math.ceil(max_divert_m / res))
    i0 = int(max(0, math.floor(ci - r_px)))
    i1 = int(min(ncol - 1, math.ceil(ci + r_px)))
    j0 = int(max(0, math.floor(cj - r_px)))
    j1 = int(min(nrow - 1, math.ceil(cj + r_px)))
    if i1 < i0 or j1 < j0:
        return None
    sub = hmap.hazard[j0:j1 + 1, i0:i1 + 1]
    jj, ii = np.mgrid[j0:j1 + 1, i0:i1 + 1]
    de = (ii - ci) * res
    dn = (jj - cj) * res
    dist = np.hypot(de, dn)
    ok = (~sub) & (dist <= max_divert_m)
    if not ok.any():
        return None
    flat = np.where(ok.ravel())[0]
    order = np.lexsort((flat, dist.ravel()[flat]))
    best = flat[order[0]]
    bj, bi = divmod(best, sub.shape[1])
    pos = np.array([hmap.origin_e_m + (bi + i0) * res,
                    hmap.origin_n_m + (bj + j0) * res])
    d = float(dist[bj, bi])
    return SafeSpot(position_en_m=pos, clearance_m=hmap.footprint_radius_m,
                    cost_m=d)


# --- feature profiles --------------------------------------------------------

def _window_ix(vals, lo, hi):
    a = int(np.searchsorted(vals, lo))
    b = int(np.searchsorted(vals, hi, side="right"))
    return a, b


def _add_crater(z, es, ns, ce, cn, d, depth, rim_h):
    r_out = 0.9 * d
    i0, i1 = _window_ix(es, ce - r_out, ce + r_out)
    j0, j1 = _window_ix(ns, cn - r_out, cn + r_out)
    if i0 >= i1 or j0 >= j1:
        return
    de = es[i0:i1][None, :] - ce
    dn = ns[j0:j1][:, None] - cn
    r = np.hypot(de, dn)
    rad = 0.5 * d
    bowl = -depth + (depth + rim_h) * (r / rad) ** 2
    t = (r_out - r) / (r_out - rad)
    rim = rim_h * t * t
    prof = np.where(r <= rad, bowl, np.where(r < r_out, rim, 0.0))
    z[j0:j1, i0:i1] += prof


def _add_boulder(z, es, ns, be, bn, d, h):
    rad = 0.5 * d
    i0, i1 = _window_ix(es, be - rad, be + rad)
    j0, j1 = _window_ix(ns, bn - rad, bn + rad)
    if i0 >= i1 or j0 >= j1:
        return
    de = es[i0:i1][None, :] - be
    dn = ns[j0:j1][:, None] - bn
    r2 = de * de + dn * dn
    cap = h * np.sqrt(np.maximum(1.0 - r2 / (rad * rad), 0.0))
    z[j0:j1, i0:i1] += np.where(r2 < rad * rad, cap, 0.0)


def _mask_disk(hazard, model, ce, cn, radius):
    res = model.res_m
    nrow, ncol = hazard.shape
    i0 = max(0, int((ce - radius - model.origin_e_m) / res))
    i1 = min(ncol, int((ce + radius - model.origin_e_m) / res) + 2)
    j0 = max(0, int((cn - radius - model.origin_n_m) / res))
    j1 = min(nrow, int((cn + radius - model.origin_n_m) / res) + 2)
    if i0 >= i1 or j0 >= j1:
        return
    ee = model.origin_e_m + np.arange(i0, i1) * res
    nn = model.origin_n_m + np.arange(j0, j1) * res
    de = ee[None, :] - ce
    dn = nn[:, None] - cn
    hazard[j0:j1, i0:i1] |= (de * de + dn * dn) <= radius * radius


def _disk(n):
    y, x = np.mgrid[-n:n + 1, -n:n + 1]
    return x * x + y * y <= n * n
