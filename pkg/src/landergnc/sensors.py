"""Sensor emulation from truth state with configurable error models.

Every sensor draws from its own RNG stream created from the run seed,
so measurement noise replays bit-identically and is independent of the
sampling order of other sensors.  Failed devices never emit valid
measurements.

The LDS camera pipeline (feature matching, tracking) is modeled at the
measurement level: a terrain-relative lateral velocity sensor and,
once a safe spot is selected, a spot-relative position sensor.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import enu_triad
from .quat import from_rotvec, norm, qmul, rotate, rotate_back, unit
from .terrain import TerrainField, TerrainModel, elevation_at


@dataclass
class ImuMeasurement:
    delta_v_body_mps: np.ndarray
    delta_theta_body_rad: np.ndarray
    timestamp_s: float


@dataclass
class RangeMeasurement:
    slant_range_m: float
    valid: bool
    sensor_id: int
    timestamp_s: float


@dataclass
class ImuErrorModel:
    """Bias + random walk + scale/misalignment for both IMU channels."""

    gyro_bias_radps: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_arw_rad_rtsec: float = 8.7e-5      # angle random walk, rad/sqrt(s)
    accel_bias_mps2: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_vrw_mps_rtsec: float = 8.0e-4     # velocity random walk
    gyro_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))
    misalign_rad: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("gyro_bias_radps", "accel_bias_mps2", "gyro_scale",
                     "accel_scale", "misalign_rad"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.max(np.abs(self.misalign_rad)) >= math.radians(1.0):
            raise ValueError("misalignment must stay below 1 deg")
        if self.gyro_arw_rad_rtsec < 0 or self.accel_vrw_mps_rtsec < 0:
            raise ValueError("noise densities must be non-negative")


def _misalign_matrix(model: ImuErrorModel):
    mx, my, mz = model.misalign_rad
    skew = np.array([[0.0, -mz, my], [mz, 0.0, -mx], [-my, mx, 0.0]])
    return np.eye(3) + skew


def sample_imu(dtheta_true, dv_true, model: ImuErrorModel, dt_s: float,
               timestamp_s: float, rng) -> ImuMeasurement:
    """Corrupt one IMU interval of integrated truth increments."""
    m = _misalign_matrix(model)
    dth = (m @ ((1.0 + model.gyro_scale) * np.asarray(dtheta_true))
           + model.gyro_bias_radps * dt_s
           + model.gyro_arw_rad_rtsec * math.sqrt(dt_s) * rng.standard_normal(3))
    dv = (m @ ((1.0 + model.accel_scale) * np.asarray(dv_true))
          + model.accel_bias_mps2 * dt_s
          + model.accel_vrw_mps_rtsec * math.sqrt(dt_s) * rng.standard_normal(3))
    return ImuMeasurement(dv, dth, timestamp_s)


def apply_imu_errors_batch(dtheta_true, dv_true, model: ImuErrorModel,
                           dt_s: float, rng):
    """Vectorized error application over (N, 3) increment batches."""
    m = _misalign_matrix(model)
    n = dtheta_true.shape[0]
    sq = math.sqrt(dt_s)
    dth = (((1.0 + model.gyro_scale) * dtheta_true) @ m.T
           + model.gyro_bias_radps * dt_s
           + model.gyro_arw_rad_rtsec * sq * rng.standard_normal((n, 3)))
    dv = (((1.0 + model.accel_scale) * dv_true) @ m.T
          + model.accel_bias_mps2 * dt_s
          + model.accel_vrw_mps_rtsec * sq * rng.standard_normal((n, 3)))
    return dth, dv


def sample_star(q_true, noise_sigma_rad: float, rate_body_radps,
                rate_limit_radps: float, timestamp_s: float, rng):
    """Star sensor quaternion; invalid above the rate limit."""
    if norm(rate_body_radps) > rate_limit_radps:
        return None, False
    dq = from_rotvec(noise_sigma_rad * rng.standard_normal(3))
    return qmul(q_true, dq), True


@dataclass
class SunSensorConfig:
    boresights_body: np.ndarray = field(default_factory=lambda: np.array(
        [[1.0, 0.0, 0.0],
         [-0.5, 0.8660254, 0.0],
         [-0.5, -0.8660254, 0.0]]))
    fov_half_angle_rad: float = math.radians(65.0)
    noise_rad: float = math.radians(0.3)


def sample_sun(q_true, sun_dir_mci, cfg: SunSensorConfig, rng):
    """Body-frame sun vector + visibility from the 3-cone geometry."""
    s_body = rotate(q_true, unit(np.asarray(sun_dir_mci, dtype=float)))
    visible = False
    for b in cfg.boresights_body:
        c = float(s_body @ b) / norm(b)
        if c > math.cos(cfg.fov_half_angle_rad):
            visible = True
            break
    if not visible:
        return None, False
    meas = rotate(from_rotvec(cfg.noise_rad * rng.standard_normal(3)), s_body)
    return unit(meas), True


# --- terrain-relative geometry ----------------------------------------------

class TerrainGeometry:
    """Maps MCI rays onto the procedural terrain around the site.

    The site sits at ``site_dir * (datum + site_elevation)``; terrain
    radius along any direction is datum + site_elevation + field
    elevation at azimuthal-equidistant coordinates about the site.
    """

    def __init__(self, field_: TerrainField, datum_radius_m: float,
                 site_elevation_m: float, site_dir_mci):
        self.field = field_
        self.datum_radius_m = datum_radius_m
        self.site_elevation_m = site_elevation_m
        self.site_dir = unit(np.asarray(site_dir_mci, dtype=float))
        self.site_pos_mci = self.site_dir * (datum_radius_m + site_elevation_m)
        self.enu_rows = enu_triad(self.site_pos_mci)

    def local_coords(self, u_dir):
        """Site-local (east, north) meters for a unit MCI direction."""
        c = float(u_dir @ self.site_dir)
        c = min(1.0, max(-1.0, c))
        ang = math.acos(c)
        p = u_dir - self.site_dir * c
        s = norm(p)
        if s < 1e-12:
            return 0.0, 0.0
        scale = self.datum_radius_m * ang / s
        return (scale * float(p @ self.enu_rows[0]),
                scale * float(p @ self.enu_rows[1]))

    def radius_at_dir(self, u_dir) -> float:
        e, n = self.local_coords(u_dir)
        return (self.datum_radius_m + self.site_elevation_m
                + self.field.elevation(e, n))

    def ray_range(self, origin_mci, dir_mci, max_range_m: float):
        """First terrain intersection distance along the ray, or None."""
        d = unit(np.asarray(dir_mci, dtype=float))
        p = np.asarray(origin_mci, dtype=float)
        f0 = norm(p) - self.radius_at_dir(unit(p))
        if f0 <= 0.0:
            return 0.0
        s = 0.0
        f_prev = f0
        # march: |f| decreases at most ~1 per meter of ray, so stepping
        # by a fraction of the current height cannot jump the surface
        while s < max_range_m * 1.5:
            step = min(max(0.4 * f_prev, 1.0), 2000.0)
            s_new = s + step
            q = p + s_new * d
            f = norm(q) - self.radius_at_dir(unit(q))
            if f <= 0.0:
                lo, hi = s, s_new
                for _ in range(48):
                    mid = 0.5 * (lo + hi)
                    q = p + mid * d
                    if norm(q) - self.radius_at_dir(unit(q)) > 0.0:
                        lo = mid
                    else:
                        hi = mid
                return 0.5 * (lo + hi)
            if f > f_prev and s > max_range_m:
                return None  # ray climbing away from the surface
            s, f_prev = s_new, f
        return None


def grid_ray_range(origin_en_alt, dir_enu, model: TerrainModel,
                   max_range_m: float):
    """Ray/terrain intersection against a rasterized near-field window.

    origin is (east, north, altitude-above-window-datum); direction in
    the same ENU axes.  Used for the short-range rangefinders where the
    tangent-plane approximation is exact enough.
    """
    e, n, h = (float(origin_en_alt[0]), float(origin_en_alt[1]),
               float(origin_en_alt[2]))
    d = unit(np.asarray(dir_enu, dtype=float))
    f_prev = h - elevation_at(model, e, n)
    if f_prev <= 0.0:
        return 0.0
    s = 0.0
    while s < max_range_m * 1.5:
        step = min(max(0.4 * f_prev, 0.02), 25.0)
        s_new = s + step
        pe, pn, ph = e + s_new * d[0], n + s_new * d[1], h + s_new * d[2]
        f = ph - elevation_at(model, pe, pn)
        if f <= 0.0:
            lo, hi = s, s_new
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                pe, pn, ph = e + mid * d[0], n + mid * d[1], h + mid * d[2]
                if ph - elevation_at(model, pe, pn) > 0.0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        if d[2] >= 0.0 and f > f_prev:
            return None
        s, f_prev = s_new, f
    return None


# --- rangefinders -------------------------------------------------------------

@dataclass
class LlrfConfig:
    max_range_m: float = 16_000.0
    sigma_m: float = 1.0                 # +/- 1 m class accuracy
    cant_from_deck_rad: float = math.radians(30.0)
    azimuth_offsets_rad: tuple = (math.radians(2.0), math.radians(-2.0))
    rate_hz: float = 1.0

    def boresight_body(self, idx: int, misalign_rotvec=None):
        """Unit vector: deck normal (-Z) canted toward -X by the cant angle."""
        c, s = math.cos(self.cant_from_deck_rad), math.sin(self.cant_from_deck_rad)
        az = self.azimuth_offsets_rad[idx]
        b = np.array([-s * math.cos(az), -s * math.sin(az), -c])
        if misalign_rotvec is not None:
            b = rotate_back(from_rotvec(misalign_rotvec), b)
        return b


@dataclass
class SlrfConfig:
    max_range_m: float = 150.0
    sigma_m: float = 0.2
    cant_outward_rad: float = math.radians(15.0)
    mount_radius_m: float = 0.5
    rate_hz: float = 10.0

    def mounts_and_boresights(self):
        """Four sensors in a cross pattern, canted outward from -Z."""
        mounts = []
        bores = []
        c, s = math.cos(self.cant_outward_rad), math.sin(self.cant_outward_rad)
        for az_deg in (0.0, 90.0, 180.0, 270.0):
            az = math.radians(az_deg)
            out = np.array([math.cos(az), math.sin(az), 0.0])
            mounts.append(self.mount_radius_m * out)
            bores.append(s * out + np.array([0.0, 0.0, -c]))
        return np.array(mounts), np.array(bores)


def sample_llrf(pos_mci, q_true, geom: TerrainGeometry, cfg: LlrfConfig,
                sensor_id: int, timestamp_s: float, rng,
                misalign_rotvec=None) -> RangeMeasurement:
    """Slant range along the active LLRF boresight; invalid beyond 16 km."""
    b_body = cfg.boresight_body(sensor_id, misalign_rotvec)
    d_mci = rotate_back(q_true, b_body)
    rng_true = geom.ray_range(pos_mci, d_mci, cfg.max_range_m)
    if rng_true is None or rng_true > cfg.max_range_m:
        return RangeMeasurement(float("nan"), False, sensor_id, timestamp_s)
    meas = rng_true + cfg.sigma_m * rng.standard_normal()
    return RangeMeasurement(meas, True, sensor_id, timestamp_s)


def sample_slrf(pos_en_alt, q_true, enu_q, model: TerrainModel,
                cfg: SlrfConfig, timestamp_s: float, rng):
    """Four short-range returns against the near-field window.

    pos_en_alt is the vehicle origin in site-local ENU; enu_q rotates
    body into ENU axes (composition of truth attitude and the site
    triad).  Returns a list of RangeMeasurement.
    """
    mounts, bores = cfg.mounts_and_boresights()
    out = []
    for i in range(4):
        m_enu = rotate_back(enu_q, mounts[i])
        d_enu = rotate_back(enu_q, bores[i])
        origin = np.asarray(pos_en_alt, dtype=float) + m_enu
        r = grid_ray_range(origin, d_enu, model, cfg.max_range_m)
        if r is None or r > cfg.max_range_m:
            out.append(RangeMeasurement(float("nan"), False, i, timestamp_s))
        else:
            out.append(RangeMeasurement(r + cfg.sigma_m * rng.standard_normal(),
                                        True, i, timestamp_s))
    return out


@dataclass
class LdsConfig:
    vel_sigma_mps: float = 0.03
    vel_bias_mps: float = 0.01            # per-run bias magnitude scale
    spot_sigma_m: float = 0.25
    min_alt_m: float = 3.0
    max_alt_m: float = 600.0
    min_sun_elev_rad: float = math.radians(8.0)
    rate_hz: float = 1.0


def sample_lds_velocity(vel_en_true, alt_m: float, sun_elev_rad: float,
                        cfg: LdsConfig, bias_en, rng):
    """Terrain-relative lateral velocity (east, north) or invalid."""
    if not (cfg.min_alt_m <= alt_m <= cfg.max_alt_m):
        return None, False
    if sun_elev_rad < cfg.min_sun_elev_rad:
        return None, False
    v = (np.asarray(vel_en_true, dtype=float) + np.asarray(bias_en)
         + cfg.vel_sigma_mps * rng.standard_normal(2))
    return v, True


def sample_lds_spot_offset(offset_en_true, alt_m: float, sun_elev_rad: float,
                           cfg: LdsConfig, rng):
    """Tracked safe-spot position relative to the vehicle (east, north)."""
    if not (cfg.min_alt_m <= alt_m <= cfg.max_alt_m):
        return None, False
    if sun_elev_rad < cfg.min_sun_elev_rad:
        return None, False
    o = (np.asarray(offset_en_true, dtype=float)
         + cfg.spot_sigma_m * rng.standard_normal(2))
    return o, True
