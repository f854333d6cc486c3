"""Flight-side state estimation.

Attitude comes from a 6-state multiplicative EKF (small-angle attitude
error + gyro bias) propagated with IMU increments and updated by the
star sensor when enabled.  Position/velocity are strapdown-integrated
in MCI, with the radial channel pinned by LLRF slant ranges against an
onboard terrain profile.  During terminal descent a local TRN frame is
fit from SLRF returns; altitude and sink rate run in a 2-state filter,
and LDS measurements correct the lateral velocity/position channels.

Conventions: the attitude error is right-multiplicative
(q_true = q_est * dq(delta_theta)); covariances are kept symmetric and
floored if an update drives them indefinite.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .quat import (from_rotvec, normalize, qconj, qmul, rotate, rotate_back,
                   unit)
from .sensors import ImuMeasurement, RangeMeasurement

G0 = 9.80665


@dataclass
class AttitudeEstimate:
    q_est: np.ndarray
    gyro_bias_radps: np.ndarray
    cov: np.ndarray  # 6x6, [attitude small-angle; gyro bias]


@dataclass
class AttitudeFilterConfig:
    gyro_arw_rad_rtsec: float = 8.7e-5
    gyro_bias_rw_radps_rtsec: float = 2.0e-7
    star_sigma_rad: float = 8.7e-5
    init_att_sigma_rad: float = math.radians(0.5)
    init_bias_sigma_radps: float = 1.0e-4
    consistency_reject_rad: float = math.radians(1.0)
    cov_floor: float = 1e-16


class AttitudeFilter:
    """Multiplicative EKF for attitude + gyro bias."""

    def __init__(self, cfg: AttitudeFilterConfig, q0, bias0=None):
        self.cfg = cfg
        self.q = normalize(np.asarray(q0, dtype=float))
        self.bias = np.zeros(3) if bias0 is None else np.asarray(bias0, float)
        self.P = np.diag([cfg.init_att_sigma_rad ** 2] * 3
                         + [cfg.init_bias_sigma_radps ** 2] * 3)
        self.ssu_rejected = False
        self.cov_reset_count = 0

    def estimate(self) -> AttitudeEstimate:
        return AttitudeEstimate(self.q.copy(), self.bias.copy(), self.P.copy())

    def propagate(self, imu: ImuMeasurement, dt_s: float):
        """Advance attitude with a bias-corrected increment."""
        dth = imu.delta_theta_body_rad - self.bias * dt_s
        self.q = normalize(qmul(self.q, from_rotvec(dth)))
        # error-state transition: dth' = dth - [w x]dth dt - db dt
        w = dth / dt_s
        wx = np.array([[0.0, -w[2], w[1]],
                       [w[2], 0.0, -w[0]],
                       [-w[1], w[0], 0.0]])
        phi = np.eye(6)
        phi[0:3, 0:3] -= wx * dt_s
        phi[0:3, 3:6] = -np.eye(3) * dt_s
        q_att = self.cfg.gyro_arw_rad_rtsec ** 2 * dt_s
        q_bias = self.cfg.gyro_bias_rw_radps_rtsec ** 2 * dt_s
        self.P = phi @ self.P @ phi.T
        self.P[0:3, 0:3] += np.eye(3) * q_att
        self.P[3:6, 3:6] += np.eye(3) * q_bias
        self._condition()

    def star_update(self, q_meas):
        """Multiplicative small-angle update; latches the reject flag on
        a gross disagreement with the propagated attitude."""
        if self.ssu_rejected:
            return False
        dq = qmul(qconj(self.q), normalize(np.asarray(q_meas, dtype=float)))
        if dq[0] < 0:
            dq = -dq
        resid = 2.0 * dq[1:4]
        if math.sqrt(float(resid @ resid)) > self.cfg.consistency_reject_rad:
            self.ssu_rejected = True
            return False
        r = self.cfg.star_sigma_rad ** 2
        s = self.P[0:3, 0:3] + np.eye(3) * r
        k = np.linalg.solve(s.T, self.P[:, 0:3].T).T   # (6,3)
        dx = k @ resid
        self.q = normalize(qmul(self.q, from_rotvec(dx[0:3])))
        self.bias = self.bias + dx[3:6]
        ikh = np.eye(6)
        ikh[:, 0:3] -= k
        self.P = ikh @ self.P @ ikh.T + k @ (np.eye(3) * r) @ k.T
        self._condition()
        return True

    def _condition(self):
        self.P = 0.5 * (self.P + self.P.T)
        if np.any(np.diag(self.P) <= 0.0):
            # indefinite: reset to the documented floor and flag it
            self.P = np.diag(np.maximum(np.diag(self.P), self.cfg.cov_floor))
            self.cov_reset_count += 1


def mekf_step(flt: AttitudeFilter, imu: ImuMeasurement, dt_s: float,
              star_q=None, star_enabled=True) -> AttitudeEstimate:
    """One estimation cycle: propagate, then update if a star fix is in."""
    flt.propagate(imu, dt_s)
    if star_q is not None and star_enabled:
        flt.star_update(star_q)
    return flt.estimate()


def attitude_error_rad(q_est, q_true) -> float:
    dq = qmul(qconj(q_est), q_true)
    return 2.0 * math.asin(min(1.0, math.sqrt(float(dq[1:4] @ dq[1:4]))))


# --- inertial navigation -----------------------------------------------------

@dataclass
class NavState:
    pos_m: np.ndarray
    vel_mps: np.ndarray
    frame: str                      # MCI -> ENU -> TRN, in that order
    pos_var: np.ndarray             # diagonal (3,), radial channel tracked
    vel_var: np.ndarray


@dataclass
class OnboardTerrain:
    """Uplinked elevation-vs-downrange profile for LLRF fusion."""

    downrange_grid_m: np.ndarray    # signed along-track distance from site
    elevation_m: np.ndarray         # relative to site elevation
    site_elevation_m: float
    datum_radius_m: float

    def radius_at(self, downrange_m: float) -> float:
        z = float(np.interp(downrange_m, self.downrange_grid_m, self.elevation_m))
        return self.datum_radius_m + self.site_elevation_m + z


class InertialNav:
    """Strapdown propagation in MCI with scalar radial LLRF fusion."""

    def __init__(self, pos0, vel0, gravity_model, pos_var0, vel_var0,
                 accel_noise_mps2=3.0e-4, gate_sigma=5.0,
                 terrain_sigma_m=10.0):
        self.state = NavState(np.asarray(pos0, float).copy(),
                              np.asarray(vel0, float).copy(), "MCI",
                              np.asarray(pos_var0, float).copy(),
                              np.asarray(vel_var0, float).copy())
        self.gravity = gravity_model
        self.accel_noise = accel_noise_mps2
        self.gate_sigma = gate_sigma
        self.terrain_sigma_m = terrain_sigma_m
        self.rejected_count = 0

    def imu_step(self, q_est, dv_body, dt_s: float):
        """One IMU interval: rotate, add gravity, integrate."""
        from .gravity import gravity_accel
        g = gravity_accel(self.state.pos_m, self.gravity, truth=False)
        dv_i = rotate_back(q_est, dv_body)
        self.state.vel_mps = self.state.vel_mps + dv_i + g * dt_s
        self.state.pos_m = self.state.pos_m + self.state.vel_mps * dt_s
        self.state.vel_var += (self.accel_noise * dt_s) ** 2
        self.state.pos_var += self.state.vel_var * dt_s ** 2

    def llrf_fuse(self, meas: RangeMeasurement, predicted_range_m: float,
                  incidence_cos: float, sigma_range_m: float):
        """Scalar radial-position update from a slant-range innovation."""
        if not meas.valid or predicted_range_m is None:
            return False
        # altitude-equivalent innovation
        y = (meas.slant_range_m - predicted_range_m) * incidence_cos
        r_var = (sigma_range_m * incidence_cos) ** 2 + self.terrain_sigma_m ** 2
        r_hat = unit(self.state.pos_m)
        p_r = float(r_hat @ (self.state.pos_var * r_hat))
        s = p_r + r_var
        if y * y > self.gate_sigma ** 2 * s:
            self.rejected_count += 1
            return False
        k = p_r / s
        self.state.pos_m = self.state.pos_m + r_hat * (k * y)
        # shrink the radial component of the diagonal variance
        self.state.pos_var = self.state.pos_var - k * p_r * (r_hat ** 2)
        self.state.pos_var = np.maximum(self.state.pos_var, 1e-6)
        return True


def predict_llrf_range(nav_pos_mci, q_est, boresight_body,
                       onboard: OnboardTerrain, site_dir_mci,
                       max_range_m=20_000.0):
    """March the estimated boresight ray onto the onboard terrain model.

    Returns (range_m, incidence_cos) or (None, 0) when the ray misses.
    Downrange is measured along the great circle through the sub-vehicle
    point and the site.
    """
    d = rotate_back(q_est, boresight_body)
    p = np.asarray(nav_pos_mci, dtype=float)

    def radius_at(u_dir):
        c = min(1.0, max(-1.0, float(u_dir @ site_dir_mci)))
        return onboard.radius_at(onboard.datum_radius_m * math.acos(c))

    f_prev = float(np.linalg.norm(p)) - radius_at(unit(p))
    if f_prev <= 0.0:
        return None, 0.0
    s = 0.0
    while s < max_range_m:
        step = min(max(0.4 * f_prev, 1.0), 2000.0)
        q = p + (s + step) * d
        f = float(np.linalg.norm(q)) - radius_at(unit(q))
        if f <= 0.0:
            lo, hi = s, s + step
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                q = p + mid * d
                if float(np.linalg.norm(q)) - radius_at(unit(q)) > 0.0:
                    lo = mid
                else:
                    hi = mid
            rng = 0.5 * (lo + hi)
            ground = unit(p + rng * d)
            return rng, abs(float(d @ ground))
        if f > f_prev and s > max_range_m * 0.5:
            return None, 0.0
        s += step
        f_prev = f
    return None, 0.0


# --- TRN frame and vertical channel -------------------------------------------

@dataclass
class TrnFrame:
    origin_enu_m: np.ndarray
    normal_enu: np.ndarray
    defined_at_s: float


def define_trn_frame(ground_points_enu, nav_pos_enu, t_s: float):
    """Least-squares plane through >= 3 SLRF ground intersections.

    Returns a TrnFrame whose origin is the sub-lander point projected
    onto the fitted plane and whose +normal points up.
    """
    pts = np.asarray(ground_points_enu, dtype=float)
    if pts.shape[0] < 3:
        return None
    centroid = pts.mean(axis=0)
    q = pts - centroid
    _, _, vt = np.linalg.svd(q, full_matrices=False)
    n = vt[2]
    if n[2] < 0:
        n = -n
    d = float(n @ (np.asarray(nav_pos_enu) - centroid))
    origin = np.asarray(nav_pos_enu) - d * n
    return TrnFrame(origin_enu_m=origin, normal_enu=n, defined_at_s=t_s)


@dataclass
class VerticalState:
    altitude_m: float
    sink_rate_mps: float
    cov: np.ndarray  # 2x2


class VerticalFilter:
    """2-state constant-acceleration-driven altitude/sink filter."""

    def __init__(self, alt0, sink0, alt_var0=25.0, sink_var0=1.0,
                 accel_noise_mps2=0.05, meas_sigma_m=0.2):
        self.x = np.array([alt0, sink0])
        self.P = np.diag([alt_var0, sink_var0])
        self.accel_noise = accel_noise_mps2
        self.meas_sigma = meas_sigma_m

    def state(self) -> VerticalState:
        return VerticalState(float(self.x[0]), float(self.x[1]), self.P.copy())

    def predict(self, vertical_accel_mps2: float, dt_s: float):
        """h_ddot = measured vertical specific force minus local gravity."""
        a = vertical_accel_mps2
        self.x = np.array([self.x[0] - self.x[1] * dt_s + 0.5 * a * dt_s ** 2,
                           self.x[1] - a * dt_s])
        f = np.array([[1.0, -dt_s], [0.0, 1.0]])
        g = np.array([0.5 * dt_s ** 2, dt_s])
        self.P = f @ self.P @ f.T + np.outer(g, g) * self.accel_noise ** 2
        self._condition()

    def update(self, alt_meas_m: float, n_sensors: int = 1):
        r = self.meas_sigma ** 2 / max(n_sensors, 1)
        h = np.array([1.0, 0.0])
        s = float(h @ self.P @ h) + r
        k = (self.P @ h) / s
        self.x = self.x + k * (alt_meas_m - self.x[0])
        ikh = np.eye(2) - np.outer(k, h)
        self.P = ikh @ self.P @ ikh.T + np.outer(k, k) * r
        self._condition()

    def _condition(self):
        self.P = 0.5 * (self.P + self.P.T)
        d = np.diag(self.P)
        if np.any(d <= 0):
            self.P = np.diag(np.maximum(d, 1e-10))


class LateralFilter:
    """Per-axis scalar filters for terrain-relative lateral velocity and
    (after SSID) spot-relative position."""

    def __init__(self, vel_var0=0.5 ** 2, pos_var0=10.0 ** 2,
                 vel_meas_sigma=0.03, pos_meas_sigma=0.25,
                 vel_q_per_s=1e-4, pos_q_per_s=0.02):
        self.vel_var = np.array([vel_var0, vel_var0])
        self.pos_var = np.array([pos_var0, pos_var0])
        self.vel_meas_sigma = vel_meas_sigma
        self.pos_meas_sigma = pos_meas_sigma
        self.vel_q = vel_q_per_s
        self.pos_q = pos_q_per_s

    def grow(self, dt_s: float):
        self.vel_var += self.vel_q * dt_s
        self.pos_var += self.vel_var * dt_s ** 2 + self.pos_q * dt_s

    def velocity_update(self, vel_est_en, vel_meas_en):
        r = self.vel_meas_sigma ** 2
        k = self.vel_var / (self.vel_var + r)
        new = np.asarray(vel_est_en) + k * (np.asarray(vel_meas_en) - vel_est_en)
        self.vel_var = (1.0 - k) * self.vel_var
        return new

    def position_update(self, pos_est_en, pos_meas_en):
        r = self.pos_meas_sigma ** 2
        k = self.pos_var / (self.pos_var + r)
        new = np.asarray(pos_est_en) + k * (np.asarray(pos_meas_en) - pos_est_en)
        self.pos_var = (1.0 - k) * self.pos_var
        return new

    def vel_sigma(self) -> float:
        return float(np.sqrt(self.vel_var.max()))


# --- mass estimation -----------------------------------------------------------

@dataclass
class MassEstimate:
    mass_kg: float
    sigma_kg: float
    thrust_scale: float = 1.0


class MassEstimator:
    """Flow-integrated mass anchored by accelerometer thrust-scale fits.

    Thrust magnitude and vehicle mass are not separately observable from
    specific force during a steady burn, so the filter integrates the
    commanded flow (scaled by an estimated thrust factor) and steers the
    thrust factor with the measured-to-predicted acceleration ratio.
    """

    def __init__(self, m0_kg: float, sigma0_kg: float = 5.0,
                 scale_gain: float = 0.05, accel_floor_mps2: float = 0.05):
        self.est = MassEstimate(m0_kg, sigma0_kg, 1.0)
        self.scale_gain = scale_gain
        self.accel_floor = accel_floor_mps2

    def step(self, dv_body, dt_s: float, expected_impulse_ns: float,
             expected_flow_kg: float):
        """One GNC cycle: expected_* from commanded widths and nominal
        engine data; dv_body integrated over the same window."""
        est = self.est
        if expected_impulse_ns > 0.0:
            a_meas = float(np.linalg.norm(dv_body)) / dt_s
            a_pred = est.thrust_scale * expected_impulse_ns / dt_s / est.mass_kg
            if a_meas > self.accel_floor and a_pred > self.accel_floor:
                ratio = a_meas / a_pred
                est.thrust_scale *= 1.0 + self.scale_gain * (ratio - 1.0)
                est.thrust_scale = min(max(est.thrust_scale, 0.8), 1.2)
            est.mass_kg -= est.thrust_scale * expected_flow_kg
            est.sigma_kg = max(0.2, est.sigma_kg * (1.0 - 0.001))
        return est


# --- touchdown detection --------------------------------------------------------

class TouchdownDetector:
    """Persistence of rest-like IMU + SLRF signatures.

    Latches true after n_required consecutive IMU samples whose specific
    force magnitude sits near lunar weight (ground reaction) while the
    short-range altitude reads below the contact threshold.
    """

    def __init__(self, g_surface_mps2: float, n_required: int = 10,
                 accel_band: float = 0.35, alt_threshold_m: float = 1.5):
        self.g = g_surface_mps2
        self.n_required = n_required
        self.band = accel_band
        self.alt_threshold = alt_threshold_m
        self.count = 0
        self.latched = False

    def step(self, specific_force_mag_mps2: float, slrf_alt_m) -> bool:
        if self.latched:
            return True
        rest_like = abs(specific_force_mag_mps2 - self.g) < self.band * self.g
        low = slrf_alt_m is not None and slrf_alt_m < self.alt_threshold
        if rest_like and low:
            self.count += 1
        else:
            self.count = 0
        if self.count >= self.n_required:
            self.latched = True
        return self.latched
