"""Reference generation for every flight mode.

Braking flies an uplink-style attitude/thrust profile produced by a
direct shooting generator (piecewise-linear pitch and thrust against a
point-mass rollout, refined by least squares).  Approach runs the
closed-loop quartic time-to-go landing law.  Turn slews the
longitudinal axis vertical on RCT support, and terminal descent
sequences sink-rate tracking, lateral-velocity kill, the safe-spot
divert, and the staged engine cutoffs.

Attitude references put body +Z along the commanded thrust direction
with body +X held up-track so the rangefinder boresights face the
ground during descent.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .quat import cross, from_dcm, from_rotvec, norm, qmul, rotate, slerp, unit

G0 = 9.80665


@dataclass
class GuidanceCommand:
    q_ref: np.ndarray
    thrust_axial_n: float
    main_mode: str               # off | steady | pulsed
    phase: str
    accel_cmd_mps2: np.ndarray = None
    saturated: bool = False


@dataclass
class AttitudeThrustProfile:
    t_s: np.ndarray
    quats: np.ndarray            # (N, 4)
    thrust_n: np.ndarray
    method: str = "direct-shooting"
    epoch_s: float = 0.0

    def __post_init__(self):
        if np.any(np.diff(self.t_s) <= 0):
            raise ValueError("profile time grid must be strictly increasing")


def interpolate_profile(profile: AttitudeThrustProfile, t_s: float) -> GuidanceCommand:
    """Slerp attitude / linear thrust, clamped at the profile ends."""
    ts = profile.t_s
    t = min(max(t_s, ts[0]), ts[-1])
    i = int(np.searchsorted(ts, t, side="right") - 1)
    i = min(max(i, 0), ts.size - 2)
    f = (t - ts[i]) / (ts[i + 1] - ts[i])
    q = slerp(profile.quats[i], profile.quats[i + 1], f)
    thrust = (1 - f) * profile.thrust_n[i] + f * profile.thrust_n[i + 1]
    return GuidanceCommand(q, float(thrust), "steady", "braking")


def save_profile(profile: AttitudeThrustProfile, path: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "q0", "q1", "q2", "q3", "thrust_N"])
        for k in range(profile.t_s.size):
            w.writerow([f"{profile.t_s[k]:.3f}"]
                       + [f"{v:.9f}" for v in profile.quats[k]]
                       + [f"{profile.thrust_n[k]:.3f}"])


def load_profile(path: str) -> AttitudeThrustProfile:
    rows = []
    with open(path) as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:1] != ["t_s"]:
            raise ValueError("not a profile file: missing t_s header")
        for row in rd:
            rows.append([float(v) for v in row])
    arr = np.array(rows)
    return AttitudeThrustProfile(arr[:, 0], arr[:, 1:5], arr[:, 5])


# --- braking profile generation ------------------------------------------------

@dataclass
class BrakingTargets:
    duration_s: float = 500.0
    handover_speed_mps: float = 780.0
    handover_alt_m: float = 4500.0       # above site radius
    handover_sink_mps: float = 18.0
    # seed solution for the shooting iteration (pitch rad, thrust N)
    pitch_nodes_rad: tuple = (-0.087, 0.126, 0.340, 0.494, 0.620)
    thrust_nodes_n: tuple = (569.0, 593.0, 624.0)


@dataclass
class AxialThrustModel:
    """Achievable axial thrust/flow for the braking stack: steady main,
    one canted block always on, inner ring duty-modulated."""

    main_thrust_n: float = 460.0
    main_isp_s: float = 320.0
    rct_thrust_n: float = 22.0
    rct_isp_s: float = 285.0
    cant_rad: float = math.radians(10.0)

    @property
    def f_canted_block(self) -> float:
        return 4.0 * self.rct_thrust_n * math.cos(self.cant_rad)

    @property
    def f_floor(self) -> float:
        return self.main_thrust_n + self.f_canted_block

    @property
    def f_max(self) -> float:
        return self.f_floor + 8.0 * self.rct_thrust_n

    def flow_kgps(self, f_axial_n: float) -> float:
        f = (self.main_thrust_n / (G0 * self.main_isp_s)
             + 4.0 * self.rct_thrust_n / (G0 * self.rct_isp_s))
        return f + max(f_axial_n - self.f_floor, 0.0) / (G0 * self.rct_isp_s)


class ProfileInfeasible(RuntimeError):
    pass


def generate_braking_profile(entry_pos_mci, entry_vel_mci, mass0_kg: float,
                             mu: float, site_radius_m: float,
                             targets: BrakingTargets = None,
                             thrust_model: AxialThrustModel = None,
                             node_spacing_s: float = 5.0,
                             epoch_s: float = 0.0):
    """Shoot a planar pitch/thrust schedule onto the handover targets.

    Returns (profile, site_dir_mci): the profile spans the braking
    duration; the landing-site direction is placed 150 km downrange of
    the achieved braking end point.  Raises ProfileInfeasible when the
    residuals cannot be driven down (insufficient thrust authority).
    """
    targets = targets or BrakingTargets()
    tm = thrust_model or AxialThrustModel()
    p0 = np.asarray(entry_pos_mci, dtype=float)
    v0 = np.asarray(entry_vel_mci, dtype=float)
    # planar basis from the entry state
    e1 = unit(p0)
    h = cross(p0, v0)
    e3 = unit(h)                 # orbit normal
    e2 = cross(e3, e1)           # in-plane, along motion
    s0 = np.array([norm(p0), 0.0, float(v0 @ e1), float(v0 @ e2), mass0_kg])
    T = targets.duration_s

    def rollout(z, dt):
        psis = z[:5]
        fs = np.array([z[5], z[5], z[6], z[6], z[7]])
        tn = np.linspace(0.0, T, 5)
        x, y, vx, vy, m = s0
        t = 0.0
        while t < T - 1e-9:
            hh = min(dt, T - t)

            def deriv(x, y, vx, vy, m, tt):
                r = math.hypot(x, y)
                psi = float(np.interp(tt, tn, psis))
                f = min(max(float(np.interp(tt, tn, fs)), tm.f_floor), tm.f_max)
                thx = -y / r
                thy = x / r
                tdx = -math.cos(psi) * thx + math.sin(psi) * x / r
                tdy = -math.cos(psi) * thy + math.sin(psi) * y / r
                gx = -mu / r ** 3
                return (vx, vy, gx * x + f / m * tdx, gx * y + f / m * tdy,
                        -tm.flow_kgps(f))

            k1 = deriv(x, y, vx, vy, m, t)
            k2 = deriv(x + hh / 2 * k1[0], y + hh / 2 * k1[1],
                       vx + hh / 2 * k1[2], vy + hh / 2 * k1[3],
                       m + hh / 2 * k1[4], t + hh / 2)
            k3 = deriv(x + hh / 2 * k2[0], y + hh / 2 * k2[1],
                       vx + hh / 2 * k2[2], vy + hh / 2 * k2[3],
                       m + hh / 2 * k2[4], t + hh / 2)
            k4 = deriv(x + hh * k3[0], y + hh * k3[1], vx + hh * k3[2],
                       vy + hh * k3[3], m + hh * k3[4], t + hh)
            x += hh / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y += hh / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            vx += hh / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            vy += hh / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            m += hh / 6 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
            t += hh
        return x, y, vx, vy, m

    def residuals(z):
        x, y, vx, vy, m = rollout(z, 4.0)
        r = math.hypot(x, y)
        speed = math.hypot(vx, vy)
        sink = -(vx * x + vy * y) / r
        return [(speed - targets.handover_speed_mps) / 2.0,
                (r - site_radius_m - targets.handover_alt_m) / 40.0,
                (sink - targets.handover_sink_mps) / 1.0,
                0.3 * (z[0] - targets.pitch_nodes_rad[0]),
                0.2 * (z[4] - targets.pitch_nodes_rad[4])]

    z0 = np.array(list(targets.pitch_nodes_rad) + list(targets.thrust_nodes_n))
    sol = least_squares(residuals, z0, diff_step=2e-3, xtol=1e-10, max_nfev=200)
    hard = np.abs(np.asarray(sol.fun[:3]))
    if np.any(hard > 5.0):
        raise ProfileInfeasible(
            f"braking shooting left residuals {np.round(sol.fun[:3], 2)} "
            "(scaled); thrust authority or targets infeasible")
    z = sol.x
    # densify the converged schedule into profile nodes
    psis = z[:5]
    fs = np.array([z[5], z[5], z[6], z[6], z[7]])
    tn = np.linspace(0.0, T, 5)
    n_nodes = int(T / node_spacing_s) + 1
    t_nodes = np.linspace(0.0, T, n_nodes)
    quats = np.zeros((n_nodes, 4))
    thrusts = np.zeros(n_nodes)
    # track the planar state to build per-node attitude from geometry
    x, y, vx, vy, m = s0
    dt = 1.0
    k = 0
    t = 0.0
    while True:
        if k < n_nodes and t >= t_nodes[k] - 1e-9:
            r = math.hypot(x, y)
            psi = float(np.interp(t, tn, psis))
            f = min(max(float(np.interp(t, tn, fs)), tm.f_floor), tm.f_max)
            r_hat = (x * e1 + y * e2) / r
            t_hat = (-y * e1 + x * e2) / r
            z_b = unit(-math.cos(psi) * t_hat + math.sin(psi) * r_hat)
            quats[k] = attitude_from_thrust_dir(z_b, r_hat)
            thrusts[k] = f
            k += 1
            if k == n_nodes:
                break

        def deriv(x, y, vx, vy, m, tt):
            r = math.hypot(x, y)
            psi = float(np.interp(tt, tn, psis))
            f = min(max(float(np.interp(tt, tn, fs)), tm.f_floor), tm.f_max)
            tdx = -math.cos(psi) * (-y / r) + math.sin(psi) * x / r
            tdy = -math.cos(psi) * (x / r) + math.sin(psi) * y / r
            gx = -mu / r ** 3
            return (vx, vy, gx * x + f / m * tdx, gx * y + f / m * tdy,
                    -tm.flow_kgps(f))

        k1 = deriv(x, y, vx, vy, m, t)
        k2 = deriv(x + dt / 2 * k1[0], y + dt / 2 * k1[1], vx + dt / 2 * k1[2],
                   vy + dt / 2 * k1[3], m + dt / 2 * k1[4], t + dt / 2)
        k3 = deriv(x + dt / 2 * k2[0], y + dt / 2 * k2[1], vx + dt / 2 * k2[2],
                   vy + dt / 2 * k2[3], m + dt / 2 * k2[4], t + dt / 2)
        k4 = deriv(x + dt * k3[0], y + dt * k3[1], vx + dt * k3[2],
                   vy + dt * k3[3], m + dt * k3[4], t + dt)
        x += dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        vx += dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        vy += dt / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        m += dt / 6 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        t += dt
    # landing site: 150 km downrange of the braking end point
    end_dir = unit(x * e1 + y * e2)
    site_dir = _advance_along_track(end_dir, e3, 150e3 / site_radius_m)
    profile = AttitudeThrustProfile(t_nodes, quats, thrusts, epoch_s=epoch_s)
    return profile, site_dir


def _advance_along_track(u_dir, orbit_normal, angle_rad):
    """Rotate a direction about the orbit normal, along the motion."""
    t_hat = unit(cross(orbit_normal, u_dir))
    return unit(math.cos(angle_rad) * u_dir + math.sin(angle_rad) * t_hat)


def attitude_from_thrust_dir(z_body_mci, up_hint_mci, yaw_rad: float = 0.0):
    """Reference quaternion with body +Z along the thrust direction and
    body +X as close to the up-hint as orthogonality allows."""
    z_b = unit(np.asarray(z_body_mci, dtype=float))
    hint = np.asarray(up_hint_mci, dtype=float)
    x_b = hint - z_b * float(hint @ z_b)
    n = norm(x_b)
    if n < 1e-8:
        # thrust along the hint: fall back to any perpendicular
        alt = np.array([1.0, 0.0, 0.0])
        if abs(float(z_b @ alt)) > 0.9:
            alt = np.array([0.0, 1.0, 0.0])
        x_b = alt - z_b * float(alt @ z_b)
        n = norm(x_b)
    x_b = x_b / n
    y_b = cross(z_b, x_b)
    q = from_dcm(np.array([x_b, y_b, z_b]))
    if yaw_rad != 0.0:
        q = qmul(q, from_rotvec(np.array([0.0, 0.0, yaw_rad])))
    return q


# --- closed-loop landing law ----------------------------------------------------

def compute_tgo(dr_m, v_mps, gamma, t_min_s: float = 8.0,
                t_max_s: float = 900.0) -> float:
    """Largest positive real root of the guidance time quartic,

        gamma t^4 - 2(v.v) t^2 - 12(v.dr) t - 18(dr.dr) = 0,

    clamped to configured bounds.  Gravity does not enter the quartic.
    """
    dr = np.asarray(dr_m, dtype=float)
    v = np.asarray(v_mps, dtype=float)
    r2 = float(dr @ dr)
    v2 = float(v @ v)
    if r2 == 0.0 and v2 == 0.0:
        return t_min_s
    coeffs = [gamma, 0.0, -2.0 * v2, -12.0 * float(v @ dr), -18.0 * r2]
    roots = np.roots(coeffs)
    best = None
    for r in roots:
        if abs(r.imag) < 1e-9 * max(1.0, abs(r.real)) and r.real > 0.0:
            best = r.real if best is None else max(best, r.real)
    if best is None:
        raise ArithmeticError("time-to-go quartic has no positive real root")
    return min(max(best, t_min_s), t_max_s)


def dsouza_accel(dr_m, v_mps, tgo_s: float, gravity_mps2,
                 accel_cap_mps2: float = None):
    """Commanded thrust acceleration nulling position/velocity error.

        a = 6 dr / tgo^2 - 4 v / tgo - g

    Saturation preserves direction and sets the flag.  Returns
    (accel, saturated).
    """
    if tgo_s <= 0.0:
        raise ValueError("tgo must be positive")
    dr = np.asarray(dr_m, dtype=float)
    v = np.asarray(v_mps, dtype=float)
    g = np.asarray(gravity_mps2, dtype=float)
    a = 6.0 * dr / tgo_s ** 2 - 4.0 * v / tgo_s - g
    saturated = False
    if accel_cap_mps2 is not None:
        mag = norm(a)
        if mag > accel_cap_mps2 > 0.0:
            a = a * (accel_cap_mps2 / mag)
            saturated = True
    return a, saturated


# --- turn and terminal descent ---------------------------------------------------

@dataclass
class DescentPhaseTargets:
    approach_target_alt_m: float = 160.0
    approach_gamma: float = 22.0
    tgo_min_s: float = 8.0
    tgo_max_s: float = 900.0
    turn_trigger_speed_mps: float = 3.0
    turn_trigger_tgo_s: float = 5.0
    turn_clamp_timeout_s: float = 60.0
    turn_slew_rate_radps: float = math.radians(3.0)
    terminal_start_alt_m: float = 130.0
    vertical_descent_alt_m: float = 10.0
    main_cutoff_alt_m: float = 2.0
    rct_cutoff_alt_m: float = 1.0
    divert_cap_m: float = 20.0
    divert_min_prop_kg: float = 12.0
    landing_azimuth_rad: float = 0.0
    # piecewise-constant sink-rate schedule: (altitude floor m, sink m/s)
    sink_schedule: tuple = ((25.0, 1.6), (10.0, 0.9), (2.5, 0.55), (0.0, 0.35))
    tilt_limit_rad: float = math.radians(12.0)
    lat_kill_gain: float = 0.45
    lat_pos_gain: float = 0.12

    def __post_init__(self):
        if not (self.vertical_descent_alt_m > self.main_cutoff_alt_m
                > self.rct_cutoff_alt_m):
            raise ValueError("cutoff altitudes must be ordered 10 > 2 > 1 m")

    def sink_target(self, alt_m: float) -> float:
        for floor, sink in self.sink_schedule:
            if alt_m >= floor:
                return sink
        return self.sink_schedule[-1][1]


def turn_phase_guidance(q_ref_prev, up_mci, mass_est_kg: float,
                        g_mps2: float, dt_s: float,
                        tgt: DescentPhaseTargets,
                        yaw_rad: float = 0.0) -> GuidanceCommand:
    """Slew the longitudinal axis to vertical; weight on the RCTs."""
    q_goal = attitude_from_thrust_dir(up_mci, _up_hint(up_mci), yaw_rad)
    q_ref = _rate_limited_slew(q_ref_prev, q_goal, tgt.turn_slew_rate_radps, dt_s)
    thrust = mass_est_kg * g_mps2
    return GuidanceCommand(q_ref, thrust, "off", "turn")


def terminal_descent_guidance(alt_m: float, sink_mps: float, vel_en_mps,
                              pos_en_m, target_en_m, up_mci, east_mci,
                              north_mci, mass_est_kg: float, g_mps2: float,
                              tgt: DescentPhaseTargets, sub_state: str,
                              sink_gain: float = 1.2) -> GuidanceCommand:
    """One terminal-descent cycle: sink-rate tracking plus lateral tilt.

    sub_state selects behaviors: below the main-engine cutoff altitude
    the main engine is commanded off; below the RCT cutoff everything is
    off and the vehicle free-falls.
    """
    if sub_state == "freefall":
        q_ref = attitude_from_thrust_dir(up_mci, _up_hint(up_mci),
                                         tgt.landing_azimuth_rad)
        return GuidanceCommand(q_ref, 0.0, "off", "terminal/freefall")
    sink_ref = tgt.sink_target(alt_m)
    a_up = g_mps2 + sink_gain * (sink_mps - sink_ref)
    a_up = max(a_up, 0.1 * g_mps2)
    # lateral: damp velocity toward zero (or steer to the divert target)
    v_en = np.asarray(vel_en_mps, dtype=float)
    a_lat = -tgt.lat_kill_gain * v_en
    if target_en_m is not None:
        err = np.asarray(target_en_m, dtype=float) - np.asarray(pos_en_m, float)
        a_lat = a_lat + tgt.lat_pos_gain * err
    lat_cap = a_up * math.tan(tgt.tilt_limit_rad)
    lat_mag = norm(np.array([a_lat[0], a_lat[1], 0.0]))
    if lat_mag > lat_cap > 0.0:
        a_lat = a_lat * (lat_cap / lat_mag)
    a_vec = (a_up * np.asarray(up_mci, float)
             + a_lat[0] * np.asarray(east_mci, float)
             + a_lat[1] * np.asarray(north_mci, float))
    thrust = mass_est_kg * norm(a_vec)
    q_ref = attitude_from_thrust_dir(a_vec, _up_hint(up_mci),
                                     tgt.landing_azimuth_rad)
    main = "pulsed"
    if alt_m <= tgt.main_cutoff_alt_m or sub_state == "rct_sink":
        main = "off"
    return GuidanceCommand(q_ref, float(thrust), main,
                           f"terminal/{sub_state}",
                           accel_cmd_mps2=a_vec)


def _up_hint(up_mci):
    """Horizontal-ish hint for the body +X axis during vertical flight."""
    up = unit(np.asarray(up_mci, dtype=float))
    cand = np.array([0.0, 0.0, 1.0])
    if abs(float(up @ cand)) > 0.95:
        cand = np.array([1.0, 0.0, 0.0])
    return unit(cand - up * float(up @ cand))


def _rate_limited_slew(q_from, q_to, rate_radps, dt_s):
    from .quat import angle_between
    ang = angle_between(q_from, q_to)
    if ang < 1e-9:
        return q_to
    f = min(1.0, rate_radps * dt_s / ang)
    return slerp(q_from, q_to, f)


# --- delta-v burn references ------------------------------------------------------

@dataclass
class BurnSpec:
    dv_mps: float
    direction_mci: np.ndarray
    use_main_engine: bool = True
    timeout_s: float = 300.0
    attitude_gate_rad: float = math.radians(1.0)
    gate_deadline_s: float = 600.0


def deltav_reference(spec: BurnSpec, accumulated_dv_mps: float,
                     elapsed_burn_s: float, accel_valid: bool = True):
    """Burn attitude + termination decision.

    Returns (GuidanceCommand, done).  Termination prefers accumulated
    accelerometer delta-v; the timer is the fallback path.
    """
    d = unit(np.asarray(spec.direction_mci, dtype=float))
    q_ref = attitude_from_thrust_dir(d, _perp_hint(d))
    if spec.dv_mps <= 0.0:
        return GuidanceCommand(q_ref, 0.0, "off", "deltav"), True
    done = False
    if accel_valid and accumulated_dv_mps >= spec.dv_mps:
        done = True
    if elapsed_burn_s >= spec.timeout_s:
        done = True
    mode = "steady" if spec.use_main_engine else "off"
    return GuidanceCommand(q_ref, 0.0, mode, "deltav"), done


def _perp_hint(d):
    cand = np.array([0.0, 0.0, 1.0])
    if abs(float(d @ cand)) > 0.9:
        cand = np.array([0.0, 1.0, 0.0])
    return cand
