"""Main engine and RCT models: geometry, transients, propellant accounting.

The actuator complement is a centrally mounted 460 N main engine plus
sixteen 22 N reaction control thrusters (RCTs): eight on an inner ring
aligned with the main engine axis to augment axial thrust, and eight on
an outer ring canted 10 deg in-plane, grouped into two redundant blocks
of four for 3-axis attitude control.

Thrust transients are a cascade of three critically damped second-order
stages plus a first-order lag, preceded by a pure command latency.
Thrust and Isp both carry duty-cycle dependence via lookup tables; the
duty cycle is tracked per thruster with a sliding-window average.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .quat import cross

G0 = 9.80665

# thruster indices
INNER = list(range(0, 8))
OUTER_A = list(range(8, 12))
OUTER_B = list(range(12, 16))
MAIN = 16
N_THRUSTERS = 17
TRANSIENT_STATES = 7  # [lag, s1x, s1v, s2x, s2v, s3x, s3v]


@dataclass
class EngineParams:
    """Per-class engine model parameters."""

    nominal_thrust_n: float
    isp_steady_s: float
    latency_s: float = 0.010
    lag_tau_s: float = 0.008
    stage_omega_radps: float = 160.0
    min_pulse_s: float = 0.010
    duty_grid: np.ndarray = field(
        default_factory=lambda: np.array([0.05, 0.1, 0.25, 0.5, 0.75, 1.0]))
    isp_factor: np.ndarray = field(
        default_factory=lambda: np.array([0.60, 0.72, 0.85, 0.93, 0.97, 1.0]))
    thrust_factor: np.ndarray = field(
        default_factory=lambda: np.array([0.95, 0.96, 0.97, 0.98, 0.99, 1.0]))
    duty_window_s: float = 2.0


@dataclass
class ThrusterGeometry:
    """Mount positions and thrust directions in the body frame."""

    positions_m: np.ndarray      # (17, 3)
    directions: np.ndarray      # (17, 3) unit, force on vehicle
    groups: list                 # per-thruster group tag


def default_geometry(inner_radius_m=0.45, outer_radius_m=0.85,
                     cant_deg=10.0) -> ThrusterGeometry:
    """Build the 16 RCT + main engine layout.

    Inner ring at 45 deg spacing, all thrusting +Z.  Outer blocks A
    (diagonal azimuths) and B (cardinal azimuths) cant 10 deg
    tangentially with alternating handedness so each block can torque
    all three axes.
    """
    pos = np.zeros((N_THRUSTERS, 3))
    dirs = np.zeros((N_THRUSTERS, 3))
    groups = []
    cant = math.radians(cant_deg)
    for i, az_deg in enumerate(range(0, 360, 45)):
        az = math.radians(az_deg)
        pos[i] = [inner_radius_m * math.cos(az), inner_radius_m * math.sin(az), 0.0]
        dirs[i] = [0.0, 0.0, 1.0]
        groups.append("inner")
    block_az = {"outer_a": [45.0, 135.0, 225.0, 315.0],
                "outer_b": [0.0, 90.0, 180.0, 270.0]}
    idx = 8
    for name in ("outer_a", "outer_b"):
        for j, az_deg in enumerate(block_az[name]):
            az = math.radians(az_deg)
            s = 1.0 if j % 2 == 0 else -1.0  # alternating yaw handedness
            tangent = np.array([-math.sin(az), math.cos(az), 0.0])
            pos[idx] = [outer_radius_m * math.cos(az), outer_radius_m * math.sin(az), 0.0]
            dirs[idx] = math.cos(cant) * np.array([0.0, 0.0, 1.0]) + s * math.sin(cant) * tangent
            groups.append(name)
            idx += 1
    pos[MAIN] = [0.0, 0.0, 0.0]
    dirs[MAIN] = [0.0, 0.0, 1.0]
    groups.append("main")
    return ThrusterGeometry(pos, dirs, groups)


@dataclass
class ActuatorCommand:
    """Per-thruster ON durations for one control interval.

    pulse_width_s[i] is how long thruster i is commanded ON starting at
    the beginning of the interval (after command latency).  Widths are
    clamped to the interval; widths below the minimum impulse bit are
    rounded to zero when latched by the actuator bank.
    """

    pulse_width_s: np.ndarray
    main_mode: str = "off"  # off | steady | pulsed

    @staticmethod
    def all_off():
        return ActuatorCommand(np.zeros(N_THRUSTERS), "off")


def apply_failure_mask(cmd: ActuatorCommand, enabled: np.ndarray) -> ActuatorCommand:
    """Zero the commands of disabled thrusters."""
    width = cmd.pulse_width_s.copy()
    width[~enabled] = 0.0
    return ActuatorCommand(width, cmd.main_mode)


def failure_disable_set(failed_ids) -> tuple:
    """Thrusters to disable and the events raised for a failure set.

    A failed canted thruster takes its whole block out of service (the
    redundant block takes over).  A failed inner thruster is disabled
    together with its diametrically opposite partner to preserve torque
    balance.  Main engine failure and multiple independent RCT failures
    are unsupported configurations.
    """
    disabled = set()
    events = []
    rct_failures = [i for i in failed_ids if i != MAIN]
    if MAIN in failed_ids:
        events.append("main_engine_failure_abort")
    if len(rct_failures) > 1:
        events.append("unsupported_multiple_rct_failures")
    for i in rct_failures:
        if i in INNER:
            partner = (i + 4) % 8
            disabled.update((i, partner))
            events.append(f"inner_pair_disabled_{i}_{partner}")
        elif i in OUTER_A:
            disabled.update(OUTER_A)
            events.append("outer_block_a_disabled")
        elif i in OUTER_B:
            disabled.update(OUTER_B)
            events.append("outer_block_b_disabled")
    if MAIN in failed_ids:
        disabled.add(MAIN)
    return disabled, events


def aggregate_force_torque(thrusts_n, geometry: ThrusterGeometry, cg_body_m):
    """Total body force (N) and torque about the CG (N m)."""
    force = np.zeros(3)
    torque = np.zeros(3)
    cg = np.asarray(cg_body_m, dtype=float)
    for i in range(thrusts_n.shape[0]):
        f = thrusts_n[i]
        if f == 0.0:
            continue
        fv = f * geometry.directions[i]
        force += fv
        torque += cross(geometry.positions_m[i] - cg, fv)
    return force, torque


class ActuatorBank:
    """Latches commands and advances every thruster's transient state.

    All mutable state lives in flat arrays so the truth kernel can
    advance it without boxing; this class is the bookkeeping wrapper.
    """

    def __init__(self, geometry: ThrusterGeometry, rct: EngineParams,
                 main: EngineParams, thrust_scale=None, isp_scale=None):
        self.geometry = geometry
        self.params = [rct] * 16 + [main]
        self.enabled = np.ones(N_THRUSTERS, dtype=bool)
        self.states = np.zeros((N_THRUSTERS, TRANSIENT_STATES))
        self.duty = np.zeros(N_THRUSTERS)
        self.on_from = np.full(N_THRUSTERS, np.inf)
        self.on_until = np.full(N_THRUSTERS, -np.inf)
        self.thrust_scale = np.ones(N_THRUSTERS) if thrust_scale is None else thrust_scale
        self.isp_scale = np.ones(N_THRUSTERS) if isp_scale is None else isp_scale
        # packed per-thruster constants for the kernel
        self.nominal_n = np.array([p.nominal_thrust_n for p in self.params])
        self.latency_s = np.array([p.latency_s for p in self.params])
        self.lag_tau_s = np.array([p.lag_tau_s for p in self.params])
        self.omega = np.array([p.stage_omega_radps for p in self.params])
        self.duty_window_s = np.array([p.duty_window_s for p in self.params])
        self.isp_steady = np.array([p.isp_steady_s for p in self.params])
        self.min_pulse_s = np.array([p.min_pulse_s for p in self.params])
        self.duty_grid = rct.duty_grid
        self.isp_factor = rct.isp_factor
        self.thrust_factor = rct.thrust_factor

    def set_disabled(self, disabled_ids):
        self.enabled = np.ones(N_THRUSTERS, dtype=bool)
        for i in disabled_ids:
            self.enabled[i] = False

    def latch(self, cmd: ActuatorCommand, t_now_s: float):
        """Accept a command for the interval starting at t_now."""
        for i in range(N_THRUSTERS):
            width = float(cmd.pulse_width_s[i])
            if not self.enabled[i]:
                width = 0.0
            if width < self.min_pulse_s[i]:
                width = 0.0
            if width <= 0.0:
                # allow a running pulse to finish per its schedule
                if self.on_from[i] > t_now_s + self.latency_s[i]:
                    self.on_from[i] = np.inf
                    self.on_until[i] = -np.inf
                continue
            start = t_now_s + self.latency_s[i]
            if self.on_from[i] <= t_now_s < self.on_until[i]:
                # already burning: extend without re-applying latency
                self.on_until[i] = max(self.on_until[i], start + width)
            else:
                self.on_from[i] = start
                self.on_until[i] = start + width

    def commanded_on(self, t_s: float) -> np.ndarray:
        return ((t_s >= self.on_from) & (t_s < self.on_until)).astype(float)

    def step(self, t_s: float, dt_s: float):
        """Advance transients one truth step; return (thrust N, flow kg/s).

        Pure-python reference used by unit tests; the simulation hot
        loop runs the identical update inside the compiled kernel.
        """
        u = self.commanded_on(t_s)
        thrust = np.zeros(N_THRUSTERS)
        flow = np.zeros(N_THRUSTERS)
        for i in range(N_THRUSTERS):
            st = self.states[i]
            ui = u[i] if self.enabled[i] else 0.0
            e_lag = math.exp(-dt_s / self.lag_tau_s[i])
            st[0] = ui + (st[0] - ui) * e_lag
            w = self.omega[i]
            ew = math.exp(-w * dt_s)
            x_in = st[0]
            for k in (1, 3, 5):
                x0, v0 = st[k] - x_in, st[k + 1]
                st[k] = x_in + ew * (x0 * (1.0 + w * dt_s) + v0 * dt_s)
                st[k + 1] = ew * (v0 * (1.0 - w * dt_s) - x0 * w * w * dt_s)
            level = min(max(st[5], 0.0), 1.2)
            self.duty[i] += (ui - self.duty[i]) * (dt_s / self.duty_window_s[i])
            d = min(max(self.duty[i], self.duty_grid[0]), 1.0)
            tf = float(np.interp(d, self.duty_grid, self.thrust_factor))
            isp = self.isp_steady[i] * float(np.interp(d, self.duty_grid, self.isp_factor))
            thrust[i] = self.nominal_n[i] * self.thrust_scale[i] * tf * level
            if thrust[i] > 0.0:
                flow[i] = thrust[i] / (G0 * isp * self.isp_scale[i])
        return thrust, flow


def settle_time_s(params: EngineParams, level=0.9, dt=1e-4, t_max=0.5) -> float:
    """Step-response time to reach ``level`` of steady state (excl. latency)."""
    bank = ActuatorBank(default_geometry(), params, params)
    bank.on_from[:] = 0.0
    bank.on_until[:] = t_max * 2
    t = 0.0
    while t < t_max:
        thrust, _ = bank.step(t, dt)
        if thrust[0] >= level * params.nominal_thrust_n:
            return t
        t += dt
    return t_max
