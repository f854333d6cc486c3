"""Attitude control law, PWPFM, and torque/thrust-to-thruster mapping.

The controller produces a body torque demand; per-axis pulse-width
pulse-frequency modulators convert it to thruster pulse trains; the
allocator composes those pulses with the axial-thrust demand into ON
widths for the 16 RCTs and the main engine, per flight mode:

- pointing/burn: attitude on the active canted block (ON pulses),
  main or inner ring steady for burns.
- axial (braking/approach, high thrust): main steady, canted block
  normally ON, inner ring at collective duty; pitch/roll trims by
  OFF-pulsing diagonal inner pairs, yaw by OFF-pulsing canted pairs.
- pulsed-main (late approach/terminal): inner ring carries the thrust
  demand first, the remainder goes to the main engine as a 1 Hz PWM
  duty; attitude from canted ON pulses.
- rct-sink (below main cutoff): main off, both canted blocks enabled
  to carry the weight together with the inner ring.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .actuators import (INNER, MAIN, N_THRUSTERS, OUTER_A, OUTER_B,
                        ActuatorCommand, ThrusterGeometry,
                        aggregate_force_torque, failure_disable_set)
from .quat import qconj, qmul, to_rotvec


@dataclass
class ControllerGains:
    kp: np.ndarray
    kd: np.ndarray
    ki: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque_limit_nm: np.ndarray = field(default_factory=lambda: np.full(3, 30.0))
    integral_limit_nm: np.ndarray = field(default_factory=lambda: np.full(3, 5.0))

    def __post_init__(self):
        for name in ("kp", "kd", "ki", "torque_limit_nm", "integral_limit_nm"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(3, float(v))
            if np.any(v < 0):
                raise ValueError(f"{name} must be non-negative")
            setattr(self, name, v)


class AttitudeController:
    """PD (optionally PID) tracking of a reference quaternion."""

    def __init__(self, gains: ControllerGains):
        self.gains = gains
        self.integral = np.zeros(3)

    def reset_integral(self):
        self.integral[:] = 0.0

    def torque(self, q_ref, q_est, rate_est_radps, dt_s: float,
               rate_ref_radps=None) -> np.ndarray:
        g = self.gains
        dq = qmul(qconj(q_est), q_ref)
        theta = to_rotvec(dq)          # body-frame rotation to the reference
        w_err = (np.zeros(3) if rate_ref_radps is None
                 else np.asarray(rate_ref_radps, float)) - rate_est_radps
        if np.any(g.ki > 0):
            self.integral += theta * dt_s
            self.integral = np.clip(
                self.integral,
                -g.integral_limit_nm / np.maximum(g.ki, 1e-12),
                g.integral_limit_nm / np.maximum(g.ki, 1e-12))
        tau = g.kp * theta + g.kd * w_err + g.ki * self.integral
        return np.clip(tau, -g.torque_limit_nm, g.torque_limit_nm)


def attitude_controller(q_ref, q_est, rate_est_radps, gains: ControllerGains,
                        dt_s: float = 0.05) -> np.ndarray:
    """Stateless PD torque demand (integral term zeroed)."""
    pd = ControllerGains(gains.kp, gains.kd, np.zeros(3),
                         gains.torque_limit_nm, gains.integral_limit_nm)
    return AttitudeController(pd).torque(q_ref, q_est, rate_est_radps, dt_s)


# --- pulse-width pulse-frequency modulation ------------------------------------

@dataclass
class PwpfmParams:
    km: float = 4.5
    tau_s: float = 0.15
    u_on: float = 0.45
    u_off: float = 0.15

    def __post_init__(self):
        if not (self.u_on > self.u_off > 0.0):
            raise ValueError("need U_on > U_off > 0 for hysteresis")

    @property
    def dead_zone(self) -> float:
        """Demand below this never produces a pulse."""
        return self.u_on / self.km

    @property
    def saturation_level(self) -> float:
        """Demand above this keeps the output continuously on."""
        return 1.0 + self.u_off / self.km


class Pwpfm:
    """One axis: first-order filter on (demand - output) into a Schmitt
    trigger.  The filter ODE is solved piecewise-exactly inside each
    control interval, so pulse widths are not quantized to the GNC rate.
    """

    def __init__(self, params: PwpfmParams):
        self.p = params
        self.x = 0.0
        self.u = 0

    def reset(self):
        self.x = 0.0
        self.u = 0

    def step(self, demand: float, dt_s: float):
        """Advance one control interval at constant demand.

        Returns (width_pos_s, width_neg_s): ON time of each output sign
        inside the interval (at most one sign is nonzero in practice).
        """
        p = self.p
        t = 0.0
        w_pos = 0.0
        w_neg = 0.0
        guard = 0
        while t < dt_s - 1e-12 and guard < 64:
            guard += 1
            target = p.km * (demand - self.u)
            remaining = dt_s - t
            if self.u == 0:
                thr = p.u_on if target > self.x else -p.u_on
                t_hit = _cross_time(self.x, target, thr, p.tau_s)
                if t_hit is None or t_hit >= remaining:
                    self.x = _filter_at(self.x, target, remaining, p.tau_s)
                    t = dt_s
                else:
                    self.x = thr
                    self.u = 1 if thr > 0 else -1
                    t += t_hit
            else:
                thr = p.u_off if self.u > 0 else -p.u_off
                t_hit = _cross_time(self.x, target, thr, p.tau_s)
                dur = remaining if (t_hit is None or t_hit >= remaining) else t_hit
                if self.u > 0:
                    w_pos += dur
                else:
                    w_neg += dur
                if t_hit is None or t_hit >= remaining:
                    self.x = _filter_at(self.x, target, remaining, p.tau_s)
                    t = dt_s
                else:
                    self.x = thr
                    self.u = 0
                    t += t_hit
        return w_pos, w_neg


def _filter_at(x0, target, t, tau):
    return target + (x0 - target) * math.exp(-t / tau)


def _cross_time(x0, target, threshold, tau):
    """Time for the first-order response to reach the threshold, or None."""
    a = x0 - target
    b = threshold - target
    if a == 0.0 or b / a <= 0.0 or abs(b) > abs(a):
        return None
    return tau * math.log(a / b)


# --- allocation ------------------------------------------------------------------

@dataclass
class AllocationTable:
    active_block: str                     # "outer_a" | "outer_b"
    enabled: np.ndarray                   # (17,) bool
    pairs: dict                           # (axis, sign) -> [thruster ids]
    inner_off_pairs: dict                 # (axis, sign) -> inner ids to OFF-pulse
    yaw_off_pairs: dict                   # sign -> canted ids to OFF-pulse
    torque_scale_nm: np.ndarray           # per-axis authority of ON pairs


class UncontrollableConfiguration(RuntimeError):
    pass


def build_allocation_table(geometry: ThrusterGeometry, cg_body_m,
                           active_block: str = "outer_a",
                           disabled=()) -> AllocationTable:
    """Derive pulse pairs from the geometry's torque influence vectors."""
    block_ids = OUTER_A if active_block == "outer_a" else OUTER_B
    enabled = np.ones(N_THRUSTERS, dtype=bool)
    inactive = OUTER_B if active_block == "outer_a" else OUTER_A
    for i in inactive:
        enabled[i] = False
    for i in disabled:
        enabled[i] = False
    usable = [i for i in block_ids if enabled[i]]
    torques = {}
    for i in usable:
        th = np.zeros(N_THRUSTERS)
        th[i] = geometry_nominal(geometry, i)
        _, tq = aggregate_force_torque(th, geometry, cg_body_m)
        torques[i] = tq
    if len(usable) < 3 or np.linalg.matrix_rank(
            np.array([torques[i] for i in usable]), tol=1e-6) < 3:
        raise UncontrollableConfiguration(
            f"active block {active_block} cannot span all torque axes")
    pairs = {}
    scale = np.zeros(3)
    for axis in range(3):
        for sign in (+1, -1):
            score = sorted(usable, key=lambda i: -sign * torques[i][axis])
            best = [s for s in score[:2] if sign * torques[s][axis] > 1e-9]
            if not best:
                raise UncontrollableConfiguration(
                    f"no thruster produces axis {axis} sign {sign}")
            pairs[(axis, sign)] = best
            scale[axis] = max(scale[axis],
                              sum(sign * torques[i][axis] for i in best))
    # inner OFF-pulse pairs for pitch/roll trims (removal torque)
    inner_off = {}
    for axis in range(2):
        for sign in (+1, -1):
            score = []
            for i in INNER:
                if not enabled[i]:
                    continue
                th = np.zeros(N_THRUSTERS)
                th[i] = geometry_nominal(geometry, i)
                _, tq = aggregate_force_torque(th, geometry, cg_body_m)
                score.append((float(-sign * tq[axis]), i))
            score.sort(reverse=True)
            inner_off[(axis, sign)] = [i for v, i in score[:2] if v > 1e-9]
    yaw_off = {+1: pairs[(2, -1)], -1: pairs[(2, +1)]}
    return AllocationTable(active_block, enabled, pairs, inner_off, yaw_off,
                           scale)


def geometry_nominal(geometry: ThrusterGeometry, i: int) -> float:
    return 460.0 if i == MAIN else 22.0


def reconfigure_failure(geometry: ThrusterGeometry, cg_body_m,
                        table: AllocationTable, failed_ids):
    """Apply the failure doctrine and rebuild the table.

    Canted failure swaps the active block; inner failure disables the
    matched diametric pair.  Returns (table, events).
    """
    disabled, events = failure_disable_set(failed_ids)
    block = table.active_block
    if disabled & set(OUTER_A) and block == "outer_a":
        block = "outer_b"
        events.append("active_block_switched_to_b")
    if disabled & set(OUTER_B) and block == "outer_b":
        block = "outer_a"
        events.append("active_block_switched_to_a")
    inner_disabled = tuple(disabled & set(INNER))
    new = build_allocation_table(geometry, cg_body_m, block, inner_disabled)
    if MAIN in disabled:
        new.enabled[MAIN] = False
    return new, events


class Allocator:
    """Composes torque pulses and axial thrust into actuator commands."""

    def __init__(self, geometry: ThrusterGeometry, cg_body_m,
                 pwpfm_params: PwpfmParams, cycle_s: float = 0.05,
                 main_pwm_period_s: float = 1.0):
        self.geometry = geometry
        self.table = build_allocation_table(geometry, cg_body_m)
        self.doctrine_disabled = set()
        self.pwpfm = [Pwpfm(pwpfm_params) for _ in range(3)]
        self.cycle_s = cycle_s
        self.main_pwm_period_s = main_pwm_period_s
        self._pwm_phase = 0.0
        self.saturated = False
        self.main_nominal_n = 460.0
        self.rct_nominal_n = 22.0
        zdir = geometry.directions[OUTER_A[0]]
        self.cant_cos = float(zdir[2])

    def set_pwpfm_params(self, params: PwpfmParams):
        for ax in self.pwpfm:
            ax.p = params

    def apply_failures(self, cg_body_m, failed_ids):
        self.table, events = reconfigure_failure(self.geometry, cg_body_m,
                                                 self.table, failed_ids)
        self.doctrine_disabled, _ = failure_disable_set(failed_ids)
        return events

    def allocate(self, torque_demand_nm, axial_thrust_n: float,
                 main_mode: str, thrust_mode: str) -> ActuatorCommand:
        """One control interval.

        thrust_mode: "idle" | "axial" | "pulsed_main" | "rct_sink" |
        "rct_burn".  main_mode: "off" | "steady" | "pulsed".
        """
        dt = self.cycle_s
        width = np.zeros(N_THRUSTERS)
        tab = self.table
        self.saturated = False
        # per-axis PWPFM on normalized demand
        pulses = []
        for axis in range(3):
            auth = max(tab.torque_scale_nm[axis], 1e-9)
            e = float(torque_demand_nm[axis]) / auth
            if abs(e) > 2.0:
                self.saturated = True
                e = math.copysign(2.0, e)
            pulses.append(self.pwpfm[axis].step(e, dt))

        if thrust_mode == "axial":
            # main steady, canted block on, inner ring duty for the trim
            width[MAIN] = dt
            f_canted = 4.0 * self.rct_nominal_n * self.cant_cos
            extra = axial_thrust_n - self.main_nominal_n - f_canted
            duty = min(max(extra / (8.0 * self.rct_nominal_n), 0.0), 1.0)
            for i in INNER:
                width[i] = duty * dt
            for i in self._active_ids():
                width[i] = dt
            # pitch/roll by OFF-pulsing inner diagonal pairs
            for axis in range(2):
                w_pos, w_neg = pulses[axis]
                for sign, w in ((+1, w_pos), (-1, w_neg)):
                    if w <= 0.0:
                        continue
                    for i in tab.inner_off_pairs.get((axis, sign), ()):
                        width[i] = max(width[i] - w, 0.0)
            # yaw by OFF-pulsing the opposing canted pair
            w_pos, w_neg = pulses[2]
            for sign, w in ((+1, w_pos), (-1, w_neg)):
                if w <= 0.0:
                    continue
                for i in tab.yaw_off_pairs[sign]:
                    width[i] = max(width[i] - w, 0.0)
        else:
            # attitude from canted ON pulses around an optional base duty
            base = 0.0
            inner_duty = 0.0
            if thrust_mode in ("pulsed_main", "rct_sink", "rct_support"):
                f_rct_inner = 8.0 * self.rct_nominal_n
                inner_duty = min(max(axial_thrust_n / f_rct_inner, 0.0), 1.0)
                remainder = axial_thrust_n - inner_duty * f_rct_inner
                if thrust_mode == "rct_sink":
                    # both canted blocks share the residual support
                    f_blocks = (8.0 if self._both_blocks_usable() else 4.0) \
                        * self.rct_nominal_n * self.cant_cos
                    base = min(max(remainder / max(f_blocks, 1e-9), 0.0), 1.0)
                elif thrust_mode == "rct_support":
                    f_block = len(self._active_ids()) * self.rct_nominal_n \
                        * self.cant_cos
                    base = min(max(remainder / max(f_block, 1e-9), 0.0), 1.0)
                elif main_mode == "pulsed":
                    duty = min(max(remainder / self.main_nominal_n, 0.0), 1.0)
                    width[MAIN] = self._main_pwm(duty)
            elif thrust_mode == "rct_burn":
                inner_duty = 1.0
            if main_mode == "steady":
                width[MAIN] = dt
            for i in INNER:
                width[i] = inner_duty * dt
            on_ids = (self._active_ids() if thrust_mode != "rct_sink"
                      else self._all_canted_usable())
            for i in on_ids:
                width[i] = base * dt
            for axis in range(3):
                w_pos, w_neg = pulses[axis]
                for sign, w in ((+1, w_pos), (-1, w_neg)):
                    if w <= 0.0:
                        continue
                    for i in tab.pairs.get((axis, sign), ()):
                        width[i] = min(width[i] + w, dt)
        if thrust_mode == "rct_sink":
            # commit-to-land: only genuine hardware failures stay silent
            for i in self.doctrine_disabled:
                width[i] = 0.0
            width[MAIN] = 0.0
        else:
            width[~tab.enabled] = 0.0
        self._pwm_phase = (self._pwm_phase + dt) % self.main_pwm_period_s
        return ActuatorCommand(width, main_mode)

    def _active_ids(self):
        ids = OUTER_A if self.table.active_block == "outer_a" else OUTER_B
        return [i for i in ids if self.table.enabled[i]]

    def _all_canted_usable(self):
        # commit-to-land support: every canted thruster still in service
        return [i for i in OUTER_A + OUTER_B if i not in self.doctrine_disabled]

    def _both_blocks_usable(self) -> bool:
        return len(self._all_canted_usable()) >= 8

    def _main_pwm(self, duty: float) -> float:
        """Main-engine width for this cycle under slow fixed-period PWM."""
        period = self.main_pwm_period_s
        on_until = duty * period
        t0 = self._pwm_phase
        t1 = t0 + self.cycle_s
        return max(0.0, min(t1, on_until) - t0)
