"""Mission modes, autonomous transitions, and telecommand processing.

The primary orbital mode is Normal (sun pointing inside a relaxed
deadband).  Orbit maneuvers run through the Delta-V sequencer: forward
slew, burn, reverse slew, hands-free.  Safe Mode triggers on sustained
sun-pointing deviation, Rate Safe Mode on sustained high body rates and
terminates all thruster activity.  Descent is entered only by ground
command as part of the pre-descent sequence and then progresses
autonomously through Braking, Approach, Turn, Terminal Descent and
Touchdown, strictly in that order.

Every transition appends one event record (time, from, to, cause,
source) so a run's mode history is fully reconstructible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# top-level modes
NORMAL = "normal"
DELTAV = "deltav"
SAFE = "safe"
RATE_SAFE = "rate_safe"
DESCENT = "descent"

# delta-v sequencer sub-states
DV_IDLE = "idle"
DV_FORWARD = "forward_slew"
DV_BURN = "burn"
DV_REVERSE = "reverse_slew"

# descent phases
PH_PREDESCENT = "predescent"
PH_BRAKING = "braking"
PH_APPROACH = "approach"
PH_TURN = "turn"
PH_TERMINAL = "terminal"
PH_TOUCHDOWN = "touchdown"
PHASE_ORDER = [PH_PREDESCENT, PH_BRAKING, PH_APPROACH, PH_TURN, PH_TERMINAL,
               PH_TOUCHDOWN]

# terminal-descent sub-states
TD_CONST_SINK = "const_sink"
TD_LAT_KILL = "lat_kill"
TD_SSID = "ssid_divert"
TD_VERTICAL = "vertical"
TD_RCT_SINK = "rct_sink"
TD_FREEFALL = "freefall"
TD_ORDER = [TD_CONST_SINK, TD_LAT_KILL, TD_SSID, TD_VERTICAL, TD_RCT_SINK,
            TD_FREEFALL]


@dataclass
class Telecommand:
    time_s: float
    opcode: str           # mode_descent | arm_sequencer | set_active_sensor |
    #                       param_patch | mode_normal
    payload: dict = field(default_factory=dict)


@dataclass
class ModeEvent:
    time_s: float
    from_state: str
    to_state: str
    cause: str
    source: str           # autonomous | telecommand


# sensor operation plan: per mode, per device: off | standby | in_loop
DEFAULT_SENSOR_PLAN = {
    NORMAL: {"imu": "in_loop", "star": "in_loop", "sun": "in_loop",
             "llrf": "off", "slrf": "off", "lds": "off"},
    DELTAV: {"imu": "in_loop", "star": "in_loop", "sun": "standby",
             "llrf": "off", "slrf": "off", "lds": "off"},
    SAFE: {"imu": "in_loop", "star": "standby", "sun": "in_loop",
           "llrf": "off", "slrf": "off", "lds": "off"},
    RATE_SAFE: {"imu": "in_loop", "star": "standby", "sun": "in_loop",
                "llrf": "off", "slrf": "off", "lds": "off"},
    DESCENT: {"imu": "in_loop", "star": "standby", "sun": "standby",
              "llrf": "in_loop", "slrf": "in_loop", "lds": "in_loop"},
}


def validate_sensor_plan(plan: dict):
    for mode, entries in plan.items():
        if entries.get("imu") != "in_loop":
            raise ValueError(f"IMU must be in the loop in mode {mode}")


@dataclass
class ContingencyConfig:
    rate_safe_threshold_radps: float = math.radians(4.0)
    rate_safe_persist_s: float = 3.0
    sun_dev_threshold_rad: float = math.radians(15.0)
    sun_dev_persist_s: float = 30.0


class ModeManager:
    """Evaluates triggers and sequences mode/phase transitions."""

    def __init__(self, contingency: ContingencyConfig = None,
                 sensor_plan: dict = None):
        self.contingency = contingency or ContingencyConfig()
        self.sensor_plan = sensor_plan or DEFAULT_SENSOR_PLAN
        validate_sensor_plan(self.sensor_plan)
        self.mode = NORMAL
        self.deltav_sub = DV_IDLE
        self.phase = None
        self.terminal_sub = None
        self.events = []
        self._rate_high_since = None
        self._sun_dev_since = None
        self.armed_burn = None
        self.rejected_commands = []

    # -- bookkeeping ---------------------------------------------------------

    def state_string(self) -> str:
        s = self.mode
        if self.mode == DELTAV:
            s += f"/{self.deltav_sub}"
        if self.mode == DESCENT:
            s += f"/{self.phase}"
            if self.phase == PH_TERMINAL and self.terminal_sub:
                s += f"/{self.terminal_sub}"
        return s

    def _transition(self, t_s, new_mode=None, new_phase=None, new_sub=None,
                    cause="", source="autonomous", new_dv=None):
        frm = self.state_string()
        if new_mode is not None:
            self.mode = new_mode
        if new_phase is not None:
            if self.phase is not None and new_phase in PHASE_ORDER \
                    and self.phase in PHASE_ORDER:
                if PHASE_ORDER.index(new_phase) < PHASE_ORDER.index(self.phase):
                    raise RuntimeError(
                        f"descent phase regression {self.phase} -> {new_phase}")
            self.phase = new_phase
        if new_sub is not None:
            if self.terminal_sub is not None and new_sub in TD_ORDER \
                    and self.terminal_sub in TD_ORDER:
                if TD_ORDER.index(new_sub) < TD_ORDER.index(self.terminal_sub):
                    raise RuntimeError(
                        f"terminal sub-state regression "
                        f"{self.terminal_sub} -> {new_sub}")
            self.terminal_sub = new_sub
        if new_dv is not None:
            self.deltav_sub = new_dv
        self.events.append(ModeEvent(t_s, frm, self.state_string(), cause,
                                     source))

    def sensor_state(self, device: str) -> str:
        return self.sensor_plan[self.mode].get(device, "off")

    # -- telecommands ----------------------------------------------------------

    def process_telecommand(self, tc: Telecommand, t_s: float,
                            uplink_ready: bool):
        """Returns the accepted opcode or None (rejections are logged)."""
        if tc.opcode == "mode_descent":
            if self.mode != NORMAL:
                self._reject(tc, t_s, f"descent refused in mode {self.mode}")
                return None
            if not uplink_ready:
                self._reject(tc, t_s, "descent refused: no uplink products")
                return None
            self._transition(t_s, new_mode=DESCENT, new_phase=PH_PREDESCENT,
                             cause="ground descent command",
                             source="telecommand")
            return tc.opcode
        if tc.opcode == "arm_sequencer":
            if self.mode != NORMAL:
                self._reject(tc, t_s, "sequencer arm refused outside normal")
                return None
            self.armed_burn = tc.payload
            self._transition(t_s, new_mode=DELTAV, new_dv=DV_FORWARD,
                             cause="sequencer armed", source="telecommand")
            return tc.opcode
        if tc.opcode == "set_active_sensor":
            return tc.opcode  # handled by the flight software owner
        if tc.opcode == "mode_normal":
            self._transition(t_s, new_mode=NORMAL, cause="ground mode command",
                             source="telecommand")
            self.deltav_sub = DV_IDLE
            self.phase = None
            self.terminal_sub = None
            return tc.opcode
        if tc.opcode == "param_patch":
            return tc.opcode
        self._reject(tc, t_s, f"unknown opcode {tc.opcode}")
        return None

    def _reject(self, tc, t_s, reason):
        self.rejected_commands.append((t_s, tc.opcode, reason))

    # -- autonomous triggers ----------------------------------------------------

    def check_contingencies(self, t_s: float, rate_mag_radps: float,
                            sun_dev_rad, sun_visible: bool) -> bool:
        """Rate-safe and safe-mode triggers; active outside descent.

        Returns True when a contingency transition fired this cycle.
        Priority: rate safe over safe over everything else.
        """
        if self.mode in (DESCENT,):
            return False
        c = self.contingency
        if rate_mag_radps > c.rate_safe_threshold_radps:
            if self._rate_high_since is None:
                self._rate_high_since = t_s
            if (t_s - self._rate_high_since >= c.rate_safe_persist_s
                    and self.mode != RATE_SAFE):
                self._transition(t_s, new_mode=RATE_SAFE,
                                 cause="sustained high body rates",
                                 source="autonomous")
                self.deltav_sub = DV_IDLE
                return True
        else:
            self._rate_high_since = None
        if self.mode == RATE_SAFE:
            return False
        dev_high = (sun_visible and sun_dev_rad is not None
                    and sun_dev_rad > c.sun_dev_threshold_rad) or not sun_visible
        if dev_high and self.mode in (NORMAL, DELTAV):
            if self._sun_dev_since is None:
                self._sun_dev_since = t_s
            if t_s - self._sun_dev_since >= c.sun_dev_persist_s:
                self._transition(t_s, new_mode=SAFE,
                                 cause="sun pointing deviation",
                                 source="autonomous")
                self.deltav_sub = DV_IDLE
                return True
        else:
            self._sun_dev_since = None
        return False


@dataclass
class SequencerConfig:
    ignition_delay_s: float = 30.0       # earliest ignition after arming
    gate_deadline_s: float = 600.0


class DeltaVSequencer:
    """Timeline bookkeeping for one armed burn."""

    def __init__(self, cfg: SequencerConfig = None):
        self.cfg = cfg or SequencerConfig()
        self.armed_at_s = None
        self.burn_started_s = None
        self.accumulated_dv = 0.0
        self.used_timer_cutoff = False

    def arm(self, t_s: float):
        self.armed_at_s = t_s
        self.burn_started_s = None
        self.accumulated_dv = 0.0
        self.used_timer_cutoff = False

    def gate_expired(self, t_s: float) -> bool:
        return (self.armed_at_s is not None
                and t_s - self.armed_at_s > self.cfg.gate_deadline_s)

    def ready_to_ignite(self, t_s: float, att_err_rad: float,
                        gate_rad: float) -> bool:
        return (self.armed_at_s is not None
                and t_s - self.armed_at_s >= self.cfg.ignition_delay_s
                and att_err_rad <= gate_rad)

    def accumulate(self, dv_along_burn_mps: float):
        self.accumulated_dv += max(dv_along_burn_mps, 0.0)
