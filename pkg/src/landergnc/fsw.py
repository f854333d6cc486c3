"""Flight software: one synchronous GNC cycle at a time.

The simulator feeds each cycle with corrupted IMU increments and
whatever sensor measurements came due; the flight software runs
estimation, mode logic, guidance, and control, and returns thruster
commands for the next control interval.  Everything here sees only
measurements and uplinked products, never truth.

Safe-spot identification runs on the payload side of the interface
(the simulator renders the hazard map from truth terrain and returns a
spot measurement relative to the vehicle), mirroring the camera
processing split onto a separate computer.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import modes as md
from .actuators import MAIN, ActuatorCommand, N_THRUSTERS
from .config import ScenarioConfig
from .control import Allocator, AttitudeController, ControllerGains, PwpfmParams
from .frames import downrange_angle, enu_triad
from .gravity import GravityModel
from .guidance import (AttitudeThrustProfile, BurnSpec, DescentPhaseTargets,
                       GuidanceCommand, attitude_from_thrust_dir, compute_tgo,
                       deltav_reference, dsouza_accel, interpolate_profile,
                       terminal_descent_guidance, turn_phase_guidance,
                       _rate_limited_slew, _up_hint)
from .navigation import (AttitudeFilter, AttitudeFilterConfig, InertialNav,
                         LateralFilter, MassEstimator, OnboardTerrain,
                         TouchdownDetector, TrnFrame, VerticalFilter,
                         define_trn_frame, predict_llrf_range)
from .quat import norm, qconj, qmul, rotate, rotate_back, to_rotvec, unit
from .sensors import ImuMeasurement, LlrfConfig


@dataclass
class UplinkProducts:
    """Ground products loaded during the pre-descent sequence."""

    epoch_pos_mci_m: np.ndarray
    epoch_vel_mci_mps: np.ndarray
    epoch_time_s: float
    ignition_time_s: float
    profile: AttitudeThrustProfile
    site_dir_mci: np.ndarray
    site_radius_m: float
    onboard_terrain: OnboardTerrain


@dataclass
class SensorBundle:
    """Measurements delivered to one GNC cycle."""

    imu_dtheta: np.ndarray               # (n, 3) corrupted increments
    imu_dv: np.ndarray
    star: tuple = None                   # (quat, valid)
    sun: tuple = None                    # (vec_body, visible)
    llrf: object = None                  # RangeMeasurement
    slrf: list = None                    # [RangeMeasurement x4]
    lds_vel: tuple = None                # (vel_en, valid)
    lds_spot: tuple = None               # (offset_en, valid)
    ssid_answer: object = None           # SafeSpot or "none"


class FlightSoftware:
    def __init__(self, cfg: ScenarioConfig, uplink: UplinkProducts,
                 q_init, geometry, onboard_gravity: GravityModel):
        self.cfg = cfg
        self.uplink = uplink
        self.gnc_dt = 1.0 / cfg.sim.gnc_rate_hz
        self.imu_dt = 1.0 / cfg.sensors.imu.rate_hz
        nav_cfg = cfg.navigation
        self.att = AttitudeFilter(AttitudeFilterConfig(
            gyro_arw_rad_rtsec=cfg.sensors.imu.gyro_arw_rad_rtsec,
            star_sigma_rad=cfg.sensors.star.sigma_rad,
            consistency_reject_rad=math.radians(
                nav_cfg.ssu_consistency_reject_deg)), q_init)
        self.mode_mgr = md.ModeManager(md.ContingencyConfig(
            rate_safe_threshold_radps=math.radians(cfg.modes.rate_safe_threshold_dps),
            rate_safe_persist_s=cfg.modes.rate_safe_persist_s,
            sun_dev_threshold_rad=math.radians(cfg.modes.sun_dev_threshold_deg),
            sun_dev_persist_s=cfg.modes.sun_dev_persist_s))
        self.sequencer = md.DeltaVSequencer(md.SequencerConfig(
            ignition_delay_s=cfg.modes.sequencer_ignition_delay_s))
        self.controllers = {
            name: AttitudeController(_gains(getattr(cfg.control, name)))
            for name in ("pointing", "burn", "descent")}
        self._pwpfm_sets = {
            name: _pwpfm(getattr(cfg.control, name))
            for name in ("pointing", "burn", "descent")}
        cgz = cfg.vehicle.cg_wet_body_m
        self.allocator = Allocator(geometry, np.asarray(cgz, float),
                                   self._pwpfm_sets["pointing"],
                                   cycle_s=self.gnc_dt,
                                   main_pwm_period_s=cfg.control.main_pwm_period_s)
        self._active_gain_set = "pointing"
        if cfg.actuators.failed_thrusters:
            self.failure_events = self.allocator.apply_failures(
                np.asarray(cgz, float), list(cfg.actuators.failed_thrusters))
        else:
            self.failure_events = []
        self.onboard_gravity = onboard_gravity
        self.targets = _targets(cfg.guidance)
        self.g_site = cfg.gravity.mu_m3ps2 / uplink.site_radius_m ** 2
        self.mass_est = MassEstimator(
            cfg.vehicle.dry_mass_kg + cfg.vehicle.initial_prop_kg,
            scale_gain=nav_cfg.mass_scale_gain)
        self.touchdown = TouchdownDetector(
            self.g_site, n_required=nav_cfg.touchdown_n_required,
            alt_threshold_m=nav_cfg.touchdown_alt_threshold_m)
        self.llrf_cfg = LlrfConfig(
            max_range_m=cfg.sensors.llrf.max_range_m,
            sigma_m=cfg.sensors.llrf.sigma_m,
            cant_from_deck_rad=math.radians(cfg.sensors.llrf.cant_from_deck_deg))
        self.active_llrf = 0
        self.active_lds = 0
        self.nav = None
        self.vertical = None
        self.trn = None
        self.lat = None
        self.enu_rows = None
        self.enu_origin = None
        self.spot_target_en = None
        self.ssid_requested = False
        self.ssid_done = False
        self.divert_skipped_reason = None
        self.lat_kill_started_s = None
        self.lds_update_count = 0
        self.trn_degraded = False
        self.q_ref_prev = q_init.copy()
        self._pending_expected = (0.0, 0.0)
        self._tgo_clamped_since = None
        self.last_sun_dev = None
        self.burn_spec = None
        self.last_tgo = None
        self.telemetry = {}
        self.sun_dir = unit(np.asarray(cfg.sim.sun_dir_mci, float))
        self.rate_est = np.zeros(3)
        self.last_slrf_alt = None
        self.phase_marks = {}

    # -- helpers -----------------------------------------------------------------

    def nav_alt_m(self) -> float:
        return float(norm(self.nav.state.pos_m) - self.uplink.site_radius_m)

    def _nav_pos_en(self):
        rel = self.nav.state.pos_m - self.enu_origin
        return np.array([float(rel @ self.enu_rows[0]),
                         float(rel @ self.enu_rows[1])])

    def _nav_vel_en(self):
        v = self.nav.state.vel_mps
        return np.array([float(v @ self.enu_rows[0]),
                         float(v @ self.enu_rows[1])])

    def _apply_vel_en(self, v_en):
        v = self.nav.state.vel_mps
        old = self._nav_vel_en()
        v += (v_en[0] - old[0]) * self.enu_rows[0]
        v += (v_en[1] - old[1]) * self.enu_rows[1]

    def _apply_pos_en(self, p_en):
        p = self.nav.state.pos_m
        old = self._nav_pos_en()
        p += (p_en[0] - old[0]) * self.enu_rows[0]
        p += (p_en[1] - old[1]) * self.enu_rows[1]

    def altitude(self) -> float:
        """Deck altitude used by the terminal sub-state thresholds."""
        if self.vertical is not None:
            return self.vertical.state().altitude_m
        return self.nav_alt_m()

    def init_descent_nav(self, t_s: float):
        n = self.cfg.navigation
        d = self.cfg.dispersions
        pos_var = (np.asarray(d.pos_3sigma_ric_m) / 3.0) ** 2
        vel_var = (np.asarray(d.vel_3sigma_ric_mps) / 3.0) ** 2
        self.nav = InertialNav(self.uplink.epoch_pos_mci_m,
                               self.uplink.epoch_vel_mci_mps,
                               self.onboard_gravity,
                               pos_var, vel_var,
                               accel_noise_mps2=n.ins_accel_noise_mps2,
                               gate_sigma=n.llrf_gate_sigma,
                               terrain_sigma_m=n.llrf_terrain_sigma_m)

    # -- the GNC cycle --------------------------------------------------------------

    def cycle(self, t_s: float, bundle: SensorBundle, telecommands=()):
        cfg = self.cfg
        mgr = self.mode_mgr
        dt = self.gnc_dt
        # 1. telecommands at cycle boundaries
        for tc in telecommands:
            op = mgr.process_telecommand(tc, t_s, uplink_ready=True)
            if op == "mode_descent":
                self.init_descent_nav(t_s)
                self._health_check_sensors(t_s)
            elif op == "arm_sequencer":
                self.burn_spec = BurnSpec(
                    dv_mps=float(tc.payload.get("dv_mps", 0.0)),
                    direction_mci=np.asarray(
                        tc.payload.get("direction_mci", (1.0, 0.0, 0.0)), float),
                    use_main_engine=bool(tc.payload.get("use_main_engine", True)),
                    timeout_s=float(tc.payload.get("timeout_s", 300.0)))
                self.sequencer.arm(t_s)
                self.controllers["burn"].reset_integral()
            elif op == "set_active_sensor":
                if tc.payload.get("sensor") == "llrf":
                    self.active_llrf = int(tc.payload.get("index", 0))
                if tc.payload.get("sensor") == "lds":
                    self.active_lds = int(tc.payload.get("index", 0))
        # 2. attitude propagation through the IMU batch (+ INS)
        n_samp = bundle.imu_dtheta.shape[0]
        star_enabled = self._ssu_updates_enabled()
        for k in range(n_samp):
            imu = ImuMeasurement(bundle.imu_dv[k], bundle.imu_dtheta[k],
                                 t_s - (n_samp - 1 - k) * self.imu_dt)
            self.att.propagate(imu, self.imu_dt)
            if self.nav is not None:
                self.nav.imu_step(self.att.q, bundle.imu_dv[k], self.imu_dt)
        if n_samp:
            self.rate_est = (bundle.imu_dtheta[-1] / self.imu_dt
                             - self.att.bias)
        if bundle.star is not None and bundle.star[1] and star_enabled:
            self.att.star_update(bundle.star[0])
        # mass estimation closes on the previous cycle's command
        if n_samp:
            dv_cycle = bundle.imu_dv.sum(axis=0)
            self.mass_est.step(dv_cycle, dt, *self._pending_expected)
        # 3. sun geometry for mode triggers
        sun_visible = bundle.sun is not None and bundle.sun[1]
        sun_dev = None
        if sun_visible:
            s = bundle.sun[0]
            sun_dev = math.acos(min(1.0, max(-1.0, float(s[2]))))
        self.last_sun_dev = sun_dev
        # 4. contingencies (outside descent)
        mgr.check_contingencies(t_s, float(norm(self.rate_est)), sun_dev,
                                sun_visible)
        # 5. descent-side estimation
        if mgr.mode == md.DESCENT and self.nav is not None:
            self._descent_estimation(t_s, bundle)
        # 6. descent phase progression
        if mgr.mode == md.DESCENT:
            self._descent_transitions(t_s, bundle)
        # 7. guidance + control by mode
        cmd, gcmd = self._guide_and_control(t_s, bundle, dt)
        # 8. expected impulse/flow of this command, for the mass estimator
        self._pending_expected = self._expected_from_command(cmd)
        self._record_telemetry(t_s, gcmd)
        return cmd

    # -- internals -------------------------------------------------------------------

    def _ssu_updates_enabled(self) -> bool:
        mgr = self.mode_mgr
        if mgr.mode == md.DESCENT:
            return False        # disabled by the pre-descent sequence
        if mgr.mode == md.DELTAV and mgr.deltav_sub == md.DV_BURN:
            return False        # high-disturbance burn arc
        return mgr.sensor_state("star") == "in_loop"

    def _health_check_sensors(self, t_s: float):
        failed = set(self.cfg.sensors.failed_sensors)
        if "llrf1" in failed:
            self.active_llrf = 1
        if "lds1" in failed:
            self.active_lds = 1
        self.mode_mgr.events.append(md.ModeEvent(
            t_s, "health_check", f"llrf_active={self.active_llrf + 1}",
            "pre-descent sensor health check", "autonomous"))

    def _descent_estimation(self, t_s: float, bundle: SensorBundle):
        mgr = self.mode_mgr
        # LLRF altitude fusion while on inertial navigation
        if (bundle.llrf is not None and bundle.llrf.valid
                and mgr.phase in (md.PH_BRAKING, md.PH_APPROACH)):
            bs = self.llrf_cfg.boresight_body(self.active_llrf)
            pred, cosi = predict_llrf_range(self.nav.state.pos_m, self.att.q,
                                            bs, self.uplink.onboard_terrain,
                                            self.uplink.site_dir_mci)
            if pred is not None and pred <= self.llrf_cfg.max_range_m:
                self.nav.llrf_fuse(bundle.llrf, pred, cosi,
                                   self.cfg.sensors.llrf.sigma_m)
        if mgr.phase != md.PH_TERMINAL:
            return
        # vertical channel: predict with the cycle's vertical specific force
        if self.vertical is not None and bundle.imu_dv.shape[0]:
            f_body = bundle.imu_dv.sum(axis=0) / self.gnc_dt
            f_enu_up = float(rotate_back(self.att.q, f_body)
                             @ self.trn.normal_mci)
            self.vertical.predict(f_enu_up - self.g_site, self.gnc_dt)
        slrf_alts = []
        if bundle.slrf is not None:
            pts_enu = []
            for m in bundle.slrf:
                if not m.valid:
                    continue
                mounts, bores = self._slrf_geometry()
                d_enu = self.enu_of_body(bores[m.sensor_id])
                m_enu = self.enu_of_body(mounts[m.sensor_id])
                if self.trn is None:
                    pts_enu.append(self._nav_pos_enu3() + m_enu
                                   + m.slant_range_m * d_enu)
                else:
                    alt = -float((m_enu + m.slant_range_m * d_enu)
                                 @ self.trn.normal_enu)
                    slrf_alts.append(alt)
            if self.trn is None and len(pts_enu) >= 3:
                nav3 = self._nav_pos_enu3()
                trn = define_trn_frame(pts_enu, nav3, t_s)
                if trn is not None:
                    self.trn = trn
                    # cache the plane normal in MCI for the predict step
                    self.trn.normal_mci = (trn.normal_enu @ self.enu_rows)
                    alt0 = float((nav3 - trn.origin_enu_m) @ trn.normal_enu)
                    self.vertical = VerticalFilter(
                        alt0, -self._vert_rate_enu(),
                        accel_noise_mps2=self.cfg.navigation.vertical_accel_noise_mps2,
                        meas_sigma_m=self.cfg.sensors.slrf.sigma_m)
            elif self.vertical is not None and slrf_alts:
                self.vertical.update(float(np.mean(slrf_alts)),
                                     n_sensors=len(slrf_alts))
                self.last_slrf_alt = float(np.mean(slrf_alts))
        # lateral channel
        if self.lat is not None:
            self.lat.grow(self.gnc_dt)
            if bundle.lds_vel is not None and bundle.lds_vel[1]:
                new_v = self.lat.velocity_update(self._nav_vel_en(),
                                                 bundle.lds_vel[0])
                self._apply_vel_en(new_v)
                self.lds_update_count += 1
            if (bundle.lds_spot is not None and bundle.lds_spot[1]
                    and self.spot_target_en is not None):
                pos_meas = self.spot_target_en - bundle.lds_spot[0]
                new_p = self.lat.position_update(self._nav_pos_en(), pos_meas)
                self._apply_pos_en(new_p)
        # touchdown detector in the freefall segment
        if mgr.terminal_sub == md.TD_FREEFALL and bundle.imu_dv.shape[0]:
            mag = float(np.linalg.norm(bundle.imu_dv[-1])) / self.imu_dt
            self.touchdown.step(mag, self.last_slrf_alt)

    def _slrf_geometry(self):
        from .sensors import SlrfConfig
        sc = SlrfConfig(cant_outward_rad=math.radians(
            self.cfg.sensors.slrf.cant_outward_deg))
        return sc.mounts_and_boresights()

    def enu_of_body(self, v_body):
        v_mci = rotate_back(self.att.q, v_body)
        return self.enu_rows @ v_mci

    def _nav_pos_enu3(self):
        rel = self.nav.state.pos_m - self.enu_origin
        return self.enu_rows @ rel

    def _vert_rate_enu(self) -> float:
        return float(self.nav.state.vel_mps @ self.enu_rows[2])

    def _downrange_to_site_m(self) -> float:
        ang = downrange_angle(self.nav.state.pos_m,
                              self.uplink.site_dir_mci)
        return ang * self.uplink.site_radius_m

    def _descent_transitions(self, t_s: float, bundle: SensorBundle):
        mgr = self.mode_mgr
        up = self.uplink
        if mgr.phase == md.PH_PREDESCENT:
            if t_s >= up.ignition_time_s:
                mgr._transition(t_s, new_phase=md.PH_BRAKING,
                                cause="ignition time reached")
                self.phase_marks[md.PH_BRAKING] = t_s
        elif mgr.phase == md.PH_BRAKING:
            if self._downrange_to_site_m() < 150e3:
                mgr._transition(t_s, new_phase=md.PH_APPROACH,
                                cause="downrange below 150 km")
                self.phase_marks[md.PH_APPROACH] = t_s
                self.controllers["descent"].reset_integral()
        elif mgr.phase == md.PH_APPROACH:
            speed = float(norm(self.nav.state.vel_mps))
            tgo = self.last_tgo if self.last_tgo is not None else 1e9
            tmin = self.targets.tgo_min_s
            if tgo <= tmin + 1e-6:
                if self._tgo_clamped_since is None:
                    self._tgo_clamped_since = t_s
            else:
                self._tgo_clamped_since = None
            clamp_timeout = (self._tgo_clamped_since is not None
                             and t_s - self._tgo_clamped_since
                             > self.targets.turn_clamp_timeout_s)
            if (speed <= self.targets.turn_trigger_speed_mps
                    or tgo <= self.targets.turn_trigger_tgo_s
                    or clamp_timeout):
                cause = ("speed threshold" if speed
                         <= self.targets.turn_trigger_speed_mps
                         else "time-to-go threshold")
                mgr._transition(t_s, new_phase=md.PH_TURN, cause=cause)
                self.phase_marks[md.PH_TURN] = t_s
                # define the sub-satellite ENU frame exactly once
                self.enu_rows = enu_triad(self.nav.state.pos_m)
                self.enu_origin = (unit(self.nav.state.pos_m)
                                   * self.uplink.site_radius_m)
                self.nav.state.frame = "ENU"
                self.lat = LateralFilter(
                    vel_var0=self.cfg.navigation.lat_vel_var0,
                    vel_meas_sigma=self.cfg.sensors.lds.vel_sigma_mps,
                    pos_meas_sigma=self.cfg.sensors.lds.spot_sigma_m)
        elif mgr.phase == md.PH_TURN:
            up_dir = self.enu_rows[2] if self.enu_rows is not None else unit(
                self.nav.state.pos_m)
            z_body_mci = rotate_back(self.att.q, np.array([0.0, 0.0, 1.0]))
            tilt = math.acos(min(1.0, max(-1.0, float(z_body_mci @ up_dir))))
            if (tilt < math.radians(2.0)
                    and self.nav_alt_m() <= self.targets.terminal_start_alt_m) \
                    or t_s - self.phase_marks.get(md.PH_TURN, t_s) > 40.0:
                mgr._transition(t_s, new_phase=md.PH_TERMINAL,
                                new_sub=md.TD_CONST_SINK,
                                cause="vertical attitude at terminal gate")
                self.phase_marks[md.PH_TERMINAL] = t_s
        elif mgr.phase == md.PH_TERMINAL:
            self._terminal_transitions(t_s, bundle)

    def _terminal_transitions(self, t_s: float, bundle: SensorBundle):
        mgr = self.mode_mgr
        alt = self.altitude()
        sub = mgr.terminal_sub
        tgt = self.targets
        if sub == md.TD_CONST_SINK:
            if self.trn is not None:
                mgr._transition(t_s, new_sub=md.TD_LAT_KILL,
                                cause="TRN frame defined")
                self.lat_kill_started_s = t_s
            elif alt < 0.6 * tgt.terminal_start_alt_m and not self.trn_degraded:
                # persistent SLRF failure: degraded ENU-altitude descent
                self.trn_degraded = True
                mgr.events.append(md.ModeEvent(
                    t_s, "trn", "degraded", "no TRN frame, ENU altitude",
                    "autonomous"))
        elif sub == md.TD_LAT_KILL:
            v_lat = float(np.linalg.norm(self._nav_vel_en()))
            killed = v_lat < 0.15 and self.lds_update_count >= 2
            lds_dead = (self.lds_update_count == 0
                        and t_s - self.lat_kill_started_s > 20.0)
            if killed or lds_dead or alt < 60.0:
                cause = ("lateral velocity killed" if killed else
                         "lds unavailable, proceeding" if lds_dead
                         else "altitude gate")
                mgr._transition(t_s, new_sub=md.TD_SSID, cause=cause)
                self.ssid_requested = True
        elif sub == md.TD_SSID:
            if bundle.ssid_answer is not None and not self.ssid_done:
                self.ssid_done = True
                self.ssid_requested = False
                prop_est = self.mass_est.est.mass_kg - self.cfg.vehicle.dry_mass_kg
                if bundle.ssid_answer == "none":
                    self.divert_skipped_reason = "no safe spot within budget"
                    self.spot_target_en = self._nav_pos_en()
                elif prop_est < tgt.divert_min_prop_kg:
                    self.divert_skipped_reason = "propellant below divert reserve"
                    self.spot_target_en = self._nav_pos_en()
                else:
                    offset = bundle.ssid_answer
                    self.spot_target_en = self._nav_pos_en() + offset
                mgr.events.append(md.ModeEvent(
                    t_s, "ssid", "spot_selected",
                    self.divert_skipped_reason or "divert accepted",
                    "autonomous"))
            if alt <= tgt.vertical_descent_alt_m:
                mgr._transition(t_s, new_sub=md.TD_VERTICAL,
                                cause="vertical descent gate 10 m")
        elif sub == md.TD_VERTICAL:
            if alt <= tgt.main_cutoff_alt_m:
                mgr._transition(t_s, new_sub=md.TD_RCT_SINK,
                                cause="main engine cutoff 2 m")
        elif sub == md.TD_RCT_SINK:
            if alt <= tgt.rct_cutoff_alt_m:
                mgr._transition(t_s, new_sub=md.TD_FREEFALL,
                                cause="RCT cutoff 1 m")
        elif sub == md.TD_FREEFALL:
            if self.touchdown.latched:
                mgr._transition(t_s, new_phase=md.PH_TOUCHDOWN,
                                cause="touchdown detector latched")

    # -- guidance and control ----------------------------------------------------------

    def _guide_and_control(self, t_s: float, bundle: SensorBundle, dt: float):
        mgr = self.mode_mgr
        if mgr.mode == md.RATE_SAFE:
            self.q_ref_prev = self.att.q.copy()
            return ActuatorCommand.all_off(), GuidanceCommand(
                self.att.q.copy(), 0.0, "off", "rate_safe")
        if mgr.mode in (md.NORMAL, md.SAFE):
            gcmd = self._sun_pointing_guidance(bundle)
            set_name = "pointing"
            thrust_mode = "idle"
        elif mgr.mode == md.DELTAV:
            gcmd = self._sequencer_guidance(t_s, bundle)
            set_name = "burn"
            thrust_mode = ("rct_burn" if (self.burn_spec is not None
                                          and not self.burn_spec.use_main_engine
                                          and mgr.deltav_sub == md.DV_BURN)
                           else "idle")
        else:
            gcmd, thrust_mode = self._descent_guidance(t_s)
            set_name = "descent"
        if set_name != self._active_gain_set:
            self.allocator.set_pwpfm_params(self._pwpfm_sets[set_name])
            self._active_gain_set = set_name
        torque = self.controllers[set_name].torque(
            gcmd.q_ref, self.att.q, self.rate_est, dt)
        cmd = self.allocator.allocate(torque, gcmd.thrust_axial_n,
                                      gcmd.main_mode, thrust_mode)
        self.q_ref_prev = gcmd.q_ref
        return cmd, gcmd

    def _sun_pointing_guidance(self, bundle: SensorBundle) -> GuidanceCommand:
        if bundle.sun is not None and bundle.sun[1]:
            # steer +Z onto the measured sun vector (relative correction)
            s = bundle.sun[0]
            axis = np.array([-s[1], s[0], 0.0])
            n = norm(axis)
            ang = math.acos(min(1.0, max(-1.0, float(s[2]))))
            if n > 1e-9 and ang > 1e-6:
                rotv = axis / n * ang
                q_goal = qmul(self.att.q, _rotvec_quat(rotv))
            else:
                q_goal = self.att.q.copy()
        elif self.mode_mgr.mode == md.SAFE:
            # sun search: slow coning rotation until a sensor sees the sun
            q_goal = qmul(self.att.q,
                          _rotvec_quat(np.array([0.012, 0.0, 0.006])))
        else:
            q_goal = attitude_from_thrust_dir(self.sun_dir,
                                              _up_hint(self.sun_dir))
        q_ref = _rate_limited_slew(self.q_ref_prev, q_goal,
                                   math.radians(1.0), self.gnc_dt)
        return GuidanceCommand(q_ref, 0.0, "off", "pointing")

    def _sequencer_guidance(self, t_s: float, bundle: SensorBundle):
        mgr = self.mode_mgr
        seq = self.sequencer
        spec = self.burn_spec
        if spec is None:
            mgr._transition(t_s, new_mode=md.NORMAL, cause="no burn spec",
                            source="autonomous")
            return self._sun_pointing_guidance(bundle)
        d = unit(spec.direction_mci)
        q_burn = attitude_from_thrust_dir(d, _up_hint(d))
        if mgr.deltav_sub == md.DV_FORWARD:
            q_ref = _rate_limited_slew(self.q_ref_prev, q_burn,
                                       math.radians(1.0), self.gnc_dt)
            att_err = _angle(self.att.q, q_burn)
            if seq.ready_to_ignite(t_s, att_err,
                                   math.radians(self.cfg.modes.burn_gate_deg)):
                mgr._transition(t_s, new_dv=md.DV_BURN,
                                cause="attitude gate met, ignition")
                seq.burn_started_s = t_s
            elif seq.gate_expired(t_s):
                mgr._transition(t_s, new_mode=md.NORMAL, new_dv=md.DV_IDLE,
                                cause="attitude gate deadline expired")
            return GuidanceCommand(q_ref, 0.0, "off", "deltav/forward")
        if mgr.deltav_sub == md.DV_BURN:
            dv_sample = bundle.imu_dv.sum(axis=0) if bundle.imu_dv.size else np.zeros(3)
            seq.accumulate(float(np.linalg.norm(dv_sample)))
            gcmd, done = deltav_reference(
                spec, seq.accumulated_dv,
                t_s - (seq.burn_started_s or t_s), accel_valid=True)
            if done:
                seq.used_timer_cutoff = (seq.accumulated_dv < spec.dv_mps)
                mgr._transition(t_s, new_dv=md.DV_REVERSE,
                                cause=("delta-v reached" if not
                                       seq.used_timer_cutoff
                                       else "burn timer expired"))
            return gcmd
        # reverse slew back to sun pointing
        q_goal = attitude_from_thrust_dir(self.sun_dir, _up_hint(self.sun_dir))
        q_ref = _rate_limited_slew(self.q_ref_prev, q_goal,
                                   math.radians(1.0), self.gnc_dt)
        if _angle(self.att.q, q_goal) < math.radians(2.0):
            mgr._transition(t_s, new_mode=md.NORMAL, new_dv=md.DV_IDLE,
                            cause="sequence complete")
        return GuidanceCommand(q_ref, 0.0, "off", "deltav/reverse")

    def _descent_guidance(self, t_s: float):
        mgr = self.mode_mgr
        up = self.uplink
        tgt = self.targets
        m_est = self.mass_est.est.mass_kg
        if mgr.phase == md.PH_PREDESCENT:
            gcmd = interpolate_profile(up.profile, 0.0)
            q_ref = _rate_limited_slew(self.q_ref_prev, gcmd.q_ref,
                                       math.radians(1.0), self.gnc_dt)
            return GuidanceCommand(q_ref, 0.0, "off", "predescent"), "idle"
        if mgr.phase == md.PH_BRAKING:
            gcmd = interpolate_profile(up.profile,
                                       t_s - up.ignition_time_s)
            gcmd.phase = "braking"
            return gcmd, "axial"
        if mgr.phase == md.PH_APPROACH:
            from .gravity import gravity_accel
            target = up.site_dir_mci * (up.site_radius_m
                                        + tgt.approach_target_alt_m)
            dr = target - self.nav.state.pos_m
            v = self.nav.state.vel_mps
            tgo = compute_tgo(dr, v, tgt.approach_gamma, tgt.tgo_min_s,
                              tgt.tgo_max_s)
            self.last_tgo = tgo
            g = gravity_accel(self.nav.state.pos_m, self.onboard_gravity)
            a_cap = self._max_axial_thrust() / m_est
            a_cmd, sat = dsouza_accel(dr, v, tgo, g, accel_cap_mps2=a_cap)
            thrust = m_est * float(norm(a_cmd))
            q_ref = attitude_from_thrust_dir(a_cmd, unit(self.nav.state.pos_m))
            mode = ("axial" if thrust >= self._axial_floor()
                    else "pulsed_main")
            gcmd = GuidanceCommand(q_ref, thrust, "steady" if mode == "axial"
                                   else "pulsed", "approach", a_cmd, sat)
            return gcmd, mode
        if mgr.phase == md.PH_TURN:
            up_dir = self.enu_rows[2]
            gcmd = turn_phase_guidance(self.q_ref_prev, up_dir, m_est,
                                       self.g_site, self.gnc_dt, tgt,
                                       tgt.landing_azimuth_rad)
            return gcmd, "rct_support"
        if mgr.phase == md.PH_TERMINAL:
            sub = mgr.terminal_sub
            alt = self.altitude()
            sink = (self.vertical.state().sink_rate_mps
                    if self.vertical is not None else -self._vert_rate_enu())
            vel_en = self._nav_vel_en()
            pos_en = self._nav_pos_en()
            target = None
            if sub in (md.TD_SSID, md.TD_VERTICAL, md.TD_RCT_SINK):
                target = self.spot_target_en
            if sub in (md.TD_CONST_SINK,):
                vel_en = np.zeros(2)  # attitude-hold segment: no tilt steering
            gcmd = terminal_descent_guidance(
                alt, sink, vel_en, pos_en, target, self.enu_rows[2],
                self.enu_rows[0], self.enu_rows[1], m_est, self.g_site,
                tgt, "freefall" if sub == md.TD_FREEFALL else
                "rct_sink" if sub == md.TD_RCT_SINK else "descend",
                sink_gain=self.cfg.guidance.sink_gain)
            if sub == md.TD_FREEFALL:
                return gcmd, "idle"
            if sub == md.TD_RCT_SINK:
                return gcmd, "rct_sink"
            return gcmd, "pulsed_main"
        # touchdown: everything off
        return GuidanceCommand(self.att.q.copy(), 0.0, "off", "touchdown"), "idle"

    def _max_axial_thrust(self) -> float:
        a = self.cfg.actuators
        return (a.main_thrust_n + 8.0 * a.rct_thrust_n
                + 4.0 * a.rct_thrust_n * math.cos(math.radians(a.cant_deg)))

    def _axial_floor(self) -> float:
        a = self.cfg.actuators
        return (a.main_thrust_n
                + 4.0 * a.rct_thrust_n * math.cos(math.radians(a.cant_deg)))

    def _expected_from_command(self, cmd: ActuatorCommand):
        a = self.cfg.actuators
        imp = 0.0
        flow = 0.0
        for i in range(N_THRUSTERS):
            w = float(cmd.pulse_width_s[i])
            if w <= 0.0:
                continue
            nom = a.main_thrust_n if i == MAIN else a.rct_thrust_n
            isp = a.main_isp_s if i == MAIN else a.rct_isp_s
            imp += nom * w
            flow += nom * w / (9.80665 * isp)
        return imp, flow

    def _record_telemetry(self, t_s: float, gcmd: GuidanceCommand):
        self.telemetry = {
            "t": t_s,
            "mode": self.mode_mgr.state_string(),
            "q_ref": gcmd.q_ref,
            "thrust_cmd_n": gcmd.thrust_axial_n,
            "tgo": self.last_tgo,
            "mass_est": self.mass_est.est.mass_kg,
        }


def _gains(gs) -> ControllerGains:
    return ControllerGains(np.asarray(gs.kp, float), np.asarray(gs.kd, float),
                           np.asarray(gs.ki, float),
                           np.asarray(gs.torque_limit_nm, float))


def _pwpfm(gs) -> PwpfmParams:
    return PwpfmParams(km=gs.pwpfm_km, tau_s=gs.pwpfm_tau_s,
                       u_on=gs.pwpfm_u_on, u_off=gs.pwpfm_u_off)


def _targets(g) -> DescentPhaseTargets:
    return DescentPhaseTargets(
        approach_target_alt_m=g.approach_target_alt_m,
        approach_gamma=g.approach_gamma,
        tgo_min_s=g.tgo_min_s, tgo_max_s=g.tgo_max_s,
        turn_trigger_speed_mps=g.turn_trigger_speed_mps,
        turn_trigger_tgo_s=g.turn_trigger_tgo_s,
        turn_clamp_timeout_s=g.turn_clamp_timeout_s,
        turn_slew_rate_radps=math.radians(g.turn_slew_rate_dps),
        terminal_start_alt_m=g.terminal_start_alt_m,
        vertical_descent_alt_m=g.vertical_descent_alt_m,
        main_cutoff_alt_m=g.main_cutoff_alt_m,
        rct_cutoff_alt_m=g.rct_cutoff_alt_m,
        divert_cap_m=g.divert_cap_m,
        divert_min_prop_kg=g.divert_min_prop_kg,
        landing_azimuth_rad=math.radians(g.landing_azimuth_deg),
        sink_schedule=tuple(tuple(x) for x in g.sink_schedule),
        tilt_limit_rad=math.radians(g.tilt_limit_deg),
        lat_kill_gain=g.lat_kill_gain,
        lat_pos_gain=g.lat_pos_gain)


def _rotvec_quat(rotv):
    from .quat import from_rotvec
    return from_rotvec(rotv)


def _angle(qa, qb) -> float:
    from .quat import angle_between
    return angle_between(qa, qb)
