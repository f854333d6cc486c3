"""Scenario configuration: schema, defaults, YAML loading, validation.

A scenario is a nested set of dataclass sections.  The built-in
defaults describe the nominal full-descent mission (12.6 x 100 km
descent orbit, landing site ~770 km downrange of the braking ignition
point); YAML files override fields selectively.  Unknown keys are
rejected so typos fail loudly (exit code 2 from the CLI).

Units follow the field names: _m, _mps, _kg, _s, _rad, _deg.
"""

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import yaml


class ConfigError(Exception):
    pass


@dataclass
class VehicleSection:
    dry_mass_kg: float = 110.0
    initial_prop_kg: float = 240.0
    inertia_dry_diag: tuple = (65.0, 65.0, 55.0)
    inertia_wet_diag: tuple = (150.0, 150.0, 120.0)
    cg_dry_body_m: tuple = (0.0, 0.0, 0.42)
    cg_wet_body_m: tuple = (0.0, 0.0, 0.55)
    gear_plane_below_deck_m: float = 0.80


@dataclass
class GravitySection:
    mu_m3ps2: float = 4.9028e12
    datum_radius_m: float = 1_737_400.0
    j2: float = 2.0330530e-4
    error_bound_mgal: float = 95.0
    truth_field_seed: int = 0
    truth_field_enabled: bool = True


@dataclass
class SloshSection:
    tank_attach_points: tuple = ((0.4, 0.0, 0.35), (-0.4, 0.0, 0.35))
    tank_capacity_kg: float = 120.0
    damping_ratio: float = 0.05
    tank_radius_m: float = 0.35


@dataclass
class ImuSection:
    rate_hz: float = 100.0
    gyro_arw_rad_rtsec: float = 8.7e-5
    accel_vrw_mps_rtsec: float = 8.0e-4
    gyro_bias_sigma_radps: float = 3.0e-6
    accel_bias_sigma_mps2: float = 2.0e-4


@dataclass
class StarSection:
    rate_hz: float = 10.0
    sigma_rad: float = 8.7e-5
    rate_limit_radps: float = math.radians(2.0)


@dataclass
class LlrfSection:
    rate_hz: float = 1.0
    max_range_m: float = 16_000.0
    sigma_m: float = 1.0
    cant_from_deck_deg: float = 30.0


@dataclass
class SlrfSection:
    rate_hz: float = 10.0
    max_range_m: float = 150.0
    sigma_m: float = 0.2
    cant_outward_deg: float = 15.0


@dataclass
class LdsSection:
    rate_hz: float = 1.0
    vel_sigma_mps: float = 0.03
    vel_bias_mps: float = 0.01
    spot_sigma_m: float = 0.25
    min_sun_elev_deg: float = 8.0


@dataclass
class SensorsSection:
    imu: ImuSection = field(default_factory=ImuSection)
    star: StarSection = field(default_factory=StarSection)
    llrf: LlrfSection = field(default_factory=LlrfSection)
    slrf: SlrfSection = field(default_factory=SlrfSection)
    lds: LdsSection = field(default_factory=LdsSection)
    sun_noise_deg: float = 0.3
    failed_sensors: tuple = ()           # e.g. ("llrf1", "lds1")


@dataclass
class ActuatorsSection:
    rct_thrust_n: float = 22.0
    rct_isp_s: float = 285.0
    main_thrust_n: float = 460.0
    main_isp_s: float = 320.0
    latency_s: float = 0.010
    min_pulse_s: float = 0.010
    inner_radius_m: float = 0.45
    outer_radius_m: float = 0.85
    cant_deg: float = 10.0
    failed_thrusters: tuple = ()         # thruster ids 0..16


@dataclass
class GainSet:
    kp: tuple = (12.0, 12.0, 10.0)
    kd: tuple = (60.0, 60.0, 50.0)
    ki: tuple = (0.0, 0.0, 0.0)
    torque_limit_nm: tuple = (26.0, 26.0, 6.5)
    pwpfm_km: float = 4.5
    pwpfm_tau_s: float = 0.15
    pwpfm_u_on: float = 0.45
    pwpfm_u_off: float = 0.15


@dataclass
class ControlSection:
    # relaxed set: sparse firings inside the wide sun-pointing deadband
    pointing: GainSet = field(default_factory=lambda: GainSet(
        kp=(2.4, 2.4, 0.9), kd=(95.0, 95.0, 38.0), ki=(0.0, 0.0, 0.0),
        pwpfm_km=4.5, pwpfm_tau_s=0.18, pwpfm_u_on=0.40, pwpfm_u_off=0.12))
    # tight set for burns and descent
    burn: GainSet = field(default_factory=lambda: GainSet(
        kp=(170.0, 170.0, 48.0), kd=(340.0, 340.0, 110.0),
        ki=(9.0, 9.0, 2.5),
        pwpfm_km=16.0, pwpfm_tau_s=0.10, pwpfm_u_on=0.30, pwpfm_u_off=0.10))
    descent: GainSet = field(default_factory=lambda: GainSet(
        kp=(170.0, 170.0, 48.0), kd=(340.0, 340.0, 110.0),
        ki=(9.0, 9.0, 2.5),
        pwpfm_km=16.0, pwpfm_tau_s=0.10, pwpfm_u_on=0.30, pwpfm_u_off=0.10))
    main_pwm_period_s: float = 1.0


@dataclass
class GuidanceSection:
    braking_duration_s: float = 500.0
    handover_speed_mps: float = 780.0
    handover_alt_m: float = 4500.0
    handover_sink_mps: float = 18.0
    pitch_seed_deg: tuple = (-5.0, 7.2, 19.5, 28.3, 35.5)
    thrust_seed_n: tuple = (569.0, 593.0, 624.0)
    profile_node_spacing_s: float = 5.0
    profile_path: str = ""               # load instead of generating if set
    approach_gamma: float = 22.0
    approach_target_alt_m: float = 160.0
    tgo_min_s: float = 8.0
    tgo_max_s: float = 900.0
    turn_trigger_speed_mps: float = 3.0
    turn_trigger_tgo_s: float = 5.0
    turn_clamp_timeout_s: float = 60.0
    turn_slew_rate_dps: float = 3.0
    terminal_start_alt_m: float = 130.0
    vertical_descent_alt_m: float = 10.0
    main_cutoff_alt_m: float = 2.0
    rct_cutoff_alt_m: float = 1.0
    divert_cap_m: float = 20.0
    divert_min_prop_kg: float = 12.0
    landing_azimuth_deg: float = 0.0
    sink_schedule: tuple = ((25.0, 1.6), (10.0, 0.9), (2.5, 0.55), (0.0, 0.35))
    tilt_limit_deg: float = 12.0
    lat_kill_gain: float = 0.45
    lat_pos_gain: float = 0.12
    sink_gain: float = 1.2


@dataclass
class NavigationSection:
    init_att_err_sigma_rad: float = 0.01
    ins_accel_noise_mps2: float = 3.0e-4
    llrf_gate_sigma: float = 5.0
    llrf_terrain_sigma_m: float = 10.0
    vertical_accel_noise_mps2: float = 0.05
    lat_vel_var0: float = 0.25
    mass_scale_gain: float = 0.05
    touchdown_n_required: int = 10
    touchdown_alt_threshold_m: float = 1.5
    ssu_consistency_reject_deg: float = 1.0


@dataclass
class TerrainSection:
    seed: int = 42
    feature_extent_m: float = 1500.0
    site_elevation_m: float = -2400.0
    contact_window_m: float = 60.0
    contact_res_m: float = 0.10
    hazard_window_m: float = 28.0
    hazard_res_m: float = 0.05
    footprint_radius_m: float = 1.5
    slope_threshold_deg: float = 10.0
    roughness_threshold_m: float = 0.15
    shadow_threshold_deg: float = 8.0
    sun_azimuth_deg: float = 90.0
    sun_elevation_deg: float = 18.0
    crater_k_per_km2: float = 2000.0
    crater_slope: float = -2.0
    crater_d_min_m: float = 3.9
    crater_d_max_m: float = 8000.0
    boulder_k_per_km2: float = 60.0
    boulder_slope: float = -4.0
    boulder_d_min_m: float = 1.5
    boulder_small_extension: bool = True


@dataclass
class ModesSection:
    rate_safe_threshold_dps: float = 4.0
    rate_safe_persist_s: float = 3.0
    sun_dev_threshold_deg: float = 15.0
    sun_dev_persist_s: float = 30.0
    burn_gate_deg: float = 1.0
    sequencer_ignition_delay_s: float = 30.0


@dataclass
class TelecommandEntry:
    time_s: float = 0.0
    opcode: str = ""
    payload: dict = field(default_factory=dict)


@dataclass
class SimSection:
    truth_dt_s: float = 0.005            # 200 Hz truth
    imu_rate_hz: float = 100.0
    gnc_rate_hz: float = 20.0
    max_duration_s: float = 2400.0
    start_phase: str = "predescent"      # predescent | braking | approach |
    #                                      turn | terminal | orbital
    epoch_before_perilune_s: float = 600.0
    perilune_alt_m: float = 12_600.0
    apolune_alt_m: float = 100_000.0
    sun_dir_mci: tuple = (0.0, -0.7071068, 0.7071068)
    master_seed: int = 1
    telemetry_decimation: int = 1
    telemetry_path: str = ""
    events_path: str = ""


@dataclass
class DispersionSection:
    enabled: bool = True
    pos_3sigma_ric_m: tuple = (22.5, 480.0, 105.0)
    vel_3sigma_ric_mps: tuple = (0.45, 0.018, 0.234)
    att_range_rad: float = 0.035
    rate_range_radps: float = 0.0035
    mass_range_kg: float = 8.0
    imu_misalign_sigma_rad: float = 8.7e-4
    llrf_misalign_sigma_rad: float = 8.7e-4
    thrust_scale_range: float = 0.03
    isp_scale_range: float = 0.01


@dataclass
class SuccessSection:
    prop_end_approach_min_kg: float = 30.0
    alt_end_approach_min_m: float = 100.0
    touchdown_lateral_max_mps: float = 0.5
    touchdown_vertical_max_mps: float = 1.0
    touchdown_rate_max_dps: float = 1.0
    dispersion_max_m: float = 1000.0


@dataclass
class ScenarioConfig:
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    gravity: GravitySection = field(default_factory=GravitySection)
    slosh: SloshSection = field(default_factory=SloshSection)
    sensors: SensorsSection = field(default_factory=SensorsSection)
    actuators: ActuatorsSection = field(default_factory=ActuatorsSection)
    control: ControlSection = field(default_factory=ControlSection)
    guidance: GuidanceSection = field(default_factory=GuidanceSection)
    navigation: NavigationSection = field(default_factory=NavigationSection)
    terrain: TerrainSection = field(default_factory=TerrainSection)
    modes: ModesSection = field(default_factory=ModesSection)
    sim: SimSection = field(default_factory=SimSection)
    dispersions: DispersionSection = field(default_factory=DispersionSection)
    success: SuccessSection = field(default_factory=SuccessSection)
    telecommands: list = field(default_factory=list)


_REQUIRED_SECTIONS = [f.name for f in dataclasses.fields(ScenarioConfig)]


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


def _merge_into(obj, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'top level'}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key '{path}{key}'")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur) and isinstance(value, dict):
            _merge_into(cur, value, f"{path}{key}.")
        elif key == "telecommands":
            setattr(obj, key, _parse_telecommands(value))
        else:
            setattr(obj, key, _coerce(cur, value, f"{path}{key}"))
    return obj


def _coerce(current, value, path):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return value
    if isinstance(current, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if isinstance(current, int):
        if not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(tuple(v) if isinstance(v, (list, tuple)) else v
                     for v in value)
    return value


def _parse_telecommands(entries):
    out = []
    if not isinstance(entries, list):
        raise ConfigError("telecommands: expected a list")
    for e in entries:
        if isinstance(e, TelecommandEntry):
            out.append(e)
            continue
        if not isinstance(e, dict) or "opcode" not in e or "time_s" not in e:
            raise ConfigError("telecommand entries need time_s and opcode")
        extra = set(e) - {"time_s", "opcode", "payload"}
        if extra:
            raise ConfigError(f"telecommand entry has unknown keys {extra}")
        out.append(TelecommandEntry(float(e["time_s"]), str(e["opcode"]),
                                    dict(e.get("payload", {}))))
    return out


def load_config(path: str) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)


def config_from_dict(data: dict) -> ScenarioConfig:
    cfg = ScenarioConfig()
    _merge_into(cfg, data, "")
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig):
    g = cfg.guidance
    if not (g.vertical_descent_alt_m > g.main_cutoff_alt_m
            > g.rct_cutoff_alt_m > 0):
        raise ConfigError("cutoff altitudes must satisfy 10 > 2 > 1 ordering")
    if cfg.sim.truth_dt_s <= 0 or cfg.sim.truth_dt_s > 0.02:
        raise ConfigError("truth_dt_s must be in (0, 0.02]")
    if cfg.sim.start_phase not in ("predescent", "braking", "approach",
                                   "turn", "terminal", "orbital"):
        raise ConfigError(f"unknown start_phase {cfg.sim.start_phase}")
    for t in (cfg.sensors.imu.rate_hz, cfg.sim.gnc_rate_hz):
        if t <= 0:
            raise ConfigError("rates must be positive")
    ratio = cfg.sensors.imu.rate_hz * cfg.sim.truth_dt_s
    if abs(ratio - round(ratio)) > 1e-9 and abs(1 / ratio - round(1 / ratio)) > 1e-9:
        raise ConfigError("IMU rate must divide the truth rate")
    if cfg.vehicle.dry_mass_kg <= 0 or cfg.vehicle.initial_prop_kg < 0:
        raise ConfigError("vehicle masses must be positive")
    if cfg.dispersions.mass_range_kg < 0:
        raise ConfigError("dispersion ranges must be non-negative")
    if cfg.terrain.hazard_res_m > 0.1:
        raise ConfigError("hazard window resolution must be <= 0.1 m/px")
    return cfg


def dump_config(cfg: ScenarioConfig, path: str):
    def undata(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: undata(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [undata(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj
    with open(path, "w") as fh:
        yaml.safe_dump(undata(cfg), fh, sort_keys=False)
