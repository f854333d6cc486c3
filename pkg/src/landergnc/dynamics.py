"""6-DOF truth propagation.

Two paths share the same equations of motion:

- :func:`propagate_truth` — plain-python RK4 step taking externally
  computed body force/torque and mass flow.  This is the reference
  implementation used by unit tests and by anything that wants a
  single transparent step.
- :class:`TruthEngine` — owns the packed arrays and drives the compiled
  kernel in :mod:`landergnc.kernel` for the 200 Hz simulation loop,
  with thruster transients and slosh coupled inside the integrator.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernel
from .actuators import ActuatorBank
from .gravity import GravityModel, gravity_accel
from .quat import cross, normalize, qmul, rotate_back
from .slosh import SloshParams
from .vehicle import VehicleConfig, VehicleState


def propagate_truth(state: VehicleState, force_body_n, torque_body_nm,
                    mass_flow_kgps: float, cfg: VehicleConfig,
                    gravity: GravityModel, dt_s: float, truth_field=False):
    """One RK4 step under constant body force/torque and mass flow.

    Returns (new_state, depleted).  Slosh states ride along unchanged
    (they are advanced by slosh_step when this path is used).  Inertia
    and CG are evaluated at the current propellant load and held over
    the step.
    """
    if not (0.0 < dt_s <= 0.02):
        raise ValueError("truth step must be in (0, 0.02] s")
    fb = np.asarray(force_body_n, dtype=float)
    tq = np.asarray(torque_body_nm, dtype=float)
    if not (np.all(np.isfinite(fb)) and np.all(np.isfinite(tq))):
        raise ValueError("non-finite force/torque input")
    mass = cfg.total_mass_kg(max(state.prop_mass_kg, 0.0))
    if mass <= 0.0:
        raise ValueError("total mass must be positive")
    inertia = cfg.inertia(state.prop_mass_kg)
    iinv = np.linalg.inv(inertia)

    def deriv(pos, vel, q, w):
        a = rotate_back(q, fb) / mass + gravity_accel(pos, gravity, truth=truth_field)
        qd = 0.5 * qmul(q, np.array([0.0, w[0], w[1], w[2]]))
        hw = inertia @ w
        wd = iinv @ (tq - cross(w, hw))
        return vel, a, qd, wd

    p0, v0, q0, w0 = state.pos_mci_m, state.vel_mci_mps, state.att_q, state.rate_body_radps
    k1 = deriv(p0, v0, q0, w0)
    k2 = deriv(p0 + 0.5 * dt_s * k1[0], v0 + 0.5 * dt_s * k1[1],
               q0 + 0.5 * dt_s * k1[2], w0 + 0.5 * dt_s * k1[3])
    k3 = deriv(p0 + 0.5 * dt_s * k2[0], v0 + 0.5 * dt_s * k2[1],
               q0 + 0.5 * dt_s * k2[2], w0 + 0.5 * dt_s * k2[3])
    k4 = deriv(p0 + dt_s * k3[0], v0 + dt_s * k3[1],
               q0 + dt_s * k3[2], w0 + dt_s * k3[3])
    pos = p0 + dt_s / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vel = v0 + dt_s / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    q = normalize(q0 + dt_s / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]))
    w = w0 + dt_s / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    prop = state.prop_mass_kg - mass_flow_kgps * dt_s
    depleted = False
    if prop < 0.0:
        prop = 0.0
        depleted = True
    new = VehicleState(state.epoch_s + dt_s, pos, vel, q, w, prop,
                       state.slosh_states.copy())
    return new, depleted


@dataclass
class AdvanceResult:
    steps_done: int
    contact: bool
    depleted: bool
    imu_dv_body: np.ndarray     # (n_intervals, 3) integrated specific force
    imu_dtheta_body: np.ndarray


class TruthEngine:
    """Packs vehicle/environment parameters and drives the kernel."""

    def __init__(self, cfg: VehicleConfig, gravity: GravityModel,
                 slosh: SloshParams, bank: ActuatorBank,
                 truth_gravity_field=True):
        if slosh.n_tanks != 2:
            raise ValueError("truth kernel assumes exactly two tanks")
        self.cfg = cfg
        self.gravity = gravity
        self.slosh = slosh
        self.bank = bank
        self.use_pert = bool(truth_gravity_field)
        self.x = np.zeros(kernel.N_STATE)
        self.engc = np.column_stack([
            bank.nominal_n, bank.thrust_scale, bank.isp_scale,
            bank.lag_tau_s, bank.omega, bank.duty_window_s, bank.isp_steady])
        self.mass_scal = np.array([cfg.dry_mass_kg, cfg.initial_prop_kg,
                                   cfg.gear_plane_below_deck_m])
        self.grav_scal = np.array([gravity.mu_m3ps2, gravity.ref_radius_m,
                                   gravity.zonal_j[0] if gravity.zonal_j else 0.0])
        t0 = slosh.tanks[0]
        self.tank_attach = np.array([t.attach_point_body_m for t in slosh.tanks])
        self.tank_capacity = np.array([t.capacity_kg for t in slosh.tanks])
        self.fill_grid = t0.fill_grid
        self.accel_grid = t0.accel_grid_mps2
        self.mass_frac_tab = t0.mass_frac_table
        self.spring_tab = t0.spring_k_table
        self.damper_tab = t0.damper_c_table
        # ground-contact grid: armed by the simulator close to the surface
        self.grid = np.zeros((2, 2))
        self.grid_scal = np.array([0.0, 0.0, 1.0])
        self.grid_on = False
        self.site_rows = np.eye(3)
        self.site_center = np.zeros(3)
        self.impulse_ns = np.zeros(bank.nominal_n.shape[0])
        self.flow_kg = np.zeros(bank.nominal_n.shape[0])
        self._imu_dv = np.zeros((64, 3))
        self._imu_dth = np.zeros((64, 3))

    def set_state(self, state: VehicleState):
        self.x[0:3] = state.pos_mci_m
        self.x[3:6] = state.vel_mci_mps
        self.x[6:10] = state.att_q
        self.x[10:13] = state.rate_body_radps
        self.x[13] = state.prop_mass_kg
        self.x[14:22] = np.asarray(state.slosh_states, dtype=float).ravel()
        self._epoch = state.epoch_s

    def get_state(self) -> VehicleState:
        return VehicleState(
            self._epoch, self.x[0:3].copy(), self.x[3:6].copy(),
            self.x[6:10].copy(), self.x[10:13].copy(), float(self.x[13]),
            self.x[14:22].reshape(2, 4).copy())

    def arm_contact_grid(self, grid, e_min, n_min, res_m, site_rows, site_center):
        self.grid = np.ascontiguousarray(grid, dtype=float)
        self.grid_scal = np.array([e_min, n_min, res_m])
        self.site_rows = np.ascontiguousarray(site_rows, dtype=float)
        self.site_center = np.ascontiguousarray(site_center, dtype=float)
        self.grid_on = True

    def advance(self, dt_s: float, n_steps: int, imu_every: int) -> AdvanceResult:
        n_int = n_steps // imu_every
        if n_int > self._imu_dv.shape[0]:
            self._imu_dv = np.zeros((n_int, 3))
            self._imu_dth = np.zeros((n_int, 3))
        bank = self.bank
        steps, contact, depleted = kernel.advance_truth(
            self.x, bank.states, bank.duty, bank.on_from, bank.on_until,
            bank.enabled.astype(np.float64),
            self._epoch, dt_s, n_steps, imu_every,
            bank.geometry.positions_m, bank.geometry.directions, self.engc,
            bank.duty_grid, bank.isp_factor, bank.thrust_factor,
            self.mass_scal, self.cfg.inertia_dry, self.cfg.inertia_wet,
            self.cfg.cg_dry_body_m, self.cfg.cg_wet_body_m,
            self.grav_scal, self.gravity.pert_amp, self.gravity.pert_wavevec,
            self.gravity.pert_dir, self.gravity.pert_phase, self.use_pert,
            self.tank_attach, self.tank_capacity, self.fill_grid,
            self.accel_grid, self.mass_frac_tab, self.spring_tab,
            self.damper_tab,
            self.grid, self.grid_scal, self.grid_on,
            self.site_rows, self.site_center,
            self._imu_dv, self._imu_dth, self.impulse_ns, self.flow_kg)
        self._epoch += steps * dt_s
        full = steps // imu_every
        return AdvanceResult(steps, bool(contact), bool(depleted),
                             self._imu_dv[:full].copy(),
                             self._imu_dth[:full].copy())


def specific_orbit_energy(state: VehicleState, mu: float) -> float:
    r = math.sqrt(float(state.pos_mci_m @ state.pos_mci_m))
    v2 = float(state.vel_mci_mps @ state.vel_mci_mps)
    return 0.5 * v2 - mu / r


def angular_momentum_mci(state: VehicleState, cfg: VehicleConfig) -> np.ndarray:
    """Rotational angular momentum expressed in the inertial frame."""
    h_body = cfg.inertia(state.prop_mass_kg) @ state.rate_body_radps
    return rotate_back(state.att_q, h_body)
