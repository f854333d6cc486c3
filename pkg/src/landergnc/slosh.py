"""Propellant slosh as per-tank lateral spring-mass-damper analogs.

Each tank carries one slosh mass free to deflect in the body x-y plane.
The deflection state x obeys

    x_ddot = a_lat - (k/m) x - (c/m) x_dot

where a_lat is the body lateral specific force, and the reaction on the
vehicle is F = -(k x + c x_dot) applied at the tank attach point.
Parameters (slosh mass, spring rate, damping) are tabulated against
fill fraction and axial acceleration and re-interpolated every step;
lookups clamp at the table edges.
"""

from dataclasses import dataclass, field

import numpy as np

from .quat import cross


@dataclass
class SloshTankParams:
    """Spring-mass-damper tables for one tank."""

    attach_point_body_m: np.ndarray
    capacity_kg: float
    fill_grid: np.ndarray          # (Nf,) ascending fill fractions
    accel_grid_mps2: np.ndarray    # (Na,) ascending axial accelerations
    mass_frac_table: np.ndarray    # (Nf, Na) slosh mass / tank propellant
    spring_k_table: np.ndarray     # (Nf, Na) N/m
    damper_c_table: np.ndarray     # (Nf, Na) N s/m

    def lookup(self, fill_fraction: float, axial_accel_mps2: float):
        """(slosh_mass_kg, k, c) at the operating point, edge-clamped."""
        f = _clamp(fill_fraction, self.fill_grid[0], self.fill_grid[-1])
        a = _clamp(axial_accel_mps2, self.accel_grid_mps2[0], self.accel_grid_mps2[-1])
        frac = _bilinear(self.fill_grid, self.accel_grid_mps2, self.mass_frac_table, f, a)
        k = _bilinear(self.fill_grid, self.accel_grid_mps2, self.spring_k_table, f, a)
        c = _bilinear(self.fill_grid, self.accel_grid_mps2, self.damper_c_table, f, a)
        m_s = frac * fill_fraction * self.capacity_kg
        return m_s, k, c


@dataclass
class SloshParams:
    tanks: list = field(default_factory=list)

    @property
    def n_tanks(self) -> int:
        return len(self.tanks)


def default_tank(attach_point_body_m, capacity_kg, damping_ratio=0.05,
                 tank_radius_m=0.35) -> SloshTankParams:
    """Plausible monotone 5x5 default tables for a spherical tank.

    First-lateral-mode frequency scales like sqrt(a / R); spring rate
    follows k = m_s * w^2 and damping c = 2 zeta sqrt(k m_s).  These are
    placeholders shaped like flight tables, not measured data.
    """
    fills = np.array([0.05, 0.3, 0.5, 0.7, 0.95])
    accels = np.array([0.05, 0.5, 1.0, 2.0, 4.0])
    # slosh fraction peaks near mid fill, small when nearly full/empty
    frac = np.array([0.55, 0.42, 0.30, 0.18, 0.06])
    mass_frac = np.repeat(frac[:, None], accels.size, axis=1)
    m_s = mass_frac * fills[:, None] * capacity_kg
    omega2 = 1.2 * accels[None, :] / tank_radius_m
    spring_k = m_s * omega2
    damper_c = 2.0 * damping_ratio * np.sqrt(np.maximum(spring_k * m_s, 0.0))
    return SloshTankParams(
        attach_point_body_m=np.asarray(attach_point_body_m, dtype=float),
        capacity_kg=capacity_kg,
        fill_grid=fills,
        accel_grid_mps2=accels,
        mass_frac_table=mass_frac,
        spring_k_table=spring_k,
        damper_c_table=damper_c,
    )


def slosh_step(slosh_states, params: SloshParams, body_accel_mps2, cg_body_m,
               fill_fractions, dt_s: float):
    """Advance all tank slosh states by one step; return reaction loads.

    slosh_states has shape (n_tanks, 4) = [dx, dy, vx, vy] per tank.
    body_accel_mps2 is the thrust-induced specific force in body axes
    (its x/y components force the slosh, its z component selects the
    parameter operating point).  Returns (new_states, force_body_N,
    torque_body_Nm) with the reaction evaluated at the pre-step state.
    """
    if dt_s <= 0.0:
        raise ValueError("dt must be positive")
    states = np.asarray(slosh_states, dtype=float)
    new_states = states.copy()
    force = np.zeros(3)
    torque = np.zeros(3)
    a_lat = np.array([body_accel_mps2[0], body_accel_mps2[1]])
    a_axial = abs(float(body_accel_mps2[2]))
    for i, tank in enumerate(params.tanks):
        m_s, k, c = tank.lookup(float(fill_fractions[i]), a_axial)
        dx, dy, vx, vy = states[i]
        f_tank = np.array([-(k * dx + c * vx), -(k * dy + c * vy), 0.0])
        force += f_tank
        arm = tank.attach_point_body_m - np.asarray(cg_body_m, dtype=float)
        torque += cross(arm, f_tank)
        if m_s <= 1e-9:
            new_states[i] = 0.0
            continue
        new_states[i, 0], new_states[i, 2] = _osc_rk4(dx, vx, a_lat[0], k / m_s, c / m_s, dt_s)
        new_states[i, 1], new_states[i, 3] = _osc_rk4(dy, vy, a_lat[1], k / m_s, c / m_s, dt_s)
    return new_states, force, torque


def slosh_energy(slosh_states, params: SloshParams, axial_accel_mps2: float,
                 fill_fractions) -> float:
    """Total mechanical energy of the slosh analogs (J)."""
    e = 0.0
    for i, tank in enumerate(params.tanks):
        m_s, k, _ = tank.lookup(float(fill_fractions[i]), abs(axial_accel_mps2))
        dx, dy, vx, vy = np.asarray(slosh_states)[i]
        e += 0.5 * k * (dx * dx + dy * dy) + 0.5 * m_s * (vx * vx + vy * vy)
    return e


def _osc_rk4(x, v, a, k_over_m, c_over_m, dt):
    """RK4 step of x_ddot = a - k/m x - c/m x_dot with constant forcing."""
    def deriv(xi, vi):
        return vi, a - k_over_m * xi - c_over_m * vi

    k1x, k1v = deriv(x, v)
    k2x, k2v = deriv(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = deriv(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = deriv(x + dt * k3x, v + dt * k3v)
    return (x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def _bilinear(xg, yg, table, x, y):
    i = int(np.searchsorted(xg, x) - 1)
    j = int(np.searchsorted(yg, y) - 1)
    i = max(0, min(i, xg.size - 2))
    j = max(0, min(j, yg.size - 2))
    tx = (x - xg[i]) / (xg[i + 1] - xg[i])
    ty = (y - yg[j]) / (yg[j + 1] - yg[j])
    tx = _clamp(tx, 0.0, 1.0)
    ty = _clamp(ty, 0.0, 1.0)
    return ((1 - tx) * (1 - ty) * table[i, j] + tx * (1 - ty) * table[i + 1, j]
            + (1 - tx) * ty * table[i, j + 1] + tx * ty * table[i + 1, j + 1])
