"""Compiled truth-propagation kernel.

The closed-loop simulator advances vehicle truth at 200 Hz between GNC
cycles.  Doing that in interpreted code dominates the runtime of a
Monte Carlo batch, so the inner loop lives here as a numba kernel
operating on flat float64 arrays.  The pure-python actuator and slosh
models in :mod:`landergnc.actuators` / :mod:`landergnc.slosh` define the
same update equations; unit tests assert the two paths agree.

State vector layout (22 + 4 per tank beyond the first two is not
supported; exactly two tanks are assumed):

    x[0:3]   position MCI (m)
    x[3:6]   velocity MCI (m/s)
    x[6:10]  attitude quaternion MCI->body [w,x,y,z]
    x[10:13] body rates (rad/s)
    x[13]    propellant mass (kg)
    x[14:22] slosh states, two tanks x [dx, dy, vx, vy]

Engine constants array ``engc`` has one row per thruster:
[nominal_N, thrust_scale, isp_scale, lag_tau_s, omega_radps,
 duty_window_s, isp_steady_s].
"""

import math

import numpy as np
from numba import njit

N_STATE = 22
IDX_PROP = 13
IDX_SLOSH = 14


@njit(cache=True, fastmath=False)
def _interp_tab(grid, table, v):
    n = grid.shape[0]
    if v <= grid[0]:
        return table[0]
    if v >= grid[n - 1]:
        return table[n - 1]
    i = 0
    while grid[i + 1] < v:
        i += 1
    t = (v - grid[i]) / (grid[i + 1] - grid[i])
    return table[i] + t * (table[i + 1] - table[i])


@njit(cache=True, fastmath=False)
def _bilin(xg, yg, tab, x, y):
    nx = xg.shape[0]
    ny = yg.shape[0]
    if x < xg[0]:
        x = xg[0]
    if x > xg[nx - 1]:
        x = xg[nx - 1]
    if y < yg[0]:
        y = yg[0]
    if y > yg[ny - 1]:
        y = yg[ny - 1]
    i = 0
    while i < nx - 2 and xg[i + 1] < x:
        i += 1
    j = 0
    while j < ny - 2 and yg[j + 1] < y:
        j += 1
    tx = (x - xg[i]) / (xg[i + 1] - xg[i])
    ty = (y - yg[j]) / (yg[j + 1] - yg[j])
    return ((1 - tx) * (1 - ty) * tab[i, j] + tx * (1 - ty) * tab[i + 1, j]
            + (1 - tx) * ty * tab[i, j + 1] + tx * ty * tab[i + 1, j + 1])


@njit(cache=True, fastmath=False)
def _gravity(px, py, pz, grav_scal, pert_amp, pert_wavevec, pert_dir,
             pert_phase, truth):
    mu = grav_scal[0]
    ref_r = grav_scal[1]
    j2 = grav_scal[2]
    r2 = px * px + py * py + pz * pz
    r = math.sqrt(r2)
    c = -mu / (r2 * r)
    ax = c * px
    ay = c * py
    az = c * pz
    if j2 != 0.0:
        f = -1.5 * j2 * mu * ref_r * ref_r / (r2 * r2 * r)
        zr2 = (pz * pz) / r2
        ax += f * px * (1.0 - 5.0 * zr2)
        ay += f * py * (1.0 - 5.0 * zr2)
        az += f * pz * (3.0 - 5.0 * zr2)
    if truth:
        ux = px / r
        uy = py / r
        uz = pz / r
        for i in range(pert_amp.shape[0]):
            s = pert_amp[i] * math.sin(pert_wavevec[i, 0] * ux
                                       + pert_wavevec[i, 1] * uy
                                       + pert_wavevec[i, 2] * uz
                                       + pert_phase[i])
            ax += s * pert_dir[i, 0]
            ay += s * pert_dir[i, 1]
            az += s * pert_dir[i, 2]
    return ax, ay, az


@njit(cache=True, fastmath=False)
def _deriv(x, dx, fbx, fby, fbz, tqx, tqy, tqz, mass, iinv, ibody,
           grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
           use_pert, tank_k, tank_c, tank_ms, tank_attach, cgx, cgy, cgz,
           a_lat_x, a_lat_y):
    """Time derivative of the dynamic state.

    fb*/tq* are the thrust force/torque in body axes about the CG; the
    slosh reaction is added here from the instantaneous slosh state so
    the coupling stays consistent across RK4 substeps.
    """
    qw = x[6]
    qx = x[7]
    qy = x[8]
    qz = x[9]
    wx = x[10]
    wy = x[11]
    wz = x[12]
    # slosh reaction in body axes
    sfx = 0.0
    sfy = 0.0
    stx = 0.0
    sty = 0.0
    stz = 0.0
    for tnk in range(2):
        k = tank_k[tnk]
        c = tank_c[tnk]
        dxs = x[IDX_SLOSH + 4 * tnk]
        dys = x[IDX_SLOSH + 4 * tnk + 1]
        vxs = x[IDX_SLOSH + 4 * tnk + 2]
        vys = x[IDX_SLOSH + 4 * tnk + 3]
        fx = -(k * dxs + c * vxs)
        fy = -(k * dys + c * vys)
        sfx += fx
        sfy += fy
        rx = tank_attach[tnk, 0] - cgx
        ry = tank_attach[tnk, 1] - cgy
        rz = tank_attach[tnk, 2] - cgz
        stx += ry * 0.0 - rz * fy
        sty += rz * fx - rx * 0.0
        stz += rx * fy - ry * fx
        # slosh state derivative
        ms = tank_ms[tnk]
        if ms > 1e-9:
            dx[IDX_SLOSH + 4 * tnk] = vxs
            dx[IDX_SLOSH + 4 * tnk + 1] = vys
            dx[IDX_SLOSH + 4 * tnk + 2] = a_lat_x - (k / ms) * dxs - (c / ms) * vxs
            dx[IDX_SLOSH + 4 * tnk + 3] = a_lat_y - (k / ms) * dys - (c / ms) * vys
        else:
            dx[IDX_SLOSH + 4 * tnk] = 0.0
            dx[IDX_SLOSH + 4 * tnk + 1] = 0.0
            dx[IDX_SLOSH + 4 * tnk + 2] = 0.0
            dx[IDX_SLOSH + 4 * tnk + 3] = 0.0
    tfx = fbx + sfx
    tfy = fby + sfy
    tfz = fbz
    ttx = tqx + stx
    tty = tqy + sty
    ttz = tqz + stz
    # body force -> MCI acceleration: a = R(q)^T f / m + g
    # R(q)^T v (body to inertial) expanded
    t1 = 2.0 * (qy * tfz - qz * tfy)
    t2 = 2.0 * (qz * tfx - qx * tfz)
    t3 = 2.0 * (qx * tfy - qy * tfx)
    fix = tfx + qw * t1 + (qy * t3 - qz * t2)
    fiy = tfy + qw * t2 + (qz * t1 - qx * t3)
    fiz = tfz + qw * t3 + (qx * t2 - qy * t1)
    gx, gy, gz = _gravity(x[0], x[1], x[2], grav_scal, pert_amp,
                          pert_wavevec, pert_dir, pert_phase, use_pert)
    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    dx[3] = fix / mass + gx
    dx[4] = fiy / mass + gy
    dx[5] = fiz / mass + gz
    # quaternion kinematics qdot = 0.5 q (x) (0, w)
    dx[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dx[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    dx[8] = 0.5 * (qw * wy + qz * wx - qx * wz)
    dx[9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    # Euler equations: wdot = Iinv (tau - w x I w)
    hwx = ibody[0, 0] * wx + ibody[0, 1] * wy + ibody[0, 2] * wz
    hwy = ibody[1, 0] * wx + ibody[1, 1] * wy + ibody[1, 2] * wz
    hwz = ibody[2, 0] * wx + ibody[2, 1] * wy + ibody[2, 2] * wz
    mx = ttx - (wy * hwz - wz * hwy)
    my = tty - (wz * hwx - wx * hwz)
    mz = ttz - (wx * hwy - wy * hwx)
    dx[10] = iinv[0, 0] * mx + iinv[0, 1] * my + iinv[0, 2] * mz
    dx[11] = iinv[1, 0] * mx + iinv[1, 1] * my + iinv[1, 2] * mz
    dx[12] = iinv[2, 0] * mx + iinv[2, 1] * my + iinv[2, 2] * mz
    dx[13] = 0.0


@njit(cache=True, fastmath=False)
def advance_truth(x, thr_states, duty, on_from, on_until, enabled,
                  t0, dt, n_steps, imu_every,
                  thr_pos, thr_dir, engc,
                  duty_grid, isp_fac_tab, thr_fac_tab,
                  mass_scal, inertia_dry, inertia_wet, cg_dry, cg_wet,
                  grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
                  use_pert,
                  tank_attach, tank_capacity, fill_grid, accel_grid,
                  mass_frac_tab, spring_tab, damper_tab,
                  grid, grid_scal, grid_on, site_rows, site_center,
                  imu_dv_out, imu_dth_out, imp_out, flow_out):
    """Advance truth ``n_steps`` of ``dt`` from ``t0``.

    Mutates x, thr_states, duty and the output accumulators in place.
    Returns (steps_done, contact_flag, depleted_flag).  Contact stops
    the loop early with x holding the state at the contact step.
    """
    n_thr = thr_pos.shape[0]
    dry_mass = mass_scal[0]
    prop0 = mass_scal[1]
    gear_drop = mass_scal[2]
    contact = False
    depleted = False
    dxa = np.zeros(N_STATE)
    k1 = np.zeros(N_STATE)
    k2 = np.zeros(N_STATE)
    k3 = np.zeros(N_STATE)
    k4 = np.zeros(N_STATE)
    xt = np.zeros(N_STATE)
    acc_dvx = 0.0
    acc_dvy = 0.0
    acc_dvz = 0.0
    acc_dtx = 0.0
    acc_dty = 0.0
    acc_dtz = 0.0
    steps_done = 0
    for istep in range(n_steps):
        t = t0 + istep * dt
        prop = x[IDX_PROP]
        if prop <= 0.0:
            prop = 0.0
        mass = dry_mass + prop
        f = prop / prop0 if prop0 > 0.0 else 0.0
        if f > 1.0:
            f = 1.0
        cgx = cg_dry[0] + f * (cg_wet[0] - cg_dry[0])
        cgy = cg_dry[1] + f * (cg_wet[1] - cg_dry[1])
        cgz = cg_dry[2] + f * (cg_wet[2] - cg_dry[2])
        # thruster transients and force/torque aggregation
        fbx = 0.0
        fby = 0.0
        fbz = 0.0
        tqx = 0.0
        tqy = 0.0
        tqz = 0.0
        flow_total = 0.0
        for i in range(n_thr):
            ui = 1.0 if (t >= on_from[i] and t < on_until[i]
                         and enabled[i] > 0.5 and not depleted
                         and prop > 0.0) else 0.0
            lag_tau = engc[i, 3]
            w = engc[i, 4]
            e_lag = math.exp(-dt / lag_tau)
            thr_states[i, 0] = ui + (thr_states[i, 0] - ui) * e_lag
            ew = math.exp(-w * dt)
            x_in = thr_states[i, 0]
            for k in range(1, 7, 2):
                x0 = thr_states[i, k] - x_in
                v0 = thr_states[i, k + 1]
                thr_states[i, k] = x_in + ew * (x0 * (1.0 + w * dt) + v0 * dt)
                thr_states[i, k + 1] = ew * (v0 * (1.0 - w * dt) - x0 * w * w * dt)
            level = thr_states[i, 5]
            if level < 0.0:
                level = 0.0
            if level > 1.2:
                level = 1.2
            duty[i] += (ui - duty[i]) * (dt / engc[i, 5])
            d = duty[i]
            if d < duty_grid[0]:
                d = duty_grid[0]
            if d > 1.0:
                d = 1.0
            tf = _interp_tab(duty_grid, thr_fac_tab, d)
            isp = engc[i, 6] * _interp_tab(duty_grid, isp_fac_tab, d)
            thrust = engc[i, 0] * engc[i, 1] * tf * level
            if thrust > 0.0:
                fl = thrust / (9.80665 * isp * engc[i, 2])
                flow_total += fl
                imp_out[i] += thrust * dt
                flow_out[i] += fl * dt
                dxp = thr_dir[i, 0]
                dyp = thr_dir[i, 1]
                dzp = thr_dir[i, 2]
                fbx += thrust * dxp
                fby += thrust * dyp
                fbz += thrust * dzp
                rx = thr_pos[i, 0] - cgx
                ry = thr_pos[i, 1] - cgy
                rz = thr_pos[i, 2] - cgz
                tqx += thrust * (ry * dzp - rz * dyp)
                tqy += thrust * (rz * dxp - rx * dzp)
                tqz += thrust * (rx * dyp - ry * dxp)
        # slosh operating point (thrust-induced specific force)
        a_lat_x = fbx / mass
        a_lat_y = fby / mass
        a_ax = abs(fbz) / mass
        tank_k = np.zeros(2)
        tank_c = np.zeros(2)
        tank_ms = np.zeros(2)
        for tnk in range(2):
            fillm = 0.5 * prop
            fillfrac = fillm / tank_capacity[tnk]
            if fillfrac > 1.0:
                fillfrac = 1.0
            frac = _bilin(fill_grid, accel_grid, mass_frac_tab, fillfrac, a_ax)
            tank_k[tnk] = _bilin(fill_grid, accel_grid, spring_tab, fillfrac, a_ax)
            tank_c[tnk] = _bilin(fill_grid, accel_grid, damper_tab, fillfrac, a_ax)
            tank_ms[tnk] = frac * fillfrac * tank_capacity[tnk]
        # inertia at current fill, inverse by closed form
        ib = np.zeros((3, 3))
        for r in range(3):
            for cc in range(3):
                ib[r, cc] = inertia_dry[r, cc] + f * (inertia_wet[r, cc] - inertia_dry[r, cc])
        a11 = ib[1, 1] * ib[2, 2] - ib[1, 2] * ib[2, 1]
        a12 = ib[0, 2] * ib[2, 1] - ib[0, 1] * ib[2, 2]
        a13 = ib[0, 1] * ib[1, 2] - ib[0, 2] * ib[1, 1]
        a21 = ib[1, 2] * ib[2, 0] - ib[1, 0] * ib[2, 2]
        a22 = ib[0, 0] * ib[2, 2] - ib[0, 2] * ib[2, 0]
        a23 = ib[0, 2] * ib[1, 0] - ib[0, 0] * ib[1, 2]
        a31 = ib[1, 0] * ib[2, 1] - ib[1, 1] * ib[2, 0]
        a32 = ib[0, 1] * ib[2, 0] - ib[0, 0] * ib[2, 1]
        a33 = ib[0, 0] * ib[1, 1] - ib[0, 1] * ib[1, 0]
        det = ib[0, 0] * a11 + ib[0, 1] * a21 + ib[0, 2] * a31
        iinv = np.zeros((3, 3))
        iinv[0, 0] = a11 / det
        iinv[0, 1] = a12 / det
        iinv[0, 2] = a13 / det
        iinv[1, 0] = a21 / det
        iinv[1, 1] = a22 / det
        iinv[1, 2] = a23 / det
        iinv[2, 0] = a31 / det
        iinv[2, 1] = a32 / det
        iinv[2, 2] = a33 / det
        # RK4
        _deriv(x, k1, fbx, fby, fbz, tqx, tqy, tqz, mass, iinv, ib,
               grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
               use_pert, tank_k, tank_c, tank_ms, tank_attach, cgx, cgy, cgz,
               a_lat_x, a_lat_y)
        for j in range(N_STATE):
            xt[j] = x[j] + 0.5 * dt * k1[j]
        _deriv(xt, k2, fbx, fby, fbz, tqx, tqy, tqz, mass, iinv, ib,
               grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
               use_pert, tank_k, tank_c, tank_ms, tank_attach, cgx, cgy, cgz,
               a_lat_x, a_lat_y)
        for j in range(N_STATE):
            xt[j] = x[j] + 0.5 * dt * k2[j]
        _deriv(xt, k3, fbx, fby, fbz, tqx, tqy, tqz, mass, iinv, ib,
               grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
               use_pert, tank_k, tank_c, tank_ms, tank_attach, cgx, cgy, cgz,
               a_lat_x, a_lat_y)
        for j in range(N_STATE):
            xt[j] = x[j] + dt * k3[j]
        _deriv(xt, k4, fbx, fby, fbz, tqx, tqy, tqz, mass, iinv, ib,
               grav_scal, pert_amp, pert_wavevec, pert_dir, pert_phase,
               use_pert, tank_k, tank_c, tank_ms, tank_attach, cgx, cgy, cgz,
               a_lat_x, a_lat_y)
        for j in range(N_STATE):
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        # propellant bookkeeping and quaternion renormalization
        newprop = x[IDX_PROP] - flow_total * dt + 0.0
        if flow_total > 0.0 and newprop <= 0.0:
            newprop = 0.0
            depleted = True
        x[IDX_PROP] = newprop
        qn = math.sqrt(x[6] * x[6] + x[7] * x[7] + x[8] * x[8] + x[9] * x[9])
        if x[6] < 0.0:
            qn = -qn
        x[6] /= qn
        x[7] /= qn
        x[8] /= qn
        x[9] /= qn
        # IMU accumulation: body-frame specific force (thrust + slosh)
        sfx = 0.0
        sfy = 0.0
        for tnk in range(2):
            k = tank_k[tnk]
            c = tank_c[tnk]
            sfx += -(k * x[IDX_SLOSH + 4 * tnk] + c * x[IDX_SLOSH + 4 * tnk + 2])
            sfy += -(k * x[IDX_SLOSH + 4 * tnk + 1] + c * x[IDX_SLOSH + 4 * tnk + 3])
        acc_dvx += (fbx + sfx) / mass * dt
        acc_dvy += (fby + sfy) / mass * dt
        acc_dvz += fbz / mass * dt
        acc_dtx += x[10] * dt
        acc_dty += x[11] * dt
        acc_dtz += x[12] * dt
        steps_done = istep + 1
        if steps_done % imu_every == 0:
            row = steps_done // imu_every - 1
            imu_dv_out[row, 0] = acc_dvx
            imu_dv_out[row, 1] = acc_dvy
            imu_dv_out[row, 2] = acc_dvz
            imu_dth_out[row, 0] = acc_dtx
            imu_dth_out[row, 1] = acc_dty
            imu_dth_out[row, 2] = acc_dtz
            acc_dvx = 0.0
            acc_dvy = 0.0
            acc_dvz = 0.0
            acc_dtx = 0.0
            acc_dty = 0.0
            acc_dtz = 0.0
        # ground contact (only when the near-field grid is armed)
        if grid_on:
            dxp = x[0] - site_center[0]
            dyp = x[1] - site_center[1]
            dzp = x[2] - site_center[2]
            e = site_rows[0, 0] * dxp + site_rows[0, 1] * dyp + site_rows[0, 2] * dzp
            n = site_rows[1, 0] * dxp + site_rows[1, 1] * dyp + site_rows[1, 2] * dzp
            u = site_rows[2, 0] * dxp + site_rows[2, 1] * dyp + site_rows[2, 2] * dzp
            # up-component of body +Z axis = row3 of R(q)^T dotted with up
            qw = x[6]
            qx = x[7]
            qy = x[8]
            qz = x[9]
            bzx = 2.0 * (qx * qz + qw * qy)
            bzy = 2.0 * (qy * qz - qw * qx)
            bzz = 1.0 - 2.0 * (qx * qx + qy * qy)
            upz = (site_rows[2, 0] * bzx + site_rows[2, 1] * bzy
                   + site_rows[2, 2] * bzz)
            # CG sits cgz above the deck origin; gear plane gear_drop below
            ge = (e - grid_scal[0]) / grid_scal[2]
            gn = (n - grid_scal[1]) / grid_scal[2]
            ig = int(ge)
            jg = int(gn)
            nrow = grid.shape[0]
            ncol = grid.shape[1]
            if ig < 0:
                ig = 0
            if ig > ncol - 2:
                ig = ncol - 2
            if jg < 0:
                jg = 0
            if jg > nrow - 2:
                jg = nrow - 2
            te = ge - ig
            tn = gn - jg
            if te < 0.0:
                te = 0.0
            if te > 1.0:
                te = 1.0
            if tn < 0.0:
                tn = 0.0
            if tn > 1.0:
                tn = 1.0
            elev = ((1 - te) * (1 - tn) * grid[jg, ig] + te * (1 - tn) * grid[jg, ig + 1]
                    + (1 - te) * tn * grid[jg + 1, ig] + te * tn * grid[jg + 1, ig + 1])
            gear_alt = u - (cgz + gear_drop) * upz - elev
            if gear_alt <= 0.0:
                contact = True
                break
    return steps_done, contact, depleted
