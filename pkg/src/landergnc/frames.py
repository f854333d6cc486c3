"""Reference-frame transforms.

MCI is a Moon-centered inertial frame with +z toward the lunar north
pole.  Lunar rotation is neglected over the ~15 minute descent, so a
surface-fixed frame coincides with an inertial East-North-Up triad
frozen at definition time.
"""

import math

import numpy as np

from .quat import cross, norm, unit


def enu_triad(ref_pos_mci):
    """East/North/Up unit vectors at the sub-satellite point of ref_pos.

    Up is radial.  East = z_pole x Up (normalized); at the poles, where
    that cross product vanishes, East falls back to the projection of
    the inertial x-axis onto the local horizontal plane.
    Returns a 3x3 matrix with rows [east, north, up] so that
    ``v_enu = M @ v_mci``.
    """
    r = norm(ref_pos_mci)
    if r == 0.0:
        raise ValueError("reference position must be non-zero")
    up = np.array([ref_pos_mci[0] / r, ref_pos_mci[1] / r, ref_pos_mci[2] / r])
    pole = np.array([0.0, 0.0, 1.0])
    east = cross(pole, up)
    n = norm(east)
    if n < 1e-8:
        # polar tie-break: project inertial x-axis into the horizontal plane
        x = np.array([1.0, 0.0, 0.0])
        east = x - up * (up @ x)
        east = unit(east)
    else:
        east = east / n
    north = cross(up, east)
    return np.array([east, north, up])


def mci_to_enu(v_mci, triad):
    return triad @ v_mci


def enu_to_mci(v_enu, triad):
    return triad.T @ v_enu


def ric_triad(pos_mci, vel_mci):
    """Radial / In-track / Cross-track rows for orbit-determination errors.

    Radial along +r, cross-track along the orbit normal r x v, in-track
    completing the right-handed set (close to the velocity direction).
    """
    r_hat = unit(pos_mci)
    c_hat = unit(cross(pos_mci, vel_mci))
    i_hat = cross(c_hat, r_hat)
    return np.array([r_hat, i_hat, c_hat])


def downrange_angle(pos_mci, site_mci):
    """Central angle (rad) between the sub-satellite point and the site."""
    a = unit(pos_mci)
    b = unit(site_mci)
    c = max(-1.0, min(1.0, float(a @ b)))
    return math.acos(c)
