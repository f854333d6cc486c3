"""Lunar gravity: onboard model and truth-side perturbation field.

The onboard model is central gravity plus low-degree zonal terms.  The
truth model adds a smooth, seeded perturbation field whose magnitude is
bounded by a configurable limit in milligal (1 mgal = 1e-5 m/s^2),
default 95 mgal.  The bound is enforced by construction: the field is a
sum of sinusoidal terms whose amplitudes add up to exactly the limit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

MU_MOON_M3PS2 = 4.9028e12
R_MOON_M = 1_737_400.0
J2_MOON = 2.0330530e-4
MGAL = 1.0e-5  # m/s^2


@dataclass
class GravityModel:
    """Gravity field parameters shared by the truth and onboard sides."""

    mu_m3ps2: float = MU_MOON_M3PS2
    ref_radius_m: float = R_MOON_M
    zonal_j: tuple = (J2_MOON,)  # J2, J3, ... (J3+ default off)
    error_bound_mgal: float = 95.0
    field_seed: int = 0
    # perturbation field terms, built in __post_init__:
    # amplitudes (K,), wavevectors (K,3), directions (K,3), phases (K,)
    pert_amp: np.ndarray = field(default=None, repr=False)
    pert_wavevec: np.ndarray = field(default=None, repr=False)
    pert_dir: np.ndarray = field(default=None, repr=False)
    pert_phase: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.mu_m3ps2 <= 0.0:
            raise ValueError("mu must be positive")
        rng = np.random.default_rng(np.random.SeedSequence([0x6A7, self.field_seed]))
        n_terms = 4
        raw = rng.uniform(0.5, 1.0, n_terms)
        bound = self.error_bound_mgal * MGAL
        self.pert_amp = raw / raw.sum() * bound
        # wave numbers 8..40 cycles per radian of arc: regional anomalies
        k = rng.uniform(8.0, 40.0, n_terms)
        d = rng.normal(size=(n_terms, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        w = rng.normal(size=(n_terms, 3))
        w /= np.linalg.norm(w, axis=1)[:, None]
        self.pert_wavevec = w * k[:, None]
        self.pert_dir = d
        self.pert_phase = rng.uniform(0.0, 2.0 * math.pi, n_terms)


def gravity_accel(pos_mci_m, model: GravityModel, truth: bool = False):
    """Gravitational acceleration (m/s^2) at a MCI position.

    With ``truth`` set, the seeded perturbation field is added; the
    onboard model omits it.  Positions inside half the reference radius
    are rejected (the field model is meaningless there).
    """
    x, y, z = float(pos_mci_m[0]), float(pos_mci_m[1]), float(pos_mci_m[2])
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    if r <= 0.5 * model.ref_radius_m:
        raise ValueError(f"position radius {r:.0f} m is inside the Moon")
    c = -model.mu_m3ps2 / (r2 * r)
    ax, ay, az = c * x, c * y, c * z
    if model.zonal_j:
        j2 = model.zonal_j[0]
        if j2 != 0.0:
            # standard J2 zonal term, z toward the pole
            f = -1.5 * j2 * model.mu_m3ps2 * model.ref_radius_m ** 2 / (r2 * r2 * r)
            zr2 = (z * z) / r2
            ax += f * x * (1.0 - 5.0 * zr2)
            ay += f * y * (1.0 - 5.0 * zr2)
            az += f * z * (3.0 - 5.0 * zr2)
    if truth:
        ux, uy, uz = x / r, y / r, z / r
        for i in range(model.pert_amp.shape[0]):
            wv = model.pert_wavevec[i]
            s = model.pert_amp[i] * math.sin(
                wv[0] * ux + wv[1] * uy + wv[2] * uz + model.pert_phase[i])
            ax += s * model.pert_dir[i, 0]
            ay += s * model.pert_dir[i, 1]
            az += s * model.pert_dir[i, 2]
    return np.array([ax, ay, az])


def perturbation_bound_mps2(model: GravityModel) -> float:
    """Hard upper bound on the truth-minus-onboard difference."""
    return float(np.sum(np.abs(model.pert_amp)))
