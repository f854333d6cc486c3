"""Vehicle truth state and mass-property model.

Body frame: +Z is the longitudinal axis from the bottom deck toward the
top deck; the main engine thrusts along +Z (nozzle fires downward out of
the bottom deck).  The coordinate origin sits at the center of the
bottom deck.  Inertia and CG vary linearly with remaining propellant
between wet and dry values.
"""

from dataclasses import dataclass, field

import numpy as np

from .quat import qnorm


@dataclass
class VehicleState:
    """Full truth state of the lander."""

    epoch_s: float
    pos_mci_m: np.ndarray
    vel_mci_mps: np.ndarray
    att_q: np.ndarray              # MCI -> body, [w,x,y,z]
    rate_body_radps: np.ndarray
    prop_mass_kg: float
    slosh_states: np.ndarray       # (n_tanks, 4) = [dx, dy, vx, vy]

    def copy(self) -> "VehicleState":
        return VehicleState(
            self.epoch_s, self.pos_mci_m.copy(), self.vel_mci_mps.copy(),
            self.att_q.copy(), self.rate_body_radps.copy(),
            self.prop_mass_kg, self.slosh_states.copy())

    def validate(self):
        if self.prop_mass_kg < 0.0:
            raise ValueError("propellant mass is negative")
        if abs(qnorm(self.att_q) - 1.0) > 1e-6:
            raise ValueError("attitude quaternion departed from unit norm")
        for arr in (self.pos_mci_m, self.vel_mci_mps, self.rate_body_radps):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite vehicle state")


@dataclass
class VehicleConfig:
    """Structural and mass-property configuration."""

    dry_mass_kg: float = 110.0
    initial_prop_kg: float = 240.0
    inertia_dry: np.ndarray = field(
        default_factory=lambda: np.diag([65.0, 65.0, 55.0]))
    inertia_wet: np.ndarray = field(
        default_factory=lambda: np.diag([150.0, 150.0, 120.0]))
    cg_dry_body_m: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.42]))
    cg_wet_body_m: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.55]))
    gear_plane_below_deck_m: float = 0.80   # gear contact plane below origin
    datum_radius_m: float = 1_737_400.0

    def __post_init__(self):
        self.inertia_dry = np.asarray(self.inertia_dry, dtype=float)
        self.inertia_wet = np.asarray(self.inertia_wet, dtype=float)
        self.cg_dry_body_m = np.asarray(self.cg_dry_body_m, dtype=float)
        self.cg_wet_body_m = np.asarray(self.cg_wet_body_m, dtype=float)
        if self.dry_mass_kg <= 0.0:
            raise ValueError("dry mass must be positive")
        for inertia in (self.inertia_dry, self.inertia_wet):
            if np.any(np.linalg.eigvalsh(inertia) <= 0.0):
                raise ValueError("inertia tensor must be positive definite")

    @property
    def wet_mass_kg(self) -> float:
        return self.dry_mass_kg + self.initial_prop_kg

    def total_mass_kg(self, prop_mass_kg: float) -> float:
        return self.dry_mass_kg + prop_mass_kg

    def prop_fraction(self, prop_mass_kg: float) -> float:
        if self.initial_prop_kg <= 0.0:
            return 0.0
        return min(1.0, max(0.0, prop_mass_kg / self.initial_prop_kg))

    def inertia(self, prop_mass_kg: float) -> np.ndarray:
        f = self.prop_fraction(prop_mass_kg)
        return self.inertia_dry + f * (self.inertia_wet - self.inertia_dry)

    def cg_body_m(self, prop_mass_kg: float) -> np.ndarray:
        f = self.prop_fraction(prop_mass_kg)
        return self.cg_dry_body_m + f * (self.cg_wet_body_m - self.cg_dry_body_m)
