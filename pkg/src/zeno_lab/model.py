"""Physical parameters, derived rates, and the continuum discretization.

Natural units: hbar = 1 and (by default) electron charge = 1, so energies,
rates, and inverse times share one unit. The charge is kept as an explicit
field only so the detector current can be reported in physical form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, LargeBiasWarning

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MicroscopicParams:
    """Raw couplings and band parameters of the dot + point-contact system.

    Attributes
    ----------
    omega_alpha : dot-to-continuum hopping amplitude (energy), flat in energy
    omega_lr, omega_lr_prime : point-contact hopping with the dot empty /
        occupied (energy); their difference is the back-action coupling
    rho : continuum density of states (1/energy)
    rho_l, rho_r : emitter / collector densities of states (1/energy)
    mu_l, mu_r : emitter / collector Fermi levels (energy), mu_l > mu_r
    e0 : dot level (energy)
    charge : carrier charge (1 in natural units)
    """

    omega_alpha: float
    omega_lr: float
    omega_lr_prime: float
    rho: float
    rho_l: float
    rho_r: float
    mu_l: float
    mu_r: float
    e0: float = 0.0
    charge: float = 1.0

    def __post_init__(self):
        for name in ("omega_alpha", "omega_lr", "omega_lr_prime"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        for name in ("rho", "rho_l", "rho_r"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"{name} must be strictly positive")
        if not self.mu_l > self.mu_r:
            raise InvalidParameterError("mu_l must exceed mu_r (positive bias)")
        bias = self.mu_l - self.mu_r
        widest = max(self.omega_lr**2, self.omega_lr_prime**2) * self.rho_l * self.rho_r
        if bias < 10.0 * widest * TWO_PI:
            warnings.warn(
                "bias mu_l - mu_r is less than 10x the point-contact level width; "
                "the large-bias (Markovian detector) regime is marginal",
                LargeBiasWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class RateSet:
    """Macroscopic rates driving the solvers.

    gamma      : dot decay rate
    d, d_prime : detector transfer rates with the dot empty / occupied
    gamma_d    : measurement-induced decoherence rate (sqrt(d)-sqrt(d'))^2
    t_coeff, t_coeff_prime : point-contact transmissions
    current, current_prime : detector currents for empty / occupied dot
    """

    gamma: float
    d: float
    d_prime: float
    gamma_d: float
    t_coeff: float
    t_coeff_prime: float
    current: float
    current_prime: float
    charge: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "d", "d_prime", "gamma_d"):
            if getattr(self, name) < 0.0:
                raise InvalidParameterError(f"{name} must be non-negative")

    @classmethod
    def from_direct(cls, gamma: float, d: float, d_prime: float, charge: float = 1.0) -> "RateSet":
        """Build a RateSet from the three rates alone.

        Transmissions are reported under a unit-bias convention (eV = 1), for
        which T = 2*pi*D, and the currents reduce to charge * rate.
        """
        return cls(
            gamma=gamma,
            d=d,
            d_prime=d_prime,
            gamma_d=decoherence_rate(d, d_prime),
            t_coeff=TWO_PI * d,
            t_coeff_prime=TWO_PI * d_prime,
            current=charge * d,
            current_prime=charge * d_prime,
            charge=charge,
        )


def decoherence_rate(d: float, d_prime: float) -> float:
    """(sqrt(D) - sqrt(D'))^2; zero exactly when the two rates coincide."""
    if d < 0.0 or d_prime < 0.0:
        raise InvalidParameterError("detector rates must be non-negative")
    if d == d_prime:
        return 0.0
    return (math.sqrt(d) - math.sqrt(d_prime)) ** 2


def derive_rates(p: MicroscopicParams) -> RateSet:
    """Convert microscopic couplings into the macroscopic RateSet."""
    bias = p.mu_l - p.mu_r
    gamma = TWO_PI * p.omega_alpha**2 * p.rho
    t_coeff = TWO_PI**2 * p.omega_lr**2 * p.rho_l * p.rho_r
    t_coeff_prime = TWO_PI**2 * p.omega_lr_prime**2 * p.rho_l * p.rho_r
    d = TWO_PI * p.omega_lr**2 * p.rho_l * p.rho_r * bias
    d_prime = TWO_PI * p.omega_lr_prime**2 * p.rho_l * p.rho_r * bias
    current = p.charge**2 * t_coeff * bias / (TWO_PI * p.charge)
    current_prime = p.charge**2 * t_coeff_prime * bias / (TWO_PI * p.charge)
    return RateSet(
        gamma=gamma,
        d=d,
        d_prime=d_prime,
        gamma_d=decoherence_rate(d, d_prime),
        t_coeff=t_coeff,
        t_coeff_prime=t_coeff_prime,
        current=current,
        current_prime=current_prime,
        charge=p.charge,
    )


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform discretization of the continuum around the dot level."""

    e_min: float
    e_max: float
    n_points: int
    e0: float

    def __post_init__(self):
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise InvalidParameterError("n_points must be odd and at least 3")
        if not self.e_max > self.e_min:
            raise InvalidParameterError("e_max must exceed e_min")

    @property
    def spacing(self) -> float:
        return (self.e_max - self.e_min) / (self.n_points - 1)

    @property
    def implied_dos(self) -> float:
        return 1.0 / self.spacing

    @property
    def energies(self) -> np.ndarray:
        return np.linspace(self.e_min, self.e_max, self.n_points)

    @property
    def detunings(self) -> np.ndarray:
        """e0 - E_alpha for every grid level."""
        return self.e0 - self.energies

    @property
    def half_width(self) -> float:
        return 0.5 * (self.e_max - self.e_min)


def build_energy_grid(e0: float, half_width: float, n_points: int) -> EnergyGrid:
    """Grid of n_points levels centered on e0, spanning e0 +/- half_width."""
    if not half_width > 0.0:
        raise InvalidParameterError("half_width must be positive")
    if n_points < 3 or n_points % 2 == 0:
        raise InvalidParameterError("n_points must be odd and at least 3")
    return EnergyGrid(e_min=e0 - half_width, e_max=e0 + half_width, n_points=n_points, e0=e0)


def default_grid(rates: RateSet, e0: float = 0.0, widths: float = 25.0,
                 points_per_width: float = 20.0) -> EnergyGrid:
    """Default window: +/- 25 line widths, 20 levels per width.

    The +/-25-width window leaves ~1.3% of the asymptotic Lorentzian outside;
    20 levels per width samples the FWHM to ~2%.
    """
    w = rates.gamma + rates.gamma_d
    if not w > 0.0:
        raise InvalidParameterError("gamma + gamma_d must be positive for the default grid")
    half_width = widths * w
    n_side = math.ceil(widths * points_per_width)
    return build_energy_grid(e0, half_width, 2 * n_side + 1)


def grid_coupling(gamma: float, grid: EnergyGrid) -> float:
    """Per-level coupling that preserves 2*pi*Omega^2*rho = gamma on the grid."""
    if gamma < 0.0:
        raise InvalidParameterError("gamma must be non-negative")
    return math.sqrt(gamma * grid.spacing / TWO_PI)
