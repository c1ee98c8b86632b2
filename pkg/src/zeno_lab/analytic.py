"""Closed-form results: survival law, asymptotic line shape, off-diagonal element.

These are kept deliberately independent of the solvers so they can serve as
oracles; the only shared code is the divided-difference kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UsageError
from .expdiff import exp_dd1
from .model import RateSet

TWO_PI = 2.0 * math.pi


def survival_probability(gamma: float, t):
    """Probability that the dot is still occupied at time t: exp(-gamma*t).

    Independent of the detector rates; monitoring does not slow the decay.
    """
    if gamma < 0.0:
        raise InvalidParameterError("gamma must be non-negative")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise UsageError("survival probability is defined for t >= 0")
    return np.exp(-gamma * t)


@dataclass(frozen=True)
class LorentzianSpec:
    """Asymptotic energy distribution of the escaped electron.

    center       : line center (the dot level)
    width        : full width at half maximum, gamma + gamma_d
    weight_ratio : (gamma + gamma_d) / gamma
    coupling_sq  : squared dot-continuum coupling |Omega|^2
    """

    center: float
    width: float
    weight_ratio: float
    coupling_sq: float

    def __post_init__(self):
        if not self.width > 0.0:
            raise InvalidParameterError("width must be positive")

    @classmethod
    def from_rates(cls, rates: RateSet, e0: float, coupling_sq: float) -> "LorentzianSpec":
        if not rates.gamma > 0.0:
            raise InvalidParameterError("a decaying level needs gamma > 0")
        w = rates.gamma + rates.gamma_d
        return cls(center=e0, width=w, weight_ratio=w / rates.gamma, coupling_sq=coupling_sq)


def lorentzian_p(spec: LorentzianSpec, e_alpha):
    """Per-state occupation probability of continuum level e_alpha at t -> infinity."""
    e_alpha = np.asarray(e_alpha, dtype=float)
    delta = spec.center - e_alpha
    return spec.coupling_sq * spec.weight_ratio / (delta**2 + 0.25 * spec.width**2)


def lorentzian_density(spec: LorentzianSpec, e_alpha, dos: float):
    """Spectral density rho * P(E); integrates to 1 over the infinite line
    when 2*pi*coupling_sq*dos equals the decay rate."""
    return dos * lorentzian_p(spec, e_alpha)


def lorentzian_tail_mass(window_half_width: float, width: float) -> float:
    """Mass of a unit-normalized Lorentzian outside center +/- window_half_width."""
    if not (window_half_width > 0.0 and width > 0.0):
        raise InvalidParameterError("window and width must be positive")
    return 1.0 - (2.0 / math.pi) * math.atan(2.0 * window_half_width / width)


def offdiag_closed_form(gamma: float, gamma_d: float, omega: float, detuning, t):
    """Dot-continuum coherence sigma_alpha0(t) for one level, from rest.

    Exact solution of
        d sigma/dt = (i*detuning - (gamma+gamma_d)/2) sigma - i*omega*exp(-gamma*t)
    with sigma(0) = 0; the confluent case i*detuning - kappa = -gamma goes to
    the limit -i*omega*t*exp(-gamma*t) automatically.
    """
    kappa = 0.5 * (gamma + gamma_d)
    t = np.asarray(t, dtype=float)
    delta = np.asarray(detuning, dtype=float)
    pole = (1j * delta - kappa) * t
    return -1j * omega * t * exp_dd1(pole, -gamma * t)
