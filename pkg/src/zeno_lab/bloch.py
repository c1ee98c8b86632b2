"""Traced and count-resolved rate-equation engines on the energy grid.

The equations of motion for one continuum level alpha (detuning
Delta = E0 - E_alpha, per-level coupling Omega) are, traced over the
detector,

    d sigma_00 / dt = -Gamma sigma_00
    d sigma_aa / dt = i Omega (sigma_a0 - conj(sigma_a0))
    d sigma_a0 / dt = (i Delta - (Gamma+Gamma_d)/2) sigma_a0 - i Omega sigma_00

and, resolved on the number n of electrons collected by the detector,

    d s00[n] / dt = -(Gamma+D') s00[n] + D' s00[n-1]
    d saa[n] / dt = -D saa[n] + D saa[n-1] + i Omega (sa0[n] - conj(sa0[n]))
    d sa0[n] / dt = (i Delta - (Gamma+D+D')/2) sa0[n] - i Omega s00[n]
                    + sqrt(D D') sa0[n-1]

with everything starting from an occupied dot, zero counts. Only sigma_a0 is
stored; sigma_0a is its conjugate by construction. The levels never couple to
each other, so the engine is data-parallel over alpha (fixed-size chunks,
order-independent of the thread count).

Two integrators are provided. The default propagates each level exactly:
every component is a linear combination of exponential divided differences,
and the count ladder is handled by evaluating the closed forms at the roots
of unity in an auxiliary counting variable and inverting with an FFT, which
solves the n-recursion exactly. A fixed-step classical RK4 on the raw
(n, alpha) lattice serves as the independent baseline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import parallel
from .analytic import lorentzian_tail_mass
from .errors import (
    AsymptoteWarning,
    InvalidParameterError,
    LadderLeakError,
    NumericalBlowupError,
    TruncationWarning,
    UsageError,
)
from .expdiff import exp_dd1, exp_dd2
from .model import EnergyGrid, RateSet, grid_coupling

EPS_NUM = 1e-10      # tolerated negative excursion of a probability
EPS_TRACE = 1e-9     # tolerated excess over unit total mass
LEAK_TOL = 1e-8      # largest mass allowed on the top count rung
TAIL_WARN = 1e-2     # estimated out-of-window line mass that triggers a warning
ASYMPTOTE_GAMMA_T = 20.0  # gamma * t_end treated as "t -> infinity"


@dataclass(frozen=True)
class TracedState:
    """Detector-traced reduced density matrix at one instant."""

    t: float
    sigma_00: float
    sigma_aa: np.ndarray
    sigma_a0: np.ndarray

    def __post_init__(self):
        self.sigma_aa.flags.writeable = False
        self.sigma_a0.flags.writeable = False

    @property
    def total_mass(self) -> float:
        return self.sigma_00 + float(np.sum(self.sigma_aa))

    def check_invariants(self):
        if not -EPS_NUM <= self.sigma_00 <= 1.0 + EPS_NUM:
            raise ValueError(f"sigma_00 out of range at t={self.t:g}")
        if np.any(self.sigma_aa < -EPS_NUM):
            raise ValueError(f"negative level population at t={self.t:g}")
        if self.total_mass > 1.0 + EPS_TRACE:
            raise ValueError(f"total mass exceeds 1 at t={self.t:g}")
        bound = self.sigma_00 * self.sigma_aa + EPS_NUM
        if np.any(np.abs(self.sigma_a0) ** 2 > bound):
            raise ValueError(f"coherence violates positivity at t={self.t:g}")


@dataclass(frozen=True)
class CountResolvedState:
    """Reduced density matrix resolved on the collected-electron number."""

    t: float
    n_max: int
    sigma_00_n: np.ndarray
    sigma_aa_n: np.ndarray
    sigma_a0_n: np.ndarray

    def __post_init__(self):
        self.sigma_00_n.flags.writeable = False
        self.sigma_aa_n.flags.writeable = False
        self.sigma_a0_n.flags.writeable = False

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.sigma_00_n) + np.sum(self.sigma_aa_n))

    @property
    def top_rung_mass(self) -> float:
        return float(self.sigma_00_n[-1] + np.sum(self.sigma_aa_n[-1]))

    def check_invariants(self):
        if np.any(self.sigma_00_n < -EPS_NUM) or np.any(self.sigma_aa_n < -EPS_NUM):
            raise ValueError(f"negative diagonal entry at t={self.t:g}")
        if self.total_mass > 1.0 + EPS_TRACE:
            raise ValueError(f"total mass exceeds 1 at t={self.t:g}")


State = Union[TracedState, CountResolvedState]


@dataclass(frozen=True)
class Trajectory:
    """Sampled run plus everything needed to reproduce it."""

    times: np.ndarray
    states: tuple
    rates: RateSet
    grid: EnergyGrid
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times.flags.writeable = False
        if len(self.times) != len(self.states):
            raise UsageError("one state per sample time required")
        if len(self.times) and np.any(np.diff(self.times) <= 0.0):
            raise UsageError("sample times must be strictly increasing")

    @property
    def final(self) -> State:
        if not self.states:
            raise UsageError("empty trajectory")
        return self.states[-1]


def sample_times(t_end: float, dt_out: float) -> np.ndarray:
    if not (t_end > 0.0 and dt_out > 0.0):
        raise UsageError("t_end and dt_out must be positive")
    n = max(1, round(t_end / dt_out))
    return np.linspace(0.0, t_end, n + 1)


def auto_n_max(rates: RateSet, t_end: float) -> int:
    """Count-ladder depth with ten-sigma headroom over the mean count."""
    x = max(rates.d, rates.d_prime) * t_end
    return int(math.ceil(x + 10.0 * math.sqrt(x))) + 10


def _warn_if_truncation_unsafe(rates: RateSet, grid: EnergyGrid):
    width = rates.gamma + rates.gamma_d
    if width <= 0.0:
        return
    tail = lorentzian_tail_mass(grid.half_width, width)
    if tail > TAIL_WARN:
        warnings.warn(
            f"estimated line mass outside the energy window is {tail:.3g}; "
            "widen the grid if tighter normalization is needed",
            TruncationWarning,
            stacklevel=3,
        )


def _require_finite(arrays, t: float):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalBlowupError(t)


# ---------------------------------------------------------------------------
# traced engine


def _traced_level_exact(gamma: float, kappa: float, omega: float,
                        delta: np.ndarray, t: float):
    """Exact (sigma_aa, sigma_a0) for a batch of detunings at time t."""
    pole = (1j * delta - kappa) * t
    decay = -gamma * t
    sa0 = -1j * omega * t * exp_dd1(pole, decay)
    saa = 2.0 * omega**2 * t**2 * np.real(exp_dd2(np.zeros_like(pole), pole, decay))
    return saa, sa0


def _evolve_traced_exact(rates: RateSet, grid: EnergyGrid, times: np.ndarray,
                         n_threads) -> list[TracedState]:
    gamma = rates.gamma
    kappa = 0.5 * (gamma + rates.gamma_d)
    omega = grid_coupling(gamma, grid)
    delta = grid.detunings
    states = []
    for t in times:
        parts = parallel.map_chunks(
            lambda sl, _t=t: _traced_level_exact(gamma, kappa, omega, delta[sl], _t),
            grid.n_points, n_threads)
        saa = np.concatenate([p[0] for p in parts])
        sa0 = np.concatenate([p[1] for p in parts])
        s00 = math.exp(-gamma * t)
        _require_finite((saa, sa0), t)
        states.append(TracedState(t=float(t), sigma_00=s00, sigma_aa=saa, sigma_a0=sa0))
    return states


def _rk4_dt(rates: RateSet, grid: EnergyGrid, dt: float | None) -> float:
    if dt is not None:
        if not dt > 0.0:
            raise UsageError("dt must be positive")
        return dt
    scale = max(rates.gamma + rates.gamma_d + rates.d + rates.d_prime, grid.half_width)
    return 0.1 / scale if scale > 0.0 else 0.1


def _evolve_traced_rk4(rates: RateSet, grid: EnergyGrid, times: np.ndarray,
                       dt: float | None) -> list[TracedState]:
    gamma = rates.gamma
    kappa = 0.5 * (gamma + rates.gamma_d)
    omega = grid_coupling(gamma, grid)
    delta = grid.detunings
    lin = 1j * delta - kappa
    h_max = _rk4_dt(rates, grid, dt)

    s00 = 1.0
    saa = np.zeros(grid.n_points)
    sa0 = np.zeros(grid.n_points, dtype=complex)

    def rhs(y00, yaa, ya0):
        d00 = -gamma * y00
        daa = -2.0 * omega * ya0.imag
        da0 = lin * ya0 - 1j * omega * y00
        return d00, daa, da0

    states = [TracedState(t=float(times[0]), sigma_00=s00,
                          sigma_aa=saa.copy(), sigma_a0=sa0.copy())]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        span = t_next - t_prev
        n_sub = max(1, math.ceil(span / h_max))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = rhs(s00, saa, sa0)
            k2 = rhs(s00 + 0.5 * h * k1[0], saa + 0.5 * h * k1[1], sa0 + 0.5 * h * k1[2])
            k3 = rhs(s00 + 0.5 * h * k2[0], saa + 0.5 * h * k2[1], sa0 + 0.5 * h * k2[2])
            k4 = rhs(s00 + h * k3[0], saa + h * k3[1], sa0 + h * k3[2])
            s00 += (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            saa += (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            sa0 += (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        _require_finite((saa, sa0), float(t_next))
        states.append(TracedState(t=float(t_next), sigma_00=s00,
                                  sigma_aa=saa.copy(), sigma_a0=sa0.copy()))
    return states


def evolve_traced(rates: RateSet, grid: EnergyGrid, t_end: float, dt_out: float,
                  *, integrator: str = "exponential", dt: float | None = None,
                  n_threads: int | None = None) -> Trajectory:
    """Evolve the detector-traced equations from an occupied dot.

    integrator "exponential" propagates every level exactly between samples;
    "rk4" is the fixed-step baseline with dt <= 0.1/max(rate sum, half width).
    """
    _warn_if_truncation_unsafe(rates, grid)
    times = sample_times(t_end, dt_out)
    if integrator == "exponential":
        states = _evolve_traced_exact(rates, grid, times, n_threads)
    elif integrator == "rk4":
        states = _evolve_traced_rk4(rates, grid, times, dt)
    else:
        raise UsageError(f"unknown integrator {integrator!r}")
    solver = {"integrator": integrator, "dt": dt, "dt_out": dt_out, "t_end": t_end}
    return Trajectory(times=times, states=tuple(states), rates=rates, grid=grid,
                      solver=solver)


# ---------------------------------------------------------------------------
# count-resolved engine


def _fft_nodes(n_bins: int) -> np.ndarray:
    m = 1
    while m < n_bins:
        m *= 2
    return np.exp(2j * np.pi * np.arange(m) / m)


def _counting_ladder_00(rates: RateSet, u: np.ndarray, t: float, n_keep: int) -> np.ndarray:
    """Exact s00[n](t): FFT inversion of exp(-(Gamma + D'(1-u)) t)."""
    a = rates.gamma + rates.d_prime * (1.0 - u)
    vals = np.exp(-a * t)
    ladder = np.fft.fft(vals) / u.size
    return np.ascontiguousarray(ladder[: n_keep + 1].real)


def _counting_levels_exact(rates: RateSet, omega: float, delta: np.ndarray,
                           u: np.ndarray, t: float, n_keep: int):
    """Exact (saa[n], sa0[n]) for a batch of detunings at time t.

    Evaluates the closed-form solution of the u-transformed equations at the
    FFT nodes and inverts; this solves the downward n-recursion exactly.
    """
    m = u.size
    shift = math.sqrt(rates.d * rates.d_prime) * u - 0.5 * (
        rates.gamma + rates.d + rates.d_prime)
    a_t = (-(rates.gamma + rates.d_prime * (1.0 - u)) * t)[None, :]
    g_t = (-(rates.d * (1.0 - u)) * t)[None, :]
    p_t = (1j * delta[:, None] + shift[None, :]) * t
    q_t = (-1j * delta[:, None] + shift[None, :]) * t

    y = -1j * omega * t * exp_dd1(p_t, a_t)
    x = omega**2 * t**2 * (exp_dd2(g_t, p_t, a_t) + exp_dd2(g_t, q_t, a_t))

    sa0_n = np.fft.fft(y, axis=1)[:, : n_keep + 1] / m
    saa_n = np.fft.fft(x, axis=1)[:, : n_keep + 1].real / m
    # (n, alpha) layout
    return saa_n.T.copy(), sa0_n.T.copy()


def _evolve_counting_exact(rates: RateSet, grid: EnergyGrid, times: np.ndarray,
                           n_keep: int, n_bins: int, n_threads) -> list[CountResolvedState]:
    omega = grid_coupling(rates.gamma, grid)
    delta = grid.detunings
    u = _fft_nodes(n_bins)
    states = []
    for t in times:
        s00_n = _counting_ladder_00(rates, u, t, n_keep)
        parts = parallel.map_chunks(
            lambda sl, _t=t: _counting_levels_exact(rates, omega, delta[sl], u, _t, n_keep),
            grid.n_points, n_threads)
        saa_n = np.concatenate([p[0] for p in parts], axis=1)
        sa0_n = np.concatenate([p[1] for p in parts], axis=1)
        _require_finite((s00_n, saa_n, sa0_n), t)
        states.append(CountResolvedState(t=float(t), n_max=n_keep, sigma_00_n=s00_n,
                                         sigma_aa_n=saa_n, sigma_a0_n=sa0_n))
    return states


def _evolve_counting_rk4(rates: RateSet, grid: EnergyGrid, times: np.ndarray,
                         n_keep: int, dt: float | None) -> list[CountResolvedState]:
    gamma, d, dp = rates.gamma, rates.d, rates.d_prime
    c = math.sqrt(d * dp)
    omega = grid_coupling(gamma, grid)
    delta = grid.detunings
    lin = 1j * delta - 0.5 * (gamma + d + dp)
    h_max = _rk4_dt(rates, grid, dt)
    n_rows = n_keep + 1

    s00 = np.zeros(n_rows)
    s00[0] = 1.0
    saa = np.zeros((n_rows, grid.n_points))
    sa0 = np.zeros((n_rows, grid.n_points), dtype=complex)

    def down(arr):
        out = np.zeros_like(arr)
        out[1:] = arr[:-1]
        return out

    def rhs(y00, yaa, ya0):
        d00 = -(gamma + dp) * y00 + dp * down(y00)
        daa = -d * yaa + d * down(yaa) - 2.0 * omega * ya0.imag
        da0 = lin[None, :] * ya0 - 1j * omega * y00[:, None] + c * down(ya0)
        return d00, daa, da0

    def snapshot(t):
        return CountResolvedState(t=float(t), n_max=n_keep, sigma_00_n=s00.copy(),
                                  sigma_aa_n=saa.copy(), sigma_a0_n=sa0.copy())

    states = [snapshot(times[0])]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        span = t_next - t_prev
        n_sub = max(1, math.ceil(span / h_max))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = rhs(s00, saa, sa0)
            k2 = rhs(s00 + 0.5 * h * k1[0], saa + 0.5 * h * k1[1], sa0 + 0.5 * h * k1[2])
            k3 = rhs(s00 + 0.5 * h * k2[0], saa + 0.5 * h * k2[1], sa0 + 0.5 * h * k2[2])
            k4 = rhs(s00 + h * k3[0], saa + h * k3[1], sa0 + h * k3[2])
            s00 = s00 + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            saa = saa + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            sa0 = sa0 + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        _require_finite((s00, saa, sa0), float(t_next))
        states.append(snapshot(t_next))
    return states


def evolve_counting(rates: RateSet, grid: EnergyGrid, t_end: float, dt_out: float,
                    *, n_max: int | str = "auto", integrator: str = "exponential",
                    dt: float | None = None, n_threads: int | None = None) -> Trajectory:
    """Evolve the count-resolved equations from an occupied dot, zero counts.

    n_max="auto" sizes the ladder as ceil(D_max*t_end + 10*sqrt(D_max*t_end))+10.
    The run fails with LadderLeakError if the top rung ends up carrying mass
    >= 1e-8, which signals an unsafe truncation of the ladder.
    """
    _warn_if_truncation_unsafe(rates, grid)
    times = sample_times(t_end, dt_out)
    n_auto = auto_n_max(rates, t_end)
    if n_max == "auto":
        n_keep = n_auto
    else:
        n_keep = int(n_max)
        if n_keep < 0:
            raise UsageError("n_max must be non-negative")
    if integrator == "exponential":
        n_bins = max(n_auto, n_keep) + 1
        states = _evolve_counting_exact(rates, grid, times, n_keep, n_bins, n_threads)
    elif integrator == "rk4":
        states = _evolve_counting_rk4(rates, grid, times, n_keep, dt)
    else:
        raise UsageError(f"unknown integrator {integrator!r}")
    leak = states[-1].top_rung_mass
    if leak >= LEAK_TOL:
        raise LadderLeakError(
            f"count ladder truncation unsafe: mass {leak:.3g} on rung n_max={n_keep}")
    solver = {"integrator": integrator, "dt": dt, "dt_out": dt_out, "t_end": t_end,
              "n_max": n_keep}
    return Trajectory(times=times, states=tuple(states), rates=rates, grid=grid,
                      solver=solver)


def trace_over_n(s: CountResolvedState) -> TracedState:
    """Sum out the collector count; valid because -(G+D+D')/2 + sqrt(DD')
    equals -(G+Gamma_d)/2, so the summed coherences obey the traced equation."""
    return TracedState(
        t=s.t,
        sigma_00=float(np.sum(s.sigma_00_n)),
        sigma_aa=np.sum(s.sigma_aa_n, axis=0),
        sigma_a0=np.sum(s.sigma_a0_n, axis=0),
    )


def spectral_distribution(traj: Trajectory):
    """Asymptotic energy distribution as a density over the grid.

    Returns (energies, density) with density = sigma_aa / spacing, so the
    trapezoid integral reproduces the total escaped mass.
    """
    if not traj.states:
        raise UsageError("empty trajectory")
    final = traj.final
    if isinstance(final, CountResolvedState):
        final = trace_over_n(final)
    gamma = traj.rates.gamma
    if gamma > 0.0 and traj.times[-1] < ASYMPTOTE_GAMMA_T / gamma:
        warnings.warn(
            f"spectrum taken at t={traj.times[-1]:g} before the asymptote "
            f"(residual dot occupation {final.sigma_00:.3g})",
            AsymptoteWarning,
            stacklevel=2,
        )
    return traj.grid.energies.copy(), final.sigma_aa / traj.grid.spacing
