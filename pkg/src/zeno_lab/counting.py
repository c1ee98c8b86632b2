"""Detector-side observables: count distributions, currents, line widths.

Everything here is post-processing over engine output. The transferred-charge
distribution is the diagonal sum p_n = s00[n] + sum_alpha saa[n]; the mean
current uses the two-rate form

    I(t) = charge * [D' sigma_00(t) + D (1 - sigma_00(t))]

in which all escaped probability counts as "dot empty". On a finite energy
window the tracked level populations sum to slightly less than 1 - sigma_00
(the out-of-window line mass), which is why the counted rate d<n>/dt matches
charge * [D' sigma_00 + D * sum_alpha sigma_aa] instead; both are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import poisson

from . import parallel
from .bloch import (
    CountResolvedState,
    TracedState,
    Trajectory,
    _counting_ladder_00,
    _counting_levels_exact,
    _fft_nodes,
    auto_n_max,
    sample_times,
    trace_over_n,
)
from .errors import AnalysisError, UsageError
from .model import EnergyGrid, RateSet, grid_coupling


@dataclass(frozen=True)
class CountDistribution:
    """Distribution of the number of electrons collected by time t."""

    t: float
    p_n: np.ndarray

    def __post_init__(self):
        self.p_n.flags.writeable = False

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.p_n))

    @property
    def mean(self) -> float:
        return float(np.sum(np.arange(self.p_n.size) * self.p_n))

    def normalized(self) -> np.ndarray:
        return self.p_n / self.total_mass


def pn_distribution(s: CountResolvedState) -> CountDistribution:
    """Diagonal sum over the dot and all tracked continuum levels."""
    return CountDistribution(t=s.t, p_n=s.sigma_00_n + np.sum(s.sigma_aa_n, axis=1))


def _sigma00_of(state) -> float:
    if isinstance(state, CountResolvedState):
        return float(np.sum(state.sigma_00_n))
    return state.sigma_00


def mean_current(traj: Trajectory) -> np.ndarray:
    """Detector current over time as an (n_samples, 2) array of (t, I).

    t = 0 gives charge * D' (dot occupied); t -> infinity gives charge * D.
    """
    r = traj.rates
    s00 = np.array([_sigma00_of(s) for s in traj.states])
    current = r.charge * (r.d_prime * s00 + r.d * (1.0 - s00))
    return np.column_stack([traj.times, current])


def counted_rate(traj: Trajectory) -> np.ndarray:
    """Rate at which tracked probability feeds the collector,
    charge * [D' sigma_00 + D sum_alpha sigma_aa]; equals d<n>/dt exactly."""
    r = traj.rates
    out = np.empty((len(traj.states), 2))
    for i, s in enumerate(traj.states):
        tr = trace_over_n(s) if isinstance(s, CountResolvedState) else s
        out[i] = (tr.t, r.charge * (r.d_prime * tr.sigma_00 + r.d * float(np.sum(tr.sigma_aa))))
    return out


@dataclass(frozen=True)
class CountingSeries:
    """Streamed count statistics: one p_n row per sample time."""

    times: np.ndarray
    p_n: np.ndarray        # (n_samples, n_max+1)
    sigma_00: np.ndarray   # dot occupation at each sample
    rates: RateSet
    grid: EnergyGrid
    n_max: int

    @property
    def mean_n(self) -> np.ndarray:
        return self.p_n @ np.arange(self.n_max + 1)

    @property
    def current(self) -> np.ndarray:
        r = self.rates
        return r.charge * (r.d_prime * self.sigma_00 + r.d * (1.0 - self.sigma_00))


def pn_series(rates: RateSet, grid: EnergyGrid, t_end: float, dt_out: float,
              *, n_max: int | str = "auto", n_threads: int | None = None) -> CountingSeries:
    """Count distribution over time without materializing full states.

    Level populations are reduced chunk by chunk with a fixed pairwise tree,
    so the output is bit-identical for any worker count.
    """
    times = sample_times(t_end, dt_out)
    n_auto = auto_n_max(rates, t_end)
    n_keep = n_auto if n_max == "auto" else int(n_max)
    if n_keep < 0:
        raise UsageError("n_max must be non-negative")
    u = _fft_nodes(max(n_auto, n_keep) + 1)
    omega = grid_coupling(rates.gamma, grid)
    delta = grid.detunings

    pn_rows = np.empty((times.size, n_keep + 1))
    s00 = np.empty(times.size)
    for i, t in enumerate(times):
        ladder = _counting_ladder_00(rates, u, t, n_keep)
        parts = parallel.map_chunks(
            lambda sl, _t=t: np.sum(
                _counting_levels_exact(rates, omega, delta[sl], u, _t, n_keep)[0], axis=1),
            grid.n_points, n_threads)
        pn_rows[i] = ladder + parallel.tree_sum(parts)
        s00[i] = float(np.sum(ladder))
    return CountingSeries(times=times, p_n=pn_rows, sigma_00=s00, rates=rates,
                          grid=grid, n_max=n_keep)


def kolmogorov_distance_poisson(p_n: np.ndarray, mean: float, normalize: bool = True) -> float:
    """Max CDF distance between a count distribution and Poisson(mean).

    With normalize=True the distribution is first conditioned on the tracked
    mass, removing the deficit a finite energy window leaves behind.
    """
    p = np.asarray(p_n, dtype=float)
    if normalize:
        p = p / np.sum(p)
    n = np.arange(p.size)
    return float(np.max(np.abs(np.cumsum(p) - poisson.cdf(n, mean))))


def fit_rate_crossover(times: np.ndarray, rate: np.ndarray):
    """Fit rate(t) to D + (D' - D) exp(-Gamma t).

    Returns (d, d_prime, gamma, max_residual).
    """
    times = np.asarray(times, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if times.size < 4:
        raise UsageError("need at least four samples to fit the crossover")

    def model(t, d, dp, g):
        return d + (dp - d) * np.exp(-g * t)

    p0 = (rate[-1], rate[0], 1.0 / max(times[-1] / 5.0, 1e-12))
    params, _ = curve_fit(model, times, rate, p0=p0, maxfev=20000)
    resid = float(np.max(np.abs(model(times, *params) - rate)))
    return params[0], params[1], params[2], resid


def fwhm_extract(energies: np.ndarray, density: np.ndarray) -> float:
    """Full width at half maximum by linear interpolation on both flanks.

    Raises AnalysisError unless the sampled curve crosses its half maximum
    exactly twice (unimodal, peak interior to the window).
    """
    e = np.asarray(energies, dtype=float)
    y = np.asarray(density, dtype=float)
    if e.size != y.size or e.size < 3:
        raise UsageError("energies and density must be equal-length, size >= 3")
    ipk = int(np.argmax(y))
    if ipk == 0 or ipk == y.size - 1:
        raise AnalysisError("peak sits on the window boundary")
    half = 0.5 * y[ipk]
    above = y > half
    edges = np.flatnonzero(above[1:] != above[:-1])
    if edges.size != 2:
        raise AnalysisError(f"expected 2 half-maximum crossings, found {edges.size}")

    def crossing(i):
        # linear interpolation between samples i and i+1
        return e[i] + (half - y[i]) * (e[i + 1] - e[i]) / (y[i + 1] - y[i])

    left, right = (crossing(i) for i in edges)
    return float(right - left)
