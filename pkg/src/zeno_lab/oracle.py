"""Independent validation paths for the rate-equation engines.

Two routes that never touch the Bloch-type equations:

* the closed amplitude solution of the reduced dot + continuum + detector
  system, which reproduces the n = 0 sector of the count-resolved engine
  exactly, and
* brute-force spectral decomposition of the discretized dot + continuum
  Hamiltonian with no detector at all, which checks the exponential-decay
  reduction itself (including the short-time quadratic onset the rate
  equations cannot see).

compare_engines assembles the cross-check triangle into a ValidationReport.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, polygamma

from .analytic import LorentzianSpec, lorentzian_p, survival_probability
from .bloch import (
    CountResolvedState,
    Trajectory,
    evolve_counting,
    evolve_traced,
    spectral_distribution,
    trace_over_n,
)
from .counting import fwhm_extract
from .errors import InvalidParameterError, RecurrenceWarning, UsageError
from .expdiff import exp_dd1
from .model import EnergyGrid, RateSet, build_energy_grid, grid_coupling

TWO_PI = 2.0 * math.pi

# dense eigendecomposition up to here; the secular solver beyond
DENSE_DIM_LIMIT = 3001


@dataclass(frozen=True)
class AmplitudeState:
    """Wave-function amplitudes of the zero-count sector at one instant."""

    t: float
    b0: complex
    b_alpha: np.ndarray

    def __post_init__(self):
        self.b_alpha.flags.writeable = False

    @property
    def leak(self) -> float:
        """Probability already absorbed by detector sectors with n >= 1."""
        return 1.0 - abs(self.b0) ** 2 - float(np.sum(np.abs(self.b_alpha) ** 2))


def solve_amplitudes(rates: RateSet, grid: EnergyGrid, t: float) -> AmplitudeState:
    """Exact amplitudes at time t starting from b0 = 1.

    b0 decays with (gamma + D')/2; each level amplitude is the two-pole
    response with the detector width D/2 on the level and (gamma + D')/2 on
    the dot.
    """
    if t < 0.0:
        raise UsageError("amplitudes are defined for t >= 0")
    gamma, d, dp = rates.gamma, rates.d, rates.d_prime
    omega = grid_coupling(gamma, grid)
    b0 = complex(math.exp(-0.5 * (gamma + dp) * t))
    pole_level = (1j * grid.detunings - 0.5 * d) * t
    pole_dot = -0.5 * (gamma + dp) * t
    b_alpha = -1j * omega * t * exp_dd1(pole_level, np.full_like(pole_level, pole_dot))
    return AmplitudeState(t=float(t), b0=b0, b_alpha=b_alpha)


@dataclass(frozen=True)
class DiscretizedHamiltonian:
    """Arrow matrix: dot level bordered by the discretized continuum."""

    diagonal: np.ndarray   # [e0, E_1 .. E_N]
    coupling: float

    def __post_init__(self):
        self.diagonal.flags.writeable = False
        if self.diagonal.size < 2:
            raise InvalidParameterError("need at least one continuum level")

    @property
    def dim(self) -> int:
        return self.diagonal.size

    @classmethod
    def from_grid(cls, gamma: float, grid: EnergyGrid) -> "DiscretizedHamiltonian":
        diag = np.concatenate(([grid.e0], grid.energies))
        return cls(diagonal=diag, coupling=grid_coupling(gamma, grid))

    def dense(self) -> np.ndarray:
        h = np.diag(self.diagonal)
        h[0, 1:] = self.coupling
        h[1:, 0] = self.coupling
        return h


def _arrow_spectrum_dense(h: DiscretizedHamiltonian):
    evals, evecs = np.linalg.eigh(h.dense())
    return evals, evecs[0, :] ** 2


def _psi_safe(z: np.ndarray) -> np.ndarray:
    """digamma that stays sign-correct arbitrarily close to negative poles.

    The library reflection evaluates tan at huge arguments and loses the pole
    offset; reducing the argument to the fractional distance eps from the
    nearest integer first keeps the 1/eps pole term exact.
    """
    z = np.asarray(z, dtype=float)
    pos = z >= 0.5
    zs = np.where(pos, z, 1.0 - z)
    eps = z - np.round(z)
    eps_safe = np.where(pos | (eps != 0.0), np.where(pos, 1.0, eps), 1.0)
    with np.errstate(divide="ignore"):
        reflected = digamma(zs) - np.pi / np.tan(np.pi * eps_safe)
    reflected = np.where((~pos) & (eps == 0.0), np.inf, reflected)
    return np.where(pos, digamma(np.where(pos, z, 1.0)), reflected)


def _psi1_safe(z: np.ndarray) -> np.ndarray:
    """trigamma with the same exactly-reduced reflection."""
    z = np.asarray(z, dtype=float)
    pos = z >= 0.5
    zs = np.where(pos, z, 1.0 - z)
    eps = z - np.round(z)
    eps_safe = np.where(pos | (eps != 0.0), np.where(pos, 1.0, eps), 1.0)
    with np.errstate(divide="ignore"):
        reflected = (np.pi / np.sin(np.pi * eps_safe)) ** 2 - polygamma(1, zs)
    reflected = np.where((~pos) & (eps == 0.0), np.inf, reflected)
    return np.where(pos, polygamma(1, np.where(pos, z, 1.0)), reflected)


def _arrow_spectrum_secular(h: DiscretizedHamiltonian):
    """All eigenvalues and dot weights from the arrow secular equation.

    For a uniform continuum grid the pole sums collapse to digamma and
    trigamma differences, so one root solve costs O(1) instead of O(N):

        f(x)  = x - e0 - w^2 * sum_k 1/(x - E_k)      (roots = eigenvalues)
        1/f'(root) = |<dot|eigenvector>|^2             (weights)

    Exactly one root lies in each gap between consecutive levels plus one
    below and one above the band.
    """
    e0 = h.diagonal[0]
    levels = h.diagonal[1:]
    n = levels.size
    steps = np.diff(levels)
    if n < 2 or not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        raise UsageError("secular solver requires a uniform continuum grid")
    delta = float(steps[0])
    e_min = float(levels[0])
    w2 = h.coupling**2

    margin = abs(h.coupling) * math.sqrt(n) + delta
    lo = np.concatenate(([e_min - margin], levels))
    hi = np.concatenate((levels, [levels[-1] + margin]))

    def fval(lam):
        x = (lam - e_min) / delta
        return lam - e0 - w2 * (_psi_safe(x + 1.0) - _psi_safe(x - n + 1.0)) / delta

    def fprime(lam):
        x = (lam - e_min) / delta
        return 1.0 + w2 * (_psi1_safe(x - n + 1.0) - _psi1_safe(x + 1.0)) / delta**2

    # f runs from -inf to +inf in every gap; nudging off the poles keeps the
    # guaranteed sign change (at least a few ulp so we never hit a pole exactly)
    scale = np.maximum(np.abs(lo), np.abs(hi))
    nudge = np.maximum(1e-12 * (hi - lo), 32.0 * np.spacing(scale))
    a = lo + nudge
    b = hi - nudge
    fa = fval(a)
    fb = fval(b)
    side = np.zeros(a.size, dtype=np.int8)
    for _ in range(100):
        m = (a * fb - b * fa) / (fb - fa)
        m = np.clip(m, a, b)
        fm = fval(m)
        neg = fm < 0.0
        # Illinois scaling breaks one-sided stalls
        fb = np.where(neg & (side == -1), 0.5 * fb, fb)
        fa = np.where(~neg & (side == 1), 0.5 * fa, fa)
        a = np.where(neg, m, a)
        fa = np.where(neg, fm, fa)
        b = np.where(neg, b, m)
        fb = np.where(neg, fb, fm)
        side = np.where(neg, -1, 1).astype(np.int8)
    lam = 0.5 * (a + b)
    for _ in range(3):
        step = fval(lam) / fprime(lam)
        cand = lam - step
        ok = (cand > lo) & (cand < hi) & np.isfinite(cand)
        lam = np.where(ok, cand, lam)
    return lam, 1.0 / fprime(lam)


def arrow_spectrum(h: DiscretizedHamiltonian, method: str = "auto"):
    """Full spectral decomposition restricted to the dot component.

    Returns (eigenvalues, weights) with weights summing to one. method
    "dense" diagonalizes the full matrix; "secular" solves the arrow secular
    equation (identical decomposition, practical for 10^4+ levels); "auto"
    switches on the dimension.
    """
    if method == "auto":
        method = "dense" if h.dim <= DENSE_DIM_LIMIT else "secular"
    if method == "dense":
        return _arrow_spectrum_dense(h)
    if method == "secular":
        return _arrow_spectrum_secular(h)
    raise UsageError(f"unknown method {method!r}")


def wigner_weisskopf_brute(h: DiscretizedHamiltonian, times, method: str = "auto") -> np.ndarray:
    """Survival probability |<dot| exp(-iHt) |dot>|^2 with no rate-equation input."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gamma_eff = TWO_PI * h.coupling**2 / float(np.diff(h.diagonal[1:]).mean()) if h.dim > 2 else 0.0
    if gamma_eff > 0.0:
        dos = 1.0 / float(np.diff(h.diagonal[1:]).mean())
        t_safe = math.log(TWO_PI * dos / gamma_eff) / gamma_eff
        if float(times.max()) * gamma_eff >= math.log(TWO_PI * dos / gamma_eff):
            warnings.warn(
                f"requested times reach the discrete-grid recurrence regime; "
                f"survival is faithful only up to t ~ {t_safe:.3g}",
                RecurrenceWarning,
                stacklevel=2,
            )
    evals, weights = arrow_spectrum(h, method)
    amp = np.exp(-1j * np.outer(times, evals)) @ weights.astype(complex)
    return np.abs(amp) ** 2


# ---------------------------------------------------------------------------
# cross-check reports


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_dev: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_dev < self.tol


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{width}}  {'max deviation':>13}  {'tolerance':>9}  result"]
        for c in self.checks:
            verdict = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {c.max_dev:13.3e}  {c.tol:9.0e}  {verdict}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "max_dev": c.max_dev, "tol": c.tol, "passed": c.passed}
                for c in self.checks
            ],
        }


def _same_grid(a: EnergyGrid, b: EnergyGrid) -> bool:
    return (a.e_min, a.e_max, a.n_points, a.e0) == (b.e_min, b.e_max, b.n_points, b.e0)


def compare_trajectories(a: Trajectory, b: Trajectory, tol: float) -> ValidationReport:
    """Componentwise max deviation between two runs on the same grid/times."""
    if not _same_grid(a.grid, b.grid):
        raise UsageError("trajectories were run on different grids")
    if len(a.times) != len(b.times) or not np.array_equal(a.times, b.times):
        raise UsageError("trajectories were sampled at different times")
    dev00 = devaa = deva0 = 0.0
    for sa, sb in zip(a.states, b.states):
        ta = trace_over_n(sa) if isinstance(sa, CountResolvedState) else sa
        tb = trace_over_n(sb) if isinstance(sb, CountResolvedState) else sb
        dev00 = max(dev00, abs(ta.sigma_00 - tb.sigma_00))
        devaa = max(devaa, float(np.max(np.abs(ta.sigma_aa - tb.sigma_aa))))
        deva0 = max(deva0, float(np.max(np.abs(ta.sigma_a0 - tb.sigma_a0))))
    return ValidationReport(checks=(
        CheckResult("sigma_00", dev00, tol),
        CheckResult("sigma_aa profile", devaa, tol),
        CheckResult("sigma_a0 profile", deva0, tol),
    ))


def compare_engines(rates: RateSet, grid: EnergyGrid, *, t_end: float = 10.0,
                    dt_out: float = 0.5, tol: float = 1e-6,
                    include_brute: bool = True, brute_points: int = 4001,
                    brute_widths: float = 50.0,
                    n_threads: int | None = None) -> ValidationReport:
    """Run engines and oracles with identical parameters and tabulate deviations.

    Rows marked with their own tolerances: line-shape agreement is measured
    as a fraction of the peak (1%), the width relative to gamma + gamma_d
    (2%), the brute-force survival relative to the exponential law (1%).
    """
    gamma = rates.gamma
    if not gamma > 0.0:
        raise UsageError("validation needs a decaying dot (gamma > 0)")

    traced = evolve_traced(rates, grid, t_end, dt_out, n_threads=n_threads)
    counting = evolve_counting(rates, grid, t_end, dt_out, n_threads=n_threads)

    checks = []

    dev = max(abs(s.sigma_00 - survival_probability(gamma, s.t)) for s in traced.states)
    checks.append(CheckResult("traced dot occupation vs exp(-gamma t)", float(dev), tol))

    dev = max(abs(float(np.sum(s.sigma_00_n)) - survival_probability(gamma, s.t))
              for s in counting.states)
    checks.append(CheckResult("count-summed dot occupation vs exp(-gamma t)", float(dev), tol))

    dev00 = deva0 = 0.0
    for s in counting.states:
        amp = solve_amplitudes(rates, grid, s.t)
        dev00 = max(dev00, abs(s.sigma_00_n[0] - abs(amp.b0) ** 2))
        deva0 = max(deva0, float(np.max(np.abs(s.sigma_aa_n[0] - np.abs(amp.b_alpha) ** 2))))
    checks.append(CheckResult("zero-count dot occupation vs amplitude |b0|^2", dev00, tol))
    checks.append(CheckResult("zero-count level profile vs amplitude |b_alpha|^2", deva0, tol))

    sub = compare_trajectories(counting, traced, tol)
    dev = max(c.max_dev for c in sub.checks)
    checks.append(CheckResult("count-resolved trace vs traced engine", dev, tol))

    asym = evolve_traced(rates, grid, 20.0 / gamma, 5.0 / gamma, n_threads=n_threads)
    energies, density = spectral_distribution(asym)
    omega = grid_coupling(gamma, grid)
    spec = LorentzianSpec.from_rates(rates, grid.e0, omega**2)
    analytic = lorentzian_p(spec, energies) * grid.implied_dos
    window = np.abs(energies - grid.e0) <= 10.0 * spec.width
    peak = float(np.max(analytic))
    dev = float(np.max(np.abs(density[window] - analytic[window]))) / peak
    checks.append(CheckResult("line shape vs analytic (fraction of peak)", dev, 1e-2))

    width = fwhm_extract(energies, density)
    checks.append(CheckResult("line width vs gamma+gamma_d (relative)",
                              abs(width - spec.width) / spec.width, 2e-2))

    if include_brute:
        bgrid = build_energy_grid(grid.e0, brute_widths * gamma, brute_points)
        ham = DiscretizedHamiltonian.from_grid(gamma, bgrid)
        ts = np.linspace(0.5 / gamma, 5.0 / gamma, 19)
        surv = wigner_weisskopf_brute(ham, ts)
        dev = float(np.max(np.abs(surv - np.exp(-gamma * ts)) / np.exp(-gamma * ts)))
        checks.append(CheckResult("brute-force survival vs exp(-gamma t) (relative)", dev, 1e-2))

    return ValidationReport(checks=tuple(checks))
