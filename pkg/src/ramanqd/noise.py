"""Decoherence, scattering, and intermediate-state error models.

Slow magnetic-field noise is a shot-to-shot static frequency offset drawn
from a normal distribution; fast noise is folded into an exponential damping
rate.  The frequency width sigma_f (Hz) and the Gaussian Ramsey-decay time
sigma_t are reciprocal up to the angular-frequency bookkeeping used here:
sigma_f = 1/(2 pi sigma_t), so the 1/e contrast point sits at sqrt(2) sigma_t.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .atom import AtomSystem, Beam, Level, rabi_matrix
from .errors import InvalidParameterError

QUDIT_LEAVE_FRACTION = 0.94  # fraction of spontaneous scatters leaving the qudit manifold


@dataclass(frozen=True)
class DephasingModel:
    """Shot-to-shot Gaussian detuning plus exponential damping.

    ``sigma_f`` is the frequency-offset standard deviation in ordinary Hz for
    a unit-sensitivity (delta m = 1) transition; ``gamma`` damps contrast as
    exp(-gamma t).
    """

    sigma_f: float  # Hz
    gamma: float = 0.0  # 1/s
    delta_m: int = 1

    def __post_init__(self):
        if self.sigma_f < 0 or self.gamma < 0:
            raise InvalidParameterError("sigma_f and gamma must be non-negative")
        if self.delta_m < 1:
            raise InvalidParameterError("delta_m must be >= 1")

    @classmethod
    def from_ramsey_width(cls, sigma_t: float, gamma: float = 0.0) -> "DephasingModel":
        """Model whose Ramsey contrast decays as exp(-T^2 / (2 sigma_t^2))."""
        if sigma_t <= 0:
            raise InvalidParameterError("sigma_t must be positive")
        return cls(sigma_f=1.0 / (2.0 * np.pi * sigma_t), gamma=gamma)

    @property
    def sigma_t(self) -> float:
        """Gaussian Ramsey-decay standard deviation, seconds."""
        return 1.0 / (2.0 * np.pi * self.sigma_f) if self.sigma_f > 0 else np.inf


def scale_sensitivity(model: DephasingModel, delta_m: int,
                      g_factor_ratio: float = 1.0,
                      improvement: float = 1.0) -> DephasingModel:
    """Rescale a unit-sensitivity model to a delta-m transition.

    The frequency width scales linearly with delta m (so sigma_t -> sigma_t /
    delta_m) and with the Lande-factor ratio when moving between manifolds.
    ``improvement`` divides both sigma_f and gamma, modeling an apparatus
    with proportionally longer coherence.
    """
    if delta_m < 1:
        raise InvalidParameterError("delta_m must be >= 1")
    if improvement <= 0:
        raise InvalidParameterError("improvement factor must be positive")
    factor = delta_m * g_factor_ratio / model.delta_m
    return replace(
        model,
        sigma_f=model.sigma_f * factor / improvement,
        gamma=model.gamma / improvement,
        delta_m=delta_m,
    )


_GH_NODES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GH_NODES:
        _GH_NODES[n] = np.polynomial.hermite.hermgauss(n)
    return _GH_NODES[n]


def decohered_flop(t, omega: float, sigma_f: float, gamma: float = 0.0,
                   nodes: int = 96):
    """Transfer probability of a resonant flop under the dephasing model.

    P(t) = < Omega^2/(Omega^2+d^2) sin^2(sqrt(Omega^2+d^2) t / 2) >_d e^{-g t}

    with d normal with angular standard deviation 2 pi sigma_f; the average
    is a Gauss-Hermite quadrature (>= 64 nodes for the contracted accuracy).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("time must be non-negative")
    if nodes < 64:
        raise InvalidParameterError("use at least 64 quadrature nodes")
    sigma = 2.0 * np.pi * sigma_f
    if sigma == 0.0:
        out = np.sin(omega * t / 2.0) ** 2 * np.exp(-gamma * t)
        return out if out.shape else float(out)
    x, w = _gauss_hermite(nodes)
    d = np.sqrt(2.0) * sigma * x  # quadrature points in angular detuning
    og = np.sqrt(omega**2 + d**2)
    tt = t[..., None]
    integrand = (omega**2 / og**2) * np.sin(og * tt / 2.0) ** 2
    out = integrand @ w / np.sqrt(np.pi) * np.exp(-gamma * t)
    return out if out.shape else float(out)


def decohered_flop_mc(t, omega: float, sigma_f: float, gamma: float = 0.0,
                      draws: int = 10**6, seed: int = 1234):
    """Monte-Carlo reference for :func:`decohered_flop` (seeded)."""
    rng = np.random.default_rng(seed)
    d = rng.normal(0.0, 2.0 * np.pi * sigma_f, size=draws)
    og = np.sqrt(omega**2 + d**2)
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    out = np.mean((omega**2 / og**2) * np.sin(og * tt / 2.0) ** 2, axis=-1)
    out = out * np.exp(-gamma * t)
    return out if out.shape else float(out)


def ramsey_contrast(t, sigma_f: float):
    """Ramsey fringe contrast after delay ``t``: exp(-(2 pi sigma_f t)^2 / 2)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("delay must be non-negative")
    out = np.exp(-0.5 * (2.0 * np.pi * sigma_f * t) ** 2)
    return out if out.shape else float(out)


def ramsey_contrast_mc(t, sigma_f: float, draws: int = 10**6, seed: int = 1234):
    """Monte-Carlo cosine average reference for :func:`ramsey_contrast`."""
    rng = np.random.default_rng(seed)
    d = rng.normal(0.0, 2.0 * np.pi * sigma_f, size=draws)
    t = np.asarray(t, dtype=float)
    out = np.mean(np.cos(d * t[..., None]), axis=-1)
    return out if out.shape else float(out)


# --- spontaneous Raman scattering -------------------------------------------


@dataclass(frozen=True)
class ScatterModel:
    """Total scattering rates out of the two flop states."""

    rate_initial: float  # 1/s
    rate_target: float  # 1/s
    leave_fraction: float = QUDIT_LEAVE_FRACTION

    def __post_init__(self):
        if self.rate_initial < 0 or self.rate_target < 0:
            raise InvalidParameterError("rates must be non-negative")
        if not 0.0 <= self.leave_fraction <= 1.0:
            raise InvalidParameterError("leave fraction must lie in [0, 1]")


def scattering_rate(atom: AtomSystem, level: Level, beams: Sequence[Beam]) -> float:
    """Far-detuned spontaneous Raman scattering rate out of ``level`` (1/s).

    Gamma_i = sum over beams and short-lived upper states of
    Gamma_upper |Omega|^2 / (4 Delta^2); only upper manifolds with a known
    lifetime contribute.
    """
    total = 0.0
    for beam in beams:
        for upper_tag, lifetime in (("P3/2", atom.manifold("P3/2").lifetime),):
            if lifetime is None:
                continue
            gamma_u = 1.0 / lifetime
            delta = atom.beam_detuning(beam, upper_tag)
            mat = rabi_matrix(atom, beam, level.manifold_tag, upper_tag)
            for (tm_l, _), omega in mat.entries.items():
                if tm_l != level.twice_mj:
                    continue
                total += gamma_u * abs(omega) ** 2 / (4.0 * delta**2)
    return total


def pi_pulse_scatter_error(rate_initial: float, rate_target: float, t_gate: float,
                           leave_fraction: float = QUDIT_LEAVE_FRACTION) -> tuple[float, float]:
    """Scattering error of a pi pulse and its non-erasure remainder.

    The population spends equal time in the two flop states, so
    eps = (Gamma_0 + Gamma_target) t_gate / 2.  The second value is the part
    that stays inside the qudit manifold and cannot be flagged as erasure.
    """
    if rate_initial < 0 or rate_target < 0 or t_gate < 0:
        raise InvalidParameterError("rates and gate time must be non-negative")
    eps = 0.5 * (rate_initial + rate_target) * t_gate
    return eps, eps * (1.0 - leave_fraction)


# --- intermediate-state population bounds ------------------------------------


def cascade_population_bound(coupling_in: float, coupling_out: float,
                             delta: float, two_photon_detuning: float) -> float:
    """Peak intermediate population of a resonantly driven cascade.

    ``coupling_in`` and ``coupling_out`` are the products of single-photon
    couplings into and out of the intermediate state (rad/s squared each);
    ``delta`` is the upper-state detuning and ``two_photon_detuning`` the
    intermediate two-photon detuning.

        |P| = in^2 / (in^2 + out^2 + 4 delta^2 detuning^2)
    """
    num = coupling_in**2
    den = num + coupling_out**2 + 4.0 * delta**2 * two_photon_detuning**2
    return float(num / den) if den > 0 else 0.0


def intermediate_bounds(mats, splittings, omega_r: float, delta: float) -> dict[str, float]:
    """Cascade bounds for the two strongly driven intermediate sublevels.

    Returns the analytic bounds for the mJ=+3/2 and mJ=+1/2 populations of
    the four-photon stretch transfer, using the dressed splittings.
    """
    p, x = mats.par_entry, mats.perp_entry
    b32 = cascade_population_bound(
        abs(p(0, 6) * x(1, 6)), abs(p(1, 7) * x(3, 7)),
        delta, omega_r - splittings.omega(0, 1),
    )
    b12 = cascade_population_bound(
        abs(p(0, 6) * x(2, 6)), abs(p(2, 8) * x(3, 8)),
        delta, splittings.omega(0, 2) - omega_r,
    )
    return {"+3/2": b32, "+1/2": b12}


# --- total error budget -------------------------------------------------------


@dataclass(frozen=True)
class BudgetReport:
    """Itemized pi-pulse infidelity contributions."""

    pi_time: float
    leakage: float
    dephasing: float
    scattering: float

    @property
    def total(self) -> float:
        return self.leakage + self.dephasing + self.scattering


def total_fidelity_budget(pi_time: float, leakage: float,
                          dephasing_model: DephasingModel | None,
                          scatter: ScatterModel | None) -> BudgetReport:
    """Combine the three error mechanisms at a given pi time.

    ``leakage`` is the intermediate-state population bound; the dephasing
    contribution is the transfer deficit of a decohered pi flop at
    Omega = pi / t; scattering follows the equal-time pi-pulse estimate.
    """
    if pi_time <= 0:
        raise InvalidParameterError("pi time must be positive")
    dep = 0.0
    if dephasing_model is not None:
        omega = np.pi / pi_time
        dep = 1.0 - decohered_flop(pi_time, omega, dephasing_model.sigma_f,
                                   dephasing_model.gamma)
    sca = 0.0
    if scatter is not None:
        sca, _ = pi_pulse_scatter_error(scatter.rate_initial, scatter.rate_target,
                                        pi_time, scatter.leave_fraction)
    return BudgetReport(pi_time=pi_time, leakage=float(leakage),
                        dephasing=float(dep), scattering=float(sca))
