"""Least-squares calibration of drive and noise parameters.

A small damped least-squares engine (multiplicative damping, x10 on rejected
steps, /10 on accepted ones) backs three fits: damped-flop fits for (Omega,
gamma), Gaussian Ramsey fits for (sigma_t, amplitude), and the joint beam
fit that recovers both beam waists and the aligned beam's polarization
fractions from splitting-vs-power and Rabi-vs-power datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import pathways, stark
from .atom import AtomSystem, Beam, peak_field_amplitude, polarization_from_fractions
from .errors import (
    FitFailedError,
    InconsistentMeasurementError,
    InvalidParameterError,
    UnderconstrainedFitError,
)
from .noise import decohered_flop

D_TAG = "D5/2"
P_TAG = "P3/2"


@dataclass(frozen=True)
class Dataset:
    """One measured series: strictly increasing x, values, and 1-sigma errors."""

    kind: str  # flop | ramsey | splitting-vs-power | rabi-vs-power
    x: np.ndarray
    y: np.ndarray
    y_err: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        e = np.asarray(self.y_err, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.shape != e.shape:
            raise InvalidParameterError("x, y, y_err must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise InvalidParameterError("x must be strictly increasing")
        if np.any(e <= 0):
            raise InvalidParameterError("y uncertainties must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_err", e)


@dataclass(frozen=True)
class FitResult:
    params: dict[str, float]
    uncertainties: dict[str, float]
    residuals: np.ndarray
    chi_square: float
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def chi_square_per_dof(self) -> float:
        dof = max(len(self.residuals) - len(self.params), 1)
        return self.chi_square / dof


def _jacobian(fun: Callable[[np.ndarray], np.ndarray], p: np.ndarray,
              steps: np.ndarray) -> np.ndarray:
    cols = []
    for k in range(len(p)):
        dp = np.zeros_like(p)
        dp[k] = steps[k]
        cols.append((fun(p + dp) - fun(p - dp)) / (2 * steps[k]))
    return np.column_stack(cols)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    p0: Sequence[float],
    scales: Sequence[float] | None = None,
    max_iter: int = 200,
    grad_tol: float = 1e-8,
    step_tol: float = 1e-8,
    rank_tol: float = 1e-9,
    check_rank: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Minimize ||fun(p)||^2 with multiplicative damping (x10 / /10).

    Returns (p, covariance, residuals, diagnostics).  Raises
    UnderconstrainedFitError on a rank-deficient Jacobian and FitFailedError
    if neither the gradient nor the step converges.
    """
    p = np.asarray(p0, dtype=float)
    if scales is None:
        scales = np.where(np.abs(p) > 0, np.abs(p), 1.0)
    scales = np.asarray(scales, dtype=float)
    steps = 1e-6 * scales

    r = fun(p)
    cost = float(r @ r)
    lam = 1e-3
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        jac = _jacobian(fun, p, steps)
        if check_rank:
            sv = np.linalg.svd(jac * scales[None, :], compute_uv=False)
            if sv[0] == 0 or sv[-1] < rank_tol * sv[0]:
                _, _, vt = np.linalg.svd(jac * scales[None, :])
                null = [vt[k] for k in range(len(p))
                        if sv[k] < rank_tol * sv[0]] if sv[0] > 0 else [vt[-1]]
                raise UnderconstrainedFitError(
                    "fit Jacobian is rank deficient", null_directions=null)
        grad = jac.T @ r
        jtj = jac.T @ jac
        improved = False
        for _ in range(40):
            try:
                dp = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-300), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            r_new = fun(p + dp)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                gain = cost - cost_new
                p = p + dp
                r, cost = r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                improved = True
                if gain < grad_tol * max(cost, 1e-30) or \
                        np.max(np.abs(dp / scales)) < step_tol:
                    converged = True
                break
            lam *= 10.0
        if not improved:
            converged = True  # damping exhausted: stationary to machine noise
        if converged:
            break
    if not converged:
        raise FitFailedError(
            f"no convergence in {max_iter} iterations",
            diagnostics={"cost": cost, "lambda": lam},
        )
    jac = _jacobian(fun, p, steps)
    jtj = jac.T @ jac
    dof = max(len(r) - len(p), 1)
    try:
        cov = np.linalg.inv(jtj) * (cost / dof)
    except np.linalg.LinAlgError:
        cov = np.full((len(p), len(p)), np.inf)
    diagnostics = {"gradient_norm": float(np.max(np.abs(jac.T @ r))),
                   "lambda": lam, "cost": cost, "iterations": n_iter}
    return p, cov, r, diagnostics


# --- flop and Ramsey fits -----------------------------------------------------


def _seed_omega_fft(t: np.ndarray, y: np.ndarray) -> float:
    sig = y - y.mean()
    if np.max(np.abs(sig)) < 1e-12:
        raise FitFailedError("flop data is constant; cannot seed a frequency")
    n = len(t)
    spec = np.abs(np.fft.rfft(sig * np.hanning(n), n=8 * n))
    freqs = np.fft.rfftfreq(8 * n, d=t[1] - t[0])
    k = 16 + int(np.argmax(spec[16:]))
    if spec[k] < 5.0 * np.median(spec[16:]):
        raise FitFailedError("no oscillation found in flop data")
    return 2 * np.pi * float(freqs[k])


def fit_flop(data: Dataset, sigma_f: float) -> FitResult:
    """Fit (Omega, gamma) of a decohered flop with sigma_f held fixed."""
    if len(data.x) < 10:
        raise InvalidParameterError("need at least 10 flop points")
    t, y, e = data.x, data.y, data.y_err
    omega0 = _seed_omega_fft(t, y)
    if t[-1] * omega0 < 2 * np.pi:
        raise InvalidParameterError("flop data spans less than one period")

    def resid(p):
        om, ga = p
        return (decohered_flop(t, abs(om), sigma_f, abs(ga)) - y) / e

    p, cov, r, diag = levenberg_marquardt(resid, [omega0, 1.0],
                                          scales=[omega0, 100.0])
    params = {"omega": abs(float(p[0])), "gamma": abs(float(p[1]))}
    unc = {"omega": float(np.sqrt(abs(cov[0, 0]))),
           "gamma": float(np.sqrt(abs(cov[1, 1])))}
    return FitResult(params, unc, r, float(r @ r), diag["iterations"], True, diag)


def fit_ramsey(data: Dataset) -> FitResult:
    """Fit (sigma_t, amplitude) of Gaussian Ramsey-contrast decay."""
    t, y, e = data.x, data.y, data.y_err
    span = t[-1] - t[0] if t[-1] > t[0] else 1.0

    def resid(p):
        st, amp = p
        return (amp * np.exp(-0.5 * (t / st) ** 2) - y) / e

    p, cov, r, diag = levenberg_marquardt(resid, [0.5 * span, max(y.max(), 0.1)],
                                          scales=[span, 1.0])
    st, amp = abs(float(p[0])), float(p[1])
    diag = dict(diag)
    diag["unbounded"] = bool(st > 5.0 * span)
    params = {"sigma_t": st, "amplitude": amp}
    unc = {"sigma_t": float(np.sqrt(abs(cov[0, 0]))),
           "amplitude": float(np.sqrt(abs(cov[1, 1])))}
    return FitResult(params, unc, r, float(r @ r), diag["iterations"], True, diag)


# --- beam calibration ----------------------------------------------------------

NN_PAIRS = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5))


_PATTERN_CACHE: dict[tuple[int, float], np.ndarray] = {}
_PATTERN_REF_WAIST = 30e-6


def _unit_shift_patterns(atom: AtomSystem, waist: float,
                         detuning: float) -> np.ndarray:
    """Per-level second-order shifts of unit-power pure-polarization beams.

    Returns shape (3, 6): rows are sigma-, pi, sigma+ at 1 W and the given
    waist.  Shifts scale exactly as 1/waist^2, so one reference evaluation
    per (atom, detuning) is cached and rescaled.
    """
    key = (id(atom), detuning)
    if key not in _PATTERN_CACHE:
        rows = []
        for q in range(3):
            fr = [0.0, 0.0, 0.0]
            fr[q] = 1.0
            beam = Beam("unit", detuning, 1.0, _PATTERN_REF_WAIST,
                        polarization_from_fractions(fr))
            table = stark.shift_table(atom, [beam])
            rows.append(table.total)
        _PATTERN_CACHE[key] = np.array(rows)
    return _PATTERN_CACHE[key] * (_PATTERN_REF_WAIST / waist) ** 2


def splitting_model(atom: AtomSystem, powers: np.ndarray, waist: float,
                    fractions: Sequence[float], pair: tuple[int, int],
                    detuning: float) -> np.ndarray:
    """Nearest-neighbor splitting (Hz) vs aligned-beam power.

    Linear in the (possibly analytically continued) intensity fractions, so
    the fit may probe slightly negative fractions without clipping.
    """
    patterns = _unit_shift_patterns(atom, waist, detuning)
    d_man = atom.manifold(D_TAG)
    i, j = pair
    bare = d_man.levels[i].energy - d_man.levels[j].energy
    diff = patterns[:, i] - patterns[:, j]  # per unit power, by polarization
    per_watt = float(np.dot(np.asarray(fractions, dtype=float), diff))
    return (bare + powers * per_watt) / (2 * np.pi)


def rabi_model(atom: AtomSystem, powers_perp: np.ndarray, p_par: float,
               w_par: float, w_perp: float, par_fractions: Sequence[float],
               perp_template: Beam, include_corrections: bool = True) -> np.ndarray:
    """|two-photon Rabi| (Hz) of the 0<->1 transition vs crossed-beam power.

    Includes the resonant four-photon pathway corrections generated at the
    dressed two-photon resonance; these shift the scaling away from sqrt(P)
    at the percent level.
    """
    fr = np.clip(np.asarray(par_fractions, dtype=float), 0.0, None)
    if fr.sum() <= 0:
        raise InvalidParameterError("aligned-beam fractions sum to zero")
    out = []
    d_man = atom.manifold(D_TAG)
    for p in powers_perp:
        par = Beam("R_par", perp_template.detuning, p_par, w_par,
                   polarization_from_fractions(fr))
        perp = Beam("R_perp", perp_template.detuning, float(p), w_perp,
                    perp_template.polarization)
        mats = pathways.RabiMatrixSet(atom, par, perp)
        delta = atom.beam_detuning(par, P_TAG)
        value = pathways.two_photon_rabi(mats, 0, 1, delta)
        if include_corrections:
            ds = stark.dressed_splittings(atom, [par, perp])
            omega_r = ds.omega(0, 1)
            beams_on = [par, perp.with_offset(omega_r)]
            paths = pathways.enumerate_pathways(
                atom, d_man.levels[0], d_man.levels[1], 4, beams_on)
            if paths:
                expr = pathways.generate_rabi_expression(atom, paths, beams_on, ds)
                value = value + np.conj(expr.value)
        out.append(abs(value) / (2 * np.pi))
    return np.asarray(out)


def make_synthetic_calibration(
    atom: AtomSystem,
    w_par: float,
    w_perp: float,
    par_fractions: Sequence[float],
    perp_template: Beam,
    par_powers: np.ndarray,
    perp_powers: np.ndarray,
    p_par: float = 0.195,
    detuning: float | None = None,
    noise_splitting_hz: float = 50.0,
    noise_rabi_rel: float = 0.005,
    seed: int = 7,
) -> tuple[list[Dataset], Dataset]:
    """Synthetic splitting and Rabi datasets from known beam parameters."""
    rng = np.random.default_rng(seed)
    if detuning is None:
        detuning = perp_template.detuning
    splittings = []
    for pair in NN_PAIRS:
        clean = splitting_model(atom, par_powers, w_par, par_fractions, pair, detuning)
        y = clean + rng.normal(0.0, noise_splitting_hz, size=len(par_powers))
        splittings.append(Dataset(
            "splitting-vs-power", par_powers, y,
            np.full(len(par_powers), noise_splitting_hz),
            meta={"pair": pair},
        ))
    clean = rabi_model(atom, perp_powers, p_par, w_par, w_perp,
                       par_fractions, perp_template)
    err = np.maximum(noise_rabi_rel * clean, 1.0)
    y = clean + rng.normal(0.0, err)
    rabi = Dataset("rabi-vs-power", perp_powers, y, err,
                   meta={"p_par": p_par})
    return splittings, rabi


def joint_fit_beams(
    atom: AtomSystem,
    splitting_data: Sequence[Dataset],
    rabi_data: Dataset | None,
    perp_template: Beam,
    init: Mapping[str, float] | None = None,
) -> FitResult:
    """Joint fit of both beam waists and the aligned beam's polarization.

    Parameters: w_par, w_perp (meters) and the aligned-beam pi / sigma+
    intensity fractions (sigma- takes the remainder).  The crossed beam's
    polarization is held at the externally constrained ``perp_template``
    values.  Splitting data alone leaves the crossed waist unconstrained and
    raises :class:`UnderconstrainedFitError`.
    """
    if not splitting_data:
        raise InvalidParameterError("need at least one splitting dataset")
    detuning = perp_template.detuning
    init = dict(init or {})
    p0 = np.array([
        init.get("w_par", 30e-6),
        init.get("w_perp", 30e-6),
        init.get("f_pi", 0.0),
        init.get("f_plus", 0.05),
    ])
    scales = np.array([1e-6, 1e-6, 0.05, 0.05])

    def resid(p):
        w_par, w_perp, f_pi, f_plus = p
        fractions = (1.0 - f_pi - f_plus, f_pi, f_plus)
        chunks = []
        for ds in splitting_data:
            model = splitting_model(atom, ds.x, w_par, fractions,
                                    tuple(ds.meta["pair"]), detuning)
            chunks.append((model - ds.y) / ds.y_err)
        if rabi_data is not None:
            model = rabi_model(atom, rabi_data.x, rabi_data.meta["p_par"],
                               w_par, w_perp, fractions, perp_template)
            chunks.append((model - rabi_data.y) / rabi_data.y_err)
        return np.concatenate(chunks)

    p, cov, r, diag = levenberg_marquardt(resid, p0, scales=scales)
    w_par, w_perp, f_pi, f_plus = p
    params = {
        "w_par": float(w_par),
        "w_perp": float(w_perp),
        "f_minus": float(1.0 - f_pi - f_plus),
        "f_pi": float(f_pi),
        "f_plus": float(f_plus),
    }
    sd = np.sqrt(np.abs(np.diag(cov)))
    unc = {
        "w_par": float(sd[0]),
        "w_perp": float(sd[1]),
        "f_minus": float(np.hypot(sd[2], sd[3])),
        "f_pi": float(sd[2]),
        "f_plus": float(sd[3]),
    }
    return FitResult(params, unc, r, float(r @ r), diag["iterations"], True, diag)


def constrain_perp_polarization(
    atom: AtomSystem,
    measured_shift_hz: float,
    power: float,
    waist: float,
    detuning: float | None = None,
    shift_err_hz: float | None = None,
    model: str = "second-order",
) -> dict[str, float]:
    """Invert the 0<->1 differential shift for the crossed-beam pi fraction.

    Assumes equal sigma- and sigma+ intensity; the second-order differential
    shift is linear in (1 - 3 f_pi) and vanishes at exactly equal components,
    so the inversion is a one-dimensional linear solve.  ``model='dressed'``
    adds the quartic beat corrections and solves by bisection.
    """
    from .atom import CA40_DETUNING

    if detuning is None:
        detuning = CA40_DETUNING

    def diff_shift_hz(f_pi: float) -> float:
        f_sig = (1.0 - f_pi) / 2.0
        if model == "second-order":
            patterns = _unit_shift_patterns(atom, waist, detuning)
            diff = patterns[:, 0] - patterns[:, 1]
            return power * float(
                f_sig * diff[0] + f_pi * diff[1] + f_sig * diff[2]) / (2 * np.pi)
        beam = Beam("R_perp", detuning, power, waist,
                    polarization_from_fractions((f_sig, f_pi, f_sig)))
        from .hamiltonian import build_effective_hamiltonian

        energies = stark.numeric_dressed_energies(
            build_effective_hamiltonian(atom, [beam]))
        bare = [lev.energy for lev in atom.manifold(D_TAG).levels]
        return ((energies[0] - bare[0]) - (energies[1] - bare[1])) / (2 * np.pi)

    if model == "second-order":
        s0 = diff_shift_hz(0.0)
        s1 = diff_shift_hz(1.0 / 3.0)  # exactly zero by construction
        slope = (s1 - s0) / (1.0 / 3.0)
        if slope == 0:
            raise InconsistentMeasurementError("shift model is degenerate")
        f_pi = (measured_shift_hz - s0) / slope
        dfds = 1.0 / slope
    elif model == "dressed":
        from scipy.optimize import brentq

        lo, hi = 1e-6, 0.999

        def g(f):
            return diff_shift_hz(f) - measured_shift_hz

        if g(lo) * g(hi) > 0:
            raise InconsistentMeasurementError(
                "measured shift outside the reachable range for f_pi in [0, 1]")
        f_pi = brentq(g, lo, hi, xtol=1e-8)
        eps = 1e-4
        dfds = eps / (diff_shift_hz(f_pi + eps) - diff_shift_hz(f_pi - eps)) * 2
    else:
        raise InvalidParameterError(f"unknown model {model!r}")

    if not 0.0 <= f_pi <= 1.0:
        raise InconsistentMeasurementError(
            f"inverted pi fraction {f_pi:.4f} is outside [0, 1]")
    out = {"f_minus": (1.0 - f_pi) / 2.0, "f_pi": float(f_pi),
           "f_plus": (1.0 - f_pi) / 2.0}
    if shift_err_hz is not None:
        out["f_pi_err"] = abs(dfds) * shift_err_hz
    return out
