"""Light shifts, dressed splittings, and multi-photon resonance conditions.

Two levels of treatment are available: the plain second-order sum over
eliminated upper states (linear in beam power), and a numeric dressed-energy
evaluation that adds the second-order response of the effective Hamiltonian
to its own beat couplings.  The latter captures the quartic-in-field
corrections that the second-order sum misses and is what the resonance
solver uses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .atom import AtomSystem, Beam, Level, rabi_matrix
from .errors import (
    ApproximationRegimeWarning,
    InvalidParameterError,
    IterationFailedError,
    LabelingAmbiguityError,
)
from .hamiltonian import EffectiveHamiltonian, build_effective_hamiltonian

DEFAULT_LOWER = "D5/2"


def _upper_tags(include_f: bool) -> tuple[str, ...]:
    return ("P3/2", "F7/2") if include_f else ("P3/2",)


def light_shift_second_order(
    atom: AtomSystem,
    level: Level,
    beams: Sequence[Beam],
    include_f: bool = False,
) -> float:
    """Second-order ac Stark shift of ``level`` (rad/s).

    delta E = sum over beams and eliminated states of |Omega|^2 / (4 Delta),
    with the sign carried by the signed detuning.  Warns when any coupling is
    within a factor 1000 of its detuning.
    """
    shift = 0.0
    for beam in beams:
        for upper_tag in _upper_tags(include_f):
            mat = rabi_matrix(atom, beam, level.manifold_tag, upper_tag)
            delta = atom.beam_detuning(beam, upper_tag)
            for (tm_l, _tm_u), omega in mat.entries.items():
                if tm_l != level.twice_mj:
                    continue
                if abs(delta) < 1000.0 * abs(omega):
                    warnings.warn(
                        "detuning within 1000x of a single-photon coupling; "
                        "second-order shift may be inaccurate",
                        ApproximationRegimeWarning,
                        stacklevel=2,
                    )
                shift += abs(omega) ** 2 / (4.0 * delta)
    return shift


@dataclass(frozen=True)
class ShiftTable:
    """Per-level shifts (rad/s) for one manifold, per beam and total."""

    manifold_tag: str
    mjs: tuple[float, ...]
    per_beam: Mapping[str, np.ndarray]
    total: np.ndarray
    method: str

    def shift(self, index: int) -> float:
        return float(self.total[index])


def shift_table(
    atom: AtomSystem,
    beams: Sequence[Beam],
    include_f: bool = False,
    lower_tag: str = DEFAULT_LOWER,
) -> ShiftTable:
    """Second-order shift table for every sublevel of ``lower_tag``."""
    manifold = atom.manifold(lower_tag)
    per_beam: dict[str, np.ndarray] = {}
    for beam in beams:
        per_beam[beam.label] = np.array([
            light_shift_second_order(atom, lev, [beam], include_f)
            for lev in manifold.levels
        ])
    total = np.sum(list(per_beam.values()), axis=0) if per_beam else np.zeros(len(manifold.levels))
    return ShiftTable(
        manifold_tag=lower_tag,
        mjs=tuple(lev.mj for lev in manifold.levels),
        per_beam=per_beam,
        total=total,
        method="second-order",
    )


@dataclass(frozen=True)
class DressedSplittings:
    """Dressed level energies and pairwise splittings of one manifold."""

    manifold_tag: str
    bare: np.ndarray  # rad/s
    shifts: np.ndarray  # rad/s
    method: str

    @property
    def energies(self) -> np.ndarray:
        return self.bare + self.shifts

    def omega(self, i: int, j: int) -> float:
        """Dressed splitting E_i - E_j (rad/s) between level indices."""
        e = self.energies
        return float(e[i] - e[j])


def dressed_splittings(
    atom: AtomSystem,
    beams: Sequence[Beam],
    include_f: bool = False,
    lower_tag: str = DEFAULT_LOWER,
) -> DressedSplittings:
    """Second-order dressed splittings: bare Zeeman plus shift differences."""
    manifold = atom.manifold(lower_tag)
    bare = np.array([lev.energy for lev in manifold.levels])
    table = shift_table(atom, beams, include_f, lower_tag)
    return DressedSplittings(lower_tag, bare, table.total, "second-order")


def numeric_dressed_energies(ham: EffectiveHamiltonian) -> np.ndarray:
    """Quasi-energies of the driven manifold from the effective Hamiltonian.

    Starts from the time-averaged diagonal (bare ladder plus static light
    shifts) and adds the second-order response to every off-diagonal beat
    coupling: delta E_row += |A|^2 / (E_row - E_col - beat).  Levels are
    labeled by continuity from the undriven ladder; a near-resonant coupling
    makes that labeling meaningless and raises.
    """
    base = ham.diagonal.astype(float).copy()
    for term in ham.terms:
        if term.row == term.col and term.beat == 0.0:
            base[term.row] += term.amplitude.real
    shifts = np.zeros_like(base)
    for term in ham.terms:
        if term.row == term.col:
            continue
        denom = base[term.row] - base[term.col] - term.beat
        amp = abs(term.amplitude)
        if abs(denom) < max(4.0 * amp, 2.0 * np.pi * 100.0):
            raise LabelingAmbiguityError(
                f"coupling ({term.row},{term.col}) at beat {term.beat:.3e} rad/s "
                f"is too close to resonance for adiabatic labeling"
            )
        shifts[term.row] += amp**2 / denom
    return base + shifts


def resonance_frequency(
    atom: AtomSystem,
    beams: Sequence[Beam],
    initial: int,
    final: int,
    photons: int,
    moving: str = "R_perp",
    include_f: bool = False,
    lower_tag: str = DEFAULT_LOWER,
    method: str = "numeric",
    tol: float = 2.0 * np.pi * 1.0,
    max_iter: int = 50,
) -> float:
    """Drive offset satisfying omega_r = 2 |E_i - E_f| / n with dressed energies.

    The dressed energies depend on omega_r through the beat couplings, so the
    condition is solved by damped fixed-point iteration (factor 0.5) to a
    1 Hz residual.  ``moving`` names the beam whose offset is scanned.
    """
    if photons % 2:
        raise InvalidParameterError("photon number must be even")
    if not any(b.label == moving for b in beams):
        raise InvalidParameterError(f"no beam labeled {moving!r}")

    ds = dressed_splittings(atom, beams, include_f, lower_tag)
    omega_r = 2.0 * abs(ds.omega(initial, final)) / photons
    if method == "second-order":
        return omega_r
    if method != "numeric":
        raise InvalidParameterError(f"unknown method {method!r}")

    for _ in range(max_iter):
        trial = [b.with_offset(omega_r) if b.label == moving else b for b in beams]
        ham = build_effective_hamiltonian(atom, trial, include_f=include_f,
                                          lower_tag=lower_tag)
        energies = numeric_dressed_energies(ham)
        omega_new = 2.0 * abs(energies[initial] - energies[final]) / photons
        if abs(omega_new - omega_r) < tol:
            return omega_r + 0.5 * (omega_new - omega_r)
        omega_r += 0.5 * (omega_new - omega_r)
    raise IterationFailedError(
        f"resonance iteration did not reach {tol / (2 * np.pi):.2f} Hz in {max_iter} steps"
    )
