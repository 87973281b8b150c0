"""Effective Hamiltonian on the metastable manifold.

The short-lived upper states are adiabatically eliminated, the metastable
Zeeman sublevels are kept.  In the frame that leaves the bare Zeeman ladder
on the diagonal, every beam pair (a, b) contributes second-order couplings

    H[j, i](t) += Omega_a(i->e) Omega_b(j->e)* / (4 Delta_e)
                  * env_a(t) env_b(t) * exp(-i (w_a - w_b) t)

summed over eliminated levels e.  Same-beam terms (zero beat) carry the
light shifts and static Raman couplings; cross-beam terms oscillate at the
drive offset difference.  No oscillating term is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .atom import AtomSystem, Beam, RabiMatrix, rabi_matrix
from .errors import InvalidParameterError

DEFAULT_LOWER = "D5/2"
DEFAULT_UPPERS = ("P3/2",)
F_UPPER = "F7/2"


@dataclass(frozen=True)
class CouplingTerm:
    """One oscillating matrix element: amp * e^{-i beat t} at [row, col]."""

    row: int
    col: int
    amplitude: complex  # rad/s
    beat: float  # rad/s
    beams: tuple[str, str]  # (absorbing, emitting) envelope hooks


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Time-dependent Hamiltonian data for the retained manifold."""

    dim: int
    diagonal: np.ndarray  # bare Zeeman energies, rad/s
    terms: tuple[CouplingTerm, ...]
    beams: tuple[Beam, ...]
    lower_tag: str
    upper_tags: tuple[str, ...]

    def as_matrix(self, t: float, envelopes: Mapping[str, object] | None = None) -> np.ndarray:
        """Dense matrix at time ``t`` (envelope amplitude 1 when not given)."""
        h = np.diag(self.diagonal.astype(complex))
        for term in self.terms:
            g = 1.0
            if envelopes:
                for label in term.beams:
                    env = envelopes.get(label)
                    if env is not None:
                        g *= env.amplitude(t)
            h[term.row, term.col] += term.amplitude * g * np.exp(-1j * term.beat * t)
        return h

    def norm_bound(self) -> float:
        """Upper bound on ||H(t)|| used for step-size control."""
        return float(np.max(np.abs(self.diagonal)) + sum(abs(t.amplitude) for t in self.terms))

    def beam(self, label: str) -> Beam:
        for b in self.beams:
            if b.label == label:
                return b
        raise InvalidParameterError(f"no beam labeled {label!r}")


def build_effective_hamiltonian(
    atom: AtomSystem,
    beams: Sequence[Beam],
    include_f: bool = False,
    lower_tag: str = DEFAULT_LOWER,
    upper_tags: Sequence[str] | None = None,
) -> EffectiveHamiltonian:
    """Assemble the effective Hamiltonian for the given beam configuration.

    With ``include_f`` the F7/2 manifold joins the eliminated set (the weakly
    coupled F5/2 is left out of the defaults).
    """
    if upper_tags is None:
        upper_tags = list(DEFAULT_UPPERS) + ([F_UPPER] if include_f else [])
    labels = [b.label for b in beams]
    if len(set(labels)) != len(labels):
        raise InvalidParameterError("beam labels must be unique")

    lower = atom.manifold(lower_tag)
    dim = len(lower.levels)
    diag = np.array([lev.energy for lev in lower.levels], dtype=float)

    mats: dict[tuple[str, str], RabiMatrix] = {}
    for b in beams:
        for u in upper_tags:
            mats[(b.label, u)] = rabi_matrix(atom, b, lower_tag, u)

    bundles: dict[tuple[int, int, str, str], complex] = {}
    for a in beams:
        for b in beams:
            for u in upper_tags:
                upper = atom.manifold(u)
                # symmetric mean keeps cross-beam terms exactly Hermitian
                delta = 0.5 * (atom.beam_detuning(a, u) + atom.beam_detuning(b, u))
                ma, mb = mats[(a.label, u)], mats[(b.label, u)]
                for e in upper.levels:
                    for i, li in enumerate(lower.levels):
                        wa = ma.get(li.mj, e.mj)
                        if wa == 0:
                            continue
                        for j, lj in enumerate(lower.levels):
                            wb = mb.get(lj.mj, e.mj)
                            if wb == 0:
                                continue
                            key = (j, i, a.label, b.label)
                            bundles[key] = bundles.get(key, 0j) + wa * np.conj(wb) / (4.0 * delta)

    offsets = {b.label: b.offset for b in beams}
    terms = tuple(
        CouplingTerm(row=j, col=i, amplitude=amp,
                     beat=offsets[la] - offsets[lb], beams=(la, lb))
        for (j, i, la, lb), amp in sorted(bundles.items())
        if amp != 0
    )
    return EffectiveHamiltonian(
        dim=dim, diagonal=diag, terms=terms, beams=tuple(beams),
        lower_tag=lower_tag, upper_tags=tuple(upper_tags),
    )
