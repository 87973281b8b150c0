"""Multi-photon pathway enumeration and effective Rabi frequencies.

A 2n-photon stimulated Raman pathway alternates absorption into an
eliminated upper manifold and stimulated emission back into the metastable
manifold.  Each pathway contributes one term

    product of 2n couplings / (2^(2n-1) * prod Delta_upper * prod D_k)

where the couplings of absorbed photons enter conjugated, Delta_upper is the
(signed) optical detuning of each upper-state visit, and D_k is the detuning
of the accumulated drive offset from the k-th intermediate dressed splitting
(the (k w_r - w_0d) factors for the standard two-beam drive).

The hand-written four- and six-photon closed forms are kept verbatim as
golden references for the generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .atom import AtomSystem, Beam, Level, RabiMatrix, rabi_matrix
from .errors import DegenerateResonanceError, InvalidParameterError

DEGENERACY_TOL = 2.0 * np.pi * 1e3  # rad/s; below this the elimination is invalid
# A pathway must close onto the dressed initial-final splitting; the window
# only needs to absorb beyond-second-order shifts (kHz scale), far below the
# Zeeman quantum that separates distinct pathway classes.
RESONANCE_TOL = 2.0 * np.pi * 200e3  # rad/s

D_TAG = "D5/2"
P_TAG = "P3/2"
F_TAG = "F7/2"


@dataclass(frozen=True)
class PathStep:
    """One photon: the level reached, the beam that supplied it, and how."""

    direction: str  # "absorb" | "emit"
    beam: str
    q: int
    level: Level


@dataclass(frozen=True)
class Pathway:
    initial: Level
    steps: tuple[PathStep, ...]
    intermediate_detunings: tuple[float, ...]  # rad/s, bare, one per inner pair

    @property
    def final(self) -> Level:
        return self.steps[-1].level

    @property
    def photons(self) -> int:
        return len(self.steps)

    @property
    def upper_visits(self) -> tuple[Level, ...]:
        return tuple(s.level for s in self.steps if s.direction == "absorb")

    def visits(self, manifold_tag: str) -> int:
        return sum(1 for lev in self.upper_visits if lev.manifold_tag == manifold_tag)

    def describe(self) -> str:
        def fmt(lev: Level) -> str:
            return f"{lev.manifold_tag}:{_mj_str(lev.mj)}"

        parts = [fmt(self.initial)]
        for s in self.steps:
            arrow = "~>" if s.direction == "emit" else "->"
            pol = {-1: "s-", 0: "pi", 1: "s+"}[s.q]
            parts.append(f"{arrow}[{s.beam},{pol}]{fmt(s.level)}")
        return " ".join(parts)


def _mj_str(mj: float) -> str:
    tm = round(2 * mj)
    return f"{tm:+d}/2" if tm % 2 else f"{tm // 2:+d}"


def enumerate_pathways(
    atom: AtomSystem,
    initial: Level,
    final: Level,
    photons: int,
    beams: Sequence[Beam],
    include_f: bool = False,
    upper_tags: Sequence[str] | None = None,
    degeneracy_tol: float = DEGENERACY_TOL,
    resonance_tol: float = RESONANCE_TOL,
) -> list[Pathway]:
    """All selection-rule-allowed resonant pathways from initial to final.

    Pathways whose accumulated drive offset does not close onto the
    initial-final splitting (within ``resonance_tol``) are discarded, as are
    those passing through a degenerate intermediate (self-energy chains).
    At most one upper-manifold visit may be to an F state.
    """
    if photons < 2 or photons % 2:
        raise InvalidParameterError("photon number must be a positive even integer")
    if upper_tags is None:
        upper_tags = (P_TAG, F_TAG) if include_f else (P_TAG,)
    lower = atom.manifold(initial.manifold_tag)
    if final.manifold_tag != initial.manifold_tag:
        raise InvalidParameterError("initial and final levels must share a manifold")

    # resonance bookkeeping uses second-order dressed energies so that the
    # closure window can stay narrow
    from .stark import shift_table

    shifts = shift_table(atom, beams, include_f=include_f,
                         lower_tag=initial.manifold_tag).total
    dressed = {lev.twice_mj: lev.energy + shifts[k]
               for k, lev in enumerate(lower.levels)}

    pairs = photons // 2
    target_beat = dressed[final.twice_mj] - dressed[initial.twice_mj]
    found: list[Pathway] = []

    def extend(level: Level, beat: float, steps: list[PathStep], f_visits: int, k: int):
        if k == pairs:
            if level.twice_mj == final.twice_mj and abs(beat - target_beat) < resonance_tol:
                detunings = []
                acc = 0.0
                seen = 0
                for s in steps:
                    if s.direction == "absorb":
                        acc += _offset(beams, s.beam)
                    else:
                        acc -= _offset(beams, s.beam)
                        seen += 1
                        if seen < pairs:
                            detunings.append(
                                -(acc - (dressed[s.level.twice_mj] - dressed[initial.twice_mj]))
                            )
                found.append(Pathway(initial, tuple(steps), tuple(detunings)))
            return
        for beam_a in beams:
            for qa in (-1, 0, 1):
                if beam_a.amplitude(qa) == 0:
                    continue
                for utag in upper_tags:
                    up_man = atom.manifold(utag)
                    tm_up = level.twice_mj + 2 * qa
                    if abs(tm_up) > round(2 * up_man.j):
                        continue
                    f_next = f_visits + (1 if utag.startswith("F") else 0)
                    if f_next > 1:
                        continue
                    up_level = up_man.level(tm_up / 2.0)
                    for beam_b in beams:
                        for qb in (-1, 0, 1):
                            if beam_b.amplitude(qb) == 0:
                                continue
                            tm_low = tm_up - 2 * qb
                            if abs(tm_low) > round(2 * lower.j):
                                continue
                            low_level = lower.level(tm_low / 2.0)
                            new_beat = beat + _offset(beams, beam_a.label) - _offset(beams, beam_b.label)
                            if k + 1 < pairs:
                                detuning = new_beat - (dressed[low_level.twice_mj]
                                                       - dressed[initial.twice_mj])
                                if abs(detuning) < degeneracy_tol:
                                    continue
                            steps.append(PathStep("absorb", beam_a.label, qa, up_level))
                            steps.append(PathStep("emit", beam_b.label, qb, low_level))
                            extend(low_level, new_beat, steps, f_next, k + 1)
                            steps.pop()
                            steps.pop()

    extend(initial, 0.0, [], 0, 0)
    return found


def _offset(beams: Sequence[Beam], label: str) -> float:
    for b in beams:
        if b.label == label:
            return b.offset
    raise InvalidParameterError(f"no beam labeled {label!r}")


@dataclass(frozen=True)
class RabiTerm:
    """One evaluated pathway term of an effective Rabi frequency."""

    pathway: Pathway
    numerator: complex
    denominator: float
    factors: tuple[str, ...]
    denominator_factors: tuple[str, ...]

    @property
    def value(self) -> complex:
        return self.numerator / self.denominator

    def describe(self) -> str:
        num = " ".join(self.factors)
        den = " ".join(self.denominator_factors)
        return f"+ {num} / ({den})"


@dataclass(frozen=True)
class RabiExpression:
    """Sum of pathway terms for one effective 2n-photon Rabi frequency."""

    photons: int
    terms: tuple[RabiTerm, ...]

    @property
    def value(self) -> complex:
        return sum((t.value for t in self.terms), 0j)

    def describe(self) -> str:
        header = f"# {self.photons}-photon effective Rabi frequency, {len(self.terms)} term(s)"
        lines = [header]
        for t in self.terms:
            lines.append(t.describe())
            lines.append(f"#   pathway: {t.pathway.describe()}")
            lines.append(f"#   value: {t.value.real:+.6e} {t.value.imag:+.6e}j rad/s")
        lines.append(f"# total: {self.value.real:+.6e} {self.value.imag:+.6e}j rad/s "
                     f"(|value| = {abs(self.value):.6e} rad/s)")
        return "\n".join(lines)


def generate_rabi_expression(
    atom: AtomSystem,
    pathways: Sequence[Pathway],
    beams: Sequence[Beam],
    splittings,
    offsets: Mapping[str, float] | None = None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> RabiExpression:
    """Assemble the effective Rabi expression for the given pathways.

    ``splittings`` provides dressed lower-manifold energies through
    ``splittings.energies`` indexed like the manifold levels;
    ``offsets`` overrides the per-beam drive offsets (defaults to the
    offsets carried by ``beams``).
    """
    if not pathways:
        raise InvalidParameterError("no pathways supplied")
    photons = pathways[0].photons
    if any(p.photons != photons for p in pathways):
        raise InvalidParameterError("pathways must share a photon number")
    if offsets is None:
        offsets = {b.label: b.offset for b in beams}
    beam_map = {b.label: b for b in beams}
    lower_tag = pathways[0].initial.manifold_tag
    lower = atom.manifold(lower_tag)
    energies = np.asarray(splittings.energies, dtype=float)

    mats: dict[tuple[str, str], RabiMatrix] = {}

    def omega(beam_label: str, low: Level, up: Level) -> complex:
        key = (beam_label, up.manifold_tag)
        if key not in mats:
            mats[key] = rabi_matrix(atom, beam_map[beam_label], lower_tag, up.manifold_tag)
        return mats[key].get(low.mj, up.mj)

    pairs = photons // 2
    terms = []
    for path in pathways:
        numerator = 1 + 0j
        factors = []
        den = 2.0 ** (2 * pairs - 1)
        den_factors = [f"2^{2 * pairs - 1}"]
        current = path.initial
        acc = 0.0
        emitted = 0
        for step in path.steps:
            if step.direction == "absorb":
                w = omega(step.beam, current, step.level)
                numerator *= np.conj(w)
                factors.append(f"conj(W[{step.beam};{_lab(current)}>{_lab(step.level)}])")
                delta = atom.beam_detuning(beam_map[step.beam], step.level.manifold_tag)
                den *= delta
                den_factors.append(f"Delta[{step.level.manifold_tag}]")
                acc += offsets[step.beam]
            else:
                upper = current
                w = omega(step.beam, step.level, upper)
                numerator *= w
                factors.append(f"W[{step.beam};{_lab(step.level)}>{_lab(upper)}]")
                acc -= offsets[step.beam]
                emitted += 1
                if emitted < pairs:
                    dressed = energies[lower.index(step.level.mj)] - energies[lower.index(path.initial.mj)]
                    d_k = acc - dressed
                    if abs(d_k) < degeneracy_tol:
                        raise DegenerateResonanceError(
                            f"intermediate denominator {d_k:.3e} rad/s below tolerance "
                            f"on pathway {path.describe()}"
                        )
                    den *= -d_k
                    den_factors.append(
                        f"(acc_offset - w[{_lab(path.initial)},{_lab(step.level)}])@pair{emitted}"
                    )
            current = step.level
        terms.append(RabiTerm(path, numerator, den, tuple(factors), tuple(den_factors)))
    return RabiExpression(photons=photons, terms=tuple(terms))


def _lab(level: Level) -> str:
    tag = level.manifold_tag[0]
    return f"{tag}{_mj_str(level.mj)}"


# --- hand-written closed forms (golden references) --------------------------


class RabiMatrixSet:
    """The two drive beams' Rabi matrices, addressed by the 0..9 level labels.

    Indices 0..5 are the metastable sublevels (mJ = +5/2 down to -5/2);
    indices 6..9 are the J' = 3/2 sublevels (mJ = +3/2 down to -3/2).
    """

    def __init__(self, atom: AtomSystem, par: Beam, perp: Beam):
        self.atom = atom
        self.par = par
        self.perp = perp
        self._par = rabi_matrix(atom, par, D_TAG, P_TAG)
        self._perp = rabi_matrix(atom, perp, D_TAG, P_TAG)

    @staticmethod
    def _mjs(i: int) -> float:
        if 0 <= i <= 5:
            return 2.5 - i
        if 6 <= i <= 9:
            return 1.5 - (i - 6)
        raise InvalidParameterError(f"level index {i} out of range")

    def par_entry(self, i: int, p: int) -> complex:
        return self._par.get(self._mjs(i), self._mjs(p))

    def perp_entry(self, i: int, p: int) -> complex:
        return self._perp.get(self._mjs(i), self._mjs(p))

    def scaled(self, par_factor: complex = 1.0, perp_factor: complex = 1.0) -> "RabiMatrixSet":
        """Clone with every entry of each beam multiplied by a constant."""
        import copy

        from .atom import RabiMatrix as _RM

        clone = copy.copy(self)
        clone._par = _RM(self._par.beam_label, D_TAG, P_TAG,
                         {k: v * par_factor for k, v in self._par.entries.items()})
        clone._perp = _RM(self._perp.beam_label, D_TAG, P_TAG,
                          {k: v * perp_factor for k, v in self._perp.entries.items()})
        return clone


def _check_denominators(*dens: float):
    for d in dens:
        if abs(d) < DEGENERACY_TOL:
            raise DegenerateResonanceError(
                f"denominator {d:.3e} rad/s below the {DEGENERACY_TOL:.3e} rad/s tolerance"
            )


def four_photon_rabi(mats: RabiMatrixSet, delta: float, splittings, omega_r: float) -> complex:
    """Hand-coded four-photon Rabi frequency for the stretch -> mJ=-1/2 transfer.

    W(4) = conj(W06)/(8 Delta^2) * [ W16 conj(W17) W37 / (w_r - w01)
                                     - W26 conj(W28) W38 / (w_r - w23) ]

    where conjugated factors belong to the aligned beam and unconjugated ones
    to the crossed beam, and w_ij are dressed splittings.
    """
    w01 = splittings.omega(0, 1)
    w23 = splittings.omega(2, 3)
    d1 = omega_r - w01
    d2 = omega_r - w23
    _check_denominators(d1, d2)
    p, x = mats.par_entry, mats.perp_entry
    term1 = x(1, 6) * np.conj(p(1, 7)) * x(3, 7) / d1
    term2 = x(2, 6) * np.conj(p(2, 8)) * x(3, 8) / d2
    return np.conj(p(0, 6)) / (8.0 * delta**2) * (term1 - term2)


def six_photon_rabi(mats: RabiMatrixSet, delta: float, splittings, omega_r: float) -> complex:
    """Hand-coded six-photon Rabi frequency for the stretch -> mJ=-3/2 transfer.

    Five interfering pathway terms; conjugated factors are aligned-beam
    couplings and unconjugated factors crossed-beam couplings (this resolves
    the repeated factors in terms four and five, which revisit intermediate
    sublevels through the crossed beam's sigma- component).
    """
    w01 = splittings.omega(0, 1)
    w02 = splittings.omega(0, 2)
    w03 = splittings.omega(0, 3)
    d_a = omega_r - w01
    d_b = 2 * omega_r - w02
    d_c = w03 - 2 * omega_r
    d_d = w02 - omega_r
    _check_denominators(d_a, d_b, d_c, d_d, omega_r)
    p, x = mats.par_entry, mats.perp_entry
    t1 = x(1, 6) * np.conj(p(1, 7)) * x(2, 7) * np.conj(p(2, 8)) * x(4, 8) / (d_a * d_b)
    t2 = x(1, 6) * np.conj(p(1, 7)) * x(3, 7) * np.conj(p(3, 9)) * x(4, 9) / (d_a * d_c)
    t3 = x(2, 6) * np.conj(p(2, 8)) * x(3, 8) * np.conj(p(3, 9)) * x(4, 9) / (d_d * d_c)
    t4 = x(2, 6) * np.conj(p(2, 8)) * x(2, 8) * np.conj(p(2, 8)) * x(4, 8) / (d_d * d_b)
    t5 = x(0, 6) * np.conj(p(0, 6)) * x(2, 6) * np.conj(p(2, 8)) * x(4, 8) / (omega_r * d_b)
    return np.conj(p(0, 6)) / (32.0 * delta**3) * (t1 - t2 + t3 - t4 + t5)


def two_photon_rabi(mats: RabiMatrixSet, i: int, j: int, delta: float) -> complex:
    """Textbook two-photon Raman Rabi frequency between metastable indices."""
    total = 0j
    for p_idx in range(6, 10):
        total += np.conj(mats.par_entry(i, p_idx)) * mats.perp_entry(j, p_idx)
    return total / (2.0 * delta)


def f_state_correction(
    atom: AtomSystem,
    beams: Sequence[Beam],
    splittings,
    omega_r: float,
    initial: Level | None = None,
    final: Level | None = None,
    photons: int = 4,
    moving: str = "R_perp",
) -> RabiExpression:
    """Pathway terms with exactly one F-manifold and one P-manifold visit.

    Pathways touching the F manifold more than once are excluded (their
    denominators carry the much larger F detuning squared).  ``moving`` names
    the beam that carries the drive offset ``omega_r``.
    """
    lower = atom.manifold(D_TAG)
    if initial is None:
        initial = lower.level(2.5)
    if final is None:
        final = lower.level(-0.5)
    moving_beams = [b.with_offset(omega_r) if b.label == moving else b for b in beams]
    paths = enumerate_pathways(atom, initial, final, photons, moving_beams, include_f=True)
    f_paths = [p for p in paths if p.visits(F_TAG) == 1]
    if not f_paths:
        raise InvalidParameterError("no single-F-visit pathways found")
    return generate_rabi_expression(atom, f_paths, moving_beams, splittings)
