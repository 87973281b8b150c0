"""Atomic structure, beams, and single-photon Rabi couplings.

Internal unit system: hbar = 1, every frequency and energy is angular
(rad/s), lengths and powers are SI.  Conversions to ordinary frequency (Hz)
happen only at I/O boundaries.

Level indexing convention used throughout the package: within the metastable
J = 5/2 manifold, index ``k`` in 0..5 means mJ = +5/2 - k (so index 0 is the
stretched mJ = +5/2 state).  Within J' = 3/2, indices 6..9 mean
mJ = +3/2 - (k - 6).

Polarization amplitudes are spherical components (e_sigma-, e_pi, e_sigma+)
in the Condon-Shortley basis, normalized so sum |e_q|^2 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import e as E_CHARGE
from scipy.constants import epsilon_0 as EPS0
from scipy.constants import hbar as HBAR
from scipy.constants import physical_constants

from .angular import clebsch_gordan
from .errors import InvalidParameterError

MU_B = physical_constants["Bohr magneton"][0]
A_BOHR = physical_constants["Bohr radius"][0]
EA0 = E_CHARGE * A_BOHR  # atomic unit of electric dipole moment, C m

POLARIZATIONS = (-1, 0, 1)

# Manifold pairs connected by an electric-dipole transition.
_DIPOLE_PAIRS = {
    frozenset({"S1/2", "P1/2"}),
    frozenset({"S1/2", "P3/2"}),
    frozenset({"D5/2", "P3/2"}),
    frozenset({"D3/2", "P1/2"}),
    frozenset({"D3/2", "P3/2"}),
    frozenset({"D5/2", "F7/2"}),
    frozenset({"D5/2", "F5/2"}),
    frozenset({"D3/2", "F5/2"}),
}


def dipole_connected(tag_a: str, tag_b: str) -> bool:
    return frozenset({tag_a, tag_b}) in _DIPOLE_PAIRS


def zeeman_splitting(b_field: float, g_j: float) -> float:
    """Zeeman splitting g_J mu_B B / hbar between adjacent mJ states, rad/s."""
    if b_field < 0:
        raise InvalidParameterError("magnetic field must be non-negative")
    return g_j * MU_B * b_field / HBAR


def peak_field_amplitude(power: float, waist: float) -> float:
    """Peak electric field (V/m) of a Gaussian beam.

    ``waist`` is the 1/e^2 intensity radius; the peak intensity is
    2 P / (pi w0^2) and E0 = sqrt(2 I / (eps0 c)).
    """
    if waist <= 0:
        raise InvalidParameterError("waist must be positive")
    if power < 0:
        raise InvalidParameterError("power must be non-negative")
    return np.sqrt(4.0 * power / (np.pi * waist**2 * EPS0 * C_LIGHT))


def _as_twice(x) -> int:
    t = round(2 * x)
    if abs(2 * x - t) > 1e-9:
        raise InvalidParameterError(f"{x!r} is not a half-integer")
    return int(t)


@dataclass(frozen=True)
class Level:
    """One Zeeman sublevel.  ``energy`` is relative to the manifold centroid."""

    manifold_tag: str
    j: float
    mj: float
    energy: float  # rad/s

    def __post_init__(self):
        tj, tm = _as_twice(self.j), _as_twice(self.mj)
        if abs(tm) > tj:
            raise InvalidParameterError(f"|mJ| = {self.mj} exceeds J = {self.j}")
        if (tj - tm) % 2:
            raise InvalidParameterError(
                f"2J = {tj} and 2mJ = {tm} must have equal parity"
            )

    @property
    def twice_mj(self) -> int:
        return _as_twice(self.mj)


@dataclass(frozen=True)
class Manifold:
    """A fine-structure manifold with its 2J+1 Zeeman sublevels."""

    tag: str
    j: float
    g_j: float
    levels: tuple[Level, ...]
    lifetime: float | None = None  # seconds

    def __post_init__(self):
        tj = _as_twice(self.j)
        if len(self.levels) != tj + 1:
            raise InvalidParameterError(
                f"{self.tag}: expected {tj + 1} levels, got {len(self.levels)}"
            )

    @classmethod
    def build(cls, tag: str, j: float, g_j: float, splitting: float,
              lifetime: float | None = None) -> "Manifold":
        """Construct the manifold with an equally spaced Zeeman ladder.

        ``splitting`` is the adjacent-mJ energy difference in rad/s; levels
        are ordered from the highest mJ (index 0) downward.
        """
        tj = _as_twice(j)
        levels = tuple(
            Level(tag, j, tm / 2.0, (tm / 2.0) * splitting)
            for tm in range(tj, -tj - 2, -2)
        )
        return cls(tag=tag, j=j, g_j=g_j, levels=levels, lifetime=lifetime)

    @property
    def splitting(self) -> float:
        if len(self.levels) < 2:
            return 0.0
        return self.levels[0].energy - self.levels[1].energy

    def level(self, mj: float) -> Level:
        tm = _as_twice(mj)
        for lev in self.levels:
            if lev.twice_mj == tm:
                return lev
        raise InvalidParameterError(f"no mJ = {mj} level in {self.tag}")

    def index(self, mj: float) -> int:
        tm = _as_twice(mj)
        return (_as_twice(self.j) - tm) // 2


@dataclass(frozen=True)
class Beam:
    """A classical laser field addressing the ion.

    ``detuning`` is the signed optical detuning from the lower <-> P3/2
    resonance; ``offset`` is this beam's drive-frequency offset relative to
    the reference beam (0 for the reference, omega_r for the other).
    """

    label: str
    detuning: float  # rad/s
    power: float  # W
    waist: float  # m
    polarization: tuple[complex, complex, complex]  # (e_sigma-, e_pi, e_sigma+)
    offset: float = 0.0  # rad/s

    def __post_init__(self):
        if self.waist <= 0:
            raise InvalidParameterError("waist must be positive")
        if self.power < 0:
            raise InvalidParameterError("power must be non-negative")
        norm = sum(abs(e) ** 2 for e in self.polarization)
        if abs(norm - 1.0) > 1e-12:
            raise InvalidParameterError(
                f"polarization amplitudes must satisfy sum |e_q|^2 = 1, got {norm}"
            )

    def amplitude(self, q: int) -> complex:
        return self.polarization[q + 1]

    @property
    def field(self) -> float:
        return peak_field_amplitude(self.power, self.waist)

    def with_power(self, power: float) -> "Beam":
        return replace(self, power=power)

    def with_offset(self, offset: float) -> "Beam":
        return replace(self, offset=offset)


def polarization_from_fractions(fractions: Sequence[float]) -> tuple[complex, complex, complex]:
    """Real positive amplitudes from intensity fractions (f-, f_pi, f+)."""
    f = np.asarray(fractions, dtype=float)
    if f.min() < -1e-12:
        raise InvalidParameterError("intensity fractions must be non-negative")
    f = np.clip(f, 0.0, None)
    total = f.sum()
    if total <= 0:
        raise InvalidParameterError("at least one polarization fraction must be positive")
    amp = np.sqrt(f / total)
    return (complex(amp[0]), complex(amp[1]), complex(amp[2]))


@dataclass(frozen=True)
class AtomSystem:
    """Manifolds plus the couplings between them.

    ``reduced_elements`` maps unordered manifold-tag pairs to reduced dipole
    matrix elements in atomic units (e a0).  ``detuning_offsets`` maps upper
    manifold tags to the extra optical detuning (rad/s) a beam referenced to
    the lower <-> P3/2 line has from lower <-> that manifold.
    """

    manifolds: Mapping[str, Manifold]
    reduced_elements: Mapping[frozenset, float]
    detuning_offsets: Mapping[str, float]
    b_field: float  # tesla, derived from the primary splitting

    def manifold(self, tag: str) -> Manifold:
        try:
            return self.manifolds[tag]
        except KeyError:
            raise InvalidParameterError(f"unknown manifold {tag!r}") from None

    def reduced_element(self, tag_a: str, tag_b: str) -> float:
        """Reduced dipole element in atomic units; symmetric in its arguments."""
        key = frozenset({tag_a, tag_b})
        try:
            return self.reduced_elements[key]
        except KeyError:
            raise InvalidParameterError(
                f"no reduced dipole element for {tag_a} <-> {tag_b}"
            ) from None

    def beam_detuning(self, beam: Beam, upper_tag: str) -> float:
        """Optical detuning of ``beam`` from the lower <-> ``upper_tag`` line."""
        return beam.detuning + self.detuning_offsets.get(upper_tag, 0.0)


def coupling_coefficient(lower: Level, upper: Level, q: int) -> float:
    """Clebsch-Gordan factor <J' mJ' | J mJ; 1 q> for a dipole photon.

    Zero when mJ' != mJ + q.  Raises for manifold pairs that are not
    dipole-connected.
    """
    if q not in POLARIZATIONS:
        raise InvalidParameterError(f"polarization q must be in {POLARIZATIONS}")
    if not dipole_connected(lower.manifold_tag, upper.manifold_tag):
        raise InvalidParameterError(
            f"{lower.manifold_tag} <-> {upper.manifold_tag} is not dipole-connected"
        )
    return clebsch_gordan(lower.j, lower.mj, 1, q, upper.j, upper.mj)


@dataclass(frozen=True)
class RabiMatrix:
    """Complex single-photon Rabi frequencies of one beam between two manifolds.

    Entries are keyed by (2*mJ_lower, 2*mJ_upper); missing keys are exact
    zeros (dipole selection rules).
    """

    beam_label: str
    lower_tag: str
    upper_tag: str
    entries: Mapping[tuple[int, int], complex]

    def get(self, mj_lower: float, mj_upper: float) -> complex:
        return self.entries.get((_as_twice(mj_lower), _as_twice(mj_upper)), 0j)

    def absolute_squares(self) -> dict[tuple[int, int], float]:
        return {k: abs(v) ** 2 for k, v in self.entries.items()}


def rabi_matrix(atom: AtomSystem, beam: Beam, lower_tag: str, upper_tag: str) -> RabiMatrix:
    """Single-photon Rabi matrix Omega_ij of one beam between two manifolds.

    Omega_ij = (E0 / hbar) * d_component * e_q with q = mJ_j - mJ_i, where
    the spherical dipole component is

        d = <upper||d||lower> * sqrt(3 / (2J_upper + 1)) * <J' mJ'|J mJ; 1 q>

    (Fano-Racah normalization of the reduced element; this scale makes the
    bundled beam calibration reproduce the benchmark multi-photon pi times).
    """
    lower = atom.manifold(lower_tag)
    upper = atom.manifold(upper_tag)
    red = atom.reduced_element(lower_tag, upper_tag) * EA0
    scale = beam.field / HBAR * red * np.sqrt(3.0 / (_as_twice(upper.j) + 1.0))
    entries: dict[tuple[int, int], complex] = {}
    for lev in lower.levels:
        for q in POLARIZATIONS:
            e_q = beam.amplitude(q)
            if e_q == 0:
                continue
            tm_up = lev.twice_mj + 2 * q
            if abs(tm_up) > _as_twice(upper.j):
                continue
            cg = coupling_coefficient(lev, upper.level(tm_up / 2.0), q)
            if cg == 0.0:
                continue
            entries[(lev.twice_mj, tm_up)] = scale * cg * e_q
    return RabiMatrix(beam.label, lower_tag, upper_tag, entries)


# --- 40Ca+ preset -----------------------------------------------------------

CA40_OMEGA0 = 2 * np.pi * 2.63e6  # rad/s, metastable-manifold Zeeman splitting
CA40_DETUNING = -2 * np.pi * 44e12  # rad/s, drive detuning from the D-P line
CA40_F_DETUNING = -2 * np.pi * 1322e12  # rad/s, drive detuning from the D-F lines

_CA40_DATA = {
    "omega0_hz": 2.63e6,
    "g_d52": 6.0 / 5.0,
    "g_p32": 4.0 / 3.0,
    "g_f72": 8.0 / 7.0,
    "g_f52": 6.0 / 7.0,
    "g_s12": 2.0,
    "lifetime_d52_s": 1.168,
    "lifetime_p32_s": 6.64e-9,
    "reduced_d52_p32_au": 3.283,
    "reduced_d52_f72_au": 2.309,
    "reduced_d52_f52_au": 0.5164,
    "f_detuning_offset_hz": -1278e12,  # (D-F line) relative to (D-P line)
}


def ca40(omega0: float = CA40_OMEGA0) -> AtomSystem:
    """The 40Ca+ system used throughout: D5/2 qudit, P3/2 and F7/2, F5/2 uppers.

    ``omega0`` (rad/s) is the primary input; the quantization field is derived
    from it via the D5/2 Lande factor.
    """
    return build_atom(_CA40_DATA, omega0=omega0)


def build_atom(data: Mapping[str, float], omega0: float | None = None) -> AtomSystem:
    """Assemble an AtomSystem from a flat key-value mapping (see `_CA40_DATA`)."""
    if omega0 is None:
        omega0 = 2 * np.pi * float(data["omega0_hz"])
    g_d = float(data["g_d52"])
    b_field = omega0 * HBAR / (g_d * MU_B)
    manifolds = {
        "D5/2": Manifold.build("D5/2", 2.5, g_d, omega0,
                               lifetime=data.get("lifetime_d52_s")),
        "P3/2": Manifold.build("P3/2", 1.5, float(data["g_p32"]),
                               zeeman_splitting(b_field, float(data["g_p32"])),
                               lifetime=data.get("lifetime_p32_s")),
        "F7/2": Manifold.build("F7/2", 3.5, float(data["g_f72"]),
                               zeeman_splitting(b_field, float(data["g_f72"]))),
        "F5/2": Manifold.build("F5/2", 2.5, float(data["g_f52"]),
                               zeeman_splitting(b_field, float(data["g_f52"]))),
        "S1/2": Manifold.build("S1/2", 0.5, float(data["g_s12"]),
                               zeeman_splitting(b_field, float(data["g_s12"]))),
    }
    reduced = {
        frozenset({"D5/2", "P3/2"}): float(data["reduced_d52_p32_au"]),
        frozenset({"D5/2", "F7/2"}): float(data["reduced_d52_f72_au"]),
        frozenset({"D5/2", "F5/2"}): float(data["reduced_d52_f52_au"]),
    }
    f_offset = 2 * np.pi * float(data["f_detuning_offset_hz"])
    offsets = {"P3/2": 0.0, "F7/2": f_offset, "F5/2": f_offset}
    return AtomSystem(manifolds=manifolds, reduced_elements=reduced,
                      detuning_offsets=offsets, b_field=b_field)


# Calibrated beam parameters (fit values): waists and polarization fractions.
PAR_WAIST = 30.60e-6
PERP_WAIST = 32.16e-6
PAR_FRACTIONS = (0.872, 0.0, 0.128)
PERP_FRACTIONS = (0.3355, 0.329, 0.3355)


def parallel_beam(power: float, waist: float = PAR_WAIST,
                  fractions: Sequence[float] = PAR_FRACTIONS,
                  detuning: float = CA40_DETUNING) -> Beam:
    """The B-field-aligned beam (reference tone, predominantly sigma-)."""
    return Beam("R_par", detuning, power, waist,
                polarization_from_fractions(fractions), offset=0.0)


def perpendicular_beam(power: float, waist: float = PERP_WAIST,
                       fractions: Sequence[float] = PERP_FRACTIONS,
                       detuning: float = CA40_DETUNING,
                       offset: float = 0.0) -> Beam:
    """The beam propagating across the field (offset tone, mixed polarization)."""
    return Beam("R_perp", detuning, power, waist,
                polarization_from_fractions(fractions), offset=offset)


def nominal_parallel_beam(power: float, **kw) -> Beam:
    """Idealized pure-sigma- version of the aligned beam."""
    kw.setdefault("fractions", (1.0, 0.0, 0.0))
    kw.setdefault("waist", 30e-6)
    return parallel_beam(power, **kw)


def nominal_perpendicular_beam(power: float, **kw) -> Beam:
    """Idealized equal-components version of the crossed beam."""
    kw.setdefault("fractions", (1 / 3, 1 / 3, 1 / 3))
    kw.setdefault("waist", 30e-6)
    return perpendicular_beam(power, **kw)
