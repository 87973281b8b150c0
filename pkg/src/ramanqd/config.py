"""Flat key-value experiment configuration.

Files hold one ``dotted.key = value`` pair per line; ``#`` starts a comment.
Environment variables override any key: ``RAMANQD_BEAM__PAR__POWER_W=0.2``
maps to ``beam.par.power_w`` (dots become double underscores, case is
ignored).  Validation messages carry the line number of the offending entry.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import atom as atom_mod
from .atom import AtomSystem, Beam, polarization_from_fractions
from .errors import ConfigError

ENV_PREFIX = "RAMANQD_"

DEFAULTS = {
    "atom.preset": "ca40",
    "atom.omega0_hz": "2.63e6",
    "beam.par.power_w": "0.195",
    "beam.par.waist_m": "30.60e-6",
    "beam.par.fractions": "0.872, 0.0, 0.128",
    "beam.par.detuning_hz": "-44e12",
    "beam.perp.power_w": "0.152",
    "beam.perp.waist_m": "32.16e-6",
    "beam.perp.fractions": "0.3355, 0.329, 0.3355",
    "beam.perp.detuning_hz": "-44e12",
    "transition.initial_mj": "2.5",
    "transition.final_mj": "-0.5",
    "transition.photons": "4",
    "pulse.shape": "square",
    "pulse.duration_s": "auto",
    "pulse.ramp_fraction": "0.125",
    "pulse.stretch": "1.25",
    "sweep.start": "0.02",
    "sweep.stop": "0.18",
    "sweep.points": "9",
    "sim.samples": "1201",
    "sim.dt_s": "auto",
    "sim.include_f": "false",
    "sim.refine_resonance": "false",
    "sim.numeric": "false",
    "noise.sigma_t_s": "0.61e-3",
    "noise.gamma": "0.0",
    "ramsey.max_delay_s": "2.5e-3",
    "ramsey.points": "60",
    "ramsey.mc_draws": "200000",
    "psd.carrier_hz": "5e6",
    "psd.sample_rate_hz": "40e6",
    "calibrate.splittings_csv": "",
    "calibrate.rabi_csv": "",
    "calibrate.noise_splitting_hz": "50.0",
    "calibrate.noise_rabi_rel": "0.005",
    "spectrum.span_hz": "40e3",
    "seed": "1",
}


@dataclass
class ExperimentConfig:
    """Parsed configuration plus the line numbers each key came from."""

    values: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)
    source: str = "<defaults>"

    # -- raw access ----------------------------------------------------------

    def _where(self, key: str) -> str:
        if key in self.lines:
            return f"{self.source}:{self.lines[key]}"
        return f"{self.source} (default)"

    def get(self, key: str) -> str:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values.get(key, DEFAULTS[key])

    def get_float(self, key: str) -> float:
        raw = self.get(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(
                f"{self._where(key)}: {key} = {raw!r} is not a number") from None

    def get_int(self, key: str) -> int:
        raw = self.get(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(
                f"{self._where(key)}: {key} = {raw!r} is not an integer") from None

    def get_bool(self, key: str) -> bool:
        raw = self.get(key).strip().lower()
        if raw in ("true", "yes", "1", "on"):
            return True
        if raw in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{self._where(key)}: {key} = {raw!r} is not a boolean")

    def get_floats(self, key: str) -> list[float]:
        raw = self.get(key).replace(",", " ").split()
        try:
            return [float(v) for v in raw]
        except ValueError:
            raise ConfigError(
                f"{self._where(key)}: {key} is not a list of numbers") from None

    # -- resolved objects ------------------------------------------------------

    def resolved(self) -> dict[str, str]:
        out = dict(DEFAULTS)
        out.update(self.values)
        return out

    def atom(self) -> AtomSystem:
        preset = self.get("atom.preset")
        if preset != "ca40":
            raise ConfigError(
                f"{self._where('atom.preset')}: unknown atom preset {preset!r}")
        omega0 = 2 * np.pi * self.get_float("atom.omega0_hz")
        if omega0 <= 0:
            raise ConfigError(f"{self._where('atom.omega0_hz')}: omega0 must be positive")
        return atom_mod.ca40(omega0=omega0)

    def beam(self, which: str) -> Beam:
        base = f"beam.{which}"
        fractions = self.get_floats(f"{base}.fractions")
        if len(fractions) != 3 or min(fractions) < 0:
            raise ConfigError(
                f"{self._where(f'{base}.fractions')}: need three non-negative fractions")
        label = "R_par" if which == "par" else "R_perp"
        try:
            return Beam(
                label=label,
                detuning=2 * np.pi * self.get_float(f"{base}.detuning_hz"),
                power=self.get_float(f"{base}.power_w"),
                waist=self.get_float(f"{base}.waist_m"),
                polarization=polarization_from_fractions(fractions),
            )
        except Exception as exc:
            raise ConfigError(f"{self._where(base + '.power_w')}: {exc}") from None

    def transition(self, atom: AtomSystem) -> tuple[int, int, int]:
        """(initial index, final index, photons) in the metastable manifold."""
        man = atom.manifold("D5/2")
        photons = self.get_int("transition.photons")
        if photons % 2 or photons < 2:
            raise ConfigError(
                f"{self._where('transition.photons')}: photons must be even and >= 2")
        out = []
        for key in ("transition.initial_mj", "transition.final_mj"):
            mj = self.get_float(key)
            try:
                idx = man.index(mj)
            except Exception:
                raise ConfigError(
                    f"{self._where(key)}: mJ = {mj} is not a D5/2 sublevel") from None
            if not 0 <= idx < len(man.levels):
                raise ConfigError(
                    f"{self._where(key)}: mJ = {mj} is not a D5/2 sublevel")
            out.append(idx)
        return out[0], out[1], photons

    def sweep_powers(self) -> np.ndarray:
        start = self.get_float("sweep.start")
        stop = self.get_float("sweep.stop")
        points = self.get_int("sweep.points")
        if points < 2 or not np.isfinite([start, stop]).all() or stop <= start or start <= 0:
            raise ConfigError(
                f"{self._where('sweep.start')}: sweep range must be finite, "
                "positive, increasing, with at least two points")
        return np.linspace(start, stop, points)

    def seed(self) -> int:
        return self.get_int("seed")


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{n}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = value
        lines[key] = n
    cfg = ExperimentConfig(values=values, lines=lines, source=source)
    _apply_env_overrides(cfg)
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        _apply_env_overrides(cfg)
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config_text(text, source=path)


def _apply_env_overrides(cfg: ExperimentConfig):
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if key in DEFAULTS:
            cfg.values[key] = value
            cfg.lines.pop(key, None)
