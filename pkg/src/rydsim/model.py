"""Physical configuration types and closed-form field/interaction evaluations.

Units used throughout the package:

* length: micrometer
* time: microsecond
* frequency: megahertz, ordinary (not angular)
* energy: stored as E/h in megahertz

Conversion to angular units (factor 2*pi) happens only when a Hamiltonian
matrix is assembled in :mod:`rydsim.evolve`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_MAX_ATOMS = 12

# label -> C6 in MHz um^6 (interaction / h). None means "no default value shipped".
LEVEL_PRESETS: dict[str, float | None] = {
    # 300 MHz at 3 um
    "59D3/2": 218_700.0,
    "82D3/2": None,
}


class DomainError(ValueError):
    """Raised for physically meaningless inputs (coincident atoms, R <= 0)."""


def max_atoms() -> int:
    """Atom-count guard, overridable through ``RYDSIM_MAX_ATOMS``."""
    raw = os.environ.get("RYDSIM_MAX_ATOMS")
    if raw is None:
        return DEFAULT_MAX_ATOMS
    return int(raw)


def _vec3(v: Sequence[float]) -> tuple[float, float, float]:
    out = tuple(float(x) for x in v)
    if len(out) != 3:
        raise ValueError(f"expected a 3-vector, got {len(out)} components")
    return out  # type: ignore[return-value]


@dataclass(frozen=True)
class AtomGeometry:
    """Trap-center positions of the atoms, in micrometers."""

    positions: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        pos = tuple(_vec3(p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) < 1:
            raise ValueError("geometry needs at least one atom")
        if len(pos) > max_atoms():
            raise ValueError(
                f"{len(pos)} atoms exceeds the limit of {max_atoms()} "
                "(set RYDSIM_MAX_ATOMS to override)"
            )
        arr = np.asarray(pos)
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if np.linalg.norm(arr[i] - arr[j]) <= 0.0:
                    raise DomainError(f"atoms {i} and {j} coincide")

    @property
    def count(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class RydbergLevel:
    """Rydberg level label and its van der Waals coefficient (MHz um^6).

    A negative ``c6`` gives an attractive interaction; zero is rejected.
    """

    label: str
    c6: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.c6) or self.c6 == 0.0:
            raise ValueError(f"c6 must be finite and nonzero, got {self.c6}")

    @classmethod
    def preset(cls, label: str, c6: float | None = None) -> "RydbergLevel":
        """Look up a named level; ``c6`` overrides (or supplies) the coefficient."""
        if label not in LEVEL_PRESETS and c6 is None:
            raise KeyError(f"unknown level {label!r} and no c6 given")
        value = c6 if c6 is not None else LEVEL_PRESETS[label]
        if value is None:
            raise ValueError(f"level {label!r} ships without a C6 value; supply c6 explicitly")
        return cls(label, float(value))


@dataclass(frozen=True)
class GlobalDrive:
    """Effective two-photon drive shared by all atoms.

    ``rabi`` and ``detuning`` are ordinary frequencies in MHz (the "1" in
    Omega = 2 pi x 1 MHz). ``wavevector`` is the summed k of the excitation
    lasers in rad/um.
    """

    rabi: float
    detuning: float = 0.0
    wavevector: tuple[float, float, float] = (0.0, 0.0, 0.0)
    phase: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "wavevector", _vec3(self.wavevector))
        if not self.rabi >= 0.0:
            raise ValueError(f"rabi must be >= 0, got {self.rabi}")


@dataclass(frozen=True)
class AddressingBeam:
    """Gaussian addressing beam shifting the ground state of the atoms it hits.

    ``peak_shift`` is Delta E / h at the beam center (MHz), ``waist`` the
    1/e^2 intensity radius (um). The profile is uniform along ``axis``.
    """

    center: tuple[float, float, float]
    peak_shift: float
    waist: float
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec3(self.center))
        axis = np.asarray(_vec3(self.axis))
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ValueError("beam axis must be nonzero")
        object.__setattr__(self, "axis", tuple(float(x) for x in axis / norm))
        if not self.waist > 0.0:
            raise ValueError(f"waist must be > 0, got {self.waist}")
        if not self.peak_shift >= 0.0:
            raise ValueError(f"peak_shift must be >= 0, got {self.peak_shift}")


@dataclass(frozen=True)
class TrapModel:
    """Optical tweezer used only for thermal position sampling.

    ``depth`` is U0/h in MHz; ``axial_aspect`` is sigma_z / sigma_radial.
    """

    waist: float = 1.0
    depth: float = 20.0
    axial_aspect: float = 5.2

    def __post_init__(self) -> None:
        if not self.waist > 0.0:
            raise ValueError("trap waist must be > 0")
        if not self.depth > 0.0:
            raise ValueError("trap depth must be > 0")
        if not self.axial_aspect >= 1.0:
            raise ValueError("axial_aspect must be >= 1")


@dataclass(frozen=True)
class ExperimentModel:
    """Static physical configuration: where the atoms sit and how they interact."""

    geometry: AtomGeometry
    level: RydbergLevel
    trap: TrapModel = field(default_factory=TrapModel)

    @property
    def atom_count(self) -> int:
        return self.geometry.count


def interaction_energy(level: RydbergLevel, distance: float) -> float:
    """Van der Waals shift C6 / R^6 of the doubly excited pair, in MHz."""
    if not distance > 0.0:
        raise DomainError(f"interatomic distance must be > 0, got {distance}")
    return level.c6 / distance**6


def transverse_distance(beam: AddressingBeam, position) -> np.ndarray:
    """Distance from the beam axis, broadcasting over leading axes of ``position``."""
    d = np.asarray(position, dtype=float) - np.asarray(beam.center)
    axis = np.asarray(beam.axis)
    along = d @ axis
    perp = d - along[..., None] * axis
    return np.linalg.norm(perp, axis=-1)


def light_shift_at(beam: AddressingBeam, position) -> float | np.ndarray:
    """Ground-state light shift Delta E / h (MHz) seen at ``position``.

    Accepts a single 3-vector or an array of shape (..., 3).
    """
    d = transverse_distance(beam, position)
    shift = beam.peak_shift * np.exp(-2.0 * d**2 / beam.waist**2)
    if np.ndim(shift) == 0:
        return float(shift)
    return shift


def effective_wavevector(
    lambda_red: float,
    lambda_blue: float,
    geometry: str = "counter",
    axis: Sequence[float] = (1.0, 0.0, 0.0),
) -> tuple[float, float, float]:
    """Summed wavevector (rad/um) of a two-photon excitation along ``axis``.

    For counter-propagating beams the blue beam travels along ``axis`` and the
    red one against it.
    """
    if not (lambda_red > 0.0 and lambda_blue > 0.0):
        raise ValueError("wavelengths must be positive")
    if geometry == "counter":
        mag = 2.0 * math.pi * (1.0 / lambda_blue - 1.0 / lambda_red)
    elif geometry == "co":
        mag = 2.0 * math.pi * (1.0 / lambda_blue + 1.0 / lambda_red)
    else:
        raise ValueError(f"geometry must be 'co' or 'counter', got {geometry!r}")
    a = np.asarray(_vec3(axis))
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError("axis must be nonzero")
    return tuple(float(x) for x in mag * a / norm)  # type: ignore[return-value]
