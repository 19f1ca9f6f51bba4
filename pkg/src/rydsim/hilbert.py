"""State vectors over the N-atom {g, r} product basis.

Basis ordering: configuration index = sum_i b_i 2**(N-1-i) with b_i = 1 for
``r``. Atom 0 is the leftmost letter of a label, so for two atoms
``gg, gr, rg, rr`` map to ``0, 1, 2, 3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

NORM_TOLERANCE = 1e-6


class ContractError(ValueError):
    """An input violated a documented precondition (e.g. unnormalized state)."""


class LabelError(ValueError):
    """A configuration label could not be parsed."""


def basis_index(label: str, atom_count: int | None = None) -> int:
    """Index of a configuration label such as ``"rg"``."""
    if atom_count is not None and len(label) != atom_count:
        raise LabelError(f"label {label!r} has length {len(label)}, expected {atom_count}")
    if not label:
        raise LabelError("empty label")
    index = 0
    for ch in label:
        if ch == "g":
            bit = 0
        elif ch == "r":
            bit = 1
        else:
            raise LabelError(f"bad level {ch!r} in label {label!r}")
        index = (index << 1) | bit
    return index


def basis_label(index: int, atom_count: int) -> str:
    if not 0 <= index < 2**atom_count:
        raise LabelError(f"index {index} out of range for {atom_count} atoms")
    return "".join("r" if (index >> (atom_count - 1 - i)) & 1 else "g" for i in range(atom_count))


@lru_cache(maxsize=None)
def basis_labels(atom_count: int) -> tuple[str, ...]:
    return tuple(basis_label(i, atom_count) for i in range(2**atom_count))


@lru_cache(maxsize=None)
def occupation_table(atom_count: int) -> np.ndarray:
    """Integer array ``n[c, i]``: 1 if atom i is in r in configuration c."""
    idx = np.arange(2**atom_count)[:, None]
    shifts = atom_count - 1 - np.arange(atom_count)[None, :]
    table = (idx >> shifts) & 1
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    atom_count: int

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.atom_count,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, expected ({2**self.atom_count},)"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, label: str) -> "QuantumState":
        n = len(label)
        amps = np.zeros(2**n, dtype=complex)
        amps[basis_index(label)] = 1.0
        return cls(amps, n)

    @classmethod
    def ground(cls, atom_count: int) -> "QuantumState":
        return cls.basis("g" * atom_count)

    @classmethod
    def from_labels(cls, coefficients: dict[str, complex], normalize: bool = True) -> "QuantumState":
        """Build a superposition, e.g. ``{"gr": 1, "rg": 1}``."""
        n = len(next(iter(coefficients)))
        amps = np.zeros(2**n, dtype=complex)
        for label, c in coefficients.items():
            amps[basis_index(label, n)] += c
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps, n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def require_normalized(self) -> None:
        if abs(self.norm - 1.0) > NORM_TOLERANCE:
            raise ContractError(f"state is not normalized (norm = {self.norm!r})")


@dataclass
class PopulationTable:
    """Per-configuration probabilities, ideal or estimated from shots.

    For sampled tables ``shots`` is the number of repetitions and
    ``standard_errors`` holds binomial standard errors; ideal tables have
    ``shots = None`` and zero errors.
    """

    atom_count: int
    probabilities: np.ndarray
    shots: int | None = None
    standard_errors: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.probabilities.shape != (2**self.atom_count,):
            raise ValueError("population vector has the wrong length")
        if self.standard_errors is None:
            self.standard_errors = np.zeros_like(self.probabilities)
        else:
            self.standard_errors = np.asarray(self.standard_errors, dtype=float)

    @property
    def labels(self) -> tuple[str, ...]:
        return basis_labels(self.atom_count)

    def __getitem__(self, label: str) -> float:
        return float(self.probabilities[basis_index(label, self.atom_count)])

    def as_dict(self) -> dict[str, float]:
        return {lab: float(p) for lab, p in zip(self.labels, self.probabilities)}

    def marginal(self, atom: int, level: str) -> float:
        return _marginal(self.probabilities, self.atom_count, atom, level)

    @classmethod
    def from_counts(cls, atom_count: int, counts: np.ndarray) -> "PopulationTable":
        counts = np.asarray(counts)
        shots = int(counts.sum())
        p = counts / shots
        se = np.sqrt(p * (1.0 - p) / shots)
        return cls(atom_count, p, shots, se)


def _marginal(probs: np.ndarray, atom_count: int, atom: int, level: str) -> float:
    if not 0 <= atom < atom_count:
        raise IndexError(f"atom index {atom} out of range for {atom_count} atoms")
    if level not in ("g", "r"):
        raise LabelError(f"level must be 'g' or 'r', got {level!r}")
    occ = occupation_table(atom_count)[:, atom]
    mask = occ == (1 if level == "r" else 0)
    return float(probs[mask].sum())


def populations(state: QuantumState) -> PopulationTable:
    state.require_normalized()
    p = np.abs(state.amplitudes) ** 2
    # renormalize away the residual allowed by the tolerance
    return PopulationTable(state.atom_count, p / p.sum())


def single_atom_population(state: QuantumState, atom: int, level: str) -> float:
    return populations(state).marginal(atom, level)
