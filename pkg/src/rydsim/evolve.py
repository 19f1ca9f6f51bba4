"""Rotating-frame Hamiltonian assembly and exact piecewise propagation.

Convention (angular units, rad/us)::

    H = sum_i pi*Omega (e^{i(k.r_i + phi)} |r><g|_i + h.c.)
        - sum_i 2 pi delta_i n_i + sum_{i<j} 2 pi U_ij n_i n_j

with delta_i = delta_laser - (sum of addressing light shifts at atom i).
A ground-state shift Delta E therefore acts exactly like an extra laser
detuning of -Delta E / h on that atom. Segments with no drive switched on use
delta_laser = 0, i.e. the frame co-rotating with the bare transition.

Most functions accept a leading batch axis so that many Monte Carlo shots
are propagated with one batched eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .hilbert import ContractError, QuantumState, occupation_table
from .model import AddressingBeam, DomainError, ExperimentModel, GlobalDrive, light_shift_at
from .pulses import TIME_EPS, PulseSequence, ScheduleError

TWO_PI = 2.0 * math.pi
HERMITIAN_TOL = 1e-12

PositionsLike = np.ndarray | Callable[[float], np.ndarray] | None


@lru_cache(maxsize=None)
def _flip_pairs(atom_count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lower, upper, atom) index triples for every single-atom g->r flip."""
    occ = occupation_table(atom_count)
    lower, upper, atom = [], [], []
    for i in range(atom_count):
        bit = 1 << (atom_count - 1 - i)
        cs = np.nonzero(occ[:, i] == 0)[0]
        lower.append(cs)
        upper.append(cs | bit)
        atom.append(np.full(cs.shape, i))
    return np.concatenate(lower), np.concatenate(upper), np.concatenate(atom)


def effective_detunings(
    detuning: float, beams: Sequence[AddressingBeam], positions: np.ndarray
) -> np.ndarray:
    """Per-atom detuning (MHz) after subtracting the local light shifts."""
    positions = np.asarray(positions, dtype=float)
    delta = np.full(positions.shape[:-1], float(detuning))
    for beam in beams:
        delta = delta - light_shift_at(beam, positions)
    return delta


def pair_interactions(c6: float, positions: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    n = positions.shape[-2]
    out = {}
    for i in range(n):
        for j in range(i + 1, n):
            r = np.linalg.norm(positions[..., i, :] - positions[..., j, :], axis=-1)
            if np.any(r <= 0.0):
                raise DomainError(f"atoms {i} and {j} coincide")
            out[(i, j)] = c6 / r**6
    return out


def hamiltonian_matrix(
    model: ExperimentModel,
    drive: GlobalDrive | None,
    beams: Sequence[AddressingBeam],
    positions: np.ndarray,
    frozen: np.ndarray | None = None,
) -> np.ndarray:
    """Hamiltonian in rad/us for positions of shape (..., N, 3).

    ``frozen`` (shape (..., N), boolean) removes the drive coupling of the
    flagged atoms, pinning them in |g>.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[-2]
    batch = positions.shape[:-2]
    dim = 2**n
    occ = occupation_table(n).astype(float)

    delta = effective_detunings(drive.detuning if drive is not None else 0.0, beams, positions)
    diag = -TWO_PI * np.einsum("cn,...n->...c", occ, delta)
    for (i, j), u in pair_interactions(model.level.c6, positions).items():
        diag = diag + TWO_PI * u[..., None] * (occ[:, i] * occ[:, j])

    H = np.zeros(batch + (dim, dim), dtype=complex)
    idx = np.arange(dim)
    H[..., idx, idx] = diag

    if drive is not None and drive.rabi > 0.0:
        k = np.asarray(drive.wavevector)
        phases = positions @ k + drive.phase
        coupling = math.pi * drive.rabi * np.exp(1j * phases)
        if frozen is not None:
            coupling = np.where(np.asarray(frozen, dtype=bool), 0.0, coupling)
        lower, upper, atom = _flip_pairs(n)
        elems = coupling[..., atom]
        H[..., upper, lower] = elems
        H[..., lower, upper] = np.conj(elems)
    return H


@dataclass(frozen=True)
class SegmentHamiltonian:
    """Hermitian generator (rad/us) of one constant segment and its duration (us)."""

    matrix: np.ndarray
    duration: float = 0.0

    def check_hermitian(self) -> None:
        H = self.matrix
        scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
        dev = float(np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))))) if H.size else 0.0
        if dev > HERMITIAN_TOL * scale:
            raise ContractError(f"segment Hamiltonian is not Hermitian (deviation {dev:.3e})")


def build_segment(
    model: ExperimentModel,
    drives: Sequence[GlobalDrive],
    beams: Sequence[AddressingBeam],
    positions: np.ndarray | None = None,
    duration: float = 0.0,
    frozen: np.ndarray | None = None,
) -> SegmentHamiltonian:
    if len(drives) > 1:
        raise ScheduleError(f"{len(drives)} global drives active in one segment")
    if positions is None:
        positions = model.geometry.as_array()
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-2] != model.atom_count:
        raise ValueError(f"got positions for {positions.shape[-2]} atoms, model has {model.atom_count}")
    drive = drives[0] if drives else None
    return SegmentHamiltonian(hamiltonian_matrix(model, drive, beams, positions, frozen), duration)


def propagate(H: np.ndarray, dt: float, psi: np.ndarray) -> np.ndarray:
    """exp(-i H dt) psi via Hermitian eigendecomposition; batches over leading axes."""
    if dt == 0.0:
        return psi.copy()
    w, V = np.linalg.eigh(H)
    coeff = np.einsum("...ji,...j->...i", V.conj(), psi)
    return np.einsum("...ij,...j->...i", V, np.exp(-1j * w * dt) * coeff)


def evolve_segment(state: QuantumState, segment: SegmentHamiltonian) -> QuantumState:
    state.require_normalized()
    if segment.duration < 0.0:
        raise ContractError("segment duration must be >= 0")
    segment.check_hermitian()
    return QuantumState(propagate(segment.matrix, segment.duration, state.amplitudes), state.atom_count)


def _positions_fn(model: ExperimentModel, positions: PositionsLike) -> Callable[[float], np.ndarray]:
    if positions is None:
        static = model.geometry.as_array()
        return lambda t: static
    if callable(positions):
        return positions
    static = np.asarray(positions, dtype=float)
    return lambda t: static


def segment_times(sequence: PulseSequence, sample_times: Sequence[float] = ()) -> list[float]:
    total = sequence.duration
    for t in sample_times:
        if t < -TIME_EPS or t > total + TIME_EPS:
            raise ScheduleError(f"sample time {t} outside schedule [0, {total}]")
    times = sorted(set(sequence.boundaries()) | {min(max(float(t), 0.0), total) for t in sample_times})
    # merge boundaries closer than TIME_EPS
    merged = [times[0]]
    for t in times[1:]:
        if t - merged[-1] > TIME_EPS:
            merged.append(t)
    return merged


def propagate_sequence(
    psi0: np.ndarray,
    sequence: PulseSequence,
    model: ExperimentModel,
    positions: PositionsLike = None,
    frozen: np.ndarray | None = None,
    sample_times: Sequence[float] = (),
) -> list[tuple[float, np.ndarray]]:
    """Batched piecewise propagation; returns amplitude arrays at every boundary.

    Positions are evaluated at the start of each segment.
    """
    pos_at = _positions_fn(model, positions)
    times = segment_times(sequence, sample_times)
    psi = np.asarray(psi0, dtype=complex)
    out = [(times[0], psi)]
    for t0, t1 in zip(times, times[1:]):
        drives, beams = sequence.active_at(0.5 * (t0 + t1))
        if len(drives) > 1:
            raise ScheduleError("overlapping global drives")
        drive = drives[0] if drives else None
        H = hamiltonian_matrix(model, drive, beams, pos_at(t0), frozen)
        psi = propagate(H, t1 - t0, psi)
        out.append((t1, psi))
    return out


def run_sequence(
    state0: QuantumState,
    sequence: PulseSequence,
    model: ExperimentModel,
    positions: PositionsLike = None,
    sample_times: Sequence[float] = (),
) -> list[tuple[float, QuantumState]]:
    """Evolve ``state0`` through ``sequence``.

    Returns ``(time, state)`` pairs at every segment boundary, where the
    boundaries are the union of pulse edges and ``sample_times``.
    """
    state0.require_normalized()
    traj = propagate_sequence(state0.amplitudes, sequence, model, positions, None, sample_times)
    return [(t, QuantumState(psi, state0.atom_count)) for t, psi in traj]


def state_at(trajectory: list[tuple[float, QuantumState]], t: float) -> QuantumState:
    for ti, s in trajectory:
        if abs(ti - t) <= TIME_EPS:
            return s
    raise KeyError(f"no trajectory point at t = {t}")
