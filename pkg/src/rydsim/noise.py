"""Shot-by-shot noise: thermal positions/velocities, preparation failures,
projective sampling and state-detection errors.

Random streams: shot ``s`` of scan point ``p`` draws from
``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(p, s))))``.
Every shot consumes the same fixed sequence of draws regardless of the
settings (temperature 0 still draws, then scales by zero), so results are
bit-identical for a fixed seed, independent of how shots are split over
worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import constants

from .hilbert import PopulationTable, QuantumState, basis_index, basis_label
from .model import AtomGeometry, TrapModel

RB87_MASS_KG = 86.909180527 * constants.atomic_mass


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic settings for one simulated data set.

    The detection-error defaults (5 % each way) are placeholders, not
    measured values; set them explicitly for any quantitative use.
    ``temperature`` is in microkelvin.
    """

    temperature: float = 50.0
    trap: TrapModel = field(default_factory=TrapModel)
    shots: int = 100
    eps_g_to_r: float = 0.05
    eps_r_to_g: float = 0.05
    prep_efficiency: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("eps_g_to_r", "eps_r_to_g", "prep_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not self.temperature >= 0.0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ShotContext:
    """Per-shot atom positions (um) at t = 0 and velocities (um/us)."""

    positions: np.ndarray
    velocities: np.ndarray


def thermal_widths(temperature_uk: float, trap: TrapModel) -> tuple[float, float, float]:
    """(sigma_radial um, sigma_axial um, sigma_v um/us) for a harmonic trap."""
    kT = constants.k * temperature_uk * 1e-6
    depth = constants.h * trap.depth * 1e6
    sigma_r = 0.5 * trap.waist * math.sqrt(kT / depth)
    # m/s == um/us
    sigma_v = math.sqrt(kT / RB87_MASS_KG)
    return sigma_r, trap.axial_aspect * sigma_r, sigma_v


def sample_positions_velocities(
    model: NoiseModel, geometry: AtomGeometry, rng: np.random.Generator
) -> ShotContext:
    n = geometry.count
    sr, sz, sv = thermal_widths(model.temperature, model.trap)
    scale = np.array([sr, sr, sz])
    pos = geometry.as_array() + rng.standard_normal((n, 3)) * scale
    vel = rng.standard_normal((n, 3)) * sv
    return ShotContext(pos, vel)


def positions_at(context: ShotContext, t: float) -> np.ndarray:
    """Ballistic flight: the traps are off during the sequence."""
    return context.positions + context.velocities * t


def sample_measurement(state: QuantumState, rng: np.random.Generator) -> str:
    state.require_normalized()
    p = np.abs(state.amplitudes) ** 2
    return basis_label(_draw(p / p.sum(), rng.random()), state.atom_count)


def _draw(p: np.ndarray, u: float) -> int:
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(p) - 1))


def detection_matrix(eps_g_to_r: float, eps_r_to_g: float) -> np.ndarray:
    """Column-stochastic single-atom channel acting on (p_g, p_r)."""
    return np.array([[1.0 - eps_g_to_r, eps_r_to_g], [eps_g_to_r, 1.0 - eps_r_to_g]])


def apply_detection_channel(
    data: str | PopulationTable,
    eps_g_to_r: float,
    eps_r_to_g: float,
    rng: np.random.Generator | None = None,
):
    """Misclassify measurement outcomes atom by atom.

    A configuration label needs ``rng`` and returns the reported label; a
    :class:`PopulationTable` is transformed exactly by M x M x ... x M.
    """
    for v in (eps_g_to_r, eps_r_to_g):
        if not 0.0 <= v <= 1.0:
            raise ValueError("error probabilities must lie in [0, 1]")
    if isinstance(data, PopulationTable):
        n = data.atom_count
        M = detection_matrix(eps_g_to_r, eps_r_to_g)
        tensor = data.probabilities.reshape((2,) * n)
        for axis in range(n):
            tensor = np.moveaxis(np.tensordot(M, tensor, axes=([1], [axis])), 0, axis)
        return PopulationTable(n, tensor.reshape(-1), data.shots)
    if rng is None:
        raise ValueError("sampled detection channel needs an rng")
    u = rng.random(len(data))
    out = []
    for ch, x in zip(data, u):
        if ch == "g":
            out.append("r" if x < eps_g_to_r else "g")
        else:
            out.append("g" if x < eps_r_to_g else "r")
    return "".join(out)


def shot_rng(seed: int, key: Sequence[int], shot: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key) + (shot,))
    return np.random.Generator(np.random.PCG64(ss))


def _simulate_shots(args) -> np.ndarray:
    """Counts array (times, 2**N) for a contiguous block of shots."""
    from .evolve import propagate_sequence

    document, times, key, shot_lo, shot_hi = args
    model = document.model()
    sequence = document.sequence()
    noise = document.noise_model()
    geometry = model.geometry
    n = geometry.count
    dim = 2**n
    shots = range(shot_lo, shot_hi)
    s_count = len(shots)

    pos0 = np.empty((s_count, n, 3))
    vel = np.empty((s_count, n, 3))
    frozen = np.empty((s_count, n), dtype=bool)
    rngs = []
    for j, s in enumerate(shots):
        rng = shot_rng(noise.rng_seed, key, s)
        ctx = sample_positions_velocities(noise, geometry, rng)
        pos0[j], vel[j] = ctx.positions, ctx.velocities
        frozen[j] = rng.random(n) >= noise.prep_efficiency
        rngs.append(rng)

    psi0 = np.zeros((s_count, dim), dtype=complex)
    psi0[:, 0] = 1.0
    traj = propagate_sequence(
        psi0, sequence, model, lambda t: pos0 + vel * t, frozen, sample_times=times
    )
    counts = np.zeros((len(times), dim), dtype=np.int64)
    for ti, t in enumerate(times):
        probs = np.abs(_nearest(traj, t)) ** 2
        for j, rng in enumerate(rngs):
            label = basis_label(_draw(probs[j], rng.random()), n)
            label = apply_detection_channel(label, noise.eps_g_to_r, noise.eps_r_to_g, rng)
            counts[ti, basis_index(label)] += 1
    return counts


def _nearest(traj, t):
    return min(traj, key=lambda item: abs(item[0] - t))[1]


def run_monte_carlo(
    document,
    times: Sequence[float] | None = None,
    stream_key: Sequence[int] = (0,),
    workers: int = 1,
) -> list[PopulationTable]:
    """Sampled populations at each time in ``times`` (default: end of sequence).

    Each shot is an independent prepare/evolve/measure cycle; all requested
    times of one shot share its thermal context. ``stream_key`` separates
    the random streams of different scan points.
    """
    sequence = document.sequence()
    if times is None:
        times = [sequence.duration]
    times = [float(t) for t in times]
    shots = document.noise.shots
    n = document.atom_count
    if workers <= 1 or shots < 2:
        counts = _simulate_shots((document, times, tuple(stream_key), 0, shots))
    else:
        edges = np.linspace(0, shots, min(workers, shots) + 1).astype(int)
        jobs = [(document, times, tuple(stream_key), int(a), int(b)) for a, b in zip(edges, edges[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = sum(pool.map(_simulate_shots, jobs))
    return [PopulationTable.from_counts(n, c) for c in counts]


def ideal_populations(document, times: Sequence[float] | None = None) -> list[PopulationTable]:
    """Exact populations with atoms at the trap centers; no RNG consumed."""
    from .evolve import propagate_sequence

    model = document.model()
    sequence = document.sequence()
    if times is None:
        times = [sequence.duration]
    n = model.atom_count
    psi0 = np.zeros(2**n, dtype=complex)
    psi0[0] = 1.0
    traj = propagate_sequence(psi0, sequence, model, sample_times=times)
    out = []
    for t in times:
        psi = _nearest(traj, t)
        p = np.abs(psi) ** 2
        out.append(PopulationTable(n, p / p.sum()))
    return out

