import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kron_hamiltonian, rk4_evolve, rk4_trajectory
from rydsim.evolve import (
    SegmentHamiltonian,
    build_segment,
    effective_detunings,
    evolve_segment,
    hamiltonian_matrix,
    propagate,
    run_sequence,
)
from rydsim.hilbert import ContractError, QuantumState, populations
from rydsim.model import (
    AddressingBeam,
    AtomGeometry,
    ExperimentModel,
    GlobalDrive,
    RydbergLevel,
    effective_wavevector,
)
from rydsim.noise import ideal_populations
from rydsim.pulses import AddressItem, DriveItem, PulseSequence, ScheduleError

TWO_PI = 2 * math.pi
K = effective_wavevector(0.795, 0.474)
PAIR = ExperimentModel(AtomGeometry(((0, 0, 0), (3, 0, 0))), RydbergLevel.preset("59D3/2"))
T_COLLECTIVE_PI = 1 / (2 * math.sqrt(2))


def single_atom_model():
    return ExperimentModel(AtomGeometry(((0, 0, 0),)), RydbergLevel.preset("59D3/2"))


def test_single_atom_structure():
    H = build_segment(single_atom_model(), [GlobalDrive(1.0)], []).matrix
    assert np.allclose(np.diag(H), 0.0)
    assert abs(H[1, 0]) == pytest.approx(TWO_PI * 0.5)
    assert H[0, 1] == pytest.approx(np.conj(H[1, 0]))


def test_pair_interaction_diagonal():
    H = build_segment(PAIR, [], []).matrix
    assert H[3, 3].real == pytest.approx(TWO_PI * 300.0, rel=1e-12)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def test_addressing_effective_detunings():
    beam = AddressingBeam((3, 0, 0), 10.0, 1.3)
    delta = effective_detunings(0.25, [beam], PAIR.geometry.as_array())
    assert delta[1] == pytest.approx(0.25 - 10.0)
    assert delta[0] == pytest.approx(0.25 - 10 * math.exp(-2 * (3 / 1.3) ** 2), rel=1e-12)
    assert 0.25 - delta[0] == pytest.approx(2.4e-4, rel=0.02)


def test_no_beams_leaves_laser_detuning():
    delta = effective_detunings(-1.5, [], np.zeros((3, 3)) + np.arange(3)[:, None])
    assert np.all(delta == -1.5)


def _random_model(rng, n):
    pos = rng.uniform(-4, 4, size=(n, 3))
    level = RydbergLevel("rand", rng.uniform(50, 5000))
    model = ExperimentModel(AtomGeometry(tuple(map(tuple, pos))), level)
    drive = GlobalDrive(rng.uniform(0, 3), rng.uniform(-3, 3), tuple(rng.normal(size=3) * 5), rng.uniform(0, 6))
    beams = [AddressingBeam(tuple(rng.uniform(-4, 4, 3)), rng.uniform(0, 10), rng.uniform(0.5, 3))]
    return model, drive, beams, pos


@pytest.mark.parametrize("seed", range(10))
def test_hamiltonian_matches_tensor_product_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    model, drive, beams, pos = _random_model(rng, n)
    frozen = rng.random(n) < 0.3
    H = hamiltonian_matrix(model, drive, beams, pos, frozen)
    from rydsim.model import light_shift_at

    shifts = [light_shift_at(beams[0], p) for p in pos]
    ref = kron_hamiltonian(pos, model.level.c6, drive.rabi, drive.detuning, drive.wavevector, drive.phase, shifts, frozen)
    assert np.allclose(H, ref, atol=1e-9, rtol=1e-12)


def test_hermiticity_and_rejection():
    rng = np.random.default_rng(3)
    model, drive, beams, pos = _random_model(rng, 3)
    seg = build_segment(model, [drive], beams, pos, 0.1)
    H = seg.matrix
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * np.max(np.abs(H))
    bad = H.copy()
    bad[0, 1] += 1.0
    with pytest.raises(ContractError):
        evolve_segment(QuantumState.ground(3), SegmentHamiltonian(bad, 0.1))


def test_two_drives_in_one_segment_rejected():
    with pytest.raises(ScheduleError):
        build_segment(PAIR, [GlobalDrive(1.0), GlobalDrive(1.0)], [])


def test_zero_duration_is_identity():
    s = QuantumState.from_labels({"gg": 1, "gr": 1j, "rr": -0.5})
    seg = build_segment(PAIR, [GlobalDrive(1.0, 0.3, K)], [], duration=0.0)
    assert np.array_equal(evolve_segment(s, seg).amplitudes, s.amplitudes)


def test_single_atom_pi_pulse():
    seg = build_segment(single_atom_model(), [GlobalDrive(1.0)], [], duration=0.5)
    out = evolve_segment(QuantumState.ground(1), seg)
    assert populations(out)["r"] == pytest.approx(1.0, abs=1e-9)


def test_collective_pi_pulse_in_blockade():
    seg = build_segment(PAIR, [GlobalDrive(1.0, 0.0, K)], [], duration=T_COLLECTIVE_PI)
    p = populations(evolve_segment(QuantumState.ground(2), seg))
    assert p["gr"] + p["rg"] >= 0.999
    assert p["rr"] <= 1e-3


def test_collective_pi_pulse_against_rk4_oracle():
    seg = build_segment(PAIR, [GlobalDrive(1.0, 0.0, K)], [], duration=T_COLLECTIVE_PI)
    psi0 = QuantumState.ground(2).amplitudes
    ref = rk4_evolve(seg.matrix, psi0, T_COLLECTIVE_PI)
    assert abs(ref[1]) ** 2 + abs(ref[2]) ** 2 >= 0.999
    assert abs(ref[3]) ** 2 <= 1e-3
    assert np.max(np.abs(propagate(seg.matrix, T_COLLECTIVE_PI, psi0) - ref)) < 1e-8


def test_blockade_threshold_certified_by_oracle():
    # max P_rr over a 2 us drive, fine-step integrator only
    H = kron_hamiltonian(PAIR.geometry.as_array(), PAIR.level.c6, 1.0, 0.0, K)
    times = np.linspace(0.01, 2.0, 200)
    states = rk4_trajectory(H, QuantumState.ground(2).amplitudes, times)
    p_rr = max(abs(s[3]) ** 2 for s in states)
    assert p_rr < 1e-3


def phase_sequence(shift, T, rabi=1.0):
    tp = 1 / (2 * math.sqrt(2) * rabi)
    drive = GlobalDrive(rabi, 0.0, K)
    beam = AddressingBeam((3, 0, 0), shift, 1.3)
    items = [DriveItem(0.0, tp, drive, "excite")]
    if T > 0:
        items.append(AddressItem(tp, T, beam, "beam"))
    items.append(DriveItem(tp + T, tp, drive, "deexcite"))
    return PulseSequence.of(items)


def test_empty_sequence_trajectory():
    s0 = QuantumState.ground(2)
    traj = run_sequence(s0, PulseSequence(), PAIR)
    assert len(traj) == 1 and traj[0][0] == 0.0
    assert np.array_equal(traj[0][1].amplitudes, s0.amplitudes)


def test_dark_state_at_t_pi():
    traj = run_sequence(QuantumState.ground(2), phase_sequence(10.0, 0.05), PAIR)
    assert populations(traj[-1][1])["gg"] < 1e-3


def test_full_phase_cycle_returns_to_ground():
    traj = run_sequence(QuantumState.ground(2), phase_sequence(10.0, 0.1), PAIR)
    assert populations(traj[-1][1])["gg"] > 0.999


def test_trajectory_boundaries_include_sample_times():
    seq = phase_sequence(10.0, 0.05)
    traj = run_sequence(QuantumState.ground(2), seq, PAIR, sample_times=[0.1, 0.5])
    times = [t for t, _ in traj]
    expected = sorted({0.0, 0.1, 0.5} | set(seq.boundaries()))
    assert times == pytest.approx(expected)


def test_sample_time_out_of_range():
    with pytest.raises(ScheduleError):
        run_sequence(QuantumState.ground(2), phase_sequence(10.0, 0.05), PAIR, sample_times=[5.0])


def test_overlapping_drives_rejected():
    d = GlobalDrive(1.0)
    with pytest.raises(ScheduleError):
        PulseSequence.of([DriveItem(0, 1, d, "a"), DriveItem(0.5, 1, d, "b")])


def test_sample_inside_segment_matches_split():
    # sampling mid-pulse must not change the end state
    seq = phase_sequence(10.0, 0.05)
    a = run_sequence(QuantumState.ground(2), seq, PAIR)[-1][1]
    b = run_sequence(QuantumState.ground(2), seq, PAIR, sample_times=[0.123, 0.4])[-1][1]
    assert np.allclose(a.amplitudes, b.amplitudes, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_unitarity_over_chained_segments(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    model, _, _, pos = _random_model(rng, n)
    psi = QuantumState.ground(n).amplitudes
    for _ in range(40):
        _, drive, beams, _ = _random_model(rng, n)
        psi = propagate(hamiltonian_matrix(model, drive, beams, pos), rng.uniform(0, 2), psi)
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-9


def test_phase_law_pointwise():
    shift = 10.0
    Ts = np.linspace(0, 3 / shift, 31)
    p = [ideal_populations_for(shift, T) for T in Ts]
    expected = (1 + np.cos(TWO_PI * shift * Ts)) / 2
    assert np.max(np.abs(np.array(p) - expected)) < 2e-3


def ideal_populations_for(shift, T):
    traj = run_sequence(QuantumState.ground(2), phase_sequence(shift, T), PAIR)
    return populations(traj[-1][1])["gg"]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.0, 0.3))
def test_frequency_time_scaling_invariance(scale, T):
    """Frequencies x s and durations / s leave populations unchanged."""
    from rydsim.ryx import parse

    base = """
[atoms]
positions_um = (0, 0, 0); (3, 0, 0)
level = custom
c6_mhz_um6 = {c6}
[drive]
duration_us = {tp}
rabi_mhz = {rabi}
detuning_mhz = {det}
[address]
duration_us = {T}
peak_shift_mhz = {shift}
waist_um = 1.3
center_um = (3, 0, 0)
[drive]
duration_us = {tp}
rabi_mhz = {rabi}
detuning_mhz = {det}
"""

    def doc(s):
        return parse(base.format(c6=218700.0 * s, tp=0.35 / s, rabi=1.0 * s, det=0.2 * s, T=(T + 0.01) / s, shift=7.0 * s))

    a = ideal_populations(doc(1.0))[0].probabilities
    b = ideal_populations(doc(scale))[0].probabilities
    assert np.allclose(a, b, atol=1e-9)
