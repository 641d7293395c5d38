import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from kerrcat.evolve import (
    IntegrationDivergedError,
    evolve_lindblad,
    evolve_unitary,
    fidelity,
    gate_unitary_reference,
    load_state_txt,
    phase_maximized_bell_fidelity,
    save_state_txt,
)
from kerrcat.fockspace import (
    MHZ,
    QuantumState,
    fock,
    identity,
    kpo_eigen_cats,
    parity,
    superposition,
    tensor,
    thermal_state,
)
from kerrcat.model import SystemParams, build_hamiltonian, drives_from_schedule
from kerrcat.pulses import PulseSchedule, Segment, preset_schedule


def _hold_schedule(length, amps=(2.0, 2.0), detunings=(1.0, 1.0)):
    """Pumps at constant amplitude/detuning, no ramps."""
    segs = []
    for i, (a, d) in enumerate(zip(amps, detunings)):
        segs.append(
            Segment(
                channel=f"pump{i + 1}",
                t_start=0.0,
                t_end=length,
                kind="square",
                params={"amplitude": a, "rise": 0.0},
                detuning=d,
            )
        )
    return PulseSchedule(tuple(segs))


def _empty_schedule(length):
    # a zero-amplitude pump segment just to span the time axis
    return _hold_schedule(length, amps=(0.0, 0.0), detunings=(0.0, 0.0))


# ---------------------------------------------------------------------------
# analytic references (carrier-free, so the stepper should be near exact)


def test_detuning_phase_rotation_exact():
    # with only a detuning on the diagonal, |1> picks up e^{-i 2 pi delta t}
    N = 6
    params = SystemParams(N1=N, N2=N, g=0.0)
    psi0 = tensor(superposition([fock(0, N), fock(1, N)], [1.0, 1.0]), fock(0, N))
    delta, T = 0.25, 0.5  # quarter turn: phase -pi/4... x t: -2pi*0.25*0.5 = -pi/4
    sched = _hold_schedule(T, amps=(0.0, 0.0), detunings=(delta, 0.0))
    traj = evolve_unitary(psi0, params, sched, dt=0.001)
    fin = traj.final.data.reshape(N, N)
    expect = np.exp(-1j * MHZ * delta * T)
    assert abs(fin[1, 0] / fin[0, 0] - expect) < 1e-12
    assert traj.norm_drift < 1e-13


def test_kerr_phase_exact():
    # Kerr gives |n> a phase e^{+i 2 pi (K/2) n(n-1) t}
    N = 6
    params = SystemParams(N1=N, N2=N, g=0.0, K1=2.0)
    psi0 = tensor(superposition([fock(0, N), fock(2, N)], [1.0, 1.0]), fock(0, N))
    T = 0.33
    traj = evolve_unitary(psi0, params, _empty_schedule(T), dt=0.001)
    fin = traj.final.data.reshape(N, N)
    expect = np.exp(1j * MHZ * (2.0 / 2.0) * 2 * 1 * T)
    assert abs(fin[2, 0] / fin[0, 0] - expect) < 1e-12


def test_amplitude_damping_analytic():
    # populations decay as e^{-t/T1}; Kerr phases do not touch them
    N = 8
    T1, T = 5.0, 1.0
    params = SystemParams(N1=N, N2=N, g=0.0, T1_1=T1, T1_2=T1)
    rho0 = tensor(fock(3, N), fock(0, N)).to_density()
    traj = evolve_lindblad(rho0, params, _empty_schedule(T), dt=0.001)
    n1 = np.arange(N)
    p1 = np.real(np.einsum("abab->a", traj.final.data.reshape(N, N, N, N)))
    mean_n = float(n1 @ p1)
    assert abs(mean_n - 3.0 * np.exp(-T / T1)) < 1e-9
    assert traj.trace_drift < 1e-12


def test_thermal_steady_state_is_stationary():
    N = 10
    nth = 0.15
    params = SystemParams(N1=N, N2=N, g=0.0, K1=1e-9, K2=1e-9,
                          T1_1=2.0, T1_2=2.0, n_th_1=nth, n_th_2=nth)
    rho0 = tensor(thermal_state(nth, N), thermal_state(nth, N))
    traj = evolve_lindblad(rho0, params, _empty_schedule(2.0), dt=0.002)
    # truncated thermal tail makes this inexact at the 1e-6 level for N=10
    assert fidelity(traj.final, rho0) > 1 - 1e-5


def test_lindblad_matches_unitary_when_lossless():
    N = 8
    params = SystemParams(N1=N, N2=N, g=0.0)
    sched = preset_schedule("cat_gen", detuning_offset=0.0, tau_ramp=0.4)
    psi0 = tensor(fock(0, N), fock(0, N))
    tu = evolve_unitary(psi0, params, sched, dt=0.001)
    tl = evolve_lindblad(psi0, params, sched, dt=0.001)
    # the two steppers truncate differently; measured 7.6e-8 apart
    assert fidelity(tl.final, tu.final) > 1 - 1e-6


# ---------------------------------------------------------------------------
# accuracy and stability bounds


def test_carrier_free_accuracy_bounds():
    # g = 0: no carrier, so 1 ns steps resolve only the pump ramps and the
    # dressed Kerr ladder; measured drift 3.4e-7 and direction error 6e-13
    N = 12
    params = SystemParams(N1=N, N2=N, g=0.0)
    sched = preset_schedule("cat_gen", detuning_offset=0.0)
    psi0 = tensor(fock(0, N), fock(0, N))
    a = evolve_unitary(psi0, params, sched, dt=0.001)
    b = evolve_unitary(psi0, params, sched, dt=0.0005)
    assert a.norm_drift < 1e-6 * sched.total_duration
    assert abs(fidelity(a.final, b.final) - 1.0) < 1e-10


def test_carrier_on_norm_drift_bound():
    # measured 2.5e-3 at the working point with dt = 1 ns
    N = 12
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen")
    psi0 = tensor(fock(0, N), fock(0, N))
    traj = evolve_unitary(psi0, params, sched, dt=0.001)
    assert traj.norm_drift < 5e-3


def test_carrier_step_halving_converges():
    N = 10
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen", tau_ramp=0.3, hold=0.0)
    psi0 = tensor(fock(0, N), fock(0, N))
    f = {}
    for dt in (0.001, 0.0005, 0.00025):
        f[dt] = evolve_unitary(psi0, params, sched, dt=dt).final
    e1 = 1.0 - fidelity(f[0.001], f[0.00025])
    e2 = 1.0 - fidelity(f[0.0005], f[0.00025])
    assert e2 < e1 / 8  # at least cubic-order gain per halving
    assert e1 < 1e-5


def test_coarse_steps_substep_instead_of_diverging():
    # 2 ns against the 144 MHz carrier is outside plain RK4 stability;
    # the stepper subdivides internally and must agree with dt = 1 ns
    N = 10
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen", tau_ramp=0.3)
    psi0 = tensor(fock(0, N), fock(0, N))
    a = evolve_unitary(psi0, params, sched, dt=0.002)
    b = evolve_unitary(psi0, params, sched, dt=0.001)
    # the internal substep grids coincide, so agreement is near machine
    assert abs(fidelity(a.final, b.final) - 1.0) < 1e-12


def test_divergence_is_reported():
    # an absurd pump amplitude overwhelms any fixed step
    N = 12
    params = SystemParams(N1=N, N2=N, g=0.0)
    sched = _hold_schedule(0.5, amps=(5e4, 0.0), detunings=(0.0, 0.0))
    psi0 = tensor(fock(0, N), fock(0, N))
    with pytest.raises(IntegrationDivergedError) as exc:
        evolve_unitary(psi0, params, sched, dt=0.001)
    assert 0.0 < exc.value.t <= 0.5


def test_lindblad_trace_and_positivity_bounds():
    N = 10
    params = SystemParams(N1=N, N2=N, T1_1=20.0, T1_2=20.0, n_th_1=0.01, n_th_2=0.01)
    sched = preset_schedule("cat_gen", tau_ramp=0.5, hold=0.25)
    rho0 = tensor(thermal_state(0.01, N), thermal_state(0.01, N))
    # fast 0.5 us ramp against the carrier; measured -1.1e-4 of truncation,
    # just past the monitor's warning threshold
    with pytest.warns(UserWarning, match="eigenvalue"):
        traj = evolve_lindblad(rho0, params, sched, dt=0.001)
    assert traj.trace_drift < 1e-9
    assert traj.min_eigenvalue > -5e-4


def test_lindblad_positivity_tight_without_carrier():
    N = 10
    params = SystemParams(N1=N, N2=N, g=0.0, T1_1=20.0, T1_2=20.0)
    sched = preset_schedule("cat_gen", detuning_offset=0.0, tau_ramp=0.5)
    rho0 = tensor(fock(0, N), fock(0, N)).to_density()
    traj = evolve_lindblad(rho0, params, sched, dt=0.001)
    assert traj.trace_drift < 1e-10
    assert traj.min_eigenvalue > -3e-6


def test_against_adaptive_reference_integrator():
    # full working point (carrier on, both pumps ramping) vs DOP853 on
    # the dense Hamiltonian
    N = 6
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen", tau_ramp=0.12)
    psi0 = tensor(fock(0, N), fock(0, N))
    traj = evolve_unitary(psi0, params, sched, dt=0.0005)

    drives = drives_from_schedule(sched)

    def rhs(t, y):
        h = build_hamiltonian(params, drives, t)
        return -1j * (h.data @ y)

    ref = solve_ivp(rhs, (0.0, sched.total_duration), psi0.data.astype(complex),
                    method="DOP853", rtol=1e-10, atol=1e-12)
    err = np.linalg.norm(traj.final.data - ref.y[:, -1])
    assert err < 1e-4


# ---------------------------------------------------------------------------
# structural invariants


def test_joint_parity_is_conserved():
    # every term moves photons in pairs or swaps one between modes, so
    # (-1)^(n1+n2) never changes
    N = 10
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen", tau_ramp=0.4)
    psi0 = tensor(superposition([fock(0, N), fock(2, N)], [1.0, 0.5]), fock(1, N))
    pp = tensor(parity(N), parity(N))
    samp = np.linspace(0, sched.total_duration, 9)
    traj = evolve_unitary(psi0, params, sched, dt=0.001,
                          sample_times=samp, observables={"PP": pp})
    vals = traj.observables["PP"].real
    # conserved exactly: the stepper's error polynomial is parity-even too
    assert np.abs(vals - vals[0]).max() < 1e-9


def test_gate_parities_anticorrelate():
    N = 12
    params = SystemParams(N1=N, N2=N)
    psi0 = tensor(fock(0, N), fock(1, N))
    sched = preset_schedule("two_cat_gate", gate_length=0.3, tau_ramp=0.5)
    p1 = tensor(parity(N), identity(N))
    p2 = tensor(identity(N), parity(N))
    samp = np.round(np.arange(0.5, 0.8 + 1e-12, 0.05), 12)
    traj = evolve_unitary(psi0, params, sched, dt=0.001,
                          sample_times=samp, observables={"P1": p1, "P2": p2})
    s = traj.observables["P1"].real + traj.observables["P2"].real
    assert np.abs(s - s[0]).max() < 1e-6


def test_deterministic_replay():
    N = 8
    params = SystemParams(N1=N, N2=N)
    sched = preset_schedule("cat_gen", tau_ramp=0.2)
    psi0 = tensor(fock(0, N), fock(0, N))
    a = evolve_unitary(psi0, params, sched, dt=0.001)
    b = evolve_unitary(psi0, params, sched, dt=0.001)
    assert np.array_equal(a.final.data, b.final.data)


def test_sample_times_and_observables():
    N = 6
    params = SystemParams(N1=N, N2=N, g=0.0)
    sched = _hold_schedule(1.0, amps=(0.0, 0.0), detunings=(0.5, 0.0))
    psi0 = tensor(superposition([fock(0, N), fock(1, N)], [1.0, 1.0]), fock(0, N))
    from kerrcat.fockspace import number

    op = tensor(number(N), identity(N))
    samp = [0.0, 0.25, 0.5, 0.75, 1.0]
    traj = evolve_unitary(psi0, params, sched, dt=0.001,
                          sample_times=samp, observables={"n1": op})
    assert np.allclose(traj.times, samp)
    assert np.allclose(traj.observables["n1"].real, 0.5, atol=1e-12)
    assert len(traj.states) == len(samp)


def test_trajectory_csv(tmp_path):
    N = 6
    params = SystemParams(N1=N, N2=N, g=0.0)
    sched = _empty_schedule(0.2)
    psi0 = tensor(fock(1, N), fock(0, N))
    from kerrcat.fockspace import number

    op = tensor(number(N), identity(N))
    traj = evolve_unitary(psi0, params, sched, dt=0.001,
                          sample_times=[0.0, 0.1, 0.2], observables={"n1": op})
    path = tmp_path / "tr.csv"
    traj.to_csv(path)
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "t_us,n1"
    assert len(rows) == 4


# ---------------------------------------------------------------------------
# fidelities and the gate reference


def test_fidelity_cases():
    N = 8
    cats = kpo_eigen_cats(2.0, 2.0, 1.0, N)
    u = tensor(cats.even, cats.odd)
    v = tensor(cats.odd, cats.even)
    assert abs(fidelity(u, u) - 1.0) < 1e-14
    assert fidelity(u, v) < 1e-20
    mix = QuantumState(
        (N, N),
        0.5 * (np.outer(u.data, u.data.conj()) + np.outer(v.data, v.data.conj())),
        kind="density",
    )
    assert abs(fidelity(mix, u) - 0.5) < 1e-12
    bell = superposition([u, v], [1.0, 1j])
    assert abs(fidelity(mix, bell) - 0.5) < 1e-12


def test_phase_maximized_bell_fidelity():
    N = 8
    cats = kpo_eigen_cats(2.0, 2.0, 1.0, N)
    u = tensor(cats.even, cats.odd)
    v = tensor(cats.odd, cats.even)
    for beta in (0.0, 0.7, -2.1):
        s = superposition([u, v], [1.0, np.exp(1j * beta)])
        assert abs(phase_maximized_bell_fidelity(s, u, v) - 1.0) < 1e-12
    mix = QuantumState(
        (N, N),
        0.5 * (np.outer(u.data, u.data.conj()) + np.outer(v.data, v.data.conj())),
        kind="density",
    )
    assert abs(phase_maximized_bell_fidelity(mix, u, v) - 0.5) < 1e-12


def test_gate_reference_unitary_and_square():
    g = gate_unitary_reference()
    u = g.data
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-15)
    sq = u @ u
    # middle block is the iSWAP exchange, corners stay put up to phase
    assert abs(sq[1, 2] - 1j) < 1e-14
    assert abs(sq[2, 1] - 1j) < 1e-14
    assert abs(sq[1, 1]) < 1e-14
    assert abs(sq[2, 2]) < 1e-14


def test_gate_reference_is_expm_xx():
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    ref = expm(1j * (np.pi / 4) * np.kron(x, x))
    u = gate_unitary_reference().data
    phase = ref[0, 0] / u[0, 0]
    assert abs(abs(phase) - 1.0) < 1e-12
    assert np.allclose(u * phase, ref, atol=1e-12)


def test_state_txt_roundtrip(tmp_path):
    N = 5
    s = tensor(superposition([fock(0, N), fock(3, N)], [1.0, 1j * 0.4]), fock(1, N))
    p = tmp_path / "state.txt"
    save_state_txt(s, p)
    r = load_state_txt(p)
    assert r.kind == "ket"
    assert r.dims == (N, N)
    assert np.allclose(r.data, s.data, atol=1e-15)
    rho = s.to_density()
    save_state_txt(rho, p)
    r2 = load_state_txt(p)
    assert r2.kind == "density"
    assert np.allclose(r2.data, rho.data, atol=1e-15)
