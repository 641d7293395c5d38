import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrcat.fockspace import MHZ, parity, tensor
from kerrcat.model import (
    ConfigurationError,
    DriveSpec,
    SystemParams,
    build_hamiltonian,
    collapse_operators,
    dressed_bell_detunings,
)


def small(**kw):
    kw.setdefault("N1", 6)
    kw.setdefault("N2", 6)
    return SystemParams(**kw)


def test_param_validation():
    with pytest.raises(ConfigurationError):
        SystemParams(K1=0.0)
    with pytest.raises(ConfigurationError):
        SystemParams(T1_1=-1.0)
    with pytest.raises(ConfigurationError):
        SystemParams(n_th_2=-0.1)
    with pytest.raises(ConfigurationError):
        SystemParams(N1=3)


def test_default_working_point():
    p = SystemParams()
    assert (p.K1, p.K2) == (2.0, 2.0)
    assert (p.Delta1, p.Delta2) == (1.0, 1.0)
    assert p.g == 8.0
    assert p.Delta_p == 144.0
    assert p.dims == (20, 20)


def test_kerr_diagonal_value():
    # with everything else off, <2,0|H|2,0> = -(K1/2) * 2 * 2pi
    p = small(g=0.0)
    h = build_hamiltonian(p, [], 0.0)
    idx = 2 * p.N2 + 0
    assert abs(h.data[idx, idx] - (-MHZ * p.K1)) < 1e-12
    # and the Kerr term alone leaves |0> and |1> unshifted
    assert abs(h.data[0, 0]) < 1e-12
    assert abs(h.data[1 * p.N2, 1 * p.N2] - 0.0) < 1e-12


def test_parity_commutes_with_pump_only_hamiltonian():
    p = small()
    drives = [
        DriveSpec("pump1", 2.0, detuning=1.0),
        DriveSpec("pump2", 2.0, detuning=1.0),
    ]
    pi12 = tensor(parity(p.N1), parity(p.N2)).data
    for t in (0.0, 0.173, 1.9):
        h = build_hamiltonian(p, drives, t).data
        assert np.abs(h @ pi12 - pi12 @ h).max() < 1e-12


def test_single_photon_drives_break_single_mode_parity():
    p = small()
    drives = [DriveSpec("bell_diff", 0.4, detuning=0.9)]
    h = build_hamiltonian(p, drives, 0.3).data
    pi12 = tensor(parity(p.N1), parity(p.N2)).data
    assert np.abs(h @ pi12 - pi12 @ h).max() < 1e-12  # total excitation preserved mod 2
    pi1 = tensor(parity(p.N1), parity(p.N2).dag() @ parity(p.N2)).data  # parity x identity
    assert np.abs(h @ pi1 - pi1 @ h).max() > 1.0


def test_excitation_selection_rules():
    p = small()
    n1, n2 = p.dims
    h0 = build_hamiltonian(p, [], 0.0).data
    for channel, delta_total in (("bell_diff", 0), ("gate", 0), ("bell_sum", 2)):
        h = build_hamiltonian(p, [DriveSpec(channel, 1.0)], 0.0).data - h0
        tot = np.repeat(np.arange(n1), n2) + np.tile(np.arange(n2), n1)
        rows, cols = np.nonzero(np.abs(h) > 1e-12)
        assert len(rows) > 0
        assert np.all(np.abs(tot[rows] - tot[cols]) == delta_total)


def test_gate_amplitude_is_the_coupling_sideband():
    # the gate tone modulates the pump splitting; its leading effect is a
    # beam-splitter term of amplitude g * g_g / Delta_p, not g_g itself
    full = SystemParams(N1=6, N2=6)
    hg = build_hamiltonian(full, [DriveSpec("gate", 2.96)], 0.0).data
    hg0 = build_hamiltonian(full, [], 0.0).data
    elem = (hg - hg0)[1 * 6 + 0, 0 * 6 + 1]  # <1,0| drive |0,1>, the a1^dag a2 side
    expect = MHZ * full.g * 2.96 / full.Delta_p
    assert abs(elem - expect) < 1e-12
    # and with g = 0 there is no sideband to modulate
    p0 = small(g=0.0)
    h = build_hamiltonian(p0, [DriveSpec("gate", 2.96)], 0.0).data
    h0 = build_hamiltonian(p0, [], 0.0).data
    assert np.abs(h - h0).max() < 1e-14


def test_gate_needs_pump_split():
    p = small(Delta_p=0.0)
    with pytest.raises(ConfigurationError):
        build_hamiltonian(p, [DriveSpec("gate", 1.0)], 0.0)


def test_static_coupling_rotates_at_pump_split():
    p = small()
    t = 0.0137
    h = build_hamiltonian(p, [], t).data
    elem = h[1 * p.N2 + 0, 0 * p.N2 + 1]  # <1,0| a1^dag a2 |0,1>
    assert abs(elem - MHZ * p.g * np.exp(1j * MHZ * p.Delta_p * t)) < 1e-10


def test_bell_sum_ac_offset_shifts_detuning():
    p = small()
    t = 0.21
    h_a = build_hamiltonian(p, [DriveSpec("bell_sum", 1.0, detuning=2.0, ac_offset=0.0)], t).data
    h_b = build_hamiltonian(p, [DriveSpec("bell_sum", 1.0, detuning=23.0, ac_offset=21.0)], t).data
    assert np.abs(h_a - h_b).max() < 1e-10


def test_unknown_channel_rejected():
    with pytest.raises(ConfigurationError):
        DriveSpec("pump3", 1.0)


@settings(max_examples=20, deadline=None)
@given(
    st.floats(0.1, 5.0),
    st.floats(0.0, 4.0),
    st.floats(-3.0, 3.0),
    st.floats(0.0, 10.0),
)
def test_hamiltonian_hermitian_for_random_draws(k, pump, det, t):
    p = SystemParams(K1=k, K2=k, N1=5, N2=5)
    drives = [
        DriveSpec("pump1", pump, detuning=det),
        DriveSpec("bell_sum", 0.7, detuning=det, phase=1.1),
        DriveSpec("gate", 1.3, detuning=det, phase=0.2),
        DriveSpec("x_drive2", 0.5, phase=0.4),
    ]
    h = build_hamiltonian(p, drives, t).data
    assert np.abs(h - h.conj().T).max() < 1e-12


# --- collapse operators -------------------------------------------------------

def test_collapse_empty_when_lossless():
    assert collapse_operators(small()) == []


def test_collapse_single_photon_loss_rate():
    p = small(T1_1=10.0, T1_2=10.0)
    ops = collapse_operators(p)
    assert len(ops) == 2
    a1 = ops[0].data
    # sqrt(0.1) * a_1: check one matrix element
    assert abs(a1[0 * p.N2 + 3, 1 * p.N2 + 3] - np.sqrt(0.1) * 1.0) < 1e-12


def test_collapse_detailed_balance_ratio():
    p = small(T1_1=100.0, n_th_1=0.01)
    ops = collapse_operators(p)
    down, up = ops[0].data, ops[1].data
    r_down = np.abs(down).max() ** 2  # largest element of sqrt(rate) a
    r_up = np.abs(up).max() ** 2
    assert abs(r_up / r_down - 0.01 / 1.01) < 1e-12


def test_collapse_dephasing_toggle():
    p = small(gamma_phi_1=0.05)
    assert len(collapse_operators(p)) == 1
    assert len(collapse_operators(p, include_dephasing=False)) == 0
    deph = collapse_operators(p)[0].data
    n1 = 2
    assert abs(deph[n1 * p.N2, n1 * p.N2] - np.sqrt(2 * 0.05) * n1) < 1e-12


# --- dressed resonances -------------------------------------------------------

def test_dressed_bell_detunings_frozen():
    d = dressed_bell_detunings(SystemParams(N1=8, N2=8))
    assert abs(d["bell_diff"] - 0.8861622101986768) < 1e-9
    assert abs(d["bell_sum"] - (-0.0243947795932229)) < 1e-9
    # perturbative scale of the exchange shift is 2 g^2 / Delta_p
    assert abs(d["bell_diff"] - 2 * 8.0**2 / 144.0) < 5e-3


def test_dressed_detunings_vanish_without_coupling():
    d = dressed_bell_detunings(SystemParams(N1=6, N2=6, g=0.0))
    assert abs(d["bell_diff"]) < 1e-12
    assert abs(d["bell_sum"]) < 1e-12
