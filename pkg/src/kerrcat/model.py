"""System parameters and Hamiltonian assembly for two coupled KPOs.

The rotating-frame Hamiltonian implemented here is

    H(t) = sum_i [ Delta_i(t) a_i^dag a_i - (K_i/2) a_i^dag^2 a_i^2
                   + (P_i(t)/2) (a_i^dag^2 + a_i^2) ]
           + g (a_1^dag a_2 e^{+i delta_p t} + h.c.)

with delta_p = 2*pi*Delta_p, plus the parametric drive terms listed in
build_hamiltonian.  All parameters are entered in plain MHz and converted
to angular rates (rad/us) internally; times are microseconds.

Mode 1 is the higher-frequency KPO; Delta_p is half the pump frequency
difference, so the static coupling rotates at the full splitting of the
two Kerr resonators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .fockspace import MHZ, Operator

__all__ = [
    "SystemParams",
    "DriveSpec",
    "ConfigurationError",
    "ScheduleError",
    "build_hamiltonian",
    "collapse_operators",
    "drives_from_schedule",
    "dressed_bell_detunings",
]

DRIVE_CHANNELS = ("pump1", "pump2", "bell_sum", "bell_diff", "gate", "x_drive1", "x_drive2")


class ConfigurationError(ValueError):
    """Raised for unknown channels, bad presets and malformed config."""


class ScheduleError(ValueError):
    """Raised when an envelope cannot be evaluated at the requested time."""


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the two-KPO device.

    Defaults are the working point used throughout: K = 2 MHz on both
    modes, pump detuning target 1 MHz, static coupling g = 8 MHz, and
    pump-frequency half-splitting Delta_p = 144 MHz (the 144 MHz mode
    splitting is what makes the coupling far off-resonant, a factor of
    18 above g).  Loss channels default to off.
    """

    Delta1: float = 1.0      # MHz, pump detuning target of mode 1
    Delta2: float = 1.0      # MHz
    K1: float = 2.0          # MHz, self-Kerr
    K2: float = 2.0          # MHz
    g: float = 8.0           # MHz, static beam-splitter coupling
    Delta_p: float = 144.0   # MHz, half pump-frequency difference
    T1_1: float = math.inf   # us
    T1_2: float = math.inf   # us
    n_th_1: float = 0.0
    n_th_2: float = 0.0
    gamma_phi_1: float = 0.0  # MHz (1/us), pure dephasing
    gamma_phi_2: float = 0.0  # MHz
    N1: int = 20
    N2: int = 20

    def __post_init__(self):
        if self.K1 <= 0 or self.K2 <= 0:
            raise ConfigurationError("Kerr coefficients must be positive")
        if self.T1_1 <= 0 or self.T1_2 <= 0:
            raise ConfigurationError("T1 must be positive (math.inf for lossless)")
        if self.n_th_1 < 0 or self.n_th_2 < 0:
            raise ConfigurationError("thermal occupations must be nonnegative")
        if self.gamma_phi_1 < 0 or self.gamma_phi_2 < 0:
            raise ConfigurationError("dephasing rates must be nonnegative")
        if self.N1 < 4 or self.N2 < 4:
            raise ConfigurationError("truncations must be at least 4")

    @property
    def dims(self) -> tuple:
        return (self.N1, self.N2)

    def with_(self, **kw) -> "SystemParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class DriveSpec:
    """One active drive term.

    amplitude_envelope is either a plain number (constant MHz), a callable
    t -> MHz, or a schedule segment (anything with .amplitude(t)).  The
    detuning field is the rotating-factor detuning for bell/gate/x drives;
    for pump channels it is the pump-detuning target Delta_i, following
    the segment's chirp profile when the envelope is a ramp segment.
    ac_offset shifts the bell_sum detuning only (a calibration offset,
    default 0 in this effective model).
    """

    channel: str
    amplitude_envelope: object
    detuning: float = 0.0
    phase: float = 0.0
    ac_offset: float = 0.0

    def __post_init__(self):
        if self.channel not in DRIVE_CHANNELS:
            raise ConfigurationError(f"unknown drive channel {self.channel!r}")

    def amplitude(self, t: float) -> float:
        env = self.amplitude_envelope
        if hasattr(env, "amplitude"):
            value = env.amplitude(t)
        elif callable(env):
            value = env(t)
        else:
            value = float(env)
        if value is None or not np.isfinite(value):
            raise ScheduleError(f"envelope on {self.channel} undefined at t = {t}")
        return value

    def pump_detuning(self, t: float) -> float:
        """Delta_i(t) contributed by a pump-channel drive."""
        env = self.amplitude_envelope
        if hasattr(env, "pump_detuning"):
            return env.pump_detuning(t)
        # constant-envelope pump: detuning held at the target
        return self.detuning


@lru_cache(maxsize=8)
def _joint_ops(dims: tuple):
    """Dense joint-space building blocks, cached per truncation."""
    n1, n2 = dims
    a = np.diag(np.sqrt(np.arange(1.0, n1)), 1)
    b = np.diag(np.sqrt(np.arange(1.0, n2)), 1)
    a1 = np.kron(a, np.eye(n2))
    a2 = np.kron(np.eye(n1), b)
    num1 = np.repeat(np.arange(n1, dtype=float), n2)
    num2 = np.tile(np.arange(n2, dtype=float), n1)
    return {
        "a1": a1,
        "a2": a2,
        "n1": num1,
        "n2": num2,
        "kerr1": num1 * (num1 - 1.0),   # <n|a^dag^2 a^2|n> = n(n-1)
        "kerr2": num2 * (num2 - 1.0),
        "pump1_up": a1.conj().T @ a1.conj().T,
        "pump2_up": a2.conj().T @ a2.conj().T,
        "hop_up": a1.conj().T @ a2,      # a1^dag a2
        "sum_up": a1.conj().T @ a2.conj().T,
        "x1_up": a1.conj().T,
        "x2_up": a2.conj().T,
    }


def _drive_coefficient(params: SystemParams, drive: DriveSpec, t: float):
    """(raising matrix key, complex coefficient in rad/us) for one drive at t.

    Pump channels are handled separately (real coefficient on a_i^dag^2),
    and the gate term uses the effective first-sideband amplitude: the
    gate tone modulates the pump frequency difference, and the leading
    effect on the static coupling (rotating at delta_p) is a sideband of
    amplitude g * g_g / Delta_p.  This conversion reproduces the observed
    exchange period; the raw g_g would overstate the rate by Delta_p/g.
    """
    amp = drive.amplitude(t)
    ch = drive.channel
    if ch == "pump1":
        return "pump1_up", MHZ * amp / 2.0
    if ch == "pump2":
        return "pump2_up", MHZ * amp / 2.0
    if ch == "bell_sum":
        delta = drive.detuning - drive.ac_offset
        return "sum_up", MHZ * amp / 2.0 * np.exp(-1j * (MHZ * delta * t + drive.phase))
    if ch == "bell_diff":
        return "hop_up", MHZ * amp / 2.0 * np.exp(-1j * (MHZ * drive.detuning * t + drive.phase))
    if ch == "gate":
        if params.Delta_p == 0:
            raise ConfigurationError("gate drive requires a nonzero Delta_p")
        eff = params.g * amp / params.Delta_p
        return "hop_up", MHZ * eff * np.exp(-1j * (MHZ * drive.detuning * t + drive.phase))
    if ch == "x_drive1":
        return "x1_up", MHZ * amp / 2.0 * np.exp(-1j * (MHZ * drive.detuning * t + drive.phase))
    if ch == "x_drive2":
        return "x2_up", MHZ * amp / 2.0 * np.exp(-1j * (MHZ * drive.detuning * t + drive.phase))
    raise ConfigurationError(f"unknown drive channel {ch!r}")


def build_hamiltonian(params: SystemParams, drives, t: float) -> Operator:
    """Assemble H(t) in rad/us as a dense Hermitian Operator.

    The static coupling term g (a1^dag a2 e^{+i delta_p t} + h.c.) is
    always present.  Pump detunings Delta_i(t) enter the diagonal only
    through active pump drives; with no pump drive the frame is the bare
    Kerr frame and the diagonal holds only the Kerr terms.
    """
    ops = _joint_ops(params.dims)
    d = params.N1 * params.N2

    delta1 = sum(dr.pump_detuning(t) for dr in drives if dr.channel == "pump1")
    delta2 = sum(dr.pump_detuning(t) for dr in drives if dr.channel == "pump2")
    diag = MHZ * (
        delta1 * ops["n1"]
        + delta2 * ops["n2"]
        - params.K1 / 2.0 * ops["kerr1"]
        - params.K2 / 2.0 * ops["kerr2"]
    )

    upper = np.zeros((d, d), dtype=complex)
    if params.g != 0.0:
        upper += (MHZ * params.g * np.exp(1j * MHZ * params.Delta_p * t)) * ops["hop_up"]
    for dr in drives:
        key, coeff = _drive_coefficient(params, dr, t)
        if coeff != 0.0:
            upper += coeff * ops[key]

    h = upper + upper.conj().T
    h[np.diag_indices(d)] += diag
    return Operator(params.dims, h, hermitian=True)


def collapse_operators(params: SystemParams, include_dephasing: bool = True):
    """Lindblad collapse operators on the joint space.

    Per mode: sqrt(kappa (1+n_th)) a, sqrt(kappa n_th) a^dag and
    sqrt(2 gamma_phi) a^dag a, with kappa = 1/T1 in 1/us.  Rates are
    plain inverse microseconds (populations decay as e^{-t/T1}); the 2*pi
    convention applies to coherent terms only.  Zero-rate operators are
    omitted.
    """
    ops = _joint_ops(params.dims)
    out = []
    for mode, (t1, nth, gphi) in enumerate(
        [
            (params.T1_1, params.n_th_1, params.gamma_phi_1),
            (params.T1_2, params.n_th_2, params.gamma_phi_2),
        ]
    ):
        a = ops["a1"] if mode == 0 else ops["a2"]
        kappa = 0.0 if math.isinf(t1) else 1.0 / t1
        if kappa * (1 + nth) > 0:
            out.append(Operator(params.dims, np.sqrt(kappa * (1 + nth)) * a))
        if kappa * nth > 0:
            out.append(Operator(params.dims, np.sqrt(kappa * nth) * a.conj().T))
        if include_dephasing and gphi > 0:
            num = ops["n1"] if mode == 0 else ops["n2"]
            out.append(Operator(params.dims, np.sqrt(2 * gphi) * np.diag(num)))
    return out


def drives_from_schedule(schedule) -> list:
    """Wrap every segment of a PulseSchedule as a DriveSpec."""
    return [
        DriveSpec(
            channel=seg.channel,
            amplitude_envelope=seg,
            detuning=seg.detuning,
            phase=seg.phase,
            ac_offset=getattr(seg, "ac_offset", 0.0),
        )
        for seg in schedule.segments
    ]


def dressed_bell_detunings(params: SystemParams) -> dict:
    """Resonant detunings of the two Bell-preparation channels.

    The static coupling dresses the bare Fock levels, so the |00> <-> |11>
    and |01> <-> |10> transitions are not exactly at zero detuning in the
    rotating frame.  Going to the frame where mode 2 co-rotates with the
    pump splitting makes the coupling time independent:

        H' = -delta_p n2 + Kerr + g (a1^dag a2 + h.c.)

    (pumps off, Delta_i = 0, which is the Bell-preparation stage).  The
    dressed levels matched to the bare computational states by overlap
    give the resonances

        bell_diff: (E'_10 - E'_01)/2pi - Delta_p   (~ +2 g^2/Delta_p)
        bell_sum:  Delta_p + (E'_11 - E'_00)/2pi   (small and negative)

    Returns them in MHz, keyed by channel name.
    """
    ops = _joint_ops(params.dims)
    h = MHZ * (
        -params.Delta_p * np.diag(ops["n2"])
        - params.K1 / 2.0 * np.diag(ops["kerr1"])
        - params.K2 / 2.0 * np.diag(ops["kerr2"])
    ) + MHZ * params.g * (ops["hop_up"] + ops["hop_up"].conj().T)
    evals, evecs = np.linalg.eigh(h)

    n1, n2 = params.dims

    def dressed_energy(i, j):
        bare = i * n2 + j
        k = int(np.argmax(np.abs(evecs[bare, :])))
        return evals[k] / MHZ

    e00 = dressed_energy(0, 0)
    e01 = dressed_energy(0, 1)
    e10 = dressed_energy(1, 0)
    e11 = dressed_energy(1, 1)
    return {
        "bell_diff": (e10 - e01) - params.Delta_p,
        "bell_sum": params.Delta_p + (e11 - e00),
    }
