"""Pulse envelopes, schedules and the named experiment sequences.

A PulseSchedule is a list of non-overlapping per-channel segments.  Two
envelope kinds cover everything used here:

* ``sin2_ramp``: target * sin^2(pi t / 2 tau_ramp) up to tau_ramp, then
  held at target until the segment ends.  Pump segments of this kind also
  chirp their detuning from 0 to the segment's detuning target with the
  same profile.
* ``square``: flat top with optional sin^2 edges.

Segments evaluate to amplitude 0 outside their time window.  The chirp
integral needed by the propagator's phase bookkeeping is provided in
closed form (int sin^2 = t/2 - (tau/2 pi) sin(pi t / tau)).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ConfigurationError

__all__ = [
    "sin2_ramp",
    "chirped_detuning",
    "square_pulse",
    "Segment",
    "PulseSchedule",
    "preset_schedule",
    "BELL_LENGTH",
    "COUPLER_SHIFT",
    "PUMP_DETUNING_OFFSETS",
    "BELL_AMPLITUDE",
    "DRESSED_BELL_SUM",
    "DRESSED_BELL_DIFF",
    "GATE_AMPLITUDE",
    "SQRT_ISWAP_LENGTH",
    "ISWAP_LENGTH",
]

# Working-point constants for the default SystemParams.  The Bell pulse
# length is fixed and the amplitude calibrated so that length is the
# pi/2-equivalent point of the |00> <-> |11> (or |01> <-> |10>) Rabi
# cycle: a two-level drive of coupling pi*Omega transfers half the
# population at t = 1/(4 Omega).
BELL_LENGTH = 0.730            # us
BELL_AMPLITUDE = 1.0 / (4.0 * BELL_LENGTH)   # MHz, ~0.3425
GATE_AMPLITUDE = 2.96          # MHz
SQRT_ISWAP_LENGTH = 0.275      # us
ISWAP_LENGTH = 0.480           # us

# Resonances of the Bell channels, dressed by the static coupling; values
# from model.dressed_bell_detunings at the default working point (they are
# insensitive to truncation beyond N = 8).
DRESSED_BELL_DIFF = 0.8861622101986768    # MHz
DRESSED_BELL_SUM = -0.0243947795932229    # MHz

# The always-on exchange coupling dresses the modes: to second order in
# g/Delta_p the mode-1 frequency shifts up by g^2/Delta_p and mode 2 down
# by the same.  Pump frequencies in the lab are referenced to the dressed
# (measured) resonances, so the bare-model pump detuning carries a
# constant per-mode offset on top of the chirp.  Starting the chirp from
# the dressed resonance (not the bare one) is what keeps the effective
# detuning path 0 -> target; without the offsets the two modes ramp along
# different effective paths and the cats come out distorted.
COUPLER_SHIFT = 64.0 / 144.0   # g^2/Delta_p at the default working point, MHz
PUMP_DETUNING_OFFSETS = (-COUPLER_SHIFT, +COUPLER_SHIFT)


def sin2_ramp(t: float, tau_ramp: float, target: float) -> float:
    """Ramp envelope: target * sin^2(pi t / 2 tau_ramp), held after tau_ramp."""
    if tau_ramp <= 0:
        raise ConfigurationError("tau_ramp must be positive")
    if t < 0:
        return 0.0
    if t >= tau_ramp:
        return target
    return target * math.sin(math.pi * t / (2.0 * tau_ramp)) ** 2


def chirped_detuning(t: float, tau_ramp: float, target: float) -> float:
    """Pump-detuning chirp, 0 to target with the same sin^2 profile."""
    return sin2_ramp(t, tau_ramp, target)


def _sin2_integral(t: float, tau: float) -> float:
    """int_0^t sin^2(pi u / 2 tau) du for t in [0, tau], linear beyond."""
    if t <= 0:
        return 0.0
    if t >= tau:
        return tau / 2.0 + (t - tau)
    return t / 2.0 - (tau / (2.0 * math.pi)) * math.sin(math.pi * t / tau)


def square_pulse(t: float, t0: float, length: float, amplitude: float, rise: float = 0.0) -> float:
    """Flat-top pulse on [t0, t0+length] with optional sin^2 edges."""
    if length <= 0:
        raise ConfigurationError("square pulse length must be positive")
    if not 0 <= rise <= length / 2:
        raise ConfigurationError("rise must satisfy 0 <= rise <= length/2")
    s = t - t0
    if s < 0 or s > length:
        return 0.0
    if rise == 0:
        return amplitude
    if s < rise:
        return amplitude * math.sin(math.pi * s / (2.0 * rise)) ** 2
    if s > length - rise:
        return amplitude * math.sin(math.pi * (length - s) / (2.0 * rise)) ** 2
    return amplitude


_EDGE_TOL = 1e-9  # us; window membership tolerance, far below any timescale here


@dataclass(frozen=True)
class Segment:
    """One schedule segment on a single channel.

    kind "sin2_ramp" takes params {"tau_ramp", "target"}; kind "square"
    takes {"amplitude", "rise"}.  The detuning field is the rotating-frame
    drive detuning for bell/gate/x channels and the pump-detuning target
    for pump channels.  Window membership is closed with a 1e-9 us slack
    so sampling grids built by repeated float addition stay inside.
    """

    channel: str
    t_start: float
    t_end: float
    kind: str
    params: dict = field(default_factory=dict)
    detuning: float = 0.0
    phase: float = 0.0
    ac_offset: float = 0.0

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ConfigurationError("segment must have t_end > t_start")
        if self.kind not in ("sin2_ramp", "square"):
            raise ConfigurationError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "square":
            # validate eagerly so bad segments fail at construction
            square_pulse(self.t_start, self.t_start, self.length, 0.0, self.params.get("rise", 0.0))

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    def amplitude(self, t: float) -> float:
        if t < self.t_start - _EDGE_TOL or t > self.t_end + _EDGE_TOL:
            return 0.0
        return self.amplitude_unclipped(t)

    def amplitude_unclipped(self, t: float) -> float:
        """Envelope formula without the window test (panelwise evaluation)."""
        s = t - self.t_start
        if self.kind == "sin2_ramp":
            return sin2_ramp(s, self.params["tau_ramp"], self.params["target"])
        return square_pulse(t, self.t_start, self.length, self.params["amplitude"], self.params.get("rise", 0.0))

    def pump_detuning(self, t: float) -> float:
        """Delta_i(t) for pump segments: chirped on ramps, constant on holds.

        Ramps may carry a constant params["detuning_offset"] under the
        chirp (pump frequency referenced to a dressed resonance).
        """
        if t < self.t_start - _EDGE_TOL or t > self.t_end + _EDGE_TOL:
            return 0.0
        if self.kind == "sin2_ramp":
            base = self.params.get("detuning_offset", 0.0)
            return base + chirped_detuning(t - self.t_start, self.params["tau_ramp"], self.detuning)
        return self.detuning

    def pump_detuning_integral(self, t: float) -> float:
        """int_0^t of pump_detuning, closed form."""
        s = min(t, self.t_end) - self.t_start
        if s <= 0:
            return 0.0
        if self.kind == "sin2_ramp":
            base = self.params.get("detuning_offset", 0.0)
            return base * s + self.detuning * _sin2_integral(s, self.params["tau_ramp"])
        return self.detuning * s

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "kind": self.kind,
            "params": dict(self.params),
            "detuning": self.detuning,
            "phase": self.phase,
            "ac_offset": self.ac_offset,
        }


@dataclass(frozen=True)
class PulseSchedule:
    """Immutable set of segments; evaluation is pure.

    Segments on the same channel must not overlap (shared endpoints are
    allowed; at such a measure-zero instant both formulas are summed).
    """

    segments: tuple
    total_duration: float = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        by_channel = {}
        for s in segs:
            by_channel.setdefault(s.channel, []).append(s)
        for channel, group in by_channel.items():
            group = sorted(group, key=lambda s: s.t_start)
            for a, b in zip(group, group[1:]):
                if b.t_start < a.t_end - 1e-12:
                    raise ConfigurationError(f"overlapping segments on channel {channel}")
        if self.total_duration is None:
            object.__setattr__(self, "total_duration", max((s.t_end for s in segs), default=0.0))

    def channels(self):
        return sorted({s.channel for s in self.segments})

    def boundaries(self) -> np.ndarray:
        """Sorted unique segment edges, always including 0 and the end."""
        pts = {0.0, self.total_duration}
        for s in self.segments:
            pts.add(s.t_start)
            pts.add(s.t_end)
        return np.array(sorted(p for p in pts if 0.0 <= p <= self.total_duration + 1e-12))

    def active(self, t: float, channel: str = None):
        """Segments whose closed window contains t."""
        return [
            s
            for s in self.segments
            if s.t_start - _EDGE_TOL <= t <= s.t_end + _EDGE_TOL
            and (channel is None or s.channel == channel)
        ]

    def amplitude(self, channel: str, t: float) -> float:
        return sum(s.amplitude(t) for s in self.active(t, channel))

    def pump_detuning(self, mode: int, t: float) -> float:
        return sum(s.pump_detuning(t) for s in self.active(t, f"pump{mode + 1}"))

    def pump_detuning_integral(self, mode: int, t: float) -> float:
        return sum(s.pump_detuning_integral(t) for s in self.segments if s.channel == f"pump{mode + 1}")

    def pumps_active(self, t: float) -> bool:
        return bool(self.active(t, "pump1") or self.active(t, "pump2"))

    def lint(self) -> list:
        """Non-fatal schedule checks; returns warning strings.

        The pump phase is the cat-basis reference once pumps are running,
        so changing a drive phase mid-pump re-defines the qubit frame
        rather than applying a rotation.  That is flagged, not forbidden
        (it is exactly how a virtual Z is applied deliberately).
        """
        msgs = []
        pump_windows = [
            (s.t_start, s.t_end) for s in self.segments if s.channel in ("pump1", "pump2")
        ]

        def mid_pump(t):
            return any(a < t < b for a, b in pump_windows)

        for channel in ("gate", "bell_sum", "bell_diff"):
            group = sorted(
                (s for s in self.segments if s.channel == channel), key=lambda s: s.t_start
            )
            for a, b in zip(group, group[1:]):
                if a.phase != b.phase and mid_pump(b.t_start):
                    msgs.append(
                        f"{channel} phase changes {a.phase} -> {b.phase} at t = {b.t_start} "
                        "while pumps are on: this is a virtual Z on the cat frame"
                    )
        for m in msgs:
            warnings.warn(m, stacklevel=2)
        return msgs

    def to_dict(self) -> dict:
        return {
            "total_duration": self.total_duration,
            "segments": [s.to_dict() for s in self.segments],
        }

    @staticmethod
    def from_dict(d: dict) -> "PulseSchedule":
        segs = tuple(Segment(**sd) for sd in d["segments"])
        return PulseSchedule(segs, d.get("total_duration"))

    def write_waveform_csv(self, path, dt: float = 0.001):
        """Sampled waveform export, one row per (t, channel)."""
        n = int(round(self.total_duration / dt))
        ts = np.linspace(0.0, n * dt, n + 1)  # exact endpoints, no arange drift
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t_us", "channel", "amplitude_MHz", "detuning_MHz", "phase_rad"])
            for channel in self.channels():
                for t in ts:
                    segs = self.active(t, channel)
                    amp = sum(s.amplitude(t) for s in segs)
                    if channel in ("pump1", "pump2"):
                        det = sum(s.pump_detuning(t) for s in segs)
                    else:
                        det = segs[0].detuning if segs else 0.0
                    ph = segs[0].phase if segs else 0.0
                    w.writerow([f"{t:.9g}", channel, f"{amp:.12g}", f"{det:.12g}", f"{ph:.12g}"])


def _pair(value):
    if np.isscalar(value):
        return (float(value), float(value))
    a, b = value
    return (float(a), float(b))


def _cat_gen_segments(t0, tau_ramp, hold, pump_amplitude, detuning_target,
                      detuning_offset=PUMP_DETUNING_OFFSETS):
    amps = _pair(pump_amplitude)
    dets = _pair(detuning_target)
    offs = _pair(detuning_offset)
    return [
        Segment(
            channel=f"pump{i + 1}",
            t_start=t0,
            t_end=t0 + tau_ramp + hold,
            kind="sin2_ramp",
            params={"tau_ramp": tau_ramp, "target": amps[i], "detuning_offset": offs[i]},
            detuning=dets[i],
        )
        for i in (0, 1)
    ]


def _bell_segment(kind, t0, length, amplitude, detuning, phase, ac_offset):
    channel = {"sum": "bell_sum", "diff": "bell_diff"}.get(kind)
    if channel is None:
        raise ConfigurationError(f"bell pulse kind must be 'sum' or 'diff', got {kind!r}")
    if detuning is None:
        detuning = DRESSED_BELL_SUM if kind == "sum" else DRESSED_BELL_DIFF
    return Segment(
        channel=channel,
        t_start=t0,
        t_end=t0 + length,
        kind="square",
        params={"amplitude": amplitude, "rise": 0.0},
        detuning=detuning,
        phase=phase,
        ac_offset=ac_offset,
    )


def preset_schedule(name: str, **overrides) -> PulseSchedule:
    """Named experiment sequences.

    cat_gen: simultaneous pump ramps on both modes, detuning chirped
      alongside.  Overrides: tau_ramp (1.0), hold (0.0), pump_amplitude
      (2.0, scalar or pair), detuning_target (1.0), detuning_offset
      (PUMP_DETUNING_OFFSETS; set 0 when the static coupling is absent).
      Targets and offsets are in the dressed frame: the offset is the
      constant dressed-resonance correction under the chirp.
    bell_fock: one square Bell pulse.  Overrides: kind ("sum"|"diff",
      default "sum"), length (0.730), amplitude (calibrated pi/2 point),
      detuning (None = dressed resonance), phase, ac_offset.
    fock_to_cat: bell_fock followed by the cat_gen ramps.
    two_cat_gate: cat_gen, then a square gate pulse with pumps held on.
      Overrides: gate_length (0.275), gate_amplitude (2.96), gate_detuning
      (0.0), gate_phase (0.0), pre_hold (0.0) between ramp top and gate,
      hold (0.0) of the pumps after the gate ends, plus cat_gen overrides.
    stabilized_hold: pumps already at plateau for a state that was
      prepared earlier; square envelopes, constant detuning.  Overrides:
      hold (1.0), pump_amplitude (2.0), detuning_target (1.0),
      detuning_offset (PUMP_DETUNING_OFFSETS).
    """
    o = dict(overrides)

    def take(key, default):
        return o.pop(key, default)

    if name == "cat_gen":
        tau = take("tau_ramp", 1.0)
        segs = _cat_gen_segments(
            0.0, tau, take("hold", 0.0), take("pump_amplitude", 2.0),
            take("detuning_target", 1.0), take("detuning_offset", PUMP_DETUNING_OFFSETS)
        )
    elif name == "bell_fock":
        segs = [
            _bell_segment(
                take("kind", "sum"),
                0.0,
                take("length", BELL_LENGTH),
                take("amplitude", BELL_AMPLITUDE),
                take("detuning", None),
                take("phase", 0.0),
                take("ac_offset", 0.0),
            )
        ]
    elif name == "fock_to_cat":
        length = take("length", BELL_LENGTH)
        segs = [
            _bell_segment(
                take("kind", "sum"),
                0.0,
                length,
                take("amplitude", BELL_AMPLITUDE),
                take("detuning", None),
                take("phase", 0.0),
                take("ac_offset", 0.0),
            )
        ]
        segs += _cat_gen_segments(
            length,
            take("tau_ramp", 1.0),
            take("hold", 0.0),
            take("pump_amplitude", 2.0),
            take("detuning_target", 1.0),
            take("detuning_offset", PUMP_DETUNING_OFFSETS),
        )
    elif name == "two_cat_gate":
        tau = take("tau_ramp", 1.0)
        pre = take("pre_hold", 0.0)
        glen = take("gate_length", SQRT_ISWAP_LENGTH)
        hold = take("hold", 0.0)
        segs = _cat_gen_segments(
            0.0, tau, pre + glen + hold, take("pump_amplitude", 2.0),
            take("detuning_target", 1.0), take("detuning_offset", PUMP_DETUNING_OFFSETS)
        )
        segs.append(
            Segment(
                channel="gate",
                t_start=tau + pre,
                t_end=tau + pre + glen,
                kind="square",
                params={"amplitude": take("gate_amplitude", GATE_AMPLITUDE), "rise": take("gate_rise", 0.0)},
                detuning=take("gate_detuning", 0.0),
                phase=take("gate_phase", 0.0),
            )
        )
    elif name == "stabilized_hold":
        hold = take("hold", 1.0)
        amps = _pair(take("pump_amplitude", 2.0))
        dets = _pair(take("detuning_target", 1.0))
        offs = _pair(take("detuning_offset", PUMP_DETUNING_OFFSETS))
        segs = [
            Segment(
                channel=f"pump{i + 1}",
                t_start=0.0,
                t_end=hold,
                kind="square",
                params={"amplitude": amps[i], "rise": 0.0},
                detuning=dets[i] + offs[i],
            )
            for i in (0, 1)
        ]
    else:
        raise ConfigurationError(f"unknown schedule preset {name!r}")
    if o:
        raise ConfigurationError(f"unknown overrides for preset {name}: {sorted(o)}")
    return PulseSchedule(tuple(segs))
