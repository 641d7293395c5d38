"""Wigner functions and simulated joint-parity measurement.

The Wigner function is measured here the way the experiment measures it:
displace each mode, read the photon-number parity through its transmon,
and average.  For a single mode

    W(alpha) = (2/pi) <T(alpha)>,      T(alpha) = D(alpha) Pi D(alpha)^dag,

and for the two-mode function

    W(a1, a2) = (4/pi^2) <T(a1) x T(a2)>.

T(alpha) is Hermitian and unitary, so every parity expectation lies in
[-1, 1] and the Wigner values are bounded by the prefactors.

Grids come in three flavours matching the measurement protocol:

* ``ReRe``  -- scan Re(a1) x Re(a2); the imaginary parts are fixed,
  per-slice displacement offsets.
* ``ImIm``  -- scan Im(a1) x Im(a2); the real parts are the offsets.
* ``ReIm``  -- full single-mode scan of one mode, the other traced out.

Sampled measurement draws per-pixel multinomial counts over the four
transmon outcomes (ee, eg, ge, gg), whose probabilities follow from the
two single-mode parities and the joint parity.  An optional per-transmon
confusion matrix mixes the outcome probabilities before sampling.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fockspace import QuantumState, cahill_glauber_T, parity

__all__ = [
    "ONE_MODE_NORM",
    "TWO_MODE_NORM",
    "GRID_POINTS",
    "GRID_RANGE",
    "DATASET_OFFSETS",
    "WignerGrid",
    "rere_grid",
    "imim_grid",
    "one_mode_grid",
    "one_mode_wigner",
    "two_mode_wigner",
    "joint_parity_from_probs",
    "measure_grid",
    "tomography_dataset",
    "write_dataset",
    "load_dataset",
]

ONE_MODE_NORM = 2.0 / np.pi
TWO_MODE_NORM = 4.0 / np.pi**2

# default scan: 17 points per axis, inclusive, spacing 0.2
GRID_POINTS = 17
GRID_RANGE = 1.6

# displacement offsets of the five two-mode slices, one pair per slice;
# imaginary parts for ReRe scans, real parts for ImIm scans
DATASET_OFFSETS = (
    (0.0, 0.0),
    (0.0, +0.82),
    (-1.10, +1.07),
    (-1.35, -1.32),
    (+1.35, -0.82),
)

_OUTCOMES = ("ee", "eg", "ge", "gg")
# outcome -> (s1, s2) parity signs; "e" is even parity
_SIGNS = np.array([[+1, +1], [+1, -1], [-1, +1], [-1, -1]], dtype=float)

_PROB_TOL = 1e-9
_OFFSET_TOL = 1e-12


def _default_axis() -> np.ndarray:
    return np.linspace(-GRID_RANGE, GRID_RANGE, GRID_POINTS)


@dataclass(frozen=True)
class WignerGrid:
    """One measured (or to-be-measured) Wigner slice.

    ``kind`` is "ReRe", "ImIm", or "ReIm".  The two-mode kinds scan the
    named quadrature of each mode along ``axis1``/``axis2`` with the
    orthogonal quadrature pinned by ``offset1``/``offset2``.  "ReIm"
    scans Re x Im of the single mode ``mode``; the other mode is left
    undisplaced and traced out of the reported value.

    ``values`` holds the Wigner estimate, shape (len(axis1), len(axis2)).
    When the grid was shot-sampled, ``counts`` holds the four outcome
    counts with shape (4, n1, n2) ordered (ee, eg, ge, gg).
    """

    kind: str
    axis1: np.ndarray
    axis2: np.ndarray
    offset1: complex = 0j
    offset2: complex = 0j
    mode: int | None = None
    values: np.ndarray | None = None
    shots: int | None = None
    counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("ReRe", "ImIm", "ReIm"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        object.__setattr__(self, "axis1", np.asarray(self.axis1, dtype=float))
        object.__setattr__(self, "axis2", np.asarray(self.axis2, dtype=float))
        if self.kind == "ReRe":
            if abs(self.offset1.real) > _OFFSET_TOL or abs(self.offset2.real) > _OFFSET_TOL:
                raise ValueError("ReRe offsets must be purely imaginary")
        elif self.kind == "ImIm":
            if abs(self.offset1.imag) > _OFFSET_TOL or abs(self.offset2.imag) > _OFFSET_TOL:
                raise ValueError("ImIm offsets must be purely real")
        else:
            if self.mode not in (0, 1):
                raise ValueError("ReIm grids need mode 0 or 1")
            if self.offset1 != 0 or self.offset2 != 0:
                raise ValueError("ReIm grids do not take offsets")
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.shape != self.shape:
                raise ValueError(f"values shape {v.shape} != grid shape {self.shape}")
            object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return (len(self.axis1), len(self.axis2))

    @property
    def norm(self) -> float:
        return ONE_MODE_NORM if self.kind == "ReIm" else TWO_MODE_NORM

    def mode_alphas(self) -> tuple:
        """Complex displacement of each mode along its own axis.

        Only defined for the separable two-mode kinds; ReIm pixels couple
        the two axes of one mode and go through pixel_alphas instead.
        """
        if self.kind == "ReRe":
            return (self.axis1 + self.offset1, self.axis2 + self.offset2)
        if self.kind == "ImIm":
            return (1j * self.axis1 + self.offset1, 1j * self.axis2 + self.offset2)
        raise ValueError("mode_alphas is only defined for ReRe / ImIm grids")

    def pixel_alphas(self, i: int, j: int) -> tuple:
        """(alpha1, alpha2) applied at pixel (i, j); the traced-out mode
        of a ReIm grid is reported as 0."""
        if self.kind == "ReIm":
            a = self.axis1[i] + 1j * self.axis2[j]
            return (a, 0j) if self.mode == 0 else (0j, a)
        a1, a2 = self.mode_alphas()
        return (a1[i], a2[j])

    def to_csv(self, path) -> None:
        """Write one row per pixel, row-major in (axis1, axis2)."""
        if self.values is None:
            raise ValueError("grid has no values to write")
        cols = "re_a1,im_a1,re_a2,im_a2,value"
        sampled = self.counts is not None
        if sampled:
            cols += ",shots,n_ee,n_eg,n_ge,n_gg"
        lines = [cols]
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                a1, a2 = self.pixel_alphas(i, j)
                row = (
                    f"{a1.real:.12g},{a1.imag:.12g},{a2.real:.12g},{a2.imag:.12g},"
                    f"{self.values[i, j]:.12g}"
                )
                if sampled:
                    n = self.counts[:, i, j]
                    row += f",{self.shots},{n[0]},{n[1]},{n[2]},{n[3]}"
                lines.append(row)
        Path(path).write_text("\n".join(lines) + "\n")


def rere_grid(offsets=(0j, 0j), axis=None) -> WignerGrid:
    """Re(a1) x Re(a2) scan; offsets are the fixed imaginary parts."""
    ax = _default_axis() if axis is None else np.asarray(axis, dtype=float)
    o1, o2 = complex(offsets[0]), complex(offsets[1])
    return WignerGrid("ReRe", ax, ax.copy(), o1, o2)


def imim_grid(offsets=(0j, 0j), axis=None) -> WignerGrid:
    """Im(a1) x Im(a2) scan; offsets are the fixed real parts."""
    ax = _default_axis() if axis is None else np.asarray(axis, dtype=float)
    o1, o2 = complex(offsets[0]), complex(offsets[1])
    return WignerGrid("ImIm", ax, ax.copy(), o1, o2)


def one_mode_grid(mode: int, axis=None) -> WignerGrid:
    """Full Re x Im scan of one mode, the other traced out."""
    ax = _default_axis() if axis is None else np.asarray(axis, dtype=float)
    return WignerGrid("ReIm", ax, ax.copy(), mode=mode)


# ---------------------------------------------------------------------------
# exact values


def one_mode_wigner(state: QuantumState, alpha: complex) -> float:
    """(2/pi) <T(alpha)> of a single-mode state."""
    if len(state.dims) != 1:
        raise ValueError("one_mode_wigner expects a single-mode state")
    t = cahill_glauber_T(alpha, state.dims[0])
    return ONE_MODE_NORM * state.expect(t).real


def two_mode_wigner(state: QuantumState, alpha1: complex, alpha2: complex) -> float:
    """(4/pi^2) <T(alpha1) x T(alpha2)> of a two-mode state."""
    if len(state.dims) != 2:
        raise ValueError("two_mode_wigner expects a two-mode state")
    n1, n2 = state.dims
    rho4 = state.to_density().data.reshape(n1, n2, n1, n2)
    t1 = cahill_glauber_T(alpha1, n1).data
    t2 = cahill_glauber_T(alpha2, n2).data
    val = np.einsum("abcd,ca,db->", rho4, t1, t2)
    return TWO_MODE_NORM * val.real


def joint_parity_from_probs(p_ee: float, p_eg: float, p_ge: float, p_gg: float) -> float:
    """Joint parity <Pi1 Pi2> from the four transmon-outcome probabilities."""
    probs = np.array([p_ee, p_eg, p_ge, p_gg], dtype=float)
    if probs.min() < -_PROB_TOL:
        raise ValueError(f"negative outcome probability {probs.min():.3e}")
    if abs(probs.sum() - 1.0) > _PROB_TOL:
        raise ValueError(f"outcome probabilities sum to {probs.sum():.12f}, not 1")
    return float(p_ee + p_gg - p_eg - p_ge)


# ---------------------------------------------------------------------------
# parity expectations on a grid

# Each two-mode slice is separable in the displacements, so T(alpha) is
# precomputed once per axis value (34 matrices) instead of once per pixel
# (578), and the pixel expectations contract in a single einsum.


def _two_mode_expectations(state: QuantumState, grid: WignerGrid):
    """e1[i], e2[j], e12[i,j] parity expectations over a separable grid."""
    n1, n2 = state.dims
    a1s, a2s = grid.mode_alphas()
    t1 = np.stack([cahill_glauber_T(a, n1).data for a in a1s])
    t2 = np.stack([cahill_glauber_T(a, n2).data for a in a2s])
    rho4 = state.to_density().data.reshape(n1, n2, n1, n2)
    r1 = state.reduced(0).data
    r2 = state.reduced(1).data
    e1 = np.einsum("ac,ica->i", r1, t1).real
    e2 = np.einsum("ac,ica->i", r2, t2).real
    e12 = np.einsum("abcd,ica,jdb->ij", rho4, t1, t2).real
    return e1, e2, e12


def _one_mode_expectations(state: QuantumState, grid: WignerGrid):
    """Same contract for a ReIm grid: the scanned mode is displaced, the
    spectator mode's parity is read undisplaced."""
    n1, n2 = state.dims
    nm = state.dims[grid.mode]
    ts = np.stack(
        [
            cahill_glauber_T(grid.axis1[i] + 1j * grid.axis2[j], nm).data
            for i in range(grid.shape[0])
            for j in range(grid.shape[1])
        ]
    ).reshape(grid.shape + (nm, nm))
    rho4 = state.to_density().data.reshape(n1, n2, n1, n2)
    r_scan = state.reduced(grid.mode).data
    r_other = state.reduced(1 - grid.mode).data
    pi_other = parity(state.dims[1 - grid.mode]).data
    e_scan = np.einsum("ac,ijca->ij", r_scan, ts).real
    e_other = float(np.einsum("ac,ca->", r_other, pi_other).real)
    if grid.mode == 0:
        e12 = np.einsum("abcd,ijca,db->ij", rho4, ts, pi_other).real
    else:
        e12 = np.einsum("abcd,ijdb,ca->ij", rho4, ts, pi_other).real
    if grid.mode == 0:
        return e_scan, np.full(grid.shape, e_other), e12
    return np.full(grid.shape, e_other), e_scan, e12


def _confusion_kron(confusion) -> np.ndarray | None:
    if confusion is None:
        return None
    c1, c2 = (np.asarray(c, dtype=float) for c in confusion)
    for c in (c1, c2):
        if c.shape != (2, 2):
            raise ValueError("confusion matrices must be 2x2")
        if c.min() < 0 or np.abs(c.sum(axis=0) - 1.0).max() > 1e-9:
            raise ValueError("confusion matrix columns must be probabilities")
    return np.kron(c1, c2)


def measure_grid(
    state: QuantumState,
    grid: WignerGrid,
    shots: int | None = None,
    seed=None,
    confusion=None,
) -> WignerGrid:
    """Evaluate a Wigner slice, exactly or through simulated counts.

    With ``shots=None`` the returned values are the exact Wigner function
    at every pixel.  With ``shots`` set, each pixel draws a multinomial
    over the four transmon outcomes and the value is the estimator

        norm * (n_ee + n_gg - n_eg - n_ge) / shots      (two-mode kinds)

    or the scanned mode's marginal for ReIm grids.  ``confusion`` is an
    optional pair of 2x2 per-transmon confusion matrices (columns are the
    true-outcome probabilities).  Given the same seed the counts are
    reproducible exactly.
    """
    if len(state.dims) != 2:
        raise ValueError("measure_grid expects a two-mode state")
    if grid.kind == "ReIm":
        e1, e2, e12 = _one_mode_expectations(state, grid)
        e_scan = e1 if grid.mode == 0 else e2
    else:
        v1, v2, e12 = _two_mode_expectations(state, grid)
        e1 = np.broadcast_to(v1[:, None], grid.shape)
        e2 = np.broadcast_to(v2[None, :], grid.shape)

    if shots is None:
        if grid.kind == "ReIm":
            values = ONE_MODE_NORM * e_scan
        else:
            values = TWO_MODE_NORM * e12
        if np.abs(values).max() > grid.norm * (1 + 1e-9):
            raise RuntimeError("Wigner value exceeds its parity bound")
        return dataclasses.replace(grid, values=values, shots=None, counts=None)

    shots = int(shots)
    if shots <= 0:
        raise ValueError("shots must be a positive integer")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mix = _confusion_kron(confusion)

    counts = np.zeros((4,) + grid.shape, dtype=np.int64)
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            p = 0.25 * (1.0 + _SIGNS[:, 0] * e1[i, j] + _SIGNS[:, 1] * e2[i, j]
                        + _SIGNS[:, 0] * _SIGNS[:, 1] * e12[i, j])
            if p.min() < -_PROB_TOL:
                raise RuntimeError(f"outcome probability {p.min():.3e} below zero")
            p = np.clip(p, 0.0, None)
            if mix is not None:
                p = mix @ p
            p = p / p.sum()
            counts[:, i, j] = rng.multinomial(shots, p)

    if grid.kind == "ReIm":
        # marginal parity of the scanned transmon
        if grid.mode == 0:
            ne, ng = counts[0] + counts[1], counts[2] + counts[3]
        else:
            ne, ng = counts[0] + counts[2], counts[1] + counts[3]
        values = ONE_MODE_NORM * (ne - ng) / shots
    else:
        values = TWO_MODE_NORM * (counts[0] + counts[3] - counts[1] - counts[2]) / shots
    return dataclasses.replace(grid, values=values, shots=shots, counts=counts)


# ---------------------------------------------------------------------------
# the twelve-slice tomography dataset


def tomography_dataset(
    state: QuantumState, shots: int | None = None, seed=None, axis=None, confusion=None
) -> list:
    """The full measurement set used for two-mode reconstruction.

    Five ReRe slices and five ImIm slices at the DATASET_OFFSETS pairs
    (imaginary offsets for ReRe, real for ImIm), plus the two single-mode
    scans.  One RNG stream threads through the slices in order, so a seed
    fixes the entire dataset.
    """
    rng = np.random.default_rng(seed) if shots is not None else None
    grids = []
    for off1, off2 in DATASET_OFFSETS:
        grids.append(rere_grid((1j * off1, 1j * off2), axis=axis))
    for off1, off2 in DATASET_OFFSETS:
        grids.append(imim_grid((off1, off2), axis=axis))
    grids.append(one_mode_grid(0, axis=axis))
    grids.append(one_mode_grid(1, axis=axis))
    return [measure_grid(state, g, shots=shots, seed=rng, confusion=confusion) for g in grids]


def write_dataset(grids, directory, name: str = "wigner", meta: dict | None = None) -> Path:
    """Write slices as CSV plus a manifest; returns the manifest path.

    The manifest is plain key/value text.  It contains no timestamps or
    absolute paths, so rewriting the same dataset reproduces it byte for
    byte.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"dataset: {name}", f"slices: {len(grids)}"]
    for key, val in (meta or {}).items():
        lines.append(f"{key}: {val}")
    for idx, g in enumerate(grids):
        fname = f"{name}_{idx:02d}.csv"
        g.to_csv(directory / fname)
        desc = [
            f"slice {idx:02d}:",
            f"file={fname}",
            f"kind={g.kind}",
            f"n1={g.shape[0]}",
            f"n2={g.shape[1]}",
        ]
        if g.kind == "ReIm":
            desc.append(f"mode={g.mode}")
        else:
            desc.append(f"offset1={g.offset1.real:.12g}{g.offset1.imag:+.12g}j")
            desc.append(f"offset2={g.offset2.real:.12g}{g.offset2.imag:+.12g}j")
        if g.shots is not None:
            desc.append(f"shots={g.shots}")
        lines.append(" ".join(desc))
    manifest = directory / f"{name}_manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", ""))


def load_dataset(manifest_path) -> list:
    """Read back a dataset written by write_dataset."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    grids = []
    for line in manifest_path.read_text().splitlines():
        if not line.startswith("slice "):
            continue
        fields = dict(part.split("=", 1) for part in line.split()[2:])
        raw = np.genfromtxt(base / fields["file"], delimiter=",", names=True)
        n1, n2 = int(fields["n1"]), int(fields["n2"])
        kind = fields["kind"]
        shots = int(fields["shots"]) if "shots" in fields else None
        re1 = raw["re_a1"].reshape(n1, n2)
        im1 = raw["im_a1"].reshape(n1, n2)
        re2 = raw["re_a2"].reshape(n1, n2)
        im2 = raw["im_a2"].reshape(n1, n2)
        values = raw["value"].reshape(n1, n2)
        counts = None
        if shots is not None:
            counts = np.stack(
                [raw[f"n_{k}"].reshape(n1, n2).astype(np.int64) for k in _OUTCOMES]
            )
        if kind == "ReIm":
            mode = int(fields["mode"])
            re_s, im_s = (re1, im1) if mode == 0 else (re2, im2)
            grid = WignerGrid(kind, re_s[:, 0], im_s[0, :], mode=mode,
                              values=values, shots=shots, counts=counts)
        elif kind == "ReRe":
            grid = WignerGrid(kind, re1[:, 0], re2[0, :],
                              _parse_complex(fields["offset1"]),
                              _parse_complex(fields["offset2"]),
                              values=values, shots=shots, counts=counts)
        else:
            grid = WignerGrid(kind, im1[:, 0], im2[0, :],
                              _parse_complex(fields["offset1"]),
                              _parse_complex(fields["offset2"]),
                              values=values, shots=shots, counts=counts)
        grids.append(grid)
    return grids
