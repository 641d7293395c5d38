"""Fock-space operators and states for Kerr parametric oscillator models.

Conventions used throughout the package:

* frequencies are plain MHz and times are microseconds; the factor 2*pi
  is applied inside Hamiltonian builders, never stored in parameters;
* two-mode joint indices are mode-1 major, |n1, n2> -> row n1*N2 + n2,
  which is exactly numpy's kron ordering;
* truncated operators carry the matrix elements of the infinite
  dimensional operator.  Products evaluated at the truncation edge are
  therefore not unitary; helpers that need operator products (displaced
  parity, for instance) evaluate them in a padded dimension first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

__all__ = [
    "Operator",
    "QuantumState",
    "EigenCats",
    "annihilation",
    "creation",
    "number",
    "identity",
    "parity",
    "fock",
    "coherent",
    "displacement",
    "pad_dim",
    "displaced_parity",
    "cahill_glauber_T",
    "tensor",
    "superposition",
    "truncate_density",
    "coherent_cat",
    "kpo_eigen_cats",
    "thermal_state",
]

MHZ = 2.0 * np.pi  # angular rate [rad/us] of a 1 MHz tone

_KET_NORM_TOL = 1e-10
_TRACE_TOL = 1e-10
_PSD_FLOOR = -1e-9
_HERM_TOL = 1e-12
_UNITARY_TOL = 1e-10


def _as_dims(dims) -> tuple:
    if np.isscalar(dims):
        dims = (int(dims),)
    return tuple(int(d) for d in dims)


@dataclass(frozen=True)
class Operator:
    """Dense operator on a (possibly multi-mode) truncated Fock space.

    Args:
        dims: per-mode truncation, e.g. (20,) or (20, 20).
        data: square complex matrix of size prod(dims).
        hermitian: if True, A = A^dag is checked to 1e-12 on construction.
        unitary: if True, A^dag A = 1 is checked to 1e-10 on construction.
    """

    dims: tuple
    data: np.ndarray
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_dims(self.dims))
        data = np.asarray(self.data, dtype=complex)
        d = int(np.prod(self.dims))
        if data.shape != (d, d):
            raise ValueError(f"operator data shape {data.shape} does not match dims {self.dims}")
        object.__setattr__(self, "data", data)
        if self.hermitian and np.abs(data - data.conj().T).max() > _HERM_TOL:
            raise ValueError("operator flagged hermitian violates A = A^dag at 1e-12")
        if self.unitary:
            gram = data.conj().T @ data
            if np.abs(gram - np.eye(d)).max() > _UNITARY_TOL:
                raise ValueError("operator flagged unitary violates A^dag A = 1 at 1e-10")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.dims, self.data.conj().T, hermitian=self.hermitian)

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dims != other.dims:
            raise ValueError("operator dims mismatch")
        return Operator(self.dims, self.data @ other.data)


@dataclass(frozen=True)
class QuantumState:
    """A ket or a density matrix on a truncated Fock space.

    Kets must be normalized to 1e-10.  Density matrices must be
    Hermitian, unit trace to 1e-10 and positive semidefinite with
    eigenvalues above -1e-9.  Set ``check=False`` only in integrator
    internals where the drift is monitored separately.
    """

    dims: tuple
    data: np.ndarray
    kind: str = "ket"
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_dims(self.dims))
        data = np.asarray(self.data, dtype=complex)
        d = int(np.prod(self.dims))
        if self.kind == "ket":
            data = data.reshape(d)
            if self.check and abs(np.linalg.norm(data) - 1.0) > _KET_NORM_TOL:
                raise ValueError("ket norm deviates from 1 by more than 1e-10")
        elif self.kind == "density":
            if data.shape != (d, d):
                raise ValueError(f"density shape {data.shape} does not match dims {self.dims}")
            if self.check:
                if np.abs(data - data.conj().T).max() > 1e-9:
                    raise ValueError("density matrix is not Hermitian")
                if abs(np.trace(data).real - 1.0) > _TRACE_TOL:
                    raise ValueError("density matrix trace deviates from 1 by more than 1e-10")
                if np.linalg.eigvalsh(data).min() < _PSD_FLOOR:
                    raise ValueError("density matrix has eigenvalue below -1e-9")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        rho = np.outer(self.data, self.data.conj())
        return QuantumState(self.dims, rho, kind="density", check=False)

    def expect(self, op: Operator) -> complex:
        if self.kind == "ket":
            return complex(self.data.conj() @ (op.data @ self.data))
        return complex(np.trace(op.data @ self.data))

    def reduced(self, mode: int) -> "QuantumState":
        """Partial trace down to a single mode (two-mode states only)."""
        if len(self.dims) != 2:
            raise ValueError("reduced() expects a two-mode state")
        n1, n2 = self.dims
        rho = self.to_density().data.reshape(n1, n2, n1, n2)
        if mode == 0:
            red = np.einsum("abcb->ac", rho)
        elif mode == 1:
            red = np.einsum("abad->bd", rho)
        else:
            raise ValueError("mode must be 0 or 1")
        return QuantumState((self.dims[mode],), red, kind="density", check=False)

    def fock_probabilities(self) -> np.ndarray:
        if self.kind == "ket":
            return np.abs(self.data) ** 2
        return np.diag(self.data).real


# ---------------------------------------------------------------------------
# elementary operators


def annihilation(N: int) -> Operator:
    """Truncated annihilation operator a with <n-1|a|n> = sqrt(n)."""
    if N < 2:
        raise ValueError("annihilation needs dimension >= 2")
    return Operator((N,), np.diag(np.sqrt(np.arange(1.0, N)), 1))


def creation(N: int) -> Operator:
    return annihilation(N).dag()


def number(N: int) -> Operator:
    return Operator((N,), np.diag(np.arange(N, dtype=float)), hermitian=True)


def identity(N: int) -> Operator:
    return Operator((N,), np.eye(N), hermitian=True, unitary=True)


def parity(N: int) -> Operator:
    """Photon-number parity (-1)^n, diagonal in the Fock basis."""
    return Operator((N,), np.diag((-1.0) ** np.arange(N)), hermitian=True, unitary=True)


def fock(n: int, N: int) -> QuantumState:
    if not 0 <= n < N:
        raise ValueError("fock index outside truncation")
    v = np.zeros(N, dtype=complex)
    v[n] = 1.0
    return QuantumState((N,), v, kind="ket")


def coherent(alpha: complex, N: int) -> QuantumState:
    """Coherent ket |alpha>, amplitudes evaluated in log space.

    The truncated vector is renormalized, so N should comfortably exceed
    |alpha|^2 for the state to be faithful.
    """
    n = np.arange(N)
    if alpha == 0:
        return fock(0, N)
    logmag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    v = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    v /= np.linalg.norm(v)
    return QuantumState((N,), v, kind="ket")


# ---------------------------------------------------------------------------
# displacement and displaced parity


def pad_dim(alpha: complex, N: int) -> int:
    """Working dimension used when products of displacements are taken.

    The margin keeps the retained block of D Pi D^dag faithful to ~1e-12
    even for states with weight at the truncation edge.
    """
    return N + int(np.ceil(8 * abs(alpha) ** 2)) + 16


def displacement(alpha: complex, N: int) -> Operator:
    """Matrix elements of exp(alpha a^dag - alpha* a) in N dimensions.

    Closed Laguerre form, exact elements of the untruncated operator:

        <n|D|m> = sqrt(n!/m!) (-alpha*)^(m-n) e^(-|alpha|^2/2) L_n^(m-n)(|alpha|^2)

    for m >= n and the transpose-conjugate rule below the diagonal.  The
    factorial ratio is taken in log space, stable through N = 64.  Rows
    near the truncation edge genuinely leak above the cutoff, so products
    like D(a) D(-a) are only unitary when formed in pad_dim(alpha, N); see
    displaced_parity().
    """
    if alpha == 0:
        return identity(N)
    x = abs(alpha) ** 2
    n = np.arange(N)
    nn, mm = np.meshgrid(n, n, indexing="ij")
    out = np.zeros((N, N), dtype=complex)

    up = mm >= nn  # m - n >= 0
    d = (mm - nn)[up]
    logratio = 0.5 * (gammaln(nn[up] + 1) - gammaln(mm[up] + 1))
    lag = eval_genlaguerre(nn[up], d, x)
    out[up] = np.exp(logratio - x / 2) * (-np.conj(alpha)) ** d * lag

    lo = ~up
    d = (nn - mm)[lo]
    logratio = 0.5 * (gammaln(mm[lo] + 1) - gammaln(nn[lo] + 1))
    lag = eval_genlaguerre(mm[lo], d, x)
    out[lo] = np.exp(logratio - x / 2) * alpha ** d * lag
    return Operator((N,), out)


def displaced_parity(alpha: complex, N: int) -> Operator:
    """D(alpha) Pi D(alpha)^dag, the product formed in a padded dimension.

    This is the displaced-parity route to the Wigner function.  The
    padding keeps the product faithful for every retained row; the result
    agrees with cahill_glauber_T to the padding tail (~1e-12 for states
    supported well inside N).
    """
    npad = pad_dim(alpha, N)
    dpad = displacement(alpha, npad).data
    pi = (-1.0) ** np.arange(npad)
    full = (dpad * pi[None, :]) @ dpad.conj().T
    block = full[:N, :N]
    block = (block + block.conj().T) / 2
    return Operator((N,), block, hermitian=True)


def cahill_glauber_T(alpha: complex, N: int) -> Operator:
    """Displaced parity in closed form.

    For m >= n,

        <n|T(alpha)|m> = sqrt(n!/m!) (-1)^n (2 alpha*)^(m-n)
                         L_n^(m-n)(4|alpha|^2) e^(-2|alpha|^2),

    and the lower triangle follows from Hermiticity.  T(0) reduces to the
    parity operator exactly, and the elements obey the transposition rule
    <n|T(alpha)|m> = <m|T(alpha*)|n>.
    """
    x = 4 * abs(alpha) ** 2
    n = np.arange(N)
    nn, mm = np.meshgrid(n, n, indexing="ij")
    up = mm >= nn
    d = (mm - nn)[up]
    logratio = 0.5 * (gammaln(nn[up] + 1) - gammaln(mm[up] + 1))
    if alpha == 0:
        vals = np.where(d == 0, (-1.0) ** nn[up], 0.0).astype(complex)
    else:
        lag = eval_genlaguerre(nn[up], d, x)
        vals = (
            np.exp(logratio + d * np.log(2 * abs(alpha)) - x / 2)
            * (-1.0) ** nn[up]
            * np.exp(-1j * d * np.angle(alpha))
            * lag
        )
    out = np.zeros((N, N), dtype=complex)
    out[up] = vals
    out = out + np.triu(out, 1).conj().T
    return Operator((N,), out, hermitian=True)


# ---------------------------------------------------------------------------
# composition


def tensor(a, b):
    """Kronecker product of two Operators, two kets, or two densities."""
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(
            a.dims + b.dims,
            np.kron(a.data, b.data),
            hermitian=a.hermitian and b.hermitian,
            unitary=a.unitary and b.unitary,
        )
    if isinstance(a, QuantumState) and isinstance(b, QuantumState):
        if a.kind == "ket" and b.kind == "ket":
            return QuantumState(a.dims + b.dims, np.kron(a.data, b.data), kind="ket")
        ra, rb = a.to_density(), b.to_density()
        return QuantumState(a.dims + b.dims, np.kron(ra.data, rb.data), kind="density")
    raise TypeError("tensor expects two Operators or two QuantumStates")


def superposition(states, coeffs) -> QuantumState:
    """Normalized linear combination of kets sharing the same dims."""
    vecs = [s.data for s in states]
    dims = states[0].dims
    out = sum(c * v for c, v in zip(coeffs, vecs))
    nrm = np.linalg.norm(out)
    if nrm < 1e-12:
        raise ValueError("superposition is the zero vector")
    return QuantumState(dims, out / nrm, kind="ket")


def truncate_density(state: QuantumState, dims) -> QuantumState:
    """Keep the low-Fock block of a two-mode state, renormalized.

    The retained block of a density matrix is still Hermitian and
    positive, only its trace drops by the discarded weight, so a single
    renormalization restores a valid state.  Raises when the target is
    larger than the source or the kept weight vanishes.
    """
    dims = _as_dims(dims)
    if len(state.dims) != 2 or len(dims) != 2:
        raise ValueError("truncate_density expects two-mode states")
    n1, n2 = state.dims
    d1, d2 = dims
    if d1 > n1 or d2 > n2:
        raise ValueError("target dims exceed the source truncation")
    rho4 = state.to_density().data.reshape(n1, n2, n1, n2)
    block = rho4[:d1, :d2, :d1, :d2].reshape(d1 * d2, d1 * d2)
    block = (block + block.conj().T) / 2.0
    tr = np.trace(block).real
    if tr <= 0:
        raise ValueError("no weight left in the truncated block")
    return QuantumState(dims, block / tr, kind="density", check=False)


# ---------------------------------------------------------------------------
# cat states


def coherent_cat(alpha: complex, cat_parity: str, N: int) -> QuantumState:
    """Even or odd coherent-state cat, |alpha> +/- |-alpha>, normalized.

    Args:
        alpha: coherent amplitude; |alpha|^2 <= N/4 keeps truncation honest.
        cat_parity: "even" or "odd".
        N: truncation, at least 4.

    Raises:
        ValueError: odd cat at alpha = 0 (the zero vector).
    """
    if N < 4:
        raise ValueError("cat states need dimension >= 4")
    if abs(alpha) ** 2 > N / 4:
        raise ValueError("cat amplitude too large for truncation")
    sign = {"even": 1.0, "odd": -1.0}[cat_parity]
    if alpha == 0:
        if cat_parity == "odd":
            raise ValueError("odd cat is undefined at alpha = 0")
        return fock(0, N)
    plus = coherent(alpha, N)
    minus = coherent(-alpha, N)
    return superposition([plus, minus], [1.0, sign])


@dataclass(frozen=True)
class EigenCats:
    """The degenerate cat pair of a single pumped KPO.

    even/odd are the highest-energy eigenstates in each parity sector of
    H = 2*pi*(delta n - K/2 a^dag^2 a^2 + P/2 (a^dag^2 + a^2)); energies
    are in MHz (eigenvalue / 2*pi).
    """

    even: QuantumState
    odd: QuantumState
    energy_even: float
    energy_odd: float


def kpo_eigen_cats(K: float, P: float, delta: float, N: int) -> EigenCats:
    """Even and odd eigen-cats of one Kerr parametric oscillator.

    Selection is by parity sector of the eigenvectors (parity expectation
    beyond +/- 0.999), never by energy ordering of the near-degenerate
    pair.  Global phases are fixed so that <0|even> > 0 and <1|odd> > 0,
    matching the |alpha> +/- |-alpha> convention with alpha real positive.

    At P = 0, delta = 0 this returns the Fock states |0> and |1>.
    """
    a = annihilation(N).data
    ad = a.conj().T
    n_op = np.diag(np.arange(N, dtype=float))
    h = MHZ * (delta * n_op - K / 2 * (ad @ ad @ a @ a) + P / 2 * (ad @ ad + a @ a))
    evals, evecs = np.linalg.eigh(h)
    pi_diag = (-1.0) ** np.arange(N)
    sector = {}
    for label, want in (("even", 1.0), ("odd", -1.0)):
        idx = [
            i
            for i in range(N)
            if want * np.real(evecs[:, i].conj() @ (pi_diag * evecs[:, i])) > 0.999
        ]
        if not idx:
            raise ValueError(f"no clean {label}-parity eigenstates found")
        sector[label] = max(idx, key=lambda i: evals[i])
    even = evecs[:, sector["even"]].astype(complex)
    odd = evecs[:, sector["odd"]].astype(complex)
    ph_e = even[0] if abs(even[0]) > 1e-12 else even[np.argmax(np.abs(even))]
    ph_o = odd[1] if abs(odd[1]) > 1e-12 else odd[np.argmax(np.abs(odd))]
    even = even * (abs(ph_e) / ph_e)
    odd = odd * (abs(ph_o) / ph_o)
    return EigenCats(
        even=QuantumState((N,), even, kind="ket"),
        odd=QuantumState((N,), odd, kind="ket"),
        energy_even=float(evals[sector["even"]] / MHZ),
        energy_odd=float(evals[sector["odd"]] / MHZ),
    )


def thermal_state(n_th: float, N: int) -> QuantumState:
    """Single-mode thermal density matrix with mean occupation n_th."""
    if n_th < 0:
        raise ValueError("n_th must be nonnegative")
    if n_th == 0:
        return fock(0, N).to_density()
    n = np.arange(N)
    p = (n_th / (1 + n_th)) ** n / (1 + n_th)
    p /= p.sum()  # renormalize the truncated tail
    return QuantumState((N,), np.diag(p).astype(complex), kind="density")
