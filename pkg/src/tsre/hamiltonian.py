"""Matrix-free Hamiltonian of a sample on the 2^N-dimensional spin space.

Basis convention: spin j is bit (j - 1) of the basis index, counting from the
least significant bit; bit value 0 is the +1 eigenstate of the third spin
component.

Each coupling ``A[a, b] s_j^a s_k^b`` and each field term ``b[a] s_j^a`` is a
product of single-site operators. A single-site operator either keeps the bit
(third component) or flips it (first and second components), and its matrix
element depends only on the bit of the output state: ``x -> 1``,
``y -> -i z``, ``z -> z`` with ``z = 1 - 2 bit``. Collecting terms by the set
of flipped bits gives

    (H psi)(x) = sum_m d_m(x) psi(x ^ m)

with one diagonal ``d_0``, one coefficient vector per single-site flip and
one per bond flip. The operator stores those vectors and applies them in
that fixed order.
"""

from __future__ import annotations

from typing import Optional

import numba
import numpy as np
import scipy.sparse
from scipy.sparse.linalg import LinearOperator

from .ensemble import TsreSample, scaled_hamiltonian_inputs
from .errors import ResourceError, ShapeError

__all__ = [
    "HamiltonianOperator",
    "SpinState",
    "spin_operators",
    "time_reversal_commutator_norm",
    "apply_time_reversal",
    "DENSE_MAX_SPINS",
]

DENSE_MAX_SPINS = 12

_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)


def spin_operators(pauli_normalization: bool = False) -> np.ndarray:
    """Single-site operators, shape (3, 2, 2).

    Spin-1/2 operators (Pauli / 2) by default, which obey
    ``[s^a, s^b] = i eps_abc s^c``; Pauli matrices with the flag set.
    """
    return _PAULI.copy() if pauli_normalization else _PAULI / 2


class SpinState:
    """State vector of N spins with the basis convention of this module."""

    def __init__(self, amplitudes, n_spins: Optional[int] = None, normalized: bool = True):
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
        if n_spins is None:
            n_spins = int(round(np.log2(amps.size)))
        if amps.size != 2**n_spins:
            raise ShapeError(f"state of length {amps.size} does not describe {n_spins} spins")
        self.amplitudes = amps
        self.n_spins = n_spins
        self.normalized = normalized

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)

    def __len__(self):
        return self.amplitudes.size


@numba.njit(cache=True)
def _apply_kernel(diag, coefs, masks, v, y):
    dim, p = v.shape
    nterms = masks.shape[0]
    for x in range(dim):
        d = diag[x]
        for c in range(p):
            y[x, c] = d * v[x, c]
        for t in range(nterms):
            cf = coefs[x, t]
            xs = x ^ masks[t]
            for c in range(p):
                y[x, c] += cf * v[xs, c]


class HamiltonianOperator:
    """Sample Hamiltonian applied without building the 2^N x 2^N matrix.

    Parameters
    ----------
    s : TsreSample
        Sample whose strength functions are folded into the couplings.
    pauli_normalization : bool
        Use Pauli matrices (eigenvalues +-1) instead of spin-1/2 operators.
    """

    def __init__(self, s: TsreSample, pauli_normalization: bool = False):
        self.sample = s
        self.pauli_normalization = bool(pauli_normalization)
        self.n = s.n
        self.dim = 2**self.n
        self.bonds, self.fields = scaled_hamiltonian_inputs(s)
        self.edges = s.graph.edges
        self._build_terms()

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def dtype(self):
        return np.complex128

    def _build_terms(self):
        n = self.n
        c = 1.0 if self.pauli_normalization else 0.5
        x = np.arange(self.dim, dtype=np.int64)
        z = [(1 - 2 * ((x >> j) & 1)).astype(np.float64) for j in range(n)]

        def factor(a: int, j: int):
            if a == 0:
                return 1.0
            if a == 1:
                return -1j * z[j]
            return z[j]

        diag = np.zeros(self.dim)
        single = [np.zeros(self.dim, dtype=np.complex128) for _ in range(n)]
        pairs = []
        for (j, k), a in zip(self.edges, self.bonds):
            jj, kk = j - 1, k - 1
            pair = np.zeros(self.dim, dtype=np.complex128)
            for al in range(3):
                for be in range(3):
                    coef = c * c * a[al, be]
                    if coef == 0.0:
                        continue
                    term = coef * factor(al, jj) * factor(be, kk)
                    if al == 2 and be == 2:
                        diag += np.real(term)
                    elif al == 2:
                        single[kk] += term
                    elif be == 2:
                        single[jj] += term
                    else:
                        pair += term
            pairs.append(((max(jj, kk), min(jj, kk)), pair))
        for j in range(n):
            b = self.fields[j]
            if b[2] != 0.0:
                diag += c * b[2] * z[j]
            single[j] += c * b[0] + c * b[1] * factor(1, j)

        # (bits flipped, coefficient vector) in application order; all-zero terms dropped
        terms = []
        for j in range(n):
            if np.any(single[j]):
                terms.append(((j,), single[j]))
        for bits, pair in pairs:
            if np.any(pair):
                terms.append((bits, pair))
        self.diagonal = diag
        self.term_bits = [bits for bits, _ in terms]
        self._masks = np.array([sum(1 << b for b in bits) for bits, _ in terms], dtype=np.int64)
        # basis-major layout: one row of term coefficients per basis state
        self._coefs = np.empty((self.dim, len(terms)), dtype=np.complex128)
        for t, (_, coef) in enumerate(terms):
            self._coefs[:, t] = coef

    def apply(self, x) -> np.ndarray:
        """Return ``H @ x`` for a vector (dim,) or a block (dim, p)."""
        if isinstance(x, SpinState):
            return SpinState(self.apply(x.amplitudes), self.n, normalized=False)
        x = np.asarray(x)
        if x.shape[0] != self.dim or x.ndim not in (1, 2):
            raise ShapeError(f"operator of dimension {self.dim} cannot act on shape {x.shape}")
        vec = x.ndim == 1
        v = np.ascontiguousarray(x.reshape(self.dim, -1), dtype=np.complex128)
        y = np.empty_like(v)
        _apply_kernel(self.diagonal, self._coefs, self._masks, v, y)
        return y[:, 0] if vec else y

    __matmul__ = apply
    matvec = apply

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, matmat=self.apply, dtype=np.complex128)

    def norm_bound(self) -> float:
        """Cheap upper bound on the operator norm."""
        c = 1.0 if self.pauli_normalization else 0.5
        # each Pauli product has norm one; sum of |coefficient|s bounds the norm
        return float(c * c * np.abs(self.bonds).sum() + c * np.abs(self.fields).sum())

    def dense(self) -> np.ndarray:
        """Explicit matrix built from Kronecker products of local operators.

        This route shares no code with :meth:`apply`; it is the oracle the
        matrix-free path is checked against.
        """
        if self.n > DENSE_MAX_SPINS:
            raise ResourceError(f"dense matrix for N={self.n} exceeds the N<={DENSE_MAX_SPINS} guard")
        ops = spin_operators(self.pauli_normalization)
        h = scipy.sparse.csr_matrix((self.dim, self.dim), dtype=np.complex128)
        for (j, k), a in zip(self.edges, self.bonds):
            for al in range(3):
                for be in range(3):
                    if a[al, be] != 0.0:
                        h = h + a[al, be] * _embed(((j - 1, ops[al]), (k - 1, ops[be])), self.n)
        for j in range(self.n):
            for al in range(3):
                if self.fields[j, al] != 0.0:
                    h = h + self.fields[j, al] * _embed(((j, ops[al]),), self.n)
        return h.toarray()

    def expectation(self, psi) -> float:
        psi = np.asarray(psi)
        return float(np.real(np.vdot(psi, self.apply(psi))))


def _embed(factors, n: int) -> scipy.sparse.csr_matrix:
    """Product of single-site operators, given as (0-based spin, 2x2 matrix)."""
    # spin j is bit j from the right, so it sits at Kronecker position n-1-j
    chain = [scipy.sparse.identity(2, dtype=np.complex128, format="csr")] * n
    for j, op in factors:
        chain[n - 1 - j] = scipy.sparse.csr_matrix(op)
    out = chain[0]
    for f in chain[1:]:
        out = scipy.sparse.kron(out, f, format="csr")
    return out


def apply_time_reversal(psi: np.ndarray, n: int) -> np.ndarray:
    """Anti-unitary T = (prod_j i sigma_j^y) K, sending every spin s -> -s.

    ``i sigma^y`` maps |0> -> -|1> and |1> -> |0>, so on basis states T
    flips all bits and multiplies by (-1)^(number of zero bits) of the input.
    """
    psi = np.asarray(psi)
    dim = 2**n
    x = np.arange(dim)
    zeros = n - np.bitwise_count(x)
    sign = np.where(zeros % 2 == 0, 1.0, -1.0).reshape((dim,) + (1,) * (psi.ndim - 1))
    out = np.empty(psi.shape, dtype=np.complex128)
    out[x ^ (dim - 1)] = sign * np.conj(psi)
    return out


def time_reversal_commutator_norm(h: HamiltonianOperator, n_probe: int = 0, rng=None) -> float:
    """Size of ``H T - T H``.

    With ``n_probe == 0`` (and N small enough) the spectral norm of the dense
    commutator is returned. Otherwise the largest ``|| (HT - TH) x ||`` over
    ``n_probe`` random unit vectors, a lower estimate of the norm.
    """
    if n_probe == 0 and h.n <= DENSE_MAX_SPINS:
        dense = h.dense()
        # T as an anti-linear map: T v = P conj(v) with P a signed permutation
        p = apply_time_reversal(np.eye(h.dim), h.n)
        # H T v - T H v = (H P - P conj(H)) conj(v)
        comm = dense @ p - p @ np.conj(dense)
        return float(np.linalg.norm(comm, 2))
    rng = np.random.default_rng(rng)
    best = 0.0
    for _ in range(max(n_probe, 1)):
        v = rng.standard_normal(h.dim) + 1j * rng.standard_normal(h.dim)
        v /= np.linalg.norm(v)
        d = h.apply(apply_time_reversal(v, h.n)) - apply_time_reversal(h.apply(v), h.n)
        best = max(best, float(np.linalg.norm(d)))
    return best
