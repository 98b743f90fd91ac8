"""Ground-state observables: bipartite entropy, Schmidt rank, correlations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryMismatchError, DomainError, NormalizationError
from .graph import InteractionGraph

__all__ = [
    "EntropyResult",
    "CorrelationProfile",
    "entanglement_entropy",
    "entropy_from_spectrum",
    "effective_rank",
    "spin_moments",
    "correlation_matrix",
    "correlation_fluctuation",
    "ring_correlation_profile",
    "chain_correlation_profile",
]

NORM_TOL = 1e-10
SCHMIDT_FLOOR = 1e-14


@dataclass
class EntropyResult:
    entropy_bits: float
    schmidt_spectrum: np.ndarray
    cut_position: int


@dataclass
class CorrelationProfile:
    r: np.ndarray
    c_of_r: np.ndarray
    boundary: str

    def as_dict(self) -> dict:
        return {int(r): float(c) for r, c in zip(self.r, self.c_of_r)}


def _amplitudes(psi, n=None) -> tuple[np.ndarray, int]:
    amps = np.asarray(getattr(psi, "amplitudes", psi), dtype=np.complex128).ravel()
    if n is None:
        n = getattr(psi, "n_spins", None) or int(round(np.log2(amps.size)))
    if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
        raise NormalizationError(f"state norm {np.linalg.norm(amps):.3e} differs from 1")
    return amps, n


def entropy_from_spectrum(p) -> float:
    """Von Neumann entropy in bits of a probability spectrum."""
    p = np.asarray(p, dtype=np.float64)
    p = p[p > SCHMIDT_FLOOR]
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def entanglement_entropy(psi, cut: int, n: int | None = None) -> EntropyResult:
    """Entropy between spins 1..cut and cut+1..N.

    With spin j on bit j-1, the index splits as ``left + 2**cut * right``,
    so the reshape below has the right block along rows.
    """
    amps, n = _amplitudes(psi, n)
    if not 1 <= cut <= n - 1:
        raise DomainError(f"cut must lie in 1..{n - 1}, got {cut}")
    s = np.linalg.svd(amps.reshape(2 ** (n - cut), 2**cut), compute_uv=False)
    p = s**2
    p = p[p > SCHMIDT_FLOOR]
    return EntropyResult(entropy_from_spectrum(p), p, cut)


def effective_rank(spectrum, epsilon: float) -> int:
    """Smallest chi whose leading chi weights sum to at least 1 - epsilon."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie strictly between 0 and 1")
    p = np.sort(np.asarray(spectrum, dtype=np.float64))[::-1]
    cum = np.cumsum(p)
    # slack absorbs round-off in sums such as 0.7 + 0.2
    chi = int(np.searchsorted(cum, 1.0 - epsilon - 1e-12)) + 1
    return min(chi, len(p))


def _site_vectors(amps: np.ndarray, n: int, pauli_normalization: bool) -> np.ndarray:
    """Rows ``s_j^a psi`` ordered (j, a), shape (3N, 2^N)."""
    c = 1.0 if pauli_normalization else 0.5
    x = np.arange(amps.size)
    out = np.empty((3 * n, amps.size), dtype=np.complex128)
    for j in range(n):
        z = 1.0 - 2.0 * ((x >> j) & 1)
        flipped = amps[x ^ (1 << j)]
        out[3 * j] = c * flipped
        out[3 * j + 1] = c * (-1j * z) * flipped
        out[3 * j + 2] = c * z * amps
    return out


def spin_moments(psi, n: int | None = None, pauli_normalization: bool = False):
    """One- and two-point spin expectations.

    Returns ``(m, g)`` with ``m[j, a] = <s_j^a>`` and
    ``g[j, a, k, b] = <s_j^a s_k^b>`` (0-based sites).
    """
    amps, n = _amplitudes(psi, n)
    phi = _site_vectors(amps, n, pauli_normalization)
    m = np.real(phi @ amps.conj()).reshape(n, 3)
    g = (phi.conj() @ phi.T).reshape(n, 3, n, 3)
    return m, g


def correlation_matrix(psi, n: int | None = None, pauli_normalization: bool = False) -> np.ndarray:
    """C(j, k) for all pairs, averaged over the nine component pairs.

    Diagonal entries are NaN.
    """
    m, g = spin_moments(psi, n, pauli_normalization)
    conn = g - m[:, :, None, None] * m[None, None, :, :]
    c = np.mean(np.abs(conn) ** 2, axis=(1, 3))
    # equal up to rounding; copy one triangle so C(j,k) = C(k,j) exactly
    lower = np.tril_indices_from(c, -1)
    c[lower] = c.T[lower]
    np.fill_diagonal(c, np.nan)
    return c


def correlation_fluctuation(psi, j: int, k: int, n: int | None = None, pauli_normalization: bool = False) -> float:
    """Squared connected correlator between vertices j and k (1-based)."""
    if j == k:
        raise DomainError("correlation fluctuation needs two distinct vertices")
    j, k = min(j, k), max(j, k)
    amps, n = _amplitudes(psi, n)
    phi = _site_vectors(amps, n, pauli_normalization)
    a = phi[3 * (j - 1): 3 * j]
    b = phi[3 * (k - 1): 3 * k]
    two = a.conj() @ b.T
    ma = np.real(a @ amps.conj())
    mb = np.real(b @ amps.conj())
    return float(np.mean(np.abs(two - np.outer(ma, mb)) ** 2))


def _is_labelled_ring(g: InteractionGraph) -> bool:
    if not g.is_ring():
        return False
    want = {frozenset((i, i % g.n + 1)) for i in range(1, g.n + 1)}
    return {frozenset(e) for e in g.edges} == want


def ring_correlation_profile(psi, graph: InteractionGraph, pauli_normalization: bool = False,
                             matrix: np.ndarray | None = None) -> CorrelationProfile:
    """C(r) = (1/N) sum_i C(i, i + r mod N) for r = 1..N-1."""
    if not _is_labelled_ring(graph):
        raise BoundaryMismatchError("ring profile needs a ring graph labelled 1..N around the cycle")
    n = graph.n
    c = correlation_matrix(psi, n, pauli_normalization) if matrix is None else matrix
    i = np.arange(n)
    r = np.arange(1, n)
    prof = np.array([np.mean(c[i, (i + d) % n]) for d in r])
    return CorrelationProfile(r, prof, "periodic")


def chain_correlation_profile(psi, n: int | None = None, pauli_normalization: bool = False,
                              matrix: np.ndarray | None = None) -> CorrelationProfile:
    """Open-boundary analogue: average of C(i, i + r) over the N - r pairs."""
    if matrix is None:
        matrix = correlation_matrix(psi, n, pauli_normalization)
    n = matrix.shape[0]
    r = np.arange(1, n)
    prof = np.array([np.mean(np.diagonal(matrix, offset=d)) for d in r])
    return CorrelationProfile(r, prof, "open")
