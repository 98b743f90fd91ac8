"""Lowest eigenpairs by thick-restart block Lanczos.

The Krylov basis is grown one block at a time from the residuals of the
current lowest Ritz pairs, which spans the same block Krylov space as the
three-term Lanczos recurrence. Every new block is orthogonalised twice
against the whole basis, and the projected matrix is formed explicitly from
stored products ``H V`` rather than from recurrence coefficients. When the
basis is full it is contracted onto the lowest Ritz vectors.

A block of at least two vectors resolves exactly degenerate pairs (Kramers
doublets) that a single-vector iteration would only find through rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .ensemble import solver_rng
from .errors import ConvergenceError
from .hamiltonian import HamiltonianOperator, SpinState

__all__ = ["GroundSolution", "KrylovResult", "lowest_eigenpairs", "lowest_two", "DEGENERACY_THRESHOLD"]

DEGENERACY_THRESHOLD = 1e-8


@dataclass
class KrylovResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    matvecs: int
    spectral_range: float
    history: list = field(default_factory=list)


def _overlap(rows: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """``rows @ basis^H`` without conjugating (copying) the large basis."""
    return (basis @ rows.conj().T).conj().T


def _orthonormalize_rows(new: np.ndarray, basis: np.ndarray, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal rows spanning ``new`` minus its projection on ``basis`` rows.

    Classical Gram-Schmidt, repeated while a pass removes more than half of
    a row's norm (at most three passes).
    """
    norms = np.linalg.norm(new, axis=1)
    new = new[norms > 0] / norms[norms > 0, None]
    if basis.shape[0]:
        for _ in range(3):
            before = np.linalg.norm(new, axis=1)
            new = new - _overlap(new, basis) @ basis
            if np.all(np.linalg.norm(new, axis=1) > 0.5 * before):
                break
    if new.shape[0] == 0:
        return new
    q, r = np.linalg.qr(new.T)
    return np.ascontiguousarray(q[:, np.abs(np.diag(r)) > drop_tol].T)


def lowest_eigenpairs(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    k: int = 2,
    tol: float = 1e-10,
    max_iter: int = 500,
    block_size: int = 2,
    max_basis: int = 32,
    keep: int = 10,
    rng=None,
    x0: Optional[np.ndarray] = None,
) -> KrylovResult:
    """Lowest ``k`` eigenpairs of a Hermitian operator given as ``apply``.

    ``apply`` maps a (dim, p) block to a (dim, p) block. Converged when every
    wanted residual ``||H x - theta x||`` is at most ``tol`` times the largest
    Ritz value magnitude seen. ``max_iter`` counts basis expansions. Raises
    ConvergenceError with the best iterates.
    """
    rng = np.random.default_rng(rng)
    b = max(block_size, 1)
    k = min(k, dim)
    max_basis = min(max(max_basis, k + 2 * b), dim)
    keep = min(max(keep, k + b), max_basis - b)

    def hv(rows):
        return np.ascontiguousarray(apply(np.ascontiguousarray(rows.T)).T)

    # basis vectors are stored as rows
    v = np.empty((max_basis, dim), dtype=np.complex128)
    w = np.empty((max_basis, dim), dtype=np.complex128)
    if x0 is None:
        x0 = rng.standard_normal((dim, max(b, k))) + 1j * rng.standard_normal((dim, max(b, k)))
    start = _orthonormalize_rows(np.asarray(x0, dtype=np.complex128).reshape(dim, -1).T, v[:0])
    m = start.shape[0]
    v[:m] = start
    w[:m] = hv(start)
    g = _overlap(w[:m], v[:m]).T
    matvecs = m
    history = []
    scale = 0.0
    res = None
    for it in range(1, max_iter + 1):
        g = 0.5 * (g + g.conj().T)
        theta, y = scipy.linalg.eigh(g)
        scale = max(scale, float(np.max(np.abs(theta))))
        nb = min(max(b, k), len(theta))
        x = y[:, :nb].T @ v[:m]
        r = y[:, :nb].T @ w[:m] - theta[:nb, None] * x
        res = np.linalg.norm(r, axis=1)
        history.append(float(theta[0]))
        threshold = tol * max(scale, np.finfo(float).tiny)
        if np.all(res[:k] <= threshold) or m >= dim:
            break
        if m + b > max_basis:
            yk = y[:, :keep].T
            v[:keep] = yk @ v[:m]
            w[:keep] = yk @ w[:m]
            m = keep
            g = np.diag(theta[:keep]).astype(np.complex128)
        # expand with residuals of unconverged wanted pairs first
        order = [i for i in range(nb) if res[i] > threshold] or list(range(nb))
        new = _orthonormalize_rows(r[order[:b]], v[:m])
        if new.shape[0] == 0:
            fresh = rng.standard_normal((b, dim)) + 1j * rng.standard_normal((b, dim))
            new = _orthonormalize_rows(fresh, v[:m])
            if new.shape[0] == 0:
                break
        p = new.shape[0]
        wn = hv(new)
        matvecs += p
        g12 = _overlap(wn, v[:m]).T
        g22 = _overlap(wn, new).T
        g = np.block([[g, g12], [g12.conj().T, g22]])
        v[m:m + p] = new
        w[m:m + p] = wn
        m += p
    else:
        theta, y = scipy.linalg.eigh(0.5 * (g + g.conj().T))
        x = (y[:, :k].T @ v[:m]).T
        raise ConvergenceError(
            f"no convergence after {max_iter} expansions (residuals {res[:k]})",
            values=theta[:k], vectors=x, residuals=res[:k], iterations=max_iter,
        )

    x = np.linalg.qr((y[:, :k].T @ v[:m]).T)[0]
    # re-diagonalise in the final span so the pair is exactly orthonormal
    hx = apply(x)
    matvecs += x.shape[1]
    small = x.conj().T @ hx
    vals, z = scipy.linalg.eigh(0.5 * (small + small.conj().T))
    x = x @ z
    hx = hx @ z
    residuals = np.linalg.norm(hx - x * vals, axis=0)
    return KrylovResult(
        values=vals,
        vectors=x,
        residuals=residuals,
        iterations=it,
        matvecs=matvecs,
        spectral_range=float(theta[-1] - theta[0]),
        history=history,
    )


@dataclass
class GroundSolution:
    e0: float
    e1: float
    psi0: SpinState
    psi1: SpinState
    gap: float
    iterations: int
    residual_norms: tuple
    degenerate_flag: bool
    spectral_range: float = float("nan")
    matvecs: int = 0


def lowest_two(
    h: HamiltonianOperator,
    tol: float = 1e-10,
    max_iter: int = 500,
    block_size: int = 2,
    rng=None,
    **kwargs,
) -> GroundSolution:
    """Ground state and first excited state of ``h``.

    Start vectors come from the sample's seed unless ``rng`` is given. A pair
    whose splitting is below ``DEGENERACY_THRESHOLD`` times the spectral
    range estimate is flagged degenerate; the returned states then span the
    lowest two-dimensional eigenspace.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if rng is None:
        rng = solver_rng(h.sample)
    out = lowest_eigenpairs(h.apply, h.dim, k=2, tol=tol, max_iter=max_iter,
                            block_size=block_size, rng=rng, **kwargs)
    e0, e1 = (float(v) for v in out.values[:2])
    gap = max(e1 - e0, 0.0)
    return GroundSolution(
        e0=e0,
        e1=e1,
        psi0=SpinState(out.vectors[:, 0], h.n),
        psi1=SpinState(out.vectors[:, 1], h.n),
        gap=gap,
        iterations=out.iterations,
        residual_norms=(float(out.residuals[0]), float(out.residuals[1])),
        degenerate_flag=bool(gap < DEGENERACY_THRESHOLD * out.spectral_range),
        spectral_range=out.spectral_range,
        matvecs=out.matvecs,
    )
