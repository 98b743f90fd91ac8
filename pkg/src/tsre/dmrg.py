"""Finite-size two-site DMRG for open chains.

Conventions
-----------
MPS site tensors have shape ``(left bond, 2, right bond)``; the physical
index is the basis bit of that spin (0 = +1 eigenstate of the third
component), so ``to_statevector`` matches the exact-diagonalisation basis.

MPO site tensors have shape ``(left, right, out, in)`` with five channels:
0 nothing placed yet, 1-3 a component s^a placed on this bond's left site
and waiting for its partner, 4 finished. A bond ``s_j . A s_{j+1}`` emits
``s^a`` into channel ``1 + a`` at site j and closes with
``sum_b A[a, b] s^b`` at site j + 1; fields sit on the 0 -> 4 entry.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ensemble import TsreSample, element_rng, scaled_hamiltonian_inputs
from .eigensolver import lowest_eigenpairs
from .errors import DomainError, ExcitedStateError, UnsupportedTopologyError
from .hamiltonian import spin_operators
from .observables import EntropyResult, entropy_from_spectrum, SCHMIDT_FLOOR

__all__ = [
    "MatrixProductOperator",
    "MatrixProductState",
    "DmrgResult",
    "build_mpo",
    "random_mps",
    "product_mps",
    "dmrg_ground",
    "dmrg_first_excited",
    "mps_entropy",
    "mps_correlation",
    "mps_expectation",
    "save_mps",
    "load_mps",
]

TRUNCATION_CUTOFF = 1e-10
_DMRG_TAG = 3


@dataclass
class MatrixProductOperator:
    tensors: list
    n: int
    norm_bound: float = 0.0

    def to_dense(self) -> np.ndarray:
        """Contract to a 2^N x 2^N matrix in the exact-diagonalisation basis."""
        t = self.tensors[0][0]  # (right, out, in)
        t = t.transpose(1, 2, 0)  # (out1, in1, w)
        for w in self.tensors[1:]:
            # accumulated (outs..., ins..., w) with outs/ins flattened
            t = np.tensordot(t, w, axes=([-1], [0]))  # (O, I, w', o, i)
            o_dim, i_dim = t.shape[0], t.shape[1]
            t = t.transpose(3, 0, 4, 1, 2)  # (o, O, i, I, w')
            t = t.reshape(2 * o_dim, 2 * i_dim, -1)
        # new sites were prepended, so spin j ends up as bit j-1 of the index
        return t[:, :, 0]


@dataclass
class MatrixProductState:
    tensors: list
    canonical_center: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MatrixProductState":
        return MatrixProductState([t.copy() for t in self.tensors], self.canonical_center)

    def to_statevector(self) -> np.ndarray:
        t = self.tensors[0][0]  # (2, right)
        for a in self.tensors[1:]:
            t = np.tensordot(t, a, axes=([-1], [0]))  # (..., 2, right)
        t = t[..., 0]
        # axes are (s1, ..., sN); s1 must be the least significant bit
        return np.ascontiguousarray(t.transpose(tuple(range(self.n - 1, -1, -1)))).ravel()

    def norm(self) -> float:
        return float(np.sqrt(abs(overlap(self, self))))


@dataclass
class DmrgResult:
    energy: float
    mps: MatrixProductState
    sweep_energies: list = field(default_factory=list)
    converged: bool = False
    max_discarded_weight: float = 0.0
    sweeps: int = 0
    overlap_with_reference: Optional[float] = None
    warning: Optional[str] = None
    method: str = "dmrg"

    @property
    def diagnostics(self) -> dict:
        return {
            "sweep_energies": list(self.sweep_energies),
            "converged": self.converged,
            "max_discarded_weight": self.max_discarded_weight,
            "sweeps": self.sweeps,
            "bond_dims": self.mps.bond_dims,
            "overlap_with_reference": self.overlap_with_reference,
            "warning": self.warning,
        }


def build_mpo(s: TsreSample, pauli_normalization: bool = False) -> MatrixProductOperator:
    g = s.graph
    if not g.is_chain():
        raise UnsupportedTopologyError("DMRG is implemented for open chains 1-2-...-N only")
    bonds, fields = scaled_hamiltonian_inputs(s)
    ops = spin_operators(pauli_normalization)
    eye = np.eye(2, dtype=np.complex128)
    n = g.n
    tensors = []
    for i in range(n):
        w = np.zeros((5, 5, 2, 2), dtype=np.complex128)
        w[0, 0] = eye
        w[4, 4] = eye
        if i < n - 1:
            for a in range(3):
                w[0, 1 + a] = ops[a]
        if i > 0:
            left = bonds[i - 1]
            for a in range(3):
                w[1 + a, 4] = np.tensordot(left[a], ops, axes=(0, 0))
        if np.any(fields[i]):
            w[0, 4] = np.tensordot(fields[i], ops, axes=(0, 0))
        if i == 0:
            w = w[:1]
        if i == n - 1:
            w = w[:, 4:]
        tensors.append(w)
    c = 1.0 if pauli_normalization else 0.5
    bound = float(c * c * np.abs(bonds).sum() + c * np.abs(fields).sum())
    return MatrixProductOperator(tensors, n, bound)


def _bond_limits(n: int, chi: int) -> list:
    return [min(chi, 2 ** (i + 1), 2 ** (n - i - 1)) for i in range(n - 1)]


def random_mps(n: int, chi: int, rng=None) -> MatrixProductState:
    rng = np.random.default_rng(rng)
    dims = [1] + _bond_limits(n, chi) + [1]
    tensors = []
    for i in range(n):
        shape = (dims[i], 2, dims[i + 1])
        tensors.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    mps = MatrixProductState(tensors)
    right_canonicalize(mps)
    return mps


def product_mps(states) -> MatrixProductState:
    """MPS of a product state from per-site 2-vectors."""
    tensors = [np.asarray(v, dtype=np.complex128).reshape(1, 2, 1) / np.linalg.norm(v) for v in states]
    return MatrixProductState(tensors, 0)


def right_canonicalize(mps: MatrixProductState) -> None:
    """Make sites 1..N-1 right-isometric and normalise, center at site 0."""
    t = mps.tensors
    for i in range(mps.n - 1, 0, -1):
        dl, d, dr = t[i].shape
        q, r = np.linalg.qr(t[i].reshape(dl, d * dr).T)
        t[i] = q.T.reshape(-1, d, dr)
        t[i - 1] = np.tensordot(t[i - 1], r.T, axes=([2], [0]))
    t[0] /= np.linalg.norm(t[0])
    mps.canonical_center = 0


def move_center(mps: MatrixProductState, site: int) -> None:
    """Shift the orthogonality center to ``site`` by QR steps."""
    t = mps.tensors
    if mps.canonical_center is None:
        right_canonicalize(mps)
    c = mps.canonical_center
    while c < site:
        dl, d, dr = t[c].shape
        q, r = np.linalg.qr(t[c].reshape(dl * d, dr))
        t[c] = q.reshape(dl, d, -1)
        t[c + 1] = np.tensordot(r, t[c + 1], axes=([1], [0]))
        c += 1
    while c > site:
        dl, d, dr = t[c].shape
        q, r = np.linalg.qr(t[c].reshape(dl, d * dr).T)
        t[c] = q.T.reshape(-1, d, dr)
        t[c - 1] = np.tensordot(t[c - 1], r.T, axes=([2], [0]))
        c -= 1
    mps.canonical_center = c


def overlap(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """<bra|ket>."""
    e = np.ones((1, 1), dtype=np.complex128)
    for a, b in zip(bra.tensors, ket.tensors):
        e = np.tensordot(e, b, axes=([1], [0]))  # (a', s, b)
        e = np.tensordot(a.conj(), e, axes=([0, 1], [0, 1]))  # (a'_new, b_new)
    return complex(e[0, 0])


def _extend_left(env, a, w):
    """L[b', v, b] from L[a', w, a] with bra conj(a), operator w, ket a."""
    t = np.tensordot(env, a, axes=([2], [0]))  # (a', w, s, b)
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))  # (a', b, v, s')
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))  # (b', b, v)
    return t.transpose(0, 2, 1)


def _extend_right(env, b, w):
    """R[a', w, a] from R[b', v, b]."""
    t = np.tensordot(b, env, axes=([2], [2]))  # (a, s, b', v)
    t = np.tensordot(t, w, axes=([1, 3], [3, 1]))  # (a, b', w, s')
    t = np.tensordot(b.conj(), t, axes=([1, 2], [3, 1]))  # (a', a, w)
    return t.transpose(0, 2, 1)


def _extend_overlap_left(env, a, g):
    """E[b, b_g] = sum conj(a[a, s, b]) env[a, a_g] g[a_g, s, b_g]."""
    t = np.tensordot(env, g, axes=([1], [0]))  # (a, s, b_g)
    return np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))


def _extend_overlap_right(env, b, g):
    t = np.tensordot(g, env, axes=([2], [1]))  # (c_g, s, d)
    return np.tensordot(b.conj(), t, axes=([1, 2], [1, 2]))  # (c, c_g)


def _apply_two_site(left, w1, w2, right, theta):
    t = np.tensordot(left, theta, axes=([2], [0]))  # (a', w, s1, s2, c)
    t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))  # (a', s2, c, v, s1')
    t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))  # (a', c, s1', u, s2')
    t = np.tensordot(t, right, axes=([1, 3], [2, 1]))  # (a', s1', s2', c')
    return t


class _Sweeper:
    """Environments and sweep logic shared by ground and excited searches."""

    def __init__(self, mpo, mps, chi_max, penalty=None, local_tol=1e-9):
        self.mpo = mpo
        self.mps = mps
        self.chi_max = chi_max
        self.local_tol = local_tol
        self.n = mps.n
        self.penalty = penalty  # (weight, reference MPS) or None
        right_canonicalize(mps)
        n = self.n
        self.left = [None] * (n + 1)
        self.right = [None] * (n + 1)
        self.left[0] = np.ones((1, 1, 1), dtype=np.complex128)
        self.right[n - 1] = np.ones((1, 1, 1), dtype=np.complex128)
        for i in range(n - 1, 0, -1):
            self.right[i - 1] = _extend_right(self.right[i], mps.tensors[i], mpo.tensors[i])
        if penalty is not None:
            g = penalty[1]
            self.oleft = [None] * (n + 1)
            self.oright = [None] * (n + 1)
            self.oleft[0] = np.ones((1, 1), dtype=np.complex128)
            self.oright[n - 1] = np.ones((1, 1), dtype=np.complex128)
            for i in range(n - 1, 0, -1):
                self.oright[i - 1] = _extend_overlap_right(self.oright[i], mps.tensors[i], g.tensors[i])
        self.max_discarded = 0.0

    def _local_reference(self, i):
        g = self.penalty[1].tensors
        t = np.tensordot(self.oleft[i], g[i], axes=([1], [0]))  # (a, s1, m)
        t = np.tensordot(t, g[i + 1], axes=([2], [0]))  # (a, s1, s2, c_g)
        return np.tensordot(t, self.oright[i + 1], axes=([3], [1]))  # (a, s1, s2, c)

    def optimize_bond(self, i, direction, chi):
        t = self.mps.tensors
        theta = np.tensordot(t[i], t[i + 1], axes=([2], [0]))
        shape = theta.shape
        left, right = self.left[i], self.right[i + 1]
        w1, w2 = self.mpo.tensors[i], self.mpo.tensors[i + 1]
        ref = None
        if self.penalty is not None:
            ref = self._local_reference(i).reshape(-1)
            weight = self.penalty[0]

        def apply(block):
            out = np.empty_like(block)
            for c in range(block.shape[1]):
                y = _apply_two_site(left, w1, w2, right, block[:, c].reshape(shape)).reshape(-1)
                if ref is not None:
                    y = y + weight * ref * np.vdot(ref, block[:, c])
                out[:, c] = y
            return out

        dim = theta.size
        if dim <= 4:
            mat = apply(np.eye(dim, dtype=np.complex128))
            vals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
            energy, vec = vals[0], vecs[:, 0]
        else:
            res = lowest_eigenpairs(apply, dim, k=1, tol=self.local_tol, block_size=1,
                                    max_basis=min(24, dim), keep=4, max_iter=400,
                                    x0=theta.reshape(-1, 1), rng=0)
            energy, vec = res.values[0], res.vectors[:, 0]
        u, s, vh = np.linalg.svd(vec.reshape(shape[0] * 2, 2 * shape[3]), full_matrices=False)
        s = s / np.linalg.norm(s)
        w = s**2
        tail = np.cumsum(w[::-1])[::-1]  # tail[k] = weight discarded when keeping k values
        keep = len(s)
        for k in range(1, len(s) + 1):
            if k == len(s) or tail[k] < TRUNCATION_CUTOFF:
                keep = k
                break
        keep = min(keep, chi)
        self.max_discarded = max(self.max_discarded, float(tail[keep]) if keep < len(s) else 0.0)
        u, s, vh = u[:, :keep], s[:keep] / np.linalg.norm(s[:keep]), vh[:keep]
        if direction == "right":
            t[i] = u.reshape(shape[0], 2, keep)
            t[i + 1] = (s[:, None] * vh).reshape(keep, 2, shape[3])
            self.left[i + 1] = _extend_left(self.left[i], t[i], w1)
            if self.penalty is not None:
                self.oleft[i + 1] = _extend_overlap_left(self.oleft[i], t[i], self.penalty[1].tensors[i])
            self.mps.canonical_center = i + 1
        else:
            t[i] = (u * s).reshape(shape[0], 2, keep)
            t[i + 1] = vh.reshape(keep, 2, shape[3])
            self.right[i] = _extend_right(self.right[i + 1], t[i + 1], w2)
            if self.penalty is not None:
                self.oright[i] = _extend_overlap_right(self.oright[i + 1], t[i + 1], self.penalty[1].tensors[i + 1])
            self.mps.canonical_center = i
        return float(np.real(energy))

    def sweep(self, chi):
        energy = None
        for i in range(self.n - 1):
            energy = self.optimize_bond(i, "right", chi)
        for i in range(self.n - 2, -1, -1):
            energy = self.optimize_bond(i, "left", chi)
        return energy


def _chi_schedule(chi_max: int, sweeps: int) -> list:
    chis = []
    chi = min(8, chi_max)
    while chi < chi_max and len(chis) < sweeps:
        chis.append(chi)
        chi *= 2
    chis += [chi_max] * (sweeps - len(chis))
    return chis


def mps_expectation(mps: MatrixProductState, mpo: MatrixProductOperator) -> float:
    e = np.ones((1, 1, 1), dtype=np.complex128)
    for a, w in zip(mps.tensors, mpo.tensors):
        e = _extend_left(e, a, w)
    return float(np.real(e[0, 0, 0])) / overlap(mps, mps).real


def _run(mpo, mps, chi_max, sweeps, energy_tol, penalty=None, local_tol=1e-9):
    sweeper = _Sweeper(mpo, mps, chi_max, penalty=penalty, local_tol=local_tol)
    history = []
    converged = False
    schedule = _chi_schedule(chi_max, sweeps)
    for it, chi in enumerate(schedule, start=1):
        history.append(sweeper.sweep(chi))
        if chi == chi_max and len(history) >= 2 and abs(history[-1] - history[-2]) < energy_tol:
            converged = True
            break
    return sweeper, history, converged, it


def dmrg_ground(
    mpo: MatrixProductOperator,
    chi_max: int = 64,
    sweeps: int = 30,
    energy_tol: float = 1e-10,
    seed: int = 0,
    mps: Optional[MatrixProductState] = None,
) -> DmrgResult:
    """Two-site DMRG ground state search.

    Bond dimension ramps geometrically from 8 to ``chi_max``; convergence is
    declared once a full sweep at ``chi_max`` changes the energy by less than
    ``energy_tol``. Without convergence the best state is returned with a
    warning.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be positive")
    if mps is None:
        mps = random_mps(mpo.n, min(chi_max, 8), element_rng(seed, 0, _DMRG_TAG, mpo.n))
    else:
        mps = mps.copy()
    sweeper, history, converged, count = _run(mpo, mps, chi_max, sweeps, energy_tol)
    result = DmrgResult(
        energy=mps_expectation(mps, mpo),
        mps=mps,
        sweep_energies=history,
        converged=converged,
        max_discarded_weight=sweeper.max_discarded,
        sweeps=count,
    )
    if not converged:
        result.warning = f"energy not converged to {energy_tol} after {count} sweeps"
        warnings.warn(result.warning, RuntimeWarning, stacklevel=2)
    return result


def dmrg_first_excited(
    mpo: MatrixProductOperator,
    ground: MatrixProductState,
    penalty_weight: Optional[float] = None,
    chi_max: int = 64,
    sweeps: int = 30,
    energy_tol: float = 1e-10,
    seed: int = 1,
    overlap_tol: float = 1e-6,
) -> DmrgResult:
    """Lowest state of ``H + w |ground><ground|``.

    The default weight is twice the norm bound of ``H``, which exceeds the
    spectral range and so always lifts the ground state above the first
    excited one. Raises ExcitedStateError if the result still overlaps the
    ground state by ``overlap_tol`` or more.
    """
    if penalty_weight is None:
        penalty_weight = 2.0 * mpo.norm_bound
    g = ground.copy()
    g.tensors[0] = g.tensors[0] / g.norm()
    mps = random_mps(mpo.n, min(chi_max, 8), element_rng(seed, 1, _DMRG_TAG, mpo.n))
    sweeper, history, converged, count = _run(mpo, mps, chi_max, sweeps, energy_tol,
                                              penalty=(penalty_weight, g))
    ov = abs(overlap(g, mps)) / mps.norm()
    energy = mps_expectation(mps, mpo)
    result = DmrgResult(
        energy=energy,
        mps=mps,
        sweep_energies=history,
        converged=converged,
        max_discarded_weight=sweeper.max_discarded,
        sweeps=count,
        overlap_with_reference=float(ov),
    )
    if ov >= overlap_tol:
        raise ExcitedStateError(f"excited state overlaps the ground state by {ov:.3e}", energy, ov)
    if not converged:
        result.warning = f"energy not converged to {energy_tol} after {count} sweeps"
        warnings.warn(result.warning, RuntimeWarning, stacklevel=2)
    return result


def mps_entropy(mps: MatrixProductState, cut: int) -> EntropyResult:
    """Entropy between spins 1..cut and cut+1..N from the bond spectrum."""
    work = mps.copy()
    move_center(work, cut)
    c = work.tensors[cut]
    dl = c.shape[0]
    s = np.linalg.svd(c.reshape(dl, -1), compute_uv=False)
    p = s**2 / np.sum(s**2)
    p = p[p > SCHMIDT_FLOOR]
    return EntropyResult(entropy_from_spectrum(p), np.sort(p)[::-1], cut)


def _expect_ops(mps: MatrixProductState, ops: dict) -> complex:
    """<psi| prod_j ops[j] |psi> / <psi|psi> for 0-based sites."""
    e = np.ones((1, 1), dtype=np.complex128)
    for i, a in enumerate(mps.tensors):
        ket = a if i not in ops else np.tensordot(ops[i], a, axes=([1], [1])).transpose(1, 0, 2)
        e = np.tensordot(e, ket, axes=([1], [0]))
        e = np.tensordot(a.conj(), e, axes=([0, 1], [0, 1]))
    return complex(e[0, 0]) / overlap(mps, mps)


def mps_correlation(mps: MatrixProductState, j: int, k: int, pauli_normalization: bool = False) -> float:
    """Squared connected correlator of vertices j, k averaged over components."""
    if j == k:
        raise DomainError("correlation fluctuation needs two distinct vertices")
    j, k = min(j, k), max(j, k)
    ops = spin_operators(pauli_normalization)
    mj = [_expect_ops(mps, {j - 1: ops[a]}).real for a in range(3)]
    mk = [_expect_ops(mps, {k - 1: ops[b]}).real for b in range(3)]
    total = 0.0
    for a in range(3):
        for b in range(3):
            two = _expect_ops(mps, {j - 1: ops[a], k - 1: ops[b]})
            total += abs(two - mj[a] * mk[b]) ** 2
    return total / 9.0


def save_mps(path, mps: MatrixProductState, manifest: Optional[dict] = None) -> None:
    """Write tensors plus a JSON manifest into one ``.npz`` container."""
    meta = dict(manifest or {})
    meta.update({
        "n": mps.n,
        "shapes": [list(t.shape) for t in mps.tensors],
        "canonical_center": mps.canonical_center,
    })
    arrays = {f"site_{i:04d}": t for i, t in enumerate(mps.tensors)}
    arrays["manifest"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_mps(path) -> tuple[MatrixProductState, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["manifest"]).decode())
        tensors = [data[f"site_{i:04d}"] for i in range(meta["n"])]
    return MatrixProductState(tensors, meta.get("canonical_center")), meta
