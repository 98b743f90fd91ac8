"""Local SO(3) gauge action and canonical orbit representatives.

A rotation set ``O`` (one proper rotation per vertex) acts on a sample by
``A'(j,k) = O_j^T A(j,k) O_k`` and ``b'(j) = O_j^T b(j)``. This is a local
unitary conjugation of the Hamiltonian, so spectra and entanglement are
unchanged.

Canonical forms: on a tree every bond is made symmetric by propagating
rotations outward from a root bond, which is additionally diagonalised. On a
ring the same is done on the path obtained by dropping the closing edge; the
closing bond is then stored as ``S @ R`` with ``S`` symmetric and ``R`` the
topological rotation (identity exactly when the ring could be symmetrised).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .ensemble import TsreSample
from .errors import DegeneracyWarning, InvalidRotationError, UnsupportedTopologyError
from .graph import bfs_edge_order, cycle_rank

__all__ = [
    "CanonicalForm",
    "apply_gauge",
    "validate_rotations",
    "random_rotations",
    "svd_so3",
    "singular_values_degenerate",
    "canonicalize",
    "canonicalize_chain",
    "canonicalize_ring",
    "canonicalize_tree",
    "free_parameter_count",
]

ROTATION_TOL = 1e-12
DEGENERACY_TOL = 1e-9
_EVEN_SIGNS = [np.array(f, dtype=float) for f in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]


def validate_rotations(o, n: int) -> np.ndarray:
    """Check ``o`` is an (n, 3, 3) stack of proper rotations and return it."""
    o = np.asarray(o, dtype=np.float64)
    if o.shape != (n, 3, 3):
        raise InvalidRotationError(f"expected {n} rotations of shape 3x3, got {o.shape}")
    gram = np.einsum("nji,njk->nik", o, o)
    if np.max(np.abs(gram - np.eye(3))) > ROTATION_TOL:
        raise InvalidRotationError("rotation matrices are not orthogonal")
    if np.max(np.abs(np.linalg.det(o) - 1.0)) > ROTATION_TOL:
        raise InvalidRotationError("rotation matrices must have determinant +1")
    return o


def random_rotations(n: int, rng=None) -> np.ndarray:
    """Haar-random proper rotations, shape (n, 3, 3)."""
    rng = np.random.default_rng(rng)
    return Rotation.random(n, random_state=rng).as_matrix().reshape(n, 3, 3)


def apply_gauge(s: TsreSample, o) -> TsreSample:
    o = validate_rotations(o, s.n)
    bonds = np.empty_like(s.bonds)
    for e, (j, k) in enumerate(s.graph.edges):
        bonds[e] = o[j - 1].T @ s.bonds[e] @ o[k - 1]
    fields = np.einsum("nji,nj->ni", o, s.fields)
    return s.replace(bonds=bonds, fields=fields)


def svd_so3(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition with both factors in SO(3).

    Returns ``U, D, V`` with ``a = U @ diag(D) @ V.T``, ``|D|`` descending and
    only ``D[2]`` allowed to be negative (it carries the sign of det a).
    Column signs are fixed so the largest-magnitude entry of each column of
    ``U`` is positive before the determinant correction; this makes the
    decomposition of a diagonal matrix trivial.
    """
    a = np.asarray(a, dtype=np.float64)
    u, d, vt = np.linalg.svd(a)
    v = vt.T.copy()
    d = d.copy()
    for i in range(3):
        if u[np.argmax(np.abs(u[:, i])), i] < 0:
            u[:, i] *= -1
            v[:, i] *= -1
    if np.linalg.det(u) < 0:
        u[:, 2] *= -1
        d[2] *= -1
    if np.linalg.det(v) < 0:
        v[:, 2] *= -1
        d[2] *= -1
    return u, d, v


def singular_values_degenerate(d, tol: float = DEGENERACY_TOL) -> bool:
    mags = np.abs(np.asarray(d))
    scale = mags.max()
    if scale == 0.0:
        return True
    return bool(np.min(mags[:-1] - mags[1:]) < tol * scale)


@dataclass
class CanonicalForm:
    """Gauge-fixed representative of a sample.

    ``transformed_sample`` equals ``apply_gauge(original, rotations)``.
    For rings, ``closing_edges[i]`` holds ``symmetric_parts[i] @
    topological_rotations[i]``.
    """

    transformed_sample: TsreSample
    rotations: np.ndarray
    first_bond_singular_values: np.ndarray
    root_edge: int
    topological_rotations: list = field(default_factory=list)
    symmetric_parts: list = field(default_factory=list)
    closing_edges: list = field(default_factory=list)
    degenerate: bool = False
    degenerate_edges: list = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "ring" if self.closing_edges else "tree"

    def max_asymmetry(self) -> float:
        bonds = self.transformed_sample.bonds
        worst = 0.0
        for e in range(len(bonds)):
            if e in self.closing_edges:
                continue
            worst = max(worst, float(np.max(np.abs(bonds[e] - bonds[e].T))))
        for sym in self.symmetric_parts:
            worst = max(worst, float(np.max(np.abs(sym - sym.T))))
        return worst

    def first_bond_offdiagonal(self) -> float:
        a = self.transformed_sample.bonds[self.root_edge]
        return float(np.max(np.abs(a - np.diag(np.diag(a)))))

    def to_json(self) -> dict:
        g = self.transformed_sample.graph
        return {
            "kind": self.kind,
            "sample": self.transformed_sample.to_json(),
            "rotations": {str(j + 1): self.rotations[j].ravel().tolist() for j in range(g.n)},
            "root_edge": list(g.edges[self.root_edge]),
            "first_bond_singular_values": self.first_bond_singular_values.tolist(),
            "closing_edges": [list(g.edges[e]) for e in self.closing_edges],
            "symmetric_parts": [m.ravel().tolist() for m in self.symmetric_parts],
            "topological_rotations": [m.ravel().tolist() for m in self.topological_rotations],
            "diagnostics": {
                "max_asymmetry": self.max_asymmetry(),
                "first_bond_offdiagonal": self.first_bond_offdiagonal(),
                "degenerate": self.degenerate,
                "degenerate_edges": [list(g.edges[e]) for e in self.degenerate_edges],
            },
        }


def _lexicographic_root(g, skip=()) -> int:
    candidates = [e for e in range(g.m) if e not in skip]
    return min(candidates, key=lambda e: tuple(sorted(g.edges[e])))


def _propagate(s: TsreSample, root: int, skip=()) -> tuple[np.ndarray, np.ndarray, list]:
    """Rotations symmetrising every bond reached from ``root``."""
    g = s.graph
    o = np.zeros((g.n, 3, 3))
    degenerate = []
    first_d = None
    for e, v, w in bfs_edge_order(g, root, skip):
        a = s.bonds[e] if g.edges[e] == (v, w) else s.bonds[e].T
        u, d, vv = svd_so3(a)
        if singular_values_degenerate(d):
            degenerate.append(e)
        if e == root:
            o[v - 1] = u
            o[w - 1] = vv
            first_d = d
        else:
            o[w - 1] = vv @ u.T @ o[v - 1]
    return o, first_d, degenerate


def _warn_degenerate(g, edges):
    if edges:
        names = ", ".join(str(g.edges[e]) for e in edges)
        warnings.warn(f"degenerate singular values on bonds {names}; canonical form not unique",
                      DegeneracyWarning, stacklevel=3)


def canonicalize_tree(s: TsreSample) -> CanonicalForm:
    g = s.graph
    if cycle_rank(g) != 0:
        raise UnsupportedTopologyError("tree canonicalization needs a graph without cycles")
    if g.m == 0:
        raise UnsupportedTopologyError("graph has no bonds")
    root = _lexicographic_root(g)
    o, first_d, degenerate = _propagate(s, root)
    _warn_degenerate(g, degenerate)
    return CanonicalForm(
        transformed_sample=apply_gauge(s, o),
        rotations=o,
        first_bond_singular_values=first_d,
        root_edge=root,
        degenerate=bool(degenerate),
        degenerate_edges=degenerate,
    )


def canonicalize_chain(s: TsreSample) -> CanonicalForm:
    if not s.graph.is_chain():
        raise UnsupportedTopologyError("sample is not on an open chain 1-2-...-N")
    return canonicalize_tree(s)


def canonicalize_ring(s: TsreSample) -> CanonicalForm:
    """Symmetrise all bonds but the last edge, which keeps ``S @ R``."""
    g = s.graph
    if not g.is_ring():
        raise UnsupportedTopologyError("ring canonicalization needs a 2-regular connected graph")
    closing = g.m - 1
    root = _lexicographic_root(g, skip=(closing,))
    o, first_d, degenerate = _propagate(s, root, skip=(closing,))
    out = apply_gauge(s, o)
    c = out.bonds[closing]
    u, d, v = svd_so3(c)
    if singular_values_degenerate(d):
        degenerate.append(closing)
    # C = (U D' U^T)(U F V^T) for any even sign pattern F with D = D' F;
    # take the F whose rotation is closest to the identity, so a symmetric C gives R = 1
    flip = max(_EVEN_SIGNS, key=lambda f: (np.trace(u @ np.diag(f) @ v.T), tuple(f)))
    sym = u @ np.diag(d * flip) @ u.T
    rot = u @ np.diag(flip) @ v.T
    _warn_degenerate(g, degenerate)
    return CanonicalForm(
        transformed_sample=out,
        rotations=o,
        first_bond_singular_values=first_d,
        root_edge=root,
        topological_rotations=[rot],
        symmetric_parts=[sym],
        closing_edges=[closing],
        degenerate=bool(degenerate),
        degenerate_edges=degenerate,
    )


def canonicalize(s: TsreSample) -> CanonicalForm:
    g = s.graph
    rank = cycle_rank(g)
    if rank == 0:
        return canonicalize_tree(s)
    if rank == 1 and g.is_ring():
        return canonicalize_ring(s)
    raise UnsupportedTopologyError(f"no canonical form implemented for cycle rank {rank} on this graph")


def free_parameter_count(form: CanonicalForm, tol: float = 1e-10) -> int:
    """Count the numbers needed to store ``form`` after its constraints.

    Diagonal root bond: 3; other symmetric bonds: 6; a closing bond: 6 for
    its symmetric part plus 3 for the rotation; 3 per field. Raises
    ``ValueError`` if a constraint the count relies on does not hold.
    """
    bonds = form.transformed_sample.bonds
    total = 3 * form.transformed_sample.n
    for e in range(len(bonds)):
        a = bonds[e]
        if e in form.closing_edges:
            i = form.closing_edges.index(e)
            sym, rot = form.symmetric_parts[i], form.topological_rotations[i]
            if np.max(np.abs(sym - sym.T)) > tol or np.max(np.abs(sym @ rot - a)) > tol:
                raise ValueError(f"closing bond {e} is not stored as symmetric times rotation")
            validate_rotations(rot[None], 1)
            total += 6 + 3
        elif e == form.root_edge:
            if np.max(np.abs(a - np.diag(np.diag(a)))) > tol:
                raise ValueError("root bond is not diagonal")
            total += 3
        else:
            if np.max(np.abs(a - a.T)) > tol:
                raise ValueError(f"bond {e} is not symmetric")
            total += 6
    return total
