"""Sampling members of the two-spin random ensemble.

Every bond matrix and field vector is drawn from its own counter-based
stream (Philox) keyed by ``(seed, realization_index, element tag)``. The tag
is ``(0, j, k)`` for the bond on edge ``(j, k)`` and ``(1, j)`` for the field
on vertex ``j``, so draws do not depend on generation order, and two graphs
sharing an edge share its bond matrix for the same key. Normals come from
numpy's ziggurat ``standard_normal``, untruncated, rows filled first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ShapeError
from .graph import InteractionGraph, graph_from_config

__all__ = ["TsreSample", "sample", "scaled_hamiltonian_inputs", "element_rng"]

_BOND_TAG = 0
_FIELD_TAG = 1
_SOLVER_TAG = 2


def element_rng(seed: int, realization_index: int, *tag: int) -> np.random.Generator:
    """Independent generator for one ensemble element."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(realization_index),) + tuple(int(t) for t in tag))
    return np.random.Generator(np.random.Philox(ss))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TsreSample:
    """One ensemble member: a bond matrix per edge and a field per vertex.

    ``bonds[e]`` belongs to ``graph.edges[e]``; ``fields[j - 1]`` to vertex j.
    Arrays are read-only.
    """

    graph: InteractionGraph
    bonds: np.ndarray
    fields: np.ndarray
    seed: Optional[int] = None
    realization_index: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        bonds = _frozen(self.bonds)
        fields = _frozen(self.fields)
        if bonds.shape != (self.graph.m, 3, 3):
            raise ShapeError(f"bonds must have shape ({self.graph.m}, 3, 3), got {bonds.shape}")
        if fields.shape != (self.graph.n, 3):
            raise ShapeError(f"fields must have shape ({self.graph.n}, 3), got {fields.shape}")
        if not (np.all(np.isfinite(bonds)) and np.all(np.isfinite(fields))):
            raise ValueError("sample entries must be finite")
        object.__setattr__(self, "bonds", bonds)
        object.__setattr__(self, "fields", fields)

    @property
    def n(self) -> int:
        return self.graph.n

    def __eq__(self, other):
        if not isinstance(other, TsreSample):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.seed == other.seed
            and self.realization_index == other.realization_index
            and np.array_equal(self.bonds, other.bonds)
            and np.array_equal(self.fields, other.fields)
        )

    def replace(self, bonds=None, fields=None, graph=None) -> "TsreSample":
        return TsreSample(
            self.graph if graph is None else graph,
            self.bonds if bonds is None else bonds,
            self.fields if fields is None else fields,
            self.seed,
            self.realization_index,
            dict(self.meta),
        )

    def with_strengths(self, mu=None, lam=None) -> "TsreSample":
        """Same raw draws on a graph with different strength functions."""
        return self.replace(graph=self.graph.with_strengths(mu=mu, lam=lam))

    def bond(self, j: int, k: int) -> np.ndarray:
        """Bond matrix oriented as ``sigma_j . A sigma_k``."""
        for e, edge in enumerate(self.graph.edges):
            if edge == (j, k):
                return self.bonds[e]
            if edge == (k, j):
                return self.bonds[e].T
        raise KeyError((j, k))

    def to_json(self) -> dict:
        return {
            "graph": self.graph.to_config(),
            "seed": self.seed,
            "realization_index": self.realization_index,
            "bonds": [
                {"edge": list(edge), "matrix": [float(x) for x in self.bonds[e].ravel()]}
                for e, edge in enumerate(self.graph.edges)
            ],
            "fields": [
                {"vertex": j + 1, "vector": [float(x) for x in self.fields[j]]}
                for j in range(self.graph.n)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TsreSample":
        graph = graph_from_config(doc["graph"])
        by_edge = {tuple(b["edge"]): b["matrix"] for b in doc["bonds"]}
        bonds = np.array([np.reshape(by_edge[edge], (3, 3)) for edge in graph.edges])
        by_vertex = {int(f["vertex"]): f["vector"] for f in doc["fields"]}
        fields = np.array([by_vertex[j] for j in range(1, graph.n + 1)])
        return cls(graph, bonds, fields, doc.get("seed"), doc.get("realization_index"))


def sample(g: InteractionGraph, seed: int, realization_index: int = 0) -> TsreSample:
    """Draw one ensemble member; a pure function of its arguments."""
    bonds = np.empty((g.m, 3, 3))
    for e, (j, k) in enumerate(g.edges):
        bonds[e] = element_rng(seed, realization_index, _BOND_TAG, j, k).standard_normal(9).reshape(3, 3)
    fields = np.empty((g.n, 3))
    for j in range(1, g.n + 1):
        fields[j - 1] = element_rng(seed, realization_index, _FIELD_TAG, j).standard_normal(3)
    return TsreSample(g, bonds, fields, int(seed), int(realization_index))


def scaled_hamiltonian_inputs(s: TsreSample) -> tuple[np.ndarray, np.ndarray]:
    """Bonds multiplied by mu and fields by lambda, edge/vertex aligned."""
    mu = np.asarray(s.graph.mu)
    lam = np.asarray(s.graph.lam)
    return s.bonds * mu[:, None, None], s.fields * lam[:, None]


def solver_rng(s: TsreSample) -> np.random.Generator:
    """Deterministic stream for solver start vectors of this sample."""
    seed = 0 if s.seed is None else s.seed
    index = 0 if s.realization_index is None else s.realization_index
    return element_rng(seed, index, _SOLVER_TAG, s.graph.n)
