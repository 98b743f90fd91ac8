import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsre.ensemble import sample
from tsre.errors import DegeneracyWarning, InvalidRotationError, UnsupportedTopologyError
from tsre.gauge import (apply_gauge, canonicalize, canonicalize_chain, canonicalize_ring,
                        canonicalize_tree, free_parameter_count, random_rotations, svd_so3)
from tsre.graph import build_chain, build_graph, build_ring, parameter_count
from tsre.hamiltonian import HamiltonianOperator
from tsre.observables import entanglement_entropy


def spectrum(s):
    return np.linalg.eigvalsh(HamiltonianOperator(s).dense())


def test_identity_rotations(chain_sample):
    s = chain_sample()
    assert apply_gauge(s, np.tile(np.eye(3), (s.n, 1, 1))) == s


def test_invalid_rotations(chain_sample):
    s = chain_sample(3)
    bad = np.tile(np.eye(3), (3, 1, 1))
    bad[1] = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(InvalidRotationError):
        apply_gauge(s, bad)
    bad[1] = 1.01 * np.eye(3)
    with pytest.raises(InvalidRotationError):
        apply_gauge(s, bad)
    with pytest.raises(InvalidRotationError):
        apply_gauge(s, np.tile(np.eye(3), (2, 1, 1)))


def test_gauge_preserves_spectrum_and_entropy(chain_sample):
    s = chain_sample(6)
    t = apply_gauge(s, random_rotations(6, 1))
    assert np.max(np.abs(spectrum(s) - spectrum(t))) < 1e-10
    w0, v0 = np.linalg.eigh(HamiltonianOperator(s).dense())
    w1, v1 = np.linalg.eigh(HamiltonianOperator(t).dense())
    s0 = entanglement_entropy(v0[:, 0], 3).entropy_bits
    s1 = entanglement_entropy(v1[:, 0], 3).entropy_bits
    assert abs(s0 - s1) < 1e-10


def test_svd_so3_examples():
    u, d, v = svd_so3(np.eye(3))
    assert np.allclose(u, np.eye(3)) and np.allclose(v, np.eye(3)) and np.allclose(d, 1)
    u, d, v = svd_so3(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(d, [3, 2, 1])
    a = np.diag([3.0, 2.0, -1.0])
    u, d, v = svd_so3(a)
    assert np.allclose(d, [3, 2, -1])
    assert np.allclose(u, np.eye(3), atol=1e-12) and np.allclose(v, np.eye(3), atol=1e-12)
    assert np.max(np.abs(u @ np.diag(d) @ v.T - a)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_svd_so3_properties(seed):
    a = np.random.default_rng(seed).standard_normal((3, 3))
    u, d, v = svd_so3(a)
    assert np.max(np.abs(u @ np.diag(d) @ v.T - a)) < 1e-12
    assert abs(np.linalg.det(u) - 1) < 1e-12 and abs(np.linalg.det(v) - 1) < 1e-12
    m = np.abs(d)
    assert m[0] >= m[1] >= m[2]
    assert d[0] > 0 and d[1] > 0
    assert np.sign(d[2]) == np.sign(np.linalg.det(a))


def test_svd_so3_zero_matrix():
    u, d, v = svd_so3(np.zeros((3, 3)))
    assert np.allclose(d, 0)
    assert abs(np.linalg.det(u) - 1) < 1e-12


def test_chain_n2_is_singular_values():
    s = sample(build_chain(2, 1, 1), 5, 0)
    form = canonicalize_chain(s)
    d = np.linalg.svd(s.bonds[0], compute_uv=False)
    out = form.transformed_sample.bonds[0]
    assert np.allclose(np.abs(np.diag(out)), d, atol=1e-12)
    assert form.first_bond_offdiagonal() < 1e-12


def test_chain_n8(chain_sample):
    s = chain_sample(8)
    form = canonicalize_chain(s)
    assert form.max_asymmetry() < 1e-10
    assert form.first_bond_offdiagonal() < 1e-10
    diag = np.abs(np.diag(form.transformed_sample.bonds[0]))
    assert diag[0] >= diag[1] >= diag[2]
    assert apply_gauge(s, form.rotations) == form.transformed_sample
    assert np.max(np.abs(spectrum(s) - spectrum(form.transformed_sample))) < 1e-10
    assert free_parameter_count(form) == 6 * s.graph.m - 3 + 3 * s.n


def _ring_with_trivial_holonomy(n, seed):
    """Ring whose closing bond is symmetric in the gauge fixed by the path."""
    rng = np.random.default_rng(seed)
    path = sample(build_chain(n, 1, 1), seed, 0)
    form = canonicalize_chain(path)
    o = form.rotations
    m = rng.standard_normal((3, 3))
    sym = m + m.T
    # closing bond (n, 1) is symmetric after the path rotations: O_n^T C O_1 = sym
    closing = o[n - 1] @ sym @ o[0].T
    ring = build_ring(n, 1, 1)
    bonds = np.concatenate([path.bonds, closing[None]])
    return sample(ring, seed, 0).replace(bonds=bonds, fields=path.fields)


def test_ring_trivial_holonomy():
    s = _ring_with_trivial_holonomy(6, 3)
    form = canonicalize_ring(s)
    assert np.max(np.abs(form.topological_rotations[0] - np.eye(3))) < 1e-9
    c = form.transformed_sample.bonds[form.closing_edges[0]]
    assert np.max(np.abs(c - c.T)) < 1e-9


def test_ring_random(ring_sample):
    s = ring_sample(6)
    form = canonicalize_ring(s)
    assert form.max_asymmetry() < 1e-10
    assert form.first_bond_offdiagonal() < 1e-10
    c = form.transformed_sample.bonds[form.closing_edges[0]]
    assert np.max(np.abs(form.symmetric_parts[0] @ form.topological_rotations[0] - c)) < 1e-10
    assert np.max(np.abs(spectrum(s) - spectrum(form.transformed_sample))) < 1e-10
    assert free_parameter_count(form) == 6 * s.graph.m + 3 * s.n == parameter_count(s.graph)


def test_star_tree():
    g = build_graph(4, [(1, 2), (1, 3), (1, 4)], lam=1.0)
    s = sample(g, 8, 0)
    form = canonicalize_tree(s)
    assert form.max_asymmetry() < 1e-10 and form.first_bond_offdiagonal() < 1e-10
    assert np.max(np.abs(spectrum(s) - spectrum(form.transformed_sample))) < 1e-10
    assert free_parameter_count(form) == 6 * g.m - 3 + 3 * g.n


def test_reversed_edge_tree():
    g = build_graph(4, [(2, 1), (3, 2), (2, 4)], lam=1.0)
    s = sample(g, 2, 0)
    form = canonicalize(s)
    assert form.max_asymmetry() < 1e-10 and form.first_bond_offdiagonal() < 1e-10


def test_path_tree_equals_chain(chain_sample):
    s = chain_sample(5)
    a, b = canonicalize_tree(s), canonicalize_chain(s)
    assert a.transformed_sample == b.transformed_sample


def test_orbit_invariance(chain_sample, ring_sample):
    for s in (chain_sample(6), ring_sample(6)):
        t = apply_gauge(s, random_rotations(6, 17))
        f1, f2 = canonicalize(s), canonicalize(t)
        sv = lambda f: np.sort(np.linalg.svd(f.transformed_sample.bonds, compute_uv=False).ravel())
        assert np.max(np.abs(sv(f1) - sv(f2))) < 1e-9
        assert np.max(np.abs(spectrum(f1.transformed_sample) - spectrum(f2.transformed_sample))) < 1e-9
        # what remains is a common flip of two axes, which leaves |entries| unchanged
        assert np.max(np.abs(np.abs(f1.transformed_sample.bonds) - np.abs(f2.transformed_sample.bonds))) < 1e-9


def test_idempotence(chain_sample, ring_sample):
    for s in (chain_sample(7), ring_sample(7)):
        f = canonicalize(s)
        g = canonicalize(f.transformed_sample)
        assert np.max(np.abs(g.rotations - np.eye(3))) < 1e-10
        assert np.max(np.abs(g.transformed_sample.bonds - f.transformed_sample.bonds)) < 1e-10


def test_singular_values_unchanged(chain_sample):
    s = chain_sample(6)
    f = canonicalize(s)
    before = np.linalg.svd(s.bonds, compute_uv=False)
    after = np.linalg.svd(f.transformed_sample.bonds, compute_uv=False)
    assert np.max(np.abs(before - after)) < 1e-12


def test_degeneracy_warning(chain_sample):
    s = chain_sample(3)
    bonds = np.array(s.bonds)
    bonds[0] = np.diag([2.0, 2.0, 1.0])
    with pytest.warns(DegeneracyWarning):
        form = canonicalize(s.replace(bonds=bonds))
    assert form.degenerate and 0 in form.degenerate_edges


def test_unsupported_topology():
    g = build_graph(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)])
    with pytest.raises(UnsupportedTopologyError):
        canonicalize(sample(g, 1, 0))
    with pytest.raises(UnsupportedTopologyError):
        canonicalize_chain(sample(build_ring(4), 1, 0))


def test_canonical_json(ring_sample):
    doc = canonicalize(ring_sample(5)).to_json()
    assert doc["kind"] == "ring" and doc["closing_edges"] == [[5, 1]]
    assert doc["diagnostics"]["max_asymmetry"] < 1e-10
