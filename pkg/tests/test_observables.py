import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsre.ensemble import sample
from tsre.errors import BoundaryMismatchError, DomainError, NormalizationError
from tsre.gauge import apply_gauge, random_rotations
from tsre.graph import build_chain, build_ring
from tsre.hamiltonian import HamiltonianOperator, spin_operators
from tsre.observables import (chain_correlation_profile, correlation_fluctuation, correlation_matrix,
                              effective_rank, entanglement_entropy, entropy_from_spectrum,
                              ring_correlation_profile)


def ground(s):
    w, v = np.linalg.eigh(HamiltonianOperator(s).dense())
    return v[:, 0]


def random_state(n, seed):
    r = np.random.default_rng(seed)
    psi = r.standard_normal(2**n) + 1j * r.standard_normal(2**n)
    return psi / np.linalg.norm(psi)


def test_product_state():
    psi = np.zeros(2**6)
    psi[5] = 1
    assert entanglement_entropy(psi, 3).entropy_bits == 0
    assert effective_rank(entanglement_entropy(psi, 3).schmidt_spectrum, 0.3) == 1
    assert np.nanmax(correlation_matrix(psi)) < 1e-12


def test_bell_pair_across_cut():
    # spins 2,3 in a singlet, spins 1,4 up; cut after spin 2
    bell = np.array([0, 1, -1, 0]) / np.sqrt(2)
    up = np.array([1.0, 0.0])
    psi = np.kron(up, np.kron(bell, up))  # kron order puts spin 4 first
    res = entanglement_entropy(psi, 2)
    assert np.isclose(res.entropy_bits, 1.0)
    assert effective_rank(res.schmidt_spectrum, 0.1) == 2


def test_maximal_entropy():
    n = 6
    # product of singlets straddling the middle: (1,4), (2,5), (3,6)
    psi = np.zeros(2**n)
    for x in range(2**n):
        bits = [(x >> j) & 1 for j in range(n)]
        if all(bits[j] != bits[j + 3] for j in range(3)):
            psi[x] = (-1) ** sum(bits[:3])
    psi /= np.linalg.norm(psi)
    assert np.isclose(entanglement_entropy(psi, 3).entropy_bits, 3.0)


def test_effective_rank_examples():
    assert effective_rank([0.7, 0.2, 0.1], 0.15) == 2
    assert effective_rank([0.5, 0.5], 0.1) == 2
    with pytest.raises(DomainError):
        effective_rank([1.0], 0.0)


def test_entropy_errors():
    psi = random_state(4, 1)
    with pytest.raises(NormalizationError):
        entanglement_entropy(2 * psi, 2)
    with pytest.raises(DomainError):
        entanglement_entropy(psi, 0)
    with pytest.raises(DomainError):
        entanglement_entropy(psi, 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_entropy_invariants(n, seed):
    psi = random_state(n, seed)
    for cut in range(1, n):
        res = entanglement_entropy(psi, cut)
        assert -1e-12 <= res.entropy_bits <= min(cut, n - cut) + 1e-12
        assert abs(res.schmidt_spectrum.sum() - 1) < 1e-10
        assert np.all(np.diff(res.schmidt_spectrum) <= 0)
        assert np.isclose(entropy_from_spectrum(res.schmidt_spectrum), res.entropy_bits)
        # transposed reshape gives the same singular values
        alt = np.linalg.svd(psi.reshape(2 ** (n - cut), 2**cut).T, compute_uv=False) ** 2
        assert np.allclose(np.sort(alt[alt > 1e-14])[::-1], res.schmidt_spectrum)


def test_entropy_local_unitary_invariance(chain_sample):
    s = chain_sample(6)
    t = apply_gauge(s, random_rotations(6, 3))
    a = entanglement_entropy(ground(s), 3).entropy_bits
    b = entanglement_entropy(ground(t), 3).entropy_bits
    assert abs(a - b) < 1e-10


def _oracle_fluctuation(psi, n, j, k):
    ops = spin_operators()
    eye = np.eye(2)

    def site(op, i):
        mats = [eye] * n
        mats[n - i] = op  # spin i is bit i-1: kron position n - i
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    total = 0.0
    for a in range(3):
        for b in range(3):
            sa, sb = site(ops[a], j), site(ops[b], k)
            two = np.vdot(psi, sa @ sb @ psi)
            conn = two - np.vdot(psi, sa @ psi) * np.vdot(psi, sb @ psi)
            total += abs(conn) ** 2
    return total / 9


def test_bell_pair_correlation():
    bell = np.array([0, 1, -1, 0]) / np.sqrt(2)
    # singlet: <s^a s^b> = -delta/4, so the average of |.|^2 over 9 pairs is 3/16/9
    assert np.isclose(correlation_fluctuation(bell, 1, 2), 1 / 48)
    assert np.isclose(correlation_fluctuation(bell, 1, 2), _oracle_fluctuation(bell, 2, 1, 2))


def test_correlation_against_oracle():
    psi = random_state(4, 5)
    c = correlation_matrix(psi)
    for j in range(1, 5):
        for k in range(1, 5):
            if j != k:
                ref = _oracle_fluctuation(psi, 4, j, k)
                assert abs(correlation_fluctuation(psi, j, k) - ref) < 1e-12
                assert abs(c[j - 1, k - 1] - ref) < 1e-12
    assert np.array_equal(c, c.T, equal_nan=True)


def test_correlation_errors_and_gauge(chain_sample):
    psi = random_state(3, 2)
    with pytest.raises(DomainError):
        correlation_fluctuation(psi, 2, 2)
    s = chain_sample(6)
    t = apply_gauge(s, random_rotations(6, 8))
    assert abs(correlation_fluctuation(ground(s), 2, 5) - correlation_fluctuation(ground(t), 2, 5)) < 1e-10


def test_ring_profile(ring_sample):
    s = ring_sample(8)
    prof = ring_correlation_profile(ground(s), s.graph)
    assert list(prof.r) == list(range(1, 8)) and prof.boundary == "periodic"
    assert np.all(prof.c_of_r >= 0)
    assert np.allclose(prof.c_of_r, prof.c_of_r[::-1], rtol=0, atol=1e-14)
    with pytest.raises(BoundaryMismatchError):
        ring_correlation_profile(ground(s), build_chain(8))


def test_ring_profile_translation_invariant_state():
    n = 6
    psi = np.ones(2**n) / 2 ** (n / 2)
    prof = ring_correlation_profile(psi, build_ring(n))
    c = correlation_matrix(psi)
    assert np.allclose(prof.c_of_r, c[0, 1:])


def test_chain_profile(chain_sample):
    s = chain_sample(6)
    psi = ground(s)
    prof = chain_correlation_profile(psi)
    c = correlation_matrix(psi)
    assert np.isclose(prof.c_of_r[0], np.mean([c[i, i + 1] for i in range(5)]))
    assert prof.boundary == "open"
