import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from roreg import freq_ops
from roreg.errors import DimensionError
from roreg.exosystem import Block, jordan_block


def test_build_J_examples():
    G1 = np.array([[1.0, 2.0], [0.5, -1j]])
    np.testing.assert_array_equal(freq_ops.build_J(G1, 0.7, 1), 0.7j * np.eye(2) - G1)
    np.testing.assert_array_equal(freq_ops.build_J([[0.0]], 1.0, 2), [[1j, 1], [0, 1j]])
    np.testing.assert_array_equal(freq_ops.build_J(np.diag([1j, -1j]), 1.0, 1), np.diag([0, 2j]))


def test_build_J_errors():
    with pytest.raises(ValueError):
        freq_ops.build_J(np.eye(2), 0.0, 0)
    with pytest.raises(DimensionError):
        freq_ops.build_J(np.ones((2, 3)), 0.0, 1)


def test_build_J_structure():
    G1 = np.arange(9.0).reshape(3, 3)
    J = freq_ops.build_J(G1, -2.0, 3)
    D = -2j * np.eye(3) - G1
    for r in range(3):
        for s in range(3):
            blk = J[3 * r:3 * r + 3, 3 * s:3 * s + 3]
            expect = D if r == s else np.eye(3) if s == r + 1 else np.zeros((3, 3))
            np.testing.assert_array_equal(blk, expect)


def test_kernel_basis_examples():
    K = freq_ops.kernel_basis(np.zeros((2, 2)))
    assert K.shape == (2, 2)
    np.testing.assert_allclose(K.conj().T @ K, np.eye(2), atol=1e-15)
    K = freq_ops.kernel_basis(np.diag([1.0, 0.0]))
    assert K.shape == (2, 1) and abs(abs(K[1, 0]) - 1) < 1e-15
    assert freq_ops.kernel_basis(np.array([[1j, 1], [0, 1j]])).shape == (2, 0)


def test_kernel_basis_tiny_matrix_is_kernel():
    # entries far below the absolute floor count as zero
    assert freq_ops.kernel_basis(1e-12 * np.eye(3)).shape == (3, 3)
    assert freq_ops.numerical_rank(1e-12 * np.eye(3)) == 0


def test_range_basis():
    R = freq_ops.range_basis(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert R.shape == (2, 1)
    np.testing.assert_allclose(np.abs(R[:, 0]), [2**-0.5] * 2)


def test_chain_count_examples():
    assert freq_ops.jordan_chain_counts(np.zeros((2, 2)), 0.0, 3) == [2, 0, 0]
    assert freq_ops.jordan_chain_counts(jordan_block(0, 2), 0.0, 3) == [1, 1, 0]
    assert freq_ops.jordan_chain_counts(np.diag([1.0, 2.0]), 0.5, 2) == [0, 0]
    with pytest.raises(ValueError):
        freq_ops.jordan_chain_counts(np.eye(1), 0.0, 0)


def test_rank_sequence_monotone():
    G = sla.block_diag(jordan_block(1j, 3), jordan_block(1j, 1), np.array([[-2.0]]))
    r = freq_ops.rank_sequence(G, 1.0, 5)
    assert r == [5, 3, 2, 1, 1, 1]


def test_frequency_block_record():
    G = sla.block_diag(jordan_block(0, 2), jordan_block(0, 2))
    fb = freq_ops.frequency_block(G, Block(0, 0.0, 2))
    assert fb.kernel_dim == 4
    assert fb.chain_counts() == [2, 2, 0]
    np.testing.assert_allclose(fb.J @ fb.ker_basis, 0, atol=1e-12)
    np.testing.assert_allclose(fb.ker_basis.conj().T @ fb.ker_basis, np.eye(4), atol=1e-12)


@st.composite
def jordan_instances(draw):
    """Random similarity transform of a matrix with prescribed blocks at ``i*omega`` plus distractors."""
    omega = draw(st.sampled_from([0.0, 1.0, -2.5]))
    sizes = draw(st.lists(st.integers(1, 3), min_size=0, max_size=3))
    n_other = draw(st.integers(0, 2))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    blocks = [jordan_block(1j * omega, s) for s in sizes]
    for _ in range(n_other):
        blocks.append(np.array([[1j * omega + rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)]]))
    if not blocks:
        blocks = [np.array([[1j * omega + 1.0]])]
    T = sla.block_diag(*blocks).astype(complex)
    d = T.shape[0]
    # well-conditioned similarity: orthogonal times a mild diagonal
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    V = Q @ np.diag(rng.uniform(0.8, 1.25, d))
    return V @ T @ np.linalg.inv(V), omega, sizes


@settings(max_examples=80, deadline=None)
@given(jordan_instances())
def test_chain_counts_recover_construction(inst):
    G, omega, sizes = inst
    counts = freq_ops.jordan_chain_counts(G, omega, 4)
    assert counts == [sum(s >= n for s in sizes) for n in range(1, 5)]


@settings(max_examples=60, deadline=None)
@given(jordan_instances(), st.integers(1, 4))
def test_kernel_dim_matches_chain_counts(inst, n):
    G, omega, _ = inst
    counts = freq_ops.jordan_chain_counts(G, omega, n)
    K = freq_ops.kernel_basis(freq_ops.build_J(G, omega, n))
    assert K.shape[1] == sum(counts[:n])


@settings(max_examples=60, deadline=None)
@given(jordan_instances(), st.integers(1, 3))
def test_kernel_vectors_are_jordan_chains(inst, n):
    G, omega, _ = inst
    d = G.shape[0]
    K = freq_ops.kernel_basis(freq_ops.build_J(G, omega, n))
    for col in K.T:
        z = freq_ops.split_stack(col, d, n)  # [z_1, ..., z_n]
        if np.linalg.norm(z[0]) < 1e-6:
            continue
        np.testing.assert_allclose((1j * omega * np.eye(d) - G) @ z[0], 0, atol=1e-8)
        for l in range(1, n):
            np.testing.assert_allclose((G - 1j * omega * np.eye(d)) @ z[l], z[l - 1], atol=1e-8)
