"""Per-frequency structural operators of a controller: ``J_k(G1)``, kernels, Jordan chain counts."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

RANK_TOL = 1e-8


def singular_values(M):
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def numerical_rank(M, tol=RANK_TOL, scale=None):
    """Number of singular values above ``tol * max(sigma_max, scale)``.

    ``scale`` defaults to 1, so a matrix whose entries are all tiny has rank 0
    instead of being renormalised into full rank.
    """
    s = singular_values(M)
    if s.size == 0:
        return 0
    ref = max(s[0], 1.0 if scale is None else scale)
    return int(np.sum(s > tol * ref))


def build_J(G1, omega, n):
    """Block upper bidiagonal ``J`` with diagonal ``i*omega - G1`` and identity superdiagonal.

    ``J`` acts on stacks ``(z_n, ..., z_1)``.
    """
    if n < 1:
        raise ValueError("block size must be at least 1")
    G1 = np.atleast_2d(np.asarray(G1, dtype=complex))
    if G1.shape[0] != G1.shape[1]:
        raise DimensionError(f"G1 must be square, got {G1.shape}")
    d = G1.shape[0]
    D = 1j * omega * np.eye(d) - G1
    J = np.zeros((n * d, n * d), dtype=complex)
    for r in range(n):
        J[r * d:(r + 1) * d, r * d:(r + 1) * d] = D
        if r + 1 < n:
            J[r * d:(r + 1) * d, (r + 1) * d:(r + 2) * d] = np.eye(d)
    return J


def kernel_basis(M, tol=RANK_TOL):
    """Orthonormal columns spanning the numerical nullspace of ``M``.

    Right singular vectors whose singular value is at most ``tol * max(sigma_max, 1)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    ncols = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(ncols, dtype=complex)
    _, s, Vh = np.linalg.svd(M)
    ref = max(s[0], 1.0) if s.size else 1.0
    rank = int(np.sum(s > tol * ref))
    return Vh[rank:].conj().T


def range_basis(M, tol=RANK_TOL):
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=complex)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    ref = max(s[0], 1.0)
    return U[:, : int(np.sum(s > tol * ref))]


def rank_sequence(G1, omega, max_power, tol=RANK_TOL):
    """``[rank((i*omega - G1)^j) for j = 0..max_power]``.

    The threshold for the ``j``-th power is scaled by ``max(sigma_max, 1)^j`` of
    the first power, so that repeated multiplication does not shift it.
    """
    G1 = np.atleast_2d(np.asarray(G1, dtype=complex))
    d = G1.shape[0]
    if d == 0:
        return [0] * (max_power + 1)
    D = 1j * omega * np.eye(d) - G1
    base = max(singular_values(D)[0], 1.0)
    ranks = [d]
    P = np.eye(d, dtype=complex)
    for j in range(1, max_power + 1):
        P = P @ D
        s = singular_values(P)
        ranks.append(int(np.sum(s > tol * base**j)))
    return ranks


def jordan_chain_counts(G1, omega, max_len, tol=RANK_TOL):
    """Entry ``n - 1`` is the number of Jordan blocks of ``G1`` at ``i*omega`` of size ``>= n``.

    Uses ``count(>= n) = r_{n-1} - r_n`` with ``r_j = rank((i*omega - G1)^j)``.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    r = rank_sequence(G1, omega, max_len, tol)
    return [r[n - 1] - r[n] for n in range(1, max_len + 1)]


@dataclass(frozen=True)
class FrequencyBlock:
    k: int
    omega: float
    n: int
    J: np.ndarray
    ker_basis: np.ndarray
    rank_sequence: list
    tol: float

    @property
    def kernel_dim(self):
        return self.ker_basis.shape[1]

    def chain_counts(self):
        r = self.rank_sequence
        return [r[j - 1] - r[j] for j in range(1, len(r))]


def frequency_block(G1, block, tol=RANK_TOL):
    """Assemble the :class:`FrequencyBlock` of ``G1`` for an exosystem block."""
    J = build_J(G1, block.omega, block.n)
    return FrequencyBlock(
        k=block.k,
        omega=block.omega,
        n=block.n,
        J=J,
        ker_basis=kernel_basis(J, tol),
        rank_sequence=rank_sequence(G1, block.omega, block.n + 1, tol),
        tol=tol,
    )


def split_stack(z, d, n):
    """Split a stacked vector ``(z_n, ..., z_1)`` into ``[z_1, ..., z_n]``."""
    z = np.asarray(z)
    parts = [z[r * d:(r + 1) * d] for r in range(n)]
    return parts[::-1]
