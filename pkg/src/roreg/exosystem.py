"""Block-diagonal exosystem on a finite truncation of the signal space.

Basis vectors ``phi_k^l`` (block label ``k``, chain index ``l = 1..n_k``) are
the canonical unit vectors of ``C^dim``, laid out block after block with
ascending chain index inside each block.  The generator acts as a Jordan block
on each ``span{phi_k^l}``::

    S phi_k^1 = i w_k phi_k^1,    S phi_k^l = i w_k phi_k^l + phi_k^(l-1).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Block:
    k: int
    omega: float
    n: int


@dataclass(frozen=True)
class Exosystem:
    """Signal generator with Jordan blocks at frequencies ``i*omega_k``.

    Parameters
    ----------
    blocks : sequence of Block or (k, omega, n) tuples
        Retained blocks, in flat-index order.
    alpha : float
        Smoothness index of the scale space used by :meth:`alpha_norm`.
    n_S : int, optional
        Growth exponent; defaults to the largest block size.
    M_S : float, optional
        Growth constant in ``||T_S(t)|| <= M_S (|t|^n_S + 1)``.  When omitted
        it is computed as ``sum_{j < n_max} 1/j!``, which is valid for every
        ``n_S >= n_max``.
    """

    blocks: tuple
    alpha: float = 0.0
    n_S: int = None
    M_S: float = None
    _offsets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(int(b[0]), float(b[1]), int(b[2])) for b in self.blocks)
        if not blocks:
            raise ValueError("exosystem needs at least one block")
        labels = [b.k for b in blocks]
        if len(set(labels)) != len(labels):
            raise ValueError("block labels must be unique")
        omegas = [b.omega for b in blocks]
        if len(set(omegas)) != len(omegas):
            raise ValueError("frequencies must be pairwise distinct")
        if any(b.n < 1 for b in blocks):
            raise ValueError("block sizes must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        n_max = max(b.n for b in blocks)
        n_S = n_max if self.n_S is None else int(self.n_S)
        if n_S < n_max:
            raise ValueError(f"n_S={n_S} is smaller than the largest block size {n_max}")
        M_S = self.M_S
        if M_S is None:
            M_S = sum(1.0 / math.factorial(j) for j in range(n_max))
        offsets, pos = {}, 0
        for b in blocks:
            offsets[b.k] = pos
            pos += b.n
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n_S", n_S)
        object.__setattr__(self, "M_S", float(M_S))
        object.__setattr__(self, "_offsets", offsets)

    # -- indexing -----------------------------------------------------------

    @property
    def dim(self):
        return sum(b.n for b in self.blocks)

    @property
    def labels(self):
        return [b.k for b in self.blocks]

    def block(self, k):
        for b in self.blocks:
            if b.k == k:
                return b
        raise KeyError(f"unknown block label {k!r}")

    def index(self, k, l):
        """Flat index of ``phi_k^l``."""
        b = self.block(k)
        if not 1 <= l <= b.n:
            raise KeyError(f"chain index {l} out of range for block {k} (n={b.n})")
        return self._offsets[k] + l - 1

    def block_slice(self, k):
        b = self.block(k)
        start = self._offsets[k]
        return slice(start, start + b.n)

    def basis(self, k, l):
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(k, l)] = 1.0
        return v

    # -- operators ----------------------------------------------------------

    def generator(self):
        """Dense matrix of ``S``."""
        S = np.zeros((self.dim, self.dim), dtype=complex)
        for b in self.blocks:
            sl = self.block_slice(b.k)
            S[sl, sl] = _jordan(1j * b.omega, b.n)
        return S

    def group_action(self, v0, t):
        """``T_S(t) v0``, evaluated blockwise from the closed-form Jordan exponential."""
        v0 = self._check_state(v0)
        t = float(t)
        if not math.isfinite(t):
            raise ValueError("t must be finite")
        out = np.empty(self.dim, dtype=complex)
        for b in self.blocks:
            sl = self.block_slice(b.k)
            c = v0[sl]
            res = np.zeros(b.n, dtype=complex)
            # component j collects t^(l-j)/(l-j)! <v0, phi^l> over l >= j
            for j in range(b.n):
                acc = 0.0j
                for l in range(j, b.n):
                    acc += c[l] * t ** (l - j) / math.factorial(l - j)
                res[j] = acc
            out[sl] = np.exp(1j * b.omega * t) * res
        return out

    def group_matrix(self, t):
        """Dense matrix of ``T_S(t)``."""
        cols = [self.group_action(np.eye(self.dim)[:, i], t) for i in range(self.dim)]
        return np.column_stack(cols)

    def weights(self, alpha=None):
        """Per-coordinate weights ``(1 + omega_k^2)^alpha``."""
        alpha = self.alpha if alpha is None else alpha
        w = np.empty(self.dim)
        for b in self.blocks:
            w[self.block_slice(b.k)] = (1.0 + b.omega**2) ** alpha
        return w

    def alpha_norm(self, v, alpha=None):
        alpha = self.alpha if alpha is None else float(alpha)
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        v = self._check_state(v)
        return float(np.sqrt(np.sum(self.weights(alpha) * np.abs(v) ** 2)))

    def project(self, v, k):
        """Orthogonal projection ``P_k v``."""
        v = self._check_state(v)
        sl = self.block_slice(k)
        out = np.zeros(self.dim, dtype=complex)
        out[sl] = v[sl]
        return out

    def projector(self, k):
        sl = self.block_slice(k)
        P = np.zeros((self.dim, self.dim))
        P[sl, sl] = np.eye(sl.stop - sl.start)
        return P

    def phi_stack(self, k):
        """Basis states of block ``k`` in descending chain order ``(phi^n, ..., phi^1)``."""
        n = self.block(k).n
        return [self.basis(k, l) for l in range(n, 0, -1)]

    def phi_matrix(self, k):
        """``dim x n_k`` matrix whose columns are :meth:`phi_stack`."""
        return np.column_stack(self.phi_stack(k))

    def signal(self, E, F, v0, t):
        """Disturbance ``w = E v(t)`` and reference ``y_ref = -F v(t)``."""
        E = np.atleast_2d(np.asarray(E))
        F = np.atleast_2d(np.asarray(F))
        for name, M in (("E", E), ("F", F)):
            if M.shape[1] != self.dim:
                raise DimensionError(f"{name} has {M.shape[1]} columns, exosystem dimension is {self.dim}")
        v = self.group_action(v0, t)
        return E @ v, -(F @ v)

    def nondecay_witness(self, Q, horizon=64.0, tol=1e-12):
        """Return a basis state ``v0`` for which ``Q T_S(t) v0`` does not decay, or ``None`` if ``Q = 0``.

        For ``v0 = phi_k^l`` the output is ``e^{i w t} sum_j t^j/j! Q phi_k^(l-j)``;
        it fails to decay as soon as one of these coefficient vectors is nonzero.
        The witness is ``phi_k^l`` for the first nonzero column ``(k, l)`` of ``Q``.
        ``horizon`` only feeds :meth:`decay_profile` diagnostics.
        """
        Q = np.atleast_2d(np.asarray(Q))
        if Q.shape[1] != self.dim:
            raise DimensionError(f"Q has {Q.shape[1]} columns, exosystem dimension is {self.dim}")
        col_norms = np.max(np.abs(Q), axis=0) if Q.size else np.zeros(self.dim)
        if not np.any(col_norms > tol):
            return None
        for b in self.blocks:
            for l in range(1, b.n + 1):
                v0 = self.basis(b.k, l)
                coeffs = self._output_coefficients(Q, v0, b)
                if any(np.max(np.abs(c)) > tol for c in coeffs):
                    return v0
        return None  # pragma: no cover - unreachable when some column exceeds tol

    def decay_profile(self, Q, v0, horizon=64.0):
        """Sample ``||Q T_S(t) v0||`` on the grid ``{0, 1, 2, 4, ..., horizon}``."""
        Q = np.atleast_2d(np.asarray(Q))
        times = [0.0]
        t = 1.0
        while t <= horizon:
            times.append(t)
            t *= 2.0
        times = np.array(times)
        vals = np.array([np.linalg.norm(Q @ self.group_action(v0, s)) for s in times])
        return times, vals

    def _output_coefficients(self, Q, v0, b):
        sl = self.block_slice(b.k)
        c = v0[sl]
        Qb = Q[:, sl]
        out = []
        for j in range(b.n):
            acc = np.zeros(Q.shape[0], dtype=complex)
            for l in range(j + 1, b.n + 1):
                acc = acc + c[l - 1] * Qb[:, l - j - 1]
            out.append(acc / math.factorial(j))
        return out

    def _check_state(self, v):
        v = np.asarray(v, dtype=complex).ravel()
        if v.shape[0] != self.dim:
            raise DimensionError(f"state has length {v.shape[0]}, exosystem dimension is {self.dim}")
        return v

    # -- serialisation ------------------------------------------------------

    def to_json(self):
        return {
            "blocks": [{"k": b.k, "omega": b.omega, "n": b.n} for b in self.blocks],
            "alpha": self.alpha,
        }

    @classmethod
    def from_json(cls, data):
        blocks = [Block(int(b["k"]), float(b["omega"]), int(b.get("n", 1))) for b in data["blocks"]]
        return cls(tuple(blocks), alpha=float(data.get("alpha", 0.0)))


def _jordan(mu, n):
    J = mu * np.eye(n, dtype=complex)
    if n > 1:
        J += np.diag(np.ones(n - 1), 1)
    return J


def jordan_block(mu, n):
    """``n x n`` upper Jordan block with eigenvalue ``mu``."""
    return _jordan(mu, n)
