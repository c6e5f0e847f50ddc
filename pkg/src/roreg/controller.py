"""Error-feedback controllers ``(G1, G2, K)`` and the three internal-model verifiers.

The verifiers are evaluated per exosystem block:

* p-copy: ``G1`` has at least ``p`` Jordan chains of length ``>= n_k`` at ``i*omega_k``;
* G-conditions: three rank identities on ``(i*omega_k - G1, G2)``;
* restricted map: ``P(i omega_k) K`` restricted to ``ker(J_k)`` is bijective onto ``Y^{n_k}``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from . import freq_ops
from .errors import DimensionError, ZeroCoefficientWarning
from .exosystem import jordan_block
from .io import encode_matrix, parse_matrix


@dataclass(frozen=True)
class Controller:
    """Dynamic error feedback ``z' = G1 z + G2 e``, ``u = K z``."""

    G1: np.ndarray
    G2: np.ndarray
    K: np.ndarray
    structure: str = ""

    def __post_init__(self):
        G1 = np.atleast_2d(np.asarray(self.G1, dtype=complex))
        d = G1.shape[0]
        if G1.shape != (d, d):
            raise DimensionError(f"G1 must be square, got {G1.shape}")
        G2 = np.asarray(self.G2, dtype=complex)
        G2 = G2.reshape(d, -1) if G2.ndim < 2 else G2
        K = np.asarray(self.K, dtype=complex)
        K = K.reshape(-1, d) if K.ndim < 2 else K
        if G2.shape[0] != d:
            raise DimensionError(f"G2 has {G2.shape[0]} rows, G1 is {d}x{d}")
        if K.shape[1] != d:
            raise DimensionError(f"K has {K.shape[1]} columns, G1 is {d}x{d}")
        for name, val in (("G1", G1), ("G2", G2), ("K", K)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self):
        return self.G1.shape[0]

    @property
    def n_outputs(self):
        return self.G2.shape[1]

    @property
    def n_inputs(self):
        return self.K.shape[0]

    def check_plant(self, plant):
        if plant.n_outputs != self.n_outputs:
            raise DimensionError(f"G2 takes {self.n_outputs} error channels, plant has {plant.n_outputs} outputs")
        if plant.n_inputs != self.n_inputs:
            raise DimensionError(f"K produces {self.n_inputs} inputs, plant has {plant.n_inputs}")

    def to_json(self):
        return {"G1": encode_matrix(self.G1), "G2": encode_matrix(self.G2), "K": encode_matrix(self.K), "structure": self.structure}

    @classmethod
    def from_json(cls, data):
        G1 = parse_matrix(data["G1"])
        d = G1.shape[0]
        G2 = parse_matrix(data["G2"], shape=(d, 0))
        K = parse_matrix(data["K"], shape=(0, d))
        return cls(G1, G2, K, data.get("structure", ""))


@dataclass
class FrequencyRecord:
    k: int
    omega: float
    n: int
    kernel_dim: int = None
    chains: int = None
    pcopy_pass: bool = None
    gcond_pass: tuple = None
    restricted_injective: bool = None
    restricted_surjective: bool = None
    details: dict = field(default_factory=dict)

    @property
    def restricted_invertible(self):
        if self.restricted_injective is None:
            return None
        return self.restricted_injective and self.restricted_surjective

    def to_json(self):
        out = {"k": self.k, "omega": self.omega, "n": self.n}
        if self.pcopy_pass is not None:
            out.update(kernel_dim=self.kernel_dim, chains_ge_n=self.chains, pcopy_pass=self.pcopy_pass)
        if self.gcond_pass is not None:
            out["gcond_pass"] = list(self.gcond_pass)
        if self.restricted_injective is not None:
            out.update(
                restricted_injective=self.restricted_injective,
                restricted_surjective=self.restricted_surjective,
                restricted_invertible=self.restricted_invertible,
            )
        out["details"] = self.details
        return out


@dataclass
class InternalModelReport:
    records: list
    tol: float

    def _conj(self, attr):
        vals = [getattr(r, attr) for r in self.records]
        if any(v is None for v in vals):
            return None
        if attr == "gcond_pass":
            return all(all(v) for v in vals)
        return all(vals)

    @property
    def pcopy(self):
        return self._conj("pcopy_pass")

    @property
    def gcond(self):
        return self._conj("gcond_pass")

    @property
    def restricted(self):
        return self._conj("restricted_invertible")

    def verdicts(self):
        return {"p_copy": self.pcopy, "g_conditions": self.gcond, "restricted_map": self.restricted}

    def agree(self):
        v = [x for x in self.verdicts().values() if x is not None]
        return len(set(v)) <= 1

    def merge(self, other):
        """Combine two reports over the same blocks, field by field."""
        out = []
        for a, b in zip(self.records, other.records):
            rec = FrequencyRecord(a.k, a.omega, a.n)
            for name in ("kernel_dim", "chains", "pcopy_pass", "gcond_pass", "restricted_injective", "restricted_surjective"):
                va, vb = getattr(a, name), getattr(b, name)
                setattr(rec, name, va if va is not None else vb)
            rec.details = {**a.details, **b.details}
            out.append(rec)
        return InternalModelReport(out, self.tol)

    def failures(self):
        names = []
        for r in self.records:
            if r.pcopy_pass is False:
                names.append(f"p_copy@k={r.k}")
            if r.gcond_pass is not None:
                for i, ok in enumerate(r.gcond_pass):
                    if not ok:
                        names.append(f"g_condition_{'i' * (i + 1)}@k={r.k}")
            if r.restricted_invertible is False:
                names.append(f"restricted_map@k={r.k}")
        return names

    def to_json(self):
        return {
            "tol": self.tol,
            "verdicts": self.verdicts(),
            "agree": self.agree(),
            "failures": self.failures(),
            "frequencies": [r.to_json() for r in self.records],
        }


def check_p_copy(ctrl, exo, p=None, tol=freq_ops.RANK_TOL):
    """Count Jordan chains of ``G1`` at each ``i*omega_k`` against ``p`` (default: ``dim Y``)."""
    p = ctrl.n_outputs if p is None else int(p)
    records = []
    for b in exo.blocks:
        counts = freq_ops.jordan_chain_counts(ctrl.G1, b.omega, b.n, tol)
        kdim, chains = counts[0], counts[b.n - 1]
        records.append(
            FrequencyRecord(b.k, b.omega, b.n, kernel_dim=kdim, chains=chains, pcopy_pass=bool(kdim >= p and chains >= p),
                            details={"chain_counts": counts, "p": p})
        )
    return InternalModelReport(records, tol)


def check_g_conditions(ctrl, exo, tol=freq_ops.RANK_TOL):
    G1, G2 = ctrl.G1, ctrl.G2
    d, p = G2.shape
    rank = freq_ops.numerical_rank
    records = []
    for b in exo.blocks:
        D = 1j * b.omega * np.eye(d) - G1
        rD = rank(D, tol)
        rG = rank(G2, tol)
        c1 = rank(np.hstack([D, G2]), tol) == rD + rG
        c2 = rG == p
        if b.n == 1:
            c3 = True
        else:
            Kb = freq_ops.kernel_basis(np.linalg.matrix_power(D, b.n - 1), tol)
            c3 = Kb.shape[1] == 0 or rank(np.hstack([D, Kb]), tol) == rD
        records.append(
            FrequencyRecord(b.k, b.omega, b.n, gcond_pass=(bool(c1), bool(c2), bool(c3)),
                            details={"rank_iw_minus_G1": rD, "rank_G2": rG})
        )
    return InternalModelReport(records, tol)


@dataclass(frozen=True)
class RestrictedVerdict:
    rank: int
    domain_dim: int
    target_dim: int
    sigma_min: float

    @property
    def injective(self):
        return self.rank == self.domain_dim

    @property
    def surjective(self):
        return self.rank == self.target_dim

    @property
    def invertible(self):
        return self.injective and self.surjective


def restricted_map(ctrl, plant, block, tol=freq_ops.RANK_TOL):
    """``M = P(i omega) blockdiag(K) ker_basis(J)`` for one exosystem block."""
    ctrl.check_plant(plant)
    Pblk = plant.block_transfer(block.omega, block.n)
    Kdiag = block_diag(*([ctrl.K] * block.n))
    Kb = freq_ops.kernel_basis(freq_ops.build_J(ctrl.G1, block.omega, block.n), tol)
    return Pblk @ Kdiag @ Kb


def restricted_PK(ctrl, plant, exo, k, tol=freq_ops.RANK_TOL):
    """Restricted map at block ``k`` and its injectivity/surjectivity verdict."""
    b = exo.block(k)
    M = restricted_map(ctrl, plant, b, tol)
    s = freq_ops.singular_values(M)
    # the map has unit-free scaling; the threshold is relative to max(sigma_max, 1)
    r = freq_ops.numerical_rank(M, tol)
    return M, RestrictedVerdict(r, M.shape[1], M.shape[0], float(s[-1]) if s.size else 0.0)


def check_restricted(ctrl, plant, exo, tol=freq_ops.RANK_TOL):
    records = []
    for b in exo.blocks:
        M, v = restricted_PK(ctrl, plant, exo, b.k, tol)
        records.append(
            FrequencyRecord(b.k, b.omega, b.n, restricted_injective=v.injective, restricted_surjective=v.surjective,
                            details={"restricted_rank": v.rank, "restricted_shape": list(M.shape), "restricted_sigma_min": v.sigma_min})
        )
    return InternalModelReport(records, tol)


def internal_model_report(ctrl, plant, exo, tol=freq_ops.RANK_TOL):
    """All three verifiers merged into one report."""
    rep = check_p_copy(ctrl, exo, tol=tol).merge(check_g_conditions(ctrl, exo, tol))
    return rep.merge(check_restricted(ctrl, plant, exo, tol))


def unsolvable_perturbation(ctrl, plant, exo, k, tol=freq_ops.RANK_TOL):
    """An output perturbation ``F~`` for which the robustness system at block ``k`` has no solution.

    With ``E~ = 0`` the system reads ``M c = -F~ Phi_k``.  A unit vector ``y``
    orthogonal to ``ran(M)`` is written into the block-``k`` columns of ``F~``
    (stacked order: top entry is chain index ``n_k``).  Returns ``None`` when
    ``M`` is onto.
    """
    b = exo.block(k)
    M = restricted_map(ctrl, plant, b, tol)
    p = plant.n_outputs
    if M.shape[1] == 0:
        y = np.zeros(M.shape[0], dtype=complex)
        y[0] = 1.0
    else:
        U, s, _ = np.linalg.svd(M)
        r = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
        if r >= M.shape[0]:
            return None
        y = U[:, r]
    F = np.zeros((p, exo.dim), dtype=complex)
    for row in range(b.n):
        l = b.n - row
        F[:, exo.index(k, l)] = -y[row * p:(row + 1) * p]
    return F


# -- builders ----------------------------------------------------------------


def internal_model_generator(exo, p):
    """``blockdiag`` over blocks of ``p`` copies of the ``n_k x n_k`` Jordan block at ``i*omega_k``."""
    blocks = []
    for b in exo.blocks:
        blocks.extend([jordan_block(1j * b.omega, b.n)] * p)
    return block_diag(*blocks).astype(complex)


def internal_model_input(exo, p, scale=1.0):
    """Input matrix feeding error channel ``c`` into the chain end of copy ``c`` of every block."""
    rows = []
    for b in exo.blocks:
        for c in range(p):
            blk = np.zeros((b.n, p), dtype=complex)
            blk[b.n - 1, c] = scale
            rows.append(blk)
    return np.vstack(rows)


def build_p_copy_controller(exo, p, K=None, G2=None, G2_scale=1.0, m=None):
    """p-copy internal model controller.

    ``G1`` follows :func:`internal_model_generator`.  ``G2`` defaults to
    :func:`internal_model_input` with ``G2_scale``; ``K`` defaults to zero with
    ``m`` rows (``m`` defaults to ``p``).
    """
    G1 = internal_model_generator(exo, p)
    d = G1.shape[0]
    G2 = internal_model_input(exo, p, G2_scale) if G2 is None else np.atleast_2d(np.asarray(G2, dtype=complex))
    if G2.shape != (d, p):
        raise DimensionError(f"G2 must be {d}x{p}, got {G2.shape}")
    if K is None:
        K = np.zeros((p if m is None else m, d), dtype=complex)
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    if K.shape[1] != d:
        raise DimensionError(f"K must have {d} columns, got {K.shape}")
    return Controller(G1, G2, K, "p-copy")


def build_g_structured_controller(exo, dim_z1, g1, g2, R1=None, R2=None, R3=None, K1=None, K2=None, m=2, tol=1e-12):
    """Two-copy controller on ``Z = Z1 x W x W``.

    ``G1 = [[R1, R2], [0, diag(S, S)]]``, ``G2 = [[R3], [diag(g1, g2)]]`` and
    ``K = (K1, K2)``.  The free parameters default to zero; they are the
    stabilising part of the design and are not chosen here.
    """
    S = exo.generator()
    w = exo.dim
    g1 = np.asarray(g1, dtype=complex).ravel()
    g2 = np.asarray(g2, dtype=complex).ravel()
    if g1.shape[0] != w or g2.shape[0] != w:
        raise DimensionError(f"g1 and g2 must have length dim W = {w}")
    for name, g in (("g1", g1), ("g2", g2)):
        zero = [b.k for b in exo.blocks if np.max(np.abs(g[exo.block_slice(b.k)])) <= tol]
        if zero:
            warnings.warn(f"{name} has zero coefficients at k={zero}; the G-conditions may fail there", ZeroCoefficientWarning, stacklevel=2)

    def mat(M, shape):
        return np.zeros(shape, dtype=complex) if M is None else np.asarray(M, dtype=complex).reshape(shape)

    R1 = mat(R1, (dim_z1, dim_z1))
    R2 = mat(R2, (dim_z1, 2 * w))
    R3 = mat(R3, (dim_z1, 2))
    K1 = mat(K1, (m, dim_z1))
    K2 = mat(K2, (m, 2 * w))
    G1 = np.block([[R1, R2], [np.zeros((2 * w, dim_z1)), block_diag(S, S)]])
    G2 = np.vstack([R3, block_diag(g1[:, None], g2[:, None])])
    return Controller(G1, G2, np.hstack([K1, K2]), "g-structured")
