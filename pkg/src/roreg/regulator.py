"""Sylvester and regulator equations, solved per exosystem block, and the robustness tests.

The closed loop acts on ``x_e = (x, z)``::

    x_e' = A_e x_e + B_e v,   e = C_e x_e + D_e v.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import freq_ops
from .errors import DimensionError, ResonanceError

log = logging.getLogger(__name__)

RESONANCE_TOL = 1e-10
SOLVE_RTOL = 1e-8
UNIQUE_RTOL = 1e-8


@dataclass(frozen=True)
class ClosedLoopSystem:
    Ae: np.ndarray
    Be: np.ndarray
    Ce: np.ndarray
    De: np.ndarray
    n_plant: int = None
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Ae = np.atleast_2d(np.asarray(self.Ae, dtype=complex))
        n = Ae.shape[0]
        if Ae.shape != (n, n):
            raise DimensionError(f"Ae must be square, got {Ae.shape}")
        Be = np.asarray(self.Be, dtype=complex).reshape(n, -1)
        Ce = np.atleast_2d(np.asarray(self.Ce, dtype=complex))
        if Ce.shape[1] != n:
            raise DimensionError(f"Ce has {Ce.shape[1]} columns, Ae is {n}x{n}")
        De = np.asarray(self.De, dtype=complex).reshape(Ce.shape[0], Be.shape[1])
        for name, val in (("Ae", Ae), ("Be", Be), ("Ce", Ce), ("De", De)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "eigenvalues", np.linalg.eigvals(Ae))

    @property
    def dim(self):
        return self.Ae.shape[0]

    @property
    def spectral_abscissa(self):
        return float(np.max(self.eigenvalues.real))

    def norm(self):
        return float(np.linalg.norm(self.Ae, 2))

    def resonance_distance(self, omega):
        return float(np.min(np.abs(self.eigenvalues - 1j * omega)))

    def with_input(self, Be=None, De=None):
        return ClosedLoopSystem(self.Ae, self.Be if Be is None else Be, self.Ce, self.De if De is None else De, self.n_plant)


# -- Sylvester ---------------------------------------------------------------


@dataclass
class SylvesterSolution:
    """Columns ``Sigma phi_k^l`` of the solution of ``Sigma S = A_e Sigma + B_e``."""

    exo: object
    columns: dict
    residuals: dict
    regulation_residuals: dict
    formula_deviation: dict

    def matrix(self):
        n = len(next(iter(self.columns.values())))
        Sig = np.zeros((n, self.exo.dim), dtype=complex)
        for (k, l), col in self.columns.items():
            Sig[:, self.exo.index(k, l)] = col
        return Sig

    def apply(self, v):
        return self.matrix() @ np.asarray(v, dtype=complex)

    def max_residual(self):
        return max(self.residuals.values())

    def max_regulation_residual(self):
        return max(self.regulation_residuals.values())

    def series_norm_sq(self, alpha=None):
        """Diagnostic ``sum_k (1 + omega_k^2)^(-alpha) sum_l ||Sigma phi_k^l||^2``; never used as a gate."""
        alpha = self.exo.alpha if alpha is None else alpha
        total = 0.0
        for b in self.exo.blocks:
            w = (1.0 + b.omega**2) ** (-alpha)
            total += w * sum(np.linalg.norm(self.columns[(b.k, l)]) ** 2 for l in range(1, b.n + 1))
        return float(total)

    def csv_rows(self):
        """Rows ``(flat_index, state_index, re, im)`` of the dense ``Sigma``."""
        Sig = self.matrix()
        return [(j, i, Sig[i, j].real, Sig[i, j].imag) for j in range(Sig.shape[1]) for i in range(Sig.shape[0])]

    def to_json(self):
        def keyed(d):
            return [{"k": k, "l": l, "value": float(v)} for (k, l), v in d.items()]

        return {
            "max_residual": self.max_residual(),
            "max_regulation_residual": self.max_regulation_residual(),
            "max_formula_deviation": max(self.formula_deviation.values()),
            "series_norm_sq": self.series_norm_sq(),
            "residuals": keyed(self.residuals),
            "regulation_residuals": keyed(self.regulation_residuals),
        }


def _check_resonance(cl, exo):
    for b in exo.blocks:
        dist = cl.resonance_distance(b.omega)
        if dist <= RESONANCE_TOL:
            raise ResonanceError(f"i*omega_{b.k} = {1j * b.omega} is within {dist:.3g} of an eigenvalue of A_e", k=b.k)


def solve_sylvester(cl, exo):
    """Per-block recursion ``Sigma phi^l = R(i w, A_e)(B_e phi^l - Sigma phi^(l-1))``.

    Each column is also recomputed from the explicit sum
    ``sum_j (-1)^(l-j) R^(l+1-j) B_e phi^j``; the largest deviation is stored.
    """
    if cl.Be.shape[1] != exo.dim:
        raise DimensionError(f"B_e has {cl.Be.shape[1]} columns, exosystem dimension is {exo.dim}")
    _check_resonance(cl, exo)
    n = cl.dim
    I = np.eye(n)
    columns, residuals, regres, dev = {}, {}, {}, {}
    for b in exo.blocks:
        lu = sla.lu_factor(1j * b.omega * I - cl.Ae)
        bcols = [cl.Be[:, exo.index(b.k, l)] for l in range(1, b.n + 1)]
        prev = np.zeros(n, dtype=complex)
        chain = []
        for l in range(1, b.n + 1):
            x = sla.lu_solve(lu, bcols[l - 1] - prev)
            chain.append(x)
            prev = x
        # explicit alternating-power formula
        powers = []  # powers[q][j] = R^(q+1) B_e phi^(j+1)
        cur = [sla.lu_solve(lu, bc) for bc in bcols]
        for q in range(b.n):
            powers.append(cur)
            cur = [sla.lu_solve(lu, c) for c in cur]
        for l in range(1, b.n + 1):
            x = chain[l - 1]
            alt = sum((-1) ** (l - j) * powers[l - j][j - 1] for j in range(1, l + 1))
            Sx = 1j * b.omega * x + (chain[l - 2] if l > 1 else 0.0)
            key = (b.k, l)
            columns[key] = x
            residuals[key] = float(np.linalg.norm(Sx - cl.Ae @ x - bcols[l - 1]))
            dev[key] = float(np.linalg.norm(alt - x))
            regres[key] = float(np.linalg.norm(cl.Ce @ x + cl.De[:, exo.index(b.k, l)]))
    return SylvesterSolution(exo, columns, residuals, regres, dev)


def regulation_constraint(sol, cl, tol=SOLVE_RTOL):
    """Residuals ``||C_e Sigma phi + D_e phi||`` per column and the regulator-equation verdict."""
    res = {}
    for (k, l), col in sol.columns.items():
        res[(k, l)] = float(np.linalg.norm(cl.Ce @ col + cl.De[:, sol.exo.index(k, l)]))
    return res, all(v <= tol for v in res.values())


def column_bound_check(cl, sol, alpha=None):
    """Per column ``(lhs, rhs)`` of ``||C_e Sigma phi|| <= ||C_e (A_e - I)^-1|| (||Sigma|| ||(S-I) phi||_a + ||B_e|| ||phi||_a)``."""
    exo = sol.exo
    CeR = cl.Ce @ np.linalg.inv(cl.Ae - np.eye(cl.dim))
    c = np.linalg.norm(CeR, 2)
    Sig = sol.matrix()
    nS, nB = np.linalg.norm(Sig, 2), np.linalg.norm(cl.Be, 2)
    SmI = exo.generator() - np.eye(exo.dim)
    out = {}
    for (k, l), col in sol.columns.items():
        phi = exo.basis(k, l)
        rhs = c * (nS * exo.alpha_norm(SmI @ phi, alpha) + nB * exo.alpha_norm(phi, alpha))
        out[(k, l)] = (float(np.linalg.norm(cl.Ce @ col)), float(rhs))
    return out


# -- closed-loop state formula ------------------------------------------------


class Propagator:
    """``T_e(t) = exp(A_e t)`` by eigendecomposition when well conditioned, else ``scipy.linalg.expm``."""

    COND_LIMIT = 1e8

    def __init__(self, Ae):
        self.Ae = np.asarray(Ae, dtype=complex)
        mu, V = np.linalg.eig(self.Ae)
        self.cond = float(np.linalg.cond(V))
        if np.isfinite(self.cond) and self.cond < self.COND_LIMIT:
            self.method = "eig"
            self._mu, self._V, self._Vinv = mu, V, np.linalg.inv(V)
        else:
            self.method = "expm"
        log.info("propagator: %s (eigenvector condition %.3g)", self.method, self.cond)

    def matrix(self, t):
        if self.method == "eig":
            return (self._V * np.exp(self._mu * t)) @ self._Vinv
        return sla.expm(self.Ae * t)

    def apply(self, x, t):
        if self.method == "eig":
            return self._V @ (np.exp(self._mu * t) * (self._Vinv @ x))
        return self.matrix(t) @ x


def closed_loop_state_formula(cl, sol, xe0, v0, exo, t, propagator=None):
    """``x_e(t) = T_e(t)(x_e0 - Sigma v0) + Sigma v(t)`` and ``e(t) = C_e x_e(t) + D_e v(t)``."""
    prop = Propagator(cl.Ae) if propagator is None else propagator
    Sig = sol.matrix()
    xe0 = np.asarray(xe0, dtype=complex)
    v0 = np.asarray(v0, dtype=complex)
    vt = exo.group_action(v0, t)
    xe = prop.apply(xe0 - Sig @ v0, t) + Sig @ vt
    e = cl.Ce @ xe + cl.De @ vt
    return xe, e


# -- robustness ---------------------------------------------------------------


@dataclass
class RobustnessEntry:
    k: int
    omega: float
    solvable: bool
    unique: bool
    z: np.ndarray
    lhs_residual: float
    regulation_residual: float = None

    def to_json(self):
        from .io import encode_vector

        return {
            "k": self.k,
            "omega": self.omega,
            "solvable": self.solvable,
            "unique": self.unique,
            "z": None if self.z is None else encode_vector(self.z),
            "lhs_residual": self.lhs_residual,
            "regulation_residual": self.regulation_residual,
        }


@dataclass
class RobustnessReport:
    entries: list
    tol: float

    @property
    def robust(self):
        return all(e.solvable and (e.regulation_residual is None or e.regulation_residual <= self.tol) for e in self.entries)

    def to_json(self):
        return {"robust": self.robust, "tol": self.tol, "frequencies": [e.to_json() for e in self.entries]}


def _frequency_data(ctrl, plant, E, F, exo, k):
    """Pieces of the block-``k`` robustness system.

    Returns ``(Pblk, Kdiag, r0, block)`` with
    ``r0 = C~ R(i w, A~) E~ Phi_k + F~ Phi_k`` stacked top-first.
    """
    b = exo.block(k)
    N, p = plant.N, plant.n_outputs
    E = np.zeros((N, exo.dim), dtype=complex) if E is None else np.asarray(E, dtype=complex).reshape(N, exo.dim)
    F = np.asarray(F, dtype=complex).reshape(p, exo.dim)
    Phi = exo.phi_matrix(k)
    stackE = (E @ Phi).T  # (n, N), row 0 is E phi^n
    R = plant.block_resolvent(b.omega, b.n)
    CRE = (plant.output_modes @ R.apply(stackE).T).T
    r0 = (CRE + (F @ Phi).T).ravel()
    Pblk = plant.block_transfer(b.omega, b.n)
    Kdiag = sla.block_diag(*([ctrl.K] * b.n))
    return Pblk, Kdiag, r0, b


def robustness_equations(ctrl, plant, E, F, exo, k, tol=SOLVE_RTOL, rank_tol=freq_ops.RANK_TOL):
    """Least-squares solve of ``P~(i w) K z = -r0`` over ``z in ker(J_k)``."""
    ctrl.check_plant(plant)
    Pblk, Kdiag, r0, b = _frequency_data(ctrl, plant, E, F, exo, k)
    rhs = -r0
    Kb = freq_ops.kernel_basis(freq_ops.build_J(ctrl.G1, b.omega, b.n), rank_tol)
    M = Pblk @ Kdiag @ Kb
    thresh = tol * (1.0 + np.linalg.norm(rhs))
    if M.shape[1] == 0:
        z = np.zeros(ctrl.dim * b.n, dtype=complex)
        res = float(np.linalg.norm(rhs))
        return RobustnessEntry(k, b.omega, res <= thresh, True, z if res <= thresh else None, res)
    c, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    res = float(np.linalg.norm(M @ c - rhs))
    s = freq_ops.singular_values(M)
    unique = bool(M.shape[0] >= M.shape[1] and s[-1] > UNIQUE_RTOL * s[0])
    solvable = res <= thresh
    return RobustnessEntry(k, b.omega, solvable, unique, Kb @ c if solvable else None, res)


def per_frequency_fixed_point(ctrl, plant, E, F, exo, k, tol=SOLVE_RTOL):
    """Solve ``(J_k - blockdiag(G2) P~ K) z = blockdiag(G2) r0`` and return ``(z, ||P~ K z + r0||)``."""
    ctrl.check_plant(plant)
    Pblk, Kdiag, r0, b = _frequency_data(ctrl, plant, E, F, exo, k)
    G2d = sla.block_diag(*([ctrl.G2] * b.n))
    L = freq_ops.build_J(ctrl.G1, b.omega, b.n) - G2d @ Pblk @ Kdiag
    s = freq_ops.singular_values(L)
    if s.size and s[-1] <= 1e-13 * max(s[0], 1.0):
        raise ResonanceError(f"fixed-point system at k={k} is singular (i*omega_k in the closed-loop spectrum)", k=k)
    z = np.linalg.solve(L, G2d @ r0)
    return z, float(np.linalg.norm(Pblk @ Kdiag @ z + r0))


def robustness_report(ctrl, plant, E, F, exo, tol=SOLVE_RTOL, cl=None):
    """Robustness entries for every block; when ``cl`` (the perturbed closed loop) is given
    the regulation residual of its Sylvester solution is attached to each entry."""
    entries = [robustness_equations(ctrl, plant, E, F, exo, b.k, tol) for b in exo.blocks]
    if cl is not None:
        sol = solve_sylvester(cl, exo)
        for e in entries:
            b = exo.block(e.k)
            e.regulation_residual = max(sol.regulation_residuals[(b.k, l)] for l in range(1, b.n + 1))
    return RobustnessReport(entries, tol)


def random_perturbations(rng, N, p, w, count, scale=1.0):
    """``count`` pairs ``(E~, F~)`` with i.i.d. complex normal entries times ``scale``."""
    out = []
    for _ in range(count):
        E = scale * (rng.standard_normal((N, w)) + 1j * rng.standard_normal((N, w)))
        F = scale * (rng.standard_normal((p, w)) + 1j * rng.standard_normal((p, w)))
        out.append((E, F))
    return out
