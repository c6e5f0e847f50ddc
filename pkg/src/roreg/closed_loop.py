"""Closed-loop assembly, sector stability scan, time simulation and the feedback factorization check."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import AccuracyError, DimensionError
from .regulator import ClosedLoopSystem

log = logging.getLogger(__name__)

SECTOR_ANGLE = 3 * math.pi / 4


def _as(M, shape, name):
    M = np.asarray(M, dtype=complex)
    if M.size == 0 and 0 in shape:
        return M.reshape(shape)
    M = np.atleast_2d(M)
    if M.shape != shape:
        raise DimensionError(f"{name} has shape {M.shape}, expected {shape}")
    return M


def assemble(plant, ctrl, E=None, F=None):
    """``A_e = [[A, B K], [G2 C, G1 + G2 D K]]``, ``B_e = [E; G2 F]``, ``C_e = [C, D K]``, ``D_e = F``.

    ``E`` defaults to zero; ``F`` defaults to an empty ``p x 0`` matrix when both are absent.
    """
    ctrl.check_plant(plant)
    N, p = plant.N, plant.n_outputs
    if F is None:
        w = 0 if E is None else np.atleast_2d(E).shape[1]
        F = np.zeros((p, w), dtype=complex)
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    if F.shape[0] != p:
        raise DimensionError(f"F has {F.shape[0]} rows, plant has {p} outputs")
    w = F.shape[1]
    E = np.zeros((N, w), dtype=complex) if E is None else _as(E, (N, w), "E")
    B, C, D = plant.B, plant.C, plant.D
    G1, G2, K = ctrl.G1, ctrl.G2, ctrl.K
    Ae = np.block([[plant.A, B @ K], [G2 @ C, G1 + G2 @ D @ K]])
    Be = np.vstack([E, G2 @ F])
    Ce = np.hstack([C, D @ K])
    return ClosedLoopSystem(Ae, Be, Ce, F, n_plant=N)


def schur_complement(plant, ctrl, lam):
    """``S_A(lam) = lam - G1 - G2 P(lam) K``."""
    P = plant.transfer(lam).value
    return lam * np.eye(ctrl.dim) - ctrl.G1 - ctrl.G2 @ P @ ctrl.K


def schur_batch(plant, ctrl, lams, backend=None):
    lams = np.asarray(lams, dtype=complex)
    P = plant.transfer_values(lams, backend=backend) + plant.feedthrough
    eye = np.eye(ctrl.dim)
    return lams[:, None, None] * eye - ctrl.G1 - np.einsum("ij,qjk,kl->qil", ctrl.G2, P, ctrl.K)


def in_sector(lam, delta):
    """Membership in ``{lam : |arg(lam + delta)| > 3 pi / 4}``."""
    lam = np.asarray(lam, dtype=complex)
    return np.abs(np.angle(lam + delta)) > SECTOR_ANGLE


@dataclass
class SectorScanResult:
    delta: float
    radius: float
    grid: np.ndarray
    min_sv: np.ndarray
    q_estimate: float
    q_actual: float
    spectrum_in_sector: bool
    plant_spectrum_in_sector: bool
    singular_points: list = field(default_factory=list)
    tail_unbounded: int = 0
    closed_loop_abscissa: float = None

    @property
    def verdict(self):
        return bool(
            not self.singular_points
            and self.q_estimate < 1.0
            and self.spectrum_in_sector
            and self.plant_spectrum_in_sector
            and self.tail_unbounded == 0
        )

    def to_json(self, include_grid=False):
        out = {
            "delta": self.delta,
            "radius": self.radius,
            "verdict": self.verdict,
            "q_estimate": self.q_estimate,
            "q_actual": self.q_actual,
            "n_points": int(self.grid.size),
            "min_sv_schur": float(np.min(self.min_sv)) if self.min_sv.size else None,
            "spectrum_in_sector": self.spectrum_in_sector,
            "plant_spectrum_in_sector": self.plant_spectrum_in_sector,
            "closed_loop_abscissa": self.closed_loop_abscissa,
            "singular_points": [[z.real, z.imag] for z in self.singular_points],
            "tail_unbounded_points": self.tail_unbounded,
        }
        if include_grid:
            out["grid"] = [[z.real, z.imag] for z in self.grid]
            out["min_sv"] = self.min_sv.tolist()
        return out


def sector_points(delta, radius, density=512, interior=48):
    """Boundary rays, the exterior arc of ``|lam| = radius`` and a polar interior grid.

    All points lie in the closed exterior of the sector and in the disc ``|lam| <= radius``.
    """
    s2 = math.sqrt(2.0)
    # |-delta + rho e^{i 3pi/4}| = radius
    disc = 2 * delta**2 - 4 * (delta**2 - radius**2)
    rho_max = (-s2 * delta + math.sqrt(max(disc, 0.0))) / 2
    pts = []
    rho = np.linspace(0.0, rho_max, density)
    for sgn in (1, -1):
        pts.append(-delta + rho * np.exp(sgn * 1j * SECTOR_ANGLE))
    psi = np.linspace(-math.pi, math.pi, density, endpoint=False)
    arc = radius * np.exp(1j * psi)
    pts.append(arc[~in_sector(arc, delta)])
    # interior polar grid centred at -delta
    th = np.linspace(-SECTOR_ANGLE, SECTOR_ANGLE, interior)
    rr = np.linspace(0.0, radius + delta, interior + 1)[1:]
    grid = (-delta + rr[:, None] * np.exp(1j * th[None, :])).ravel()
    pts.append(grid[np.abs(grid) <= radius])
    return np.concatenate(pts)


def far_points(delta, radius, n_radial=64, n_angle=129, factor=1e4):
    """Points with ``|lam| >= radius`` outside the sector, for the contraction estimate."""
    s = np.geomspace(radius, radius * factor, n_radial)
    psi = np.linspace(-math.pi, math.pi, n_angle)
    z = (s[:, None] * np.exp(1j * psi[None, :])).ravel()
    z = z[~in_sector(z, delta)]
    # the two boundary rays beyond the disc
    rho = np.geomspace(radius, radius * factor, n_radial)
    rays = [-delta + rho * np.exp(sg * 1j * SECTOR_ANGLE) for sg in (1, -1)]
    rays = [r[np.abs(r) >= radius] for r in rays]
    return np.concatenate([z] + rays)


def contraction_estimate(plant, ctrl, lams, delta=None):
    """Per point ``(||G1|| + ||G2|| ||K|| Pbound(lam)) / |lam|`` and the sampled ``||G1 + G2 P K|| / |lam|``.

    ``Pbound`` is the modal-series bound of :meth:`ModalPlant.transfer_norm_bound`,
    so the estimate covers the dropped modes.  The second value uses the
    truncated transfer function and is a diagnostic only.
    """
    from . import kernels

    lams = np.asarray(lams, dtype=complex)
    g1 = np.linalg.norm(ctrl.G1, 2)
    gk = np.linalg.norm(ctrl.G2, 2) * np.linalg.norm(ctrl.K, 2)
    s = kernels.inverse_distance_sum(lams, plant.eigenvalues)
    tails = np.array([plant.tail_sum(z, delta) for z in lams])
    pb = plant.norm_constant * (s + tails) + np.linalg.norm(plant.feedthrough, 2)
    bound = (g1 + gk * pb) / np.abs(lams)
    P = plant.transfer_values(lams) + plant.feedthrough
    Mfull = ctrl.G1[None] + np.einsum("ij,qjk,kl->qil", ctrl.G2, P, ctrl.K)
    actual = np.linalg.norm(Mfull, ord=2, axis=(1, 2)) / np.abs(lams)
    return bound, actual, int(np.sum(~np.isfinite(tails)))


def sector_scan(plant, ctrl, delta, radius, grid_density=512, interior_density=48, threads=1, sv_tol=1e-8):
    """Check invertibility of ``S_A`` on the sector exterior within ``|lam| <= radius`` and
    the contraction ``q < 1`` beyond it; the truncated closed-loop spectrum is checked directly."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    lams = sector_points(delta, radius, grid_density, interior_density)
    dist = np.min(np.abs(lams[:, None] - plant.eigenvalues[None, :]), axis=1)
    on_spec = dist <= 1e-12 * (np.abs(lams) + 1)
    lams = lams[~on_spec]

    def chunk_sv(chunk):
        S = schur_batch(plant, ctrl, chunk)
        s = np.linalg.svd(S, compute_uv=False)
        return s[:, -1], s[:, 0]

    chunks = np.array_split(lams, max(1, threads * 4))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk_sv, chunks))
    else:
        parts = [chunk_sv(c) for c in chunks]
    smin = np.concatenate([p[0] for p in parts])
    smax = np.concatenate([p[1] for p in parts])
    singular = smin <= sv_tol * np.maximum(smax, 1.0)

    far = far_points(delta, radius)
    bound, actual, unbounded = contraction_estimate(plant, ctrl, far, delta)
    Ae = assemble(plant, ctrl).Ae
    eig = np.linalg.eigvals(Ae)
    # eigenvalues of A_e off the plant spectrum are exactly the zeros of det S_A
    off = eig[(~in_sector(eig, delta)) & (np.abs(eig) <= radius)]
    off = [z for z in off if np.min(np.abs(plant.eigenvalues - z)) > 1e-12 * (abs(z) + 1)]
    return SectorScanResult(
        delta=float(delta),
        radius=float(radius),
        grid=lams,
        min_sv=smin,
        q_estimate=float(np.max(bound[np.isfinite(bound)])) if np.any(np.isfinite(bound)) else math.inf,
        q_actual=float(np.max(actual)),
        spectrum_in_sector=bool(np.all(in_sector(eig, delta))),
        plant_spectrum_in_sector=bool(np.all(in_sector(plant.eigenvalues, delta))),
        singular_points=[complex(z) for z in lams[singular]] + [complex(z) for z in off],
        tail_unbounded=unbounded,
        closed_loop_abscissa=float(np.max(eig.real)),
    )


# -- simulation ----------------------------------------------------------------

_S6 = math.sqrt(6.0)
RADAU_A = np.array(
    [
        [(88 - 7 * _S6) / 360, (296 - 169 * _S6) / 1800, (-2 + 3 * _S6) / 225],
        [(296 + 169 * _S6) / 1800, (88 + 7 * _S6) / 360, (-2 - 3 * _S6) / 225],
        [(16 - _S6) / 36, (16 + _S6) / 36, 1 / 9],
    ]
)


def radau_step_matrix(M, h):
    """One step of 3-stage Radau IIA for ``w' = M w`` as a dense matrix.

    The stage system ``(I - h A (x) M) W = 1 (x) w_n`` is solved once for the
    identity; the method is stiffly accurate, so ``w_{n+1}`` is the last stage.
    """
    n = M.shape[0]
    lhs = np.eye(3 * n, dtype=complex) - h * np.kron(RADAU_A, M)
    rhs = np.kron(np.ones((3, 1)), np.eye(n))
    W = sla.lu_solve(sla.lu_factor(lhs), rhs)
    return W[2 * n:]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    errors: np.ndarray
    exo_states: np.ndarray
    info: dict = field(default_factory=dict)

    def check(self, cl, atol=1e-9):
        e = self.states @ cl.Ce.T + self.exo_states @ cl.De.T
        scale = 1.0 + np.max(np.abs(e), initial=0.0)
        if np.max(np.abs(e - self.errors), initial=0.0) > atol * scale:
            raise AssertionError("trajectory error rows disagree with C_e x_e + D_e v")

    def csv(self):
        n = self.states.shape[1]
        p = self.outputs.shape[1]
        header = ["t"]
        for i in range(n):
            header += [f"x_{i}_re", f"x_{i}_im"]
        header += [f"y_{i + 1}" for i in range(p)] + [f"e_{i + 1}" for i in range(p)]
        rows = []
        for j, t in enumerate(self.times):
            row = [t]
            for v in self.states[j]:
                row += [v.real, v.imag]
            row += list(self.outputs[j].real) + list(self.errors[j].real)
            rows.append(row)
        return header, rows


def _integrate(M, w0, times, base_steps, level, cache):
    out = np.empty((len(times), len(w0)), dtype=complex)
    out[0] = w0
    w = w0
    for j in range(1, len(times)):
        dt = times[j] - times[j - 1]
        nsub = base_steps[j - 1] * 2**level
        if dt == 0.0:
            out[j] = w
            continue
        h = dt / nsub
        key = round(h, 15)
        if key not in cache:
            cache[key] = radau_step_matrix(M, h)
        Phi = cache[key]
        for _ in range(nsub):
            w = Phi @ w
        out[j] = w
    return out


def simulate_ode(cl, exo, xe0, v0, t_grid, rtol=1e-8, h_max=0.1, max_level=14):
    """Integrate ``x_e' = A_e x_e + B_e v``, ``v' = S v`` with fixed-step Radau IIA.

    The steps on every output interval are halved until two successive
    refinements differ by less than ``rtol`` relative to the largest state
    norm on the grid.  Raises :class:`AccuracyError` beyond ``max_level`` halvings.
    """
    times = np.asarray(t_grid, dtype=float).ravel()
    if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) < 0):
        raise ValueError("t_grid must start at 0 and be nondecreasing")
    n, w = cl.dim, exo.dim
    xe0 = np.asarray(xe0, dtype=complex).reshape(n)
    v0 = np.asarray(v0, dtype=complex).reshape(w)
    M = np.block([[cl.Ae, cl.Be], [np.zeros((w, n)), exo.generator()]])
    w0 = np.concatenate([xe0, v0])
    base = [max(1, math.ceil(d / h_max - 1e-9)) for d in np.diff(times)]
    cache = {}
    prev = _integrate(M, w0, times, base, 0, cache)
    diff = math.inf
    for level in range(1, max_level + 1):
        cur = _integrate(M, w0, times, base, level, cache)
        scale = max(np.max(np.linalg.norm(cur, axis=1)), 1e-300)
        diff = float(np.max(np.linalg.norm(cur - prev, axis=1)) / scale)
        prev = cur
        if diff < rtol or times.size == 1:
            break
    else:
        raise AccuracyError(f"step refinement stalled at relative change {diff:.3g} after {max_level} halvings")
    xs, vs = prev[:, :n], prev[:, n:]
    y = xs @ cl.Ce.T
    e = y + vs @ cl.De.T
    traj = Trajectory(times, xs, y, e, vs, info={"levels": level, "refinement_change": diff})
    traj.check(cl)
    return traj


def simulate_closed_form(cl, exo, sol, xe0, v0, t_grid, propagator=None):
    """Trajectory from the state formula ``T_e(t)(x_e0 - Sigma v0) + Sigma v(t)``."""
    from .regulator import Propagator, closed_loop_state_formula

    prop = Propagator(cl.Ae) if propagator is None else propagator
    times = np.asarray(t_grid, dtype=float).ravel()
    xs, es, vs = [], [], []
    for t in times:
        xe, e = closed_loop_state_formula(cl, sol, xe0, v0, exo, t, prop)
        xs.append(xe)
        es.append(e)
        vs.append(exo.group_action(v0, t))
    xs, vs = np.array(xs), np.array(vs)
    traj = Trajectory(times, xs, xs @ cl.Ce.T, np.array(es), vs, info={"propagator": prop.method, "cond": prop.cond})
    traj.check(cl)
    return traj


# -- feedback factorization ------------------------------------------------------


@dataclass
class FactorizationReport:
    max_residual: float
    checked: int
    skipped: list

    def to_json(self):
        return {"max_residual": self.max_residual, "checked": self.checked, "skipped": [[z.real, z.imag] for z in self.skipped]}


def feedback_factorization_check(plant, ctrl, lambda_grid):
    """Residual of ``(I - P^)^{-1} = (I P; 0 I)(I 0; 0 (I - P_G P)^{-1})(I 0; P_G I)``.

    ``P^ = [[0, P], [P_G, 0]]`` with ``P_G(lam) = K R(lam, G1) G2``.  Points
    where ``||P_G P|| >= 1`` are skipped and reported.
    """
    ctrl.check_plant(plant)
    p, m = plant.n_outputs, plant.n_inputs
    Ip, Im = np.eye(p), np.eye(m)
    worst, checked, skipped = 0.0, 0, []
    for lam in np.asarray(lambda_grid, dtype=complex).ravel():
        P = plant.transfer(lam).value
        PG = ctrl.K @ np.linalg.solve(lam * np.eye(ctrl.dim) - ctrl.G1, ctrl.G2)
        if np.linalg.norm(PG @ P, 2) >= 1.0:
            skipped.append(complex(lam))
            continue
        Sinv = np.linalg.inv(Im - PG @ P)
        left = np.block([[Ip, P], [np.zeros((m, p)), Im]])
        mid = np.block([[Ip, np.zeros((p, m))], [np.zeros((m, p)), Sinv]])
        right = np.block([[Ip, np.zeros((p, m))], [PG, Im]])
        T = left @ mid @ right
        Phat = np.block([[np.zeros((p, p)), P], [PG, np.zeros((m, m))]])
        resid = np.max(np.abs((np.eye(p + m) - Phat) @ T - np.eye(p + m)))
        worst = max(worst, float(resid))
        checked += 1
    return FactorizationReport(worst, checked, skipped)
