"""Plants given by spectral data: eigenvalues and mode coefficients of B and C.

The state is the vector of modal coordinates ``<x, phi_m>``, ``m < N``.  The
system operator is ``diag(eigenvalues)``; an unbounded input functional
``b_j`` is represented by its coefficients ``<b_j, phi_m>`` (column ``j`` of
``input_modes``) and a point observation by ``phi_m(xi_i)`` (row ``i`` of
``output_modes``).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .errors import DimensionError, SingularResolventError
from .io import encode_matrix, parse_matrix

SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class TailLaw:
    """Eigenvalues of the dropped modes, ``lambda_m = -(scale*m^2 + shift)`` for ``m >= N``."""

    scale: float
    shift: float

    def tail_sum(self, lam, N, delta=None):
        """Upper bound for ``sum_{m >= N} 1/|lam - lambda_m|``.

        ``|lam - lambda_m| >= scale*m^2 + x`` with ``x = Re(lam) + shift``.  For
        ``x > 0`` the decreasing summand is bounded by the integral from
        ``N - 1``::

            1/sqrt(scale*x) * (pi/2 - arctan((N - 1) sqrt(scale/x)))

        Otherwise ``scale*m^2 + x >= (1 + x/(scale N^2)) scale m^2`` for
        ``m >= N`` and ``sum_{m >= N} 1/m^2 <= 1/N^2 + 1/N``.  Returns ``inf``
        when ``scale*N^2 + x <= 0`` (tail not yet dominated).

        With ``delta`` given and ``lam`` outside ``{|arg(lam + delta)| > 3 pi/4}``,
        the distance to the negative axis beyond ``-delta`` is at least
        ``|lambda_m + delta| / sqrt(2)``, which gives a second bound valid for
        every ``Re(lam)``; the smaller one is returned.
        """
        best = self._sum(float(np.real(lam)) + self.shift, N)
        if delta is not None and abs(np.angle(complex(lam) + delta)) <= 3 * math.pi / 4:
            best = min(best, math.sqrt(2.0) * self._sum(self.shift - delta, N))
        return best

    def _sum(self, x, N):
        # bound for sum_{m >= N} 1/(scale m^2 + x)
        s = self.scale
        if x > 0:
            return (math.pi / 2 - math.atan((N - 1) * math.sqrt(s / x))) / math.sqrt(s * x)
        ratio = 1.0 + x / (s * N * N)
        if ratio <= 0:
            return math.inf
        return (1.0 / (N * N) + 1.0 / N) / (s * ratio)


@dataclass(frozen=True)
class TransferSample:
    lam: complex
    value: np.ndarray
    tail_bound: float


@dataclass(frozen=True)
class ModalPlant:
    """Truncated modal model ``(A, B, C, D)``.

    Parameters
    ----------
    eigenvalues : (N,) real array
        Strictly decreasing eigenvalues of ``A``.
    input_modes : (N, m) array
        ``beta[m, j] = <b_j, phi_m>``.
    output_modes : (p, N) array
        ``gamma[i, m] = <phi_m, c_i>``.
    feedthrough : (p, m) array, optional
    tail_law : TailLaw, optional
        Closed-form eigenvalue law of the modes dropped by the truncation; when
        absent the model is exact and all tail bounds are zero.
    tail_constant : float, optional
        Bound on ``|gamma[i, m] beta[m, j]|`` over all modes, retained and dropped.
        Defaults to the maximum over retained modes.
    norm_constant : float, optional
        Bound on ``||gamma[:, m]|| ||beta[m, :]||`` over all modes.
    basis : callable, optional
        ``basis(m, xi)`` evaluating eigenfunctions; used for projecting initial
        profiles and for reconstructing spatial fields.  Not serialised.
    """

    eigenvalues: np.ndarray
    input_modes: np.ndarray
    output_modes: np.ndarray
    feedthrough: np.ndarray = None
    tail_law: TailLaw = None
    tail_constant: float = None
    norm_constant: float = None
    basis: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        beta = np.atleast_2d(np.asarray(self.input_modes, dtype=complex))
        gamma = np.atleast_2d(np.asarray(self.output_modes, dtype=complex))
        N = lam.shape[0]
        if N < 1:
            raise ValueError("plant needs at least one mode")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("eigenvalues must be strictly decreasing")
        if beta.shape[0] != N:
            raise DimensionError(f"input_modes has {beta.shape[0]} rows, expected N={N}")
        if gamma.shape[1] != N:
            raise DimensionError(f"output_modes has {gamma.shape[1]} columns, expected N={N}")
        D = self.feedthrough
        D = np.zeros((gamma.shape[0], beta.shape[1]), dtype=complex) if D is None else np.atleast_2d(np.asarray(D, dtype=complex))
        if D.shape != (gamma.shape[0], beta.shape[1]):
            raise DimensionError(f"feedthrough has shape {D.shape}, expected {(gamma.shape[0], beta.shape[1])}")
        products = np.abs(gamma[:, :, None] * beta[None, :, :])
        tc = float(products.max()) if self.tail_constant is None else float(self.tail_constant)
        mode_norms = np.linalg.norm(gamma, axis=0) * np.linalg.norm(beta, axis=1)
        nc = float(mode_norms.max()) if self.norm_constant is None else float(self.norm_constant)
        if tc < products.max() * (1 - 1e-12):
            raise ValueError("tail_constant is smaller than a retained mode product")
        for name, val in (("eigenvalues", lam), ("input_modes", beta), ("output_modes", gamma), ("feedthrough", D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "tail_constant", tc)
        object.__setattr__(self, "norm_constant", nc)

    # -- shapes -------------------------------------------------------------

    @property
    def N(self):
        return self.eigenvalues.shape[0]

    @property
    def n_inputs(self):
        return self.input_modes.shape[1]

    @property
    def n_outputs(self):
        return self.output_modes.shape[0]

    @property
    def A(self):
        return np.diag(self.eigenvalues).astype(complex)

    @property
    def B(self):
        return np.array(self.input_modes)

    @property
    def C(self):
        return np.array(self.output_modes)

    @property
    def D(self):
        return np.array(self.feedthrough)

    def admissibility_sums(self):
        """Per input/output functional: ``sum_m |coeff_m|^2 / |lambda_m|``."""
        w = 1.0 / np.abs(self.eigenvalues)
        return {
            "inputs": (w @ np.abs(self.input_modes) ** 2).tolist(),
            "outputs": (np.abs(self.output_modes) ** 2 @ w).tolist(),
        }

    # -- resolvent and transfer function ------------------------------------

    def _guard(self, lam):
        lam = complex(lam)
        dist = float(np.min(np.abs(lam - self.eigenvalues)))
        if dist <= SINGULAR_RTOL * (abs(lam) + 1.0):
            raise SingularResolventError(f"lambda={lam} is within {dist:.3g} of a plant eigenvalue")
        return lam

    def resolvent_apply(self, lam, x):
        lam = self._guard(lam)
        x = np.asarray(x, dtype=complex)
        if x.shape[0] != self.N:
            raise DimensionError(f"modal vector has length {x.shape[0]}, expected {self.N}")
        d = 1.0 / (lam - self.eigenvalues)
        return d * x if x.ndim == 1 else d[:, None] * x

    def resolvent_diag(self, lam, power=1):
        lam = self._guard(lam)
        return (lam - self.eigenvalues) ** (-power)

    def resolvent_norm(self, lam):
        lam = self._guard(lam)
        return float(1.0 / np.min(np.abs(lam - self.eigenvalues)))

    def tail_sum(self, lam, delta=None):
        if self.tail_law is None:
            return 0.0
        return self.tail_law.tail_sum(lam, self.N, delta)

    def transfer(self, lam):
        """Truncated ``P(lam) = C R(lam, A) B + D`` with an entrywise tail bound."""
        lam = self._guard(lam)
        value = kernels.modal_sum([lam], self.eigenvalues, self.output_modes, self.input_modes)[0] + self.feedthrough
        return TransferSample(lam, value, self.tail_constant * self.tail_sum(lam))

    def transfer_values(self, lams, power=1, backend=None):
        """Vectorised ``C R(lam, A)^power B`` (no feedthrough) for many points."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        dist = kernels.min_distance(lams, self.eigenvalues, backend=backend)
        bad = dist <= SINGULAR_RTOL * (np.abs(lams) + 1.0)
        if np.any(bad):
            raise SingularResolventError(f"lambda={lams[bad][0]} lies on the plant spectrum")
        return kernels.modal_sum(lams, self.eigenvalues, self.output_modes, self.input_modes, power, backend=backend)

    def transfer_norm_bound(self, lam, delta=None):
        """``norm_constant * sum_m 1/|lam - lambda_m|`` (retained plus tail) ``+ ||D||``."""
        lam = self._guard(lam)
        s = float(kernels.inverse_distance_sum([lam], self.eigenvalues)[0]) + self.tail_sum(lam, delta)
        return self.norm_constant * s + float(np.linalg.norm(self.feedthrough, 2))

    def block_resolvent(self, omega, n):
        return BlockResolvent(self, 1j * float(omega), int(n))

    def block_transfer(self, omega, n):
        """Upper block-triangular ``(n p) x (n m)`` matrix with diagonal ``P(i omega)``.

        Block ``(r, s)``, ``s > r``, is ``(-1)^(s-r) C R^(s-r+1) B``.
        """
        n = int(n)
        lam = self._guard(1j * float(omega))
        p, m = self.n_outputs, self.n_inputs
        powers = [kernels.modal_sum([lam], self.eigenvalues, self.output_modes, self.input_modes, j)[0] for j in range(1, n + 1)]
        out = np.zeros((n * p, n * m), dtype=complex)
        for r in range(n):
            for s in range(r, n):
                d = s - r
                blk = (-1) ** d * powers[d]
                if d == 0:
                    blk = blk + self.feedthrough
                out[r * p:(r + 1) * p, s * m:(s + 1) * m] = blk
        return out

    # -- initial states -----------------------------------------------------

    def project_initial_state(self, x0, n_points=4097):
        """Modal coefficients of an initial profile.

        ``x0`` is either an array of ``N`` coefficients (returned as is) or a
        callable on ``[0, 1]``, projected onto ``basis`` with composite
        Simpson quadrature on ``n_points`` nodes.
        """
        if not callable(x0):
            c = np.asarray(x0, dtype=complex).ravel()
            if c.shape[0] != self.N:
                raise DimensionError(f"got {c.shape[0]} coefficients, expected {self.N}")
            return c
        if self.basis is None:
            raise ValueError("plant has no eigenfunction basis for quadrature")
        xi = np.linspace(0.0, 1.0, n_points)
        fx = np.asarray(x0(xi), dtype=complex)
        return np.array([simpson(fx * np.conj(self.basis(m, xi)), x=xi) for m in range(self.N)])

    def field(self, coeffs, xi):
        """Reconstruct ``x(xi) = sum_m coeffs[m] phi_m(xi)``."""
        if self.basis is None:
            raise ValueError("plant has no eigenfunction basis")
        xi = np.asarray(xi, dtype=float)
        Phi = np.stack([self.basis(m, xi) for m in range(self.N)])
        return np.asarray(coeffs) @ Phi

    # -- variants and serialisation -----------------------------------------

    def truncated(self, N):
        if not 1 <= N <= self.N:
            raise ValueError(f"cannot truncate {self.N} modes to {N}")
        return replace(
            self,
            eigenvalues=self.eigenvalues[:N],
            input_modes=self.input_modes[:N],
            output_modes=self.output_modes[:, :N],
        )

    def perturbed(self, **changes):
        return replace(self, **changes)

    def to_json(self):
        out = {
            "eigenvalues": self.eigenvalues.tolist(),
            "input_modes": encode_matrix(self.input_modes),
            "output_modes": encode_matrix(self.output_modes),
            "feedthrough": encode_matrix(self.feedthrough),
        }
        if self.tail_law is not None:
            out["tail_law"] = {"scale": self.tail_law.scale, "shift": self.tail_law.shift}
            out["tail_constant"] = self.tail_constant
            out["norm_constant"] = self.norm_constant
        return out

    @classmethod
    def from_json(cls, data):
        beta = parse_matrix(data["input_modes"])
        gamma = parse_matrix(data["output_modes"])
        D = data.get("feedthrough")
        D = None if D is None else parse_matrix(D, shape=(gamma.shape[0], beta.shape[1]))
        tail = data.get("tail_law")
        return cls(
            np.asarray(data["eigenvalues"], dtype=float),
            beta,
            gamma,
            D,
            tail_law=None if tail is None else TailLaw(float(tail["scale"]), float(tail["shift"])),
            tail_constant=data.get("tail_constant"),
            norm_constant=data.get("norm_constant"),
        )


class BlockResolvent:
    """Block upper-triangular resolvent acting on stacks ``(x_n, ..., x_1)`` of modal vectors.

    Block ``(r, s)`` with ``s >= r`` is ``(-1)^(s-r) R^(s-r+1)``; ``R`` is
    diagonal in modal coordinates, so application is cheap and never forms the
    ``nN x nN`` matrix unless :meth:`dense` is asked for.
    """

    def __init__(self, plant, lam, n):
        if n < 1:
            raise ValueError("block size must be positive")
        self.plant = plant
        self.lam = plant._guard(lam)
        self.n = n
        self._d = 1.0 / (self.lam - plant.eigenvalues)

    def apply(self, X):
        """``X`` has shape ``(n, N)`` or ``(n, N, k)``; row 0 is the top component."""
        X = np.asarray(X, dtype=complex)
        if X.shape[0] != self.n or X.shape[1] != self.plant.N:
            raise DimensionError(f"stack has shape {X.shape}, expected ({self.n}, {self.plant.N}, ...)")
        d = self._d if X.ndim == 2 else self._d[:, None]
        out = np.zeros_like(X)
        for r in range(self.n):
            for s in range(r, self.n):
                out[r] += (-1) ** (s - r) * d ** (s - r + 1) * X[s]
        return out

    def dense(self):
        N, n = self.plant.N, self.n
        out = np.zeros((n * N, n * N), dtype=complex)
        for r in range(n):
            for s in range(r, n):
                out[r * N:(r + 1) * N, s * N:(s + 1) * N] = np.diag((-1) ** (s - r) * self._d ** (s - r + 1))
        return out
