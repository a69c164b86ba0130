"""Truncated Fock-space numerics for a single bosonic pointer mode.

Conventions (hbar = 1):

* ``q = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(sqrt(2) i)``, so ``[q, p] = i``
  away from the truncation edge.
* Momentum wavefunctions use ``<p|n> = (-i)^n psi_n(p)`` with ``psi_n`` the
  normalized Hermite functions. Flipping this phase flips the sign of
  ``<{q, p}>`` computed on the grid.
* ``squeezed_coherent_state(xi, alpha)`` is ``S(xi)|alpha>`` with
  ``S(xi) = exp((xi^* a^2 - xi a^dag^2)/2)``: squeeze applied after
  displacement.

Every constructor checks that the probability mass in the last
``TAIL_WIDTH`` basis states is below ``TAIL_TOL`` and raises
:class:`~wvalab.errors.TruncationInadequate` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    DimensionMismatch,
    GridTooNarrow,
    InvalidDimension,
    NonHermitianGenerator,
    TruncationInadequate,
)

DEFAULT_DIM = 256
DEFAULT_GRID_POINTS = 4096
TAIL_WIDTH = 8
TAIL_TOL = 1e-10
NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12

__all__ = [
    "DEFAULT_DIM",
    "PointerState",
    "PointerOperator",
    "QuadratureGrid",
    "annihilation_op",
    "creation_op",
    "number_op",
    "quadrature_ops",
    "vacuum",
    "fock_state",
    "coherent_state",
    "squeezed_coherent_state",
    "expectation",
    "expectation_rho",
    "variance",
    "evolve_hermitian",
    "default_grid",
    "hermite_functions",
    "wavefunction_p",
    "density_p",
    "tail_mass",
    "required_dim",
]


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointerState:
    """Fock amplitudes ``c_0 .. c_{dim-1}`` of a pointer state."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size < 2:
            raise InvalidDimension(f"pointer amplitudes must be a vector of length >= 2, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def tail_mass(self) -> float:
        return tail_mass(self.amplitudes)

    def normalized(self) -> "PointerState":
        return PointerState(self.amplitudes / np.sqrt(self.norm2))

    def overlap(self, other: "PointerState") -> complex:
        """``<self|other>``."""
        _check_dims(self.dim, other.dim)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __repr__(self):
        return f"PointerState(dim={self.dim}, norm2={self.norm2:.12g})"


@dataclass(frozen=True, eq=False)
class PointerOperator:
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidDimension(f"operator must be square, got shape {mat.shape}")
        if self.hermitian:
            resid = np.max(np.abs(mat - mat.conj().T))
            if resid >= HERMITIAN_TOL:
                raise NonHermitianGenerator(f"operator flagged hermitian but max|M - M^dag| = {resid:.3g}")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dag(self) -> "PointerOperator":
        return PointerOperator(self.matrix.conj().T, self.hermitian)

    @cached_property
    def eig(self):
        """Eigen-decomposition ``(w, V)`` of a Hermitian operator, cached."""
        if not self.hermitian:
            raise NonHermitianGenerator("eigendecomposition requested for a non-hermitian operator")
        w, v = np.linalg.eigh(self.matrix)
        w.setflags(write=False)
        v.setflags(write=False)
        return w, v

    def __matmul__(self, other):
        if isinstance(other, PointerOperator):
            _check_dims(self.dim, other.dim)
            return PointerOperator(self.matrix @ other.matrix)
        if isinstance(other, PointerState):
            _check_dims(self.dim, other.dim)
            return PointerState(self.matrix @ other.amplitudes)
        return NotImplemented

    def __add__(self, other):
        _check_dims(self.dim, other.dim)
        return PointerOperator(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other):
        _check_dims(self.dim, other.dim)
        return PointerOperator(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __repr__(self):
        return f"PointerOperator(dim={self.dim}, hermitian={self.hermitian})"


def commutator(x: PointerOperator, y: PointerOperator) -> PointerOperator:
    return PointerOperator(x.matrix @ y.matrix - y.matrix @ x.matrix)


def anticommutator(x: PointerOperator, y: PointerOperator) -> PointerOperator:
    m = x.matrix @ y.matrix + y.matrix @ x.matrix
    return PointerOperator(m, x.hermitian and y.hermitian and np.max(np.abs(m - m.conj().T)) < HERMITIAN_TOL)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform grid of ``n`` points on ``[lo, hi]`` (dimensionless quadrature)."""

    lo: float
    hi: float
    n: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if not self.hi > self.lo or self.n < 3:
            raise ValueError(f"bad grid: lo={self.lo}, hi={self.hi}, n={self.n}")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def integrate(self, values) -> float:
        return float(np.trapezoid(values, dx=self.spacing))


def default_grid(dim: int, n: int = DEFAULT_GRID_POINTS) -> QuadratureGrid:
    half = np.sqrt(2.0 * dim) + 5.0
    return QuadratureGrid(-half, half, n)


def _check_dims(d1, d2):
    if d1 != d2:
        raise DimensionMismatch(f"dimension mismatch: {d1} vs {d2}")


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidDimension(f"truncation dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


# -- operators ---------------------------------------------------------------


@lru_cache(maxsize=16)
def annihilation_op(dim: int) -> PointerOperator:
    dim = _check_dim(dim)
    return PointerOperator(np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1))


@lru_cache(maxsize=16)
def creation_op(dim: int) -> PointerOperator:
    return annihilation_op(dim).dag


@lru_cache(maxsize=16)
def number_op(dim: int) -> PointerOperator:
    dim = _check_dim(dim)
    return PointerOperator(np.diag(np.arange(dim, dtype=float)), hermitian=True)


@lru_cache(maxsize=16)
def quadrature_ops(dim: int) -> tuple[PointerOperator, PointerOperator]:
    a = annihilation_op(dim).matrix
    ad = a.conj().T
    q = (a + ad) / np.sqrt(2.0)
    p = (a - ad) / (np.sqrt(2.0) * 1j)
    return PointerOperator(q, hermitian=True), PointerOperator(p, hermitian=True)


@lru_cache(maxsize=16)
def _squeeze_generator_eig(dim: int):
    """Eigensystems of G = i(a^2 - a^dag^2)/2 on its two parity sectors.

    On the levels ``n = 2k + parity`` G is tridiagonal with entries
    ``G[k, k+1] = i b_k``; conjugating by ``diag(i^k)`` makes it the real
    symmetric matrix with off-diagonal ``-b_k``.  Returns per sector
    ``(eigenvalues, real eigenvectors, phases i^k)``.
    """
    _check_dim(dim)
    sectors = []
    for parity in (0, 1):
        n = np.arange(parity, dim, 2)
        off = -0.5 * np.sqrt((n[:-1] + 1.0) * (n[:-1] + 2.0))
        if n.size == 1:
            w, u = np.zeros(1), np.ones((1, 1))
        else:
            w, u = eigh_tridiagonal(np.zeros(n.size), off)
        sectors.append((w, u, 1j ** np.arange(n.size)))
    return sectors


def _apply_squeeze(amps, r, dim):
    # exp(-i r G) applied sector by sector; exp(r (a^2 - a^dag^2)/2) = exp(-i r G)
    out = np.empty(dim, dtype=complex)
    for parity, (w, u, ph) in enumerate(_squeeze_generator_eig(dim)):
        c = np.conj(ph) * amps[parity::2]
        out[parity::2] = ph * (u @ (np.exp(-1j * r * w) * (u.T @ c)))
    return out


# -- states ------------------------------------------------------------------


def tail_mass(amplitudes, width: int = TAIL_WIDTH) -> float:
    amps = np.asarray(amplitudes)
    return float(np.sum(np.abs(amps[max(amps.size - width, 0):]) ** 2))


def _require_tail(tail, dim, what):
    if not tail < TAIL_TOL:
        raise TruncationInadequate(
            f"{what}: tail mass {tail:.3e} in the last {TAIL_WIDTH} of {dim} Fock states "
            f"exceeds {TAIL_TOL:g}; increase the truncation",
            tail_mass=tail,
        )


def vacuum(dim: int = DEFAULT_DIM) -> PointerState:
    return fock_state(0, dim)


def fock_state(n: int, dim: int = DEFAULT_DIM) -> PointerState:
    dim = _check_dim(dim)
    amps = np.zeros(dim, dtype=complex)
    if not 0 <= n < dim:
        raise InvalidDimension(f"Fock index {n} outside truncation {dim}")
    amps[n] = 1.0
    _require_tail(tail_mass(amps), dim, f"fock_state({n})")
    return PointerState(amps)


def _coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    amps = np.empty(dim, dtype=complex)
    amps[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / np.sqrt(n)
    return amps


def coherent_state(alpha: complex, dim: int = DEFAULT_DIM) -> PointerState:
    """``|alpha>`` truncated to ``dim`` levels and renormalized."""
    dim = _check_dim(dim)
    alpha = complex(alpha)
    amps = _coherent_amplitudes(alpha, dim)
    head = np.sum(np.abs(amps[: max(dim - TAIL_WIDTH, 0)]) ** 2)
    # mass at n >= dim - TAIL_WIDTH of the untruncated state, including what the cut drops
    _require_tail(max(1.0 - head, 0.0), dim, f"coherent_state(alpha={alpha:.6g})")
    return PointerState(amps / np.linalg.norm(amps))


def squeezed_coherent_state(xi: complex, alpha: complex = 0.0, dim: int = DEFAULT_DIM) -> PointerState:
    """``exp((xi^* a^2 - xi a^dag^2)/2) |alpha>`` in a ``dim``-level truncation.

    The squeeze is exponentiated exactly through the (tridiagonal, parity-split)
    eigenbasis of the Hermitian generator ``i(a^2 - a^dag^2)/2``; the phase of ``xi`` enters
    through the rotation identity ``S(r e^{i theta}) = R^dag S(r) R`` with
    ``R = exp(-i theta a^dag a / 2)``, which is exact for truncated matrices.
    """
    dim = _check_dim(dim)
    xi = complex(xi)
    r, theta = abs(xi), np.angle(xi)
    base = coherent_state(complex(alpha) * np.exp(-0.5j * theta), dim)
    if r == 0.0:
        return coherent_state(alpha, dim)
    amps = _apply_squeeze(base.amplitudes, r, dim)
    amps = np.exp(0.5j * theta * np.arange(dim)) * amps
    norm2 = float(np.vdot(amps, amps).real)
    if abs(norm2 - 1.0) > 1e-8:
        raise TruncationInadequate(f"squeeze renormalization drift {abs(norm2 - 1.0):.3e} exceeds 1e-8")
    _require_tail(tail_mass(amps) / norm2, dim, f"squeezed_coherent_state(xi={xi:.6g}, alpha={complex(alpha):.6g})")
    return PointerState(amps / np.sqrt(norm2))


def required_dim(make, start: int = 64, limit: int = 8192) -> int:
    """Smallest truncation (growing by 1.5x) for which ``make(dim)`` succeeds."""
    dim = start
    while dim <= limit:
        try:
            make(dim)
            return dim
        except TruncationInadequate:
            dim = int(dim * 1.5)
    raise TruncationInadequate(f"no adequate truncation up to {limit}")


# -- expectation values and evolution ----------------------------------------


def expectation(state: PointerState, op: PointerOperator) -> complex:
    """``<D|op|D> / <D|D>``; real up to rounding when ``op`` is Hermitian."""
    _check_dims(state.dim, op.dim)
    c = state.amplitudes
    val = np.vdot(c, op.matrix @ c) / np.vdot(c, c).real
    return complex(val)


def expectation_rho(rho, op: PointerOperator) -> complex:
    rho = np.asarray(rho)
    if rho.shape != op.matrix.shape:
        raise DimensionMismatch(f"density matrix shape {rho.shape} vs operator {op.matrix.shape}")
    return complex(np.sum(rho.T * op.matrix) / np.trace(rho).real)


def variance(state: PointerState, op: PointerOperator) -> float:
    c = state.amplitudes / np.sqrt(state.norm2)
    oc = op.matrix @ c
    mean = np.vdot(c, oc).real
    return float(np.vdot(oc, oc).real - mean**2)


def evolve_hermitian(state: PointerState, generator: PointerOperator, t: float) -> PointerState:
    """``exp(-i t G)|D>`` for Hermitian ``G`` via its cached eigenbasis."""
    if not generator.hermitian:
        raise NonHermitianGenerator("evolve_hermitian needs a generator flagged hermitian")
    _check_dims(state.dim, generator.dim)
    if t == 0:
        return state
    w, v = generator.eig
    return PointerState(v @ (np.exp(-1j * t * w) * (v.conj().T @ state.amplitudes)))


# -- quadrature wavefunctions ------------------------------------------------

_RESCALE = 1e150
_LOG_RESCALE = np.log(_RESCALE)


def hermite_functions(nmax: int, x) -> np.ndarray:
    """Normalized Hermite functions ``psi_0 .. psi_{nmax-1}`` at points ``x``.

    Three-term recurrence on rescaled values; the Gaussian prefactor is kept
    in log form so large ``|x|`` does not underflow the whole column.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax, x.size))
    log_scale = -0.5 * x**2 - 0.25 * np.log(np.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    out[0] = np.exp(log_scale)
    for n in range(1, nmax):
        nxt = np.sqrt(2.0 / n) * x * cur - np.sqrt((n - 1) / n) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            cur[big] /= _RESCALE
            prev[big] /= _RESCALE
            log_scale[big] += _LOG_RESCALE
        out[n] = cur * np.exp(log_scale)
    return out


@lru_cache(maxsize=4)
def _momentum_basis(dim: int, grid: QuadratureGrid) -> np.ndarray:
    phases = (-1j) ** np.arange(dim)
    basis = phases[:, None] * hermite_functions(dim, grid.points)
    basis.setflags(write=False)
    return basis


def density_p(amplitudes, grid: QuadratureGrid) -> np.ndarray:
    """Momentum density of a pure state (1-D amplitudes) or of the mixture
    ``sum_s |psi_s><psi_s|`` given as rows of a 2-D array (unnormalized).
    """
    amps = np.atleast_2d(np.asarray(amplitudes))
    basis = _momentum_basis(amps.shape[1], grid)
    psi = amps @ basis
    dens = np.sum(psi.real**2 + psi.imag**2, axis=0)
    dens /= np.sum(np.abs(amps) ** 2)
    total = grid.integrate(dens)
    if 1.0 - total > 1e-6:
        raise GridTooNarrow(
            f"density integrates to {total:.9f} on [{grid.lo:.3g}, {grid.hi:.3g}]; widen the grid"
        )
    return dens


def wavefunction_p(state: PointerState, grid: QuadratureGrid | None = None) -> np.ndarray:
    """Probability density ``|<p|D>|^2`` sampled on ``grid``."""
    grid = grid or default_grid(state.dim)
    return density_p(state.amplitudes, grid)
