"""The weak-measurement protocol: coupling, postselection, weak values.

The joint evolution ``exp(-i g A (x) Omega)`` is applied exactly by
splitting the preselected system state over the eigenspaces of ``A``; each
branch evolves its own copy of the pointer under ``exp(-i g lambda_k Omega)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fock
from .errors import (
    DimensionMismatch,
    InvalidDimension,
    NonHermitianGenerator,
    OrthogonalSelection,
    UnachievableWeakValue,
    WeakCouplingViolation,
    ZeroProbability,
)
from .fock import PointerOperator, PointerState

ORTHOGONAL_TOL = 1e-12
MAX_SYSTEM_DIM = 16


@dataclass(frozen=True, eq=False)
class SystemState:
    """Normalized pure state of the measured system.

    Amplitudes are normalized on construction.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        if not 2 <= amps.size <= MAX_SYSTEM_DIM:
            raise InvalidDimension(f"system dimension must be in [2, {MAX_SYSTEM_DIM}], got {amps.size}")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("system state has zero norm")
        amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def __repr__(self):
        return f"SystemState({np.array2string(self.amplitudes, precision=6)})"


@dataclass(frozen=True, eq=False)
class SystemObservable:
    """Hermitian system observable with its eigen-decomposition cached."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or not 2 <= mat.shape[0] <= MAX_SYSTEM_DIM:
            raise InvalidDimension(f"observable must be square with dimension in [2, {MAX_SYSTEM_DIM}]")
        scale = max(1.0, np.max(np.abs(mat)))
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12 * scale:
            raise NonHermitianGenerator("system observable is not Hermitian")
        mat = 0.5 * (mat + mat.conj().T)
        w, v = np.linalg.eigh(mat)
        for arr in (mat, w, v):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", v)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def lambda_max(self) -> float:
        """Largest eigenvalue magnitude, the best ``|<A>|`` any preselection reaches."""
        return float(np.max(np.abs(self.eigenvalues)))

    def mean(self, state: SystemState) -> float:
        _check_system(state, self)
        return float(np.vdot(state.amplitudes, self.matrix @ state.amplitudes).real)

    def second_moment(self, state: SystemState) -> float:
        _check_system(state, self)
        v = self.matrix @ state.amplitudes
        return float(np.vdot(v, v).real)

    def variance(self, state: SystemState) -> float:
        return max(self.second_moment(state) - self.mean(state) ** 2, 0.0)

    def eigenspaces(self, tol: float = 1e-10):
        """``[(eigenvalue, projector), ...]`` with degenerate eigenvalues merged."""
        w, v = self.eigenvalues, self.eigenvectors
        groups, start = [], 0
        scale = max(1.0, float(np.max(np.abs(w))))
        for k in range(1, len(w) + 1):
            if k == len(w) or w[k] - w[start] > tol * scale:
                block = v[:, start:k]
                groups.append((float(np.mean(w[start:k])), block @ block.conj().T))
                start = k
        return groups


def sigma_z() -> SystemObservable:
    return SystemObservable(np.diag([1.0, -1.0]))


def sigma_x() -> SystemObservable:
    return SystemObservable(np.array([[0.0, 1.0], [1.0, 0.0]]))


def sigma_y() -> SystemObservable:
    return SystemObservable(np.array([[0.0, -1j], [1j, 0.0]]))


def basis_state(k: int, dim: int = 2) -> SystemState:
    amps = np.zeros(dim)
    amps[k] = 1.0
    return SystemState(amps)


def plus_state() -> SystemState:
    return SystemState([1.0, 1.0])


def _check_system(state, obs):
    if state.dim != obs.dim:
        raise DimensionMismatch(f"system state dimension {state.dim} vs observable {obs.dim}")


@dataclass(frozen=True, eq=False)
class JointState:
    """System (x) pointer amplitudes, stored as a ``(d, dim)`` array (system index major)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 2:
            raise InvalidDimension("joint amplitudes must be a (system, pointer) array")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def system_dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def pointer_dim(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def flat(self) -> np.ndarray:
        return self.amplitudes.ravel()


@dataclass(frozen=True)
class PostselectionOutcome:
    pointer: PointerState
    prob: float
    raw_norm2: float


def weak_value(pre: SystemState, post: SystemState, A: SystemObservable) -> complex:
    """``<post|A|pre> / <post|pre>``."""
    _check_system(pre, A)
    _check_system(post, A)
    overlap = np.vdot(post.amplitudes, pre.amplitudes)
    if abs(overlap) <= ORTHOGONAL_TOL:
        raise OrthogonalSelection(f"|<post|pre>| = {abs(overlap):.3e} <= {ORTHOGONAL_TOL:g}")
    return complex(np.vdot(post.amplitudes, A.matrix @ pre.amplitudes) / overlap)


def evolve_joint(
    pre: SystemState,
    pointer: PointerState,
    g: float,
    A: SystemObservable,
    omega: PointerOperator,
) -> JointState:
    """``exp(-i g A (x) Omega) |pre>|pointer>``, exact to all orders in ``g``."""
    _check_system(pre, A)
    if pointer.dim != omega.dim:
        raise DimensionMismatch(f"pointer dimension {pointer.dim} vs Omega {omega.dim}")
    if not omega.hermitian:
        raise NonHermitianGenerator("coupling operator Omega must be Hermitian")
    joint = np.zeros((A.dim, pointer.dim), dtype=complex)
    for lam, proj in A.eigenspaces():
        branch = proj @ pre.amplitudes
        if not np.any(branch):
            continue
        moved = fock.evolve_hermitian(pointer, omega, g * lam)
        joint += np.outer(branch, moved.amplitudes)
    return JointState(joint)


def postselect(joint: JointState, post: SystemState) -> PostselectionOutcome:
    """Project the system onto ``post``; return the normalized pointer and ``P_s``."""
    if post.dim != joint.system_dim:
        raise DimensionMismatch(f"postselection dimension {post.dim} vs joint system {joint.system_dim}")
    raw = post.amplitudes.conj() @ joint.amplitudes
    prob = float(np.vdot(raw, raw).real)
    if prob < 1e-300:
        raise ZeroProbability(f"postselection probability {prob:.3e} is zero")
    return PostselectionOutcome(PointerState(raw / np.sqrt(prob)), prob, prob)


def postselected_pointer(pre, post, pointer, g, A, omega) -> PostselectionOutcome:
    return postselect(evolve_joint(pre, pointer, g, A, omega), post)


def max_ps_given_weak_value(pre: SystemState, A: SystemObservable, A_w) -> np.ndarray | float:
    """Largest first-order success probability compatible with weak value ``A_w``.

    ``Var(A) / (<A^2> - 2<A> Re A_w + |A_w|^2)``. Vectorized over ``A_w``.
    For an eigenstate preselection only ``A_w = <A>`` is reachable, with
    probability one.
    """
    mean, second = A.mean(pre), A.second_moment(pre)
    var = max(second - mean**2, 0.0)
    aw = np.asarray(A_w, dtype=complex)
    denom = var + np.abs(aw - mean) ** 2
    scale = max(1.0, second)
    if var <= 1e-14 * scale:
        out = np.where(np.abs(aw - mean) <= 1e-10 * np.sqrt(scale), 1.0, 0.0)
    else:
        out = var / denom
    return float(out) if np.ndim(out) == 0 else out


def optimal_postselection(pre: SystemState, A: SystemObservable, A_w: complex) -> SystemState:
    """Postselection reaching weak value ``A_w`` with the largest ``|<post|pre>|^2``.

    The weak-value condition says ``post`` is orthogonal to
    ``chi = (A - A_w)|pre>``; among those states the overlap with ``pre`` is
    largest for the normalized projection of ``pre`` off ``chi``.
    """
    _check_system(pre, A)
    A_w = complex(A_w)
    psi = pre.amplitudes
    chi = A.matrix @ psi - A_w * psi
    chi_norm2 = float(np.vdot(chi, chi).real)
    if chi_norm2 <= 1e-28:
        post_amps = psi.copy()
    else:
        post_amps = psi - chi * (np.vdot(chi, psi) / chi_norm2)
    if np.linalg.norm(post_amps) < 1e-12:
        raise UnachievableWeakValue(f"no postselection reaches A_w = {A_w:.6g} from this preselection")
    post = SystemState(post_amps)

    try:
        got = weak_value(pre, post, A)
    except OrthogonalSelection as exc:
        raise UnachievableWeakValue(str(exc)) from exc
    ps = abs(np.vdot(post.amplitudes, psi)) ** 2
    expected = max_ps_given_weak_value(pre, A, A_w)
    if abs(got - A_w) > 1e-8 * max(1.0, abs(A_w)) or abs(ps - expected) > 1e-6 * max(expected, 1e-300):
        raise UnachievableWeakValue(
            f"verification failed for A_w = {A_w:.6g}: got weak value {got:.6g}, P_s {ps:.6g} vs {expected:.6g}"
        )
    return post


def reduced_pointer_std(joint: JointState) -> np.ndarray:
    """Pointer density matrix after tracing out the (unmeasured) system."""
    j = joint.amplitudes
    rho = j.T @ j.conj()
    return rho / np.trace(rho).real


def _check_coupling(g, A_w):
    size = abs(g) * abs(A_w)
    if size >= 1.0:
        raise WeakCouplingViolation(f"g|A_w| = {size:.3g} >= 1; first-order shift is meaningless")
    if size >= 0.1:
        warnings.warn(f"g|A_w| = {size:.3g}: first-order shift is only a rough estimate", stacklevel=3)


def shift_slope(A_w, pointer: PointerState, omega: PointerOperator, M: PointerOperator):
    """Amplification factor ``d<Delta M>_f / dg`` at first order (vectorized over ``A_w``)."""
    cov, comm = _omega_m_moments(pointer, omega, M)
    aw = np.asarray(A_w, dtype=complex)
    out = aw.imag * cov + (1j * comm * aw.real).real
    return float(out) if np.ndim(out) == 0 else out


def _omega_m_moments(pointer, omega, M):
    c = pointer.amplitudes / np.sqrt(pointer.norm2)
    oc, mc = omega.matrix @ c, M.matrix @ c
    mean_o, mean_m = np.vdot(c, oc), np.vdot(c, mc)
    om = np.vdot(oc, mc)  # <Omega M> for Hermitian Omega
    mo = np.vdot(mc, oc)
    cov = (om + mo - 2 * mean_o * mean_m).real
    comm = om - mo
    return float(cov), complex(comm)


def first_order_shift_post(A_w, pointer: PointerState, omega: PointerOperator, M: PointerOperator, g: float):
    """``g Im(A_w) (<{Omega,M}> - 2<Omega><M>) + i g Re(A_w) <[Omega,M]>``."""
    _check_coupling(g, np.max(np.abs(A_w)))
    return g * shift_slope(A_w, pointer, omega, M)


def exact_shift(pointer_final, M: PointerOperator, pointer_initial: PointerState) -> float:
    """``<M>_final - <M>_initial``; ``pointer_final`` may be a state or a density matrix."""
    if isinstance(pointer_final, PointerState):
        final = fock.expectation(pointer_final, M)
    else:
        final = fock.expectation_rho(pointer_final, M)
    return float((final - fock.expectation(pointer_initial, M)).real)


def first_order_shift_std(pre, A, pointer, omega, M, g) -> float:
    """``i g <A> <[Omega, M]>`` for the unpostselected pointer."""
    _, comm = _omega_m_moments(pointer, omega, M)
    return float((1j * g * A.mean(pre) * comm).real)


def completed_basis(post: SystemState) -> list[SystemState]:
    """Orthonormal basis of the system space whose first element is ``post``."""
    d = post.dim
    mat = np.column_stack([post.amplitudes, np.eye(d, dtype=complex)])
    q, _ = np.linalg.qr(mat)
    q = q[:, :d]
    # QR may flip the phase of the first column
    q[:, 0] = post.amplitudes
    return [SystemState(q[:, k]) for k in range(d)]
