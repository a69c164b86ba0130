"""Signal-to-noise ratios, their optimizers, and Fisher information.

Pointer-side quantities enter through three moments of the initial pointer:
the symmetrized covariance ``C = <{Omega,M}> - 2<Omega><M>`` (real), the
commutator expectation ``<[Omega,M]>`` (imaginary) and ``Var(M)``.  Writing
``D = i<[Omega,M]>`` the first-order shift slope is ``Im(A_w) C + Re(A_w) D``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fock
from .errors import CommutatorVanishes, DegeneratePreselection, DerivativeUnconverged, ZeroProbability
from .fock import PointerOperator, PointerState, QuadratureGrid
from .protocol import (
    SystemObservable,
    SystemState,
    completed_basis,
    first_order_shift_post,
    max_ps_given_weak_value,
    optimal_postselection,
    postselected_pointer,
)

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SnrConfig:
    g: float
    N: int
    pre: SystemState
    A: SystemObservable
    pointer: PointerState
    omega: PointerOperator
    readout: PointerOperator

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError(f"coupling g must be >= 0, got {self.g}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"ensemble size N must be a positive integer, got {self.N}")


@dataclass(frozen=True)
class PointerMoments:
    mean_omega: float
    mean_m: float
    var_omega: float
    var_m: float
    covariance: float
    commutator: complex

    @property
    def d(self) -> float:
        """``i <[Omega, M]>`` (real)."""
        return float((1j * self.commutator).real)


@dataclass(frozen=True)
class OptSnrReport:
    max_snr: float
    optimal_Aw: complex | None
    phi: float
    eta: float
    upper_bound: float


@dataclass(frozen=True)
class QfiReport:
    f_post: float
    f_post_max: float
    f_std: float
    ratio: float
    f_all_probe: float


def pointer_moments(pointer: PointerState, omega: PointerOperator, M: PointerOperator) -> PointerMoments:
    c = pointer.amplitudes / np.sqrt(pointer.norm2)
    oc, mc = omega.matrix @ c, M.matrix @ c
    mean_o = np.vdot(c, oc).real
    mean_m = np.vdot(c, mc).real
    om, mo = np.vdot(oc, mc), np.vdot(mc, oc)
    return PointerMoments(
        mean_omega=float(mean_o),
        mean_m=float(mean_m),
        var_omega=float(np.vdot(oc, oc).real - mean_o**2),
        var_m=float(np.vdot(mc, mc).real - mean_m**2),
        covariance=float((om + mo).real - 2 * mean_o * mean_m),
        commutator=complex(om - mo),
    )


def _moments(cfg: SnrConfig) -> PointerMoments:
    return pointer_moments(cfg.pointer, cfg.omega, cfg.readout)


def _system_moments(pre, A):
    mean, second = A.mean(pre), A.second_moment(pre)
    return mean, second, max(second - mean**2, 0.0)


# -- SNR ---------------------------------------------------------------------


def snr_post(cfg: SnrConfig, A_w, post: SystemState | None = None):
    """Signed SNR ``sqrt(N P_s) <Delta M>_f / sqrt(Var(M))`` of the averaging estimator.

    ``P_s`` is the best first-order success probability for ``A_w`` unless a
    concrete ``post`` is given, in which case the exact postselection
    probability at coupling ``cfg.g`` is used.  Vectorized over ``A_w`` in the
    first case.
    """
    if post is None:
        ps = max_ps_given_weak_value(cfg.pre, cfg.A, A_w)
    else:
        ps = postselected_pointer(cfg.pre, post, cfg.pointer, cfg.g, cfg.A, cfg.omega).prob
    shift = first_order_shift_post(A_w, cfg.pointer, cfg.omega, cfg.readout, cfg.g)
    return np.sqrt(cfg.N * ps) * shift / np.sqrt(_moments(cfg).var_m)


def max_snr_post(cfg: SnrConfig) -> OptSnrReport:
    """Maximum of ``|snr_post|`` over all weak values, with the maximizer.

    Optimizes ``|A_w|`` at fixed phase ``theta`` (critical point
    ``<A^2>/(<A> cos theta)``) and then ``theta``.  Of the two phases that
    extremize the signed SNR, the one with ``<A> cos theta > 0`` is returned;
    the SNR there may be negative, its magnitude is the maximum.
    """
    mean, second, var = _system_moments(cfg.pre, cfg.A)
    if var <= DEGENERATE_TOL * max(1.0, second):
        raise DegeneratePreselection("Var(A) = 0: preselection is an eigenstate, postselection cannot help")
    if abs(mean) <= DEGENERATE_TOL:
        raise DegeneratePreselection("<A> = 0: the |A_w| critical point is at infinity")
    m = _moments(cfg)
    c, d = m.covariance, m.d
    phi = float(np.arctan2(d, c))
    eta = float(np.sqrt(var + mean**2 * np.sin(phi) ** 2))
    max_snr = cfg.g * eta * np.sqrt(cfg.N * (c**2 + d**2) / m.var_m)

    # cot(theta + phi) = <A>^2 sin(phi) cos(phi) / (Var(A) + <A>^2 sin^2(phi)), sin(theta + phi) > 0
    shifted = np.arctan2(var + mean**2 * np.sin(phi) ** 2, mean**2 * np.sin(phi) * np.cos(phi))
    theta = shifted - phi
    if mean * np.cos(theta) < 0:
        theta += np.pi
    cos_t = np.cos(theta)
    optimal = None
    if abs(cos_t) > 1e-12:
        optimal = complex(second / (mean * cos_t) * np.exp(1j * theta))
    upper = 2 * cfg.g * eta * np.sqrt(cfg.N * m.var_omega)
    return OptSnrReport(float(max_snr), optimal, phi, eta, float(upper))


def max_snr_std(cfg: SnrConfig) -> float:
    """``g sqrt(N) |lambda_max <[Omega, M]>| / sqrt(Var(M))``."""
    m = _moments(cfg)
    return float(cfg.g * np.sqrt(cfg.N) * abs(cfg.A.lambda_max * m.commutator) / np.sqrt(m.var_m))


def csc2_phi(pointer: PointerState, omega: PointerOperator, M: PointerOperator) -> float:
    """``1 + C^2 / |<[Omega, M]>|^2``."""
    m = pointer_moments(pointer, omega, M)
    if abs(m.commutator) <= 1e-12:
        raise CommutatorVanishes("<[Omega, M]> = 0; csc^2(phi) is undefined")
    return float(1.0 + m.covariance**2 / abs(m.commutator) ** 2)


def ratio_s_optimal(cfg: SnrConfig) -> float:
    """Ratio of optimal postselected to optimal standard SNR (non-negative).

    With ``<A> = 0`` the value is a supremum approached as ``|A_w| -> inf``.
    """
    mean, second, var = _system_moments(cfg.pre, cfg.A)
    if var <= DEGENERATE_TOL * max(1.0, second):
        raise DegeneratePreselection("ratio_s_optimal needs Var(A) > 0")
    csc2 = csc2_phi(cfg.pointer, cfg.omega, cfg.readout)
    return float(np.sqrt(var * csc2 + mean**2) / cfg.A.lambda_max)


def ratio_s_fixed_Aw(cfg: SnrConfig, A_w) -> float:
    """Signed SNR ratio at a fixed weak value (one pixel of the squeezing map)."""
    return snr_post(cfg, A_w) / max_snr_std(cfg)


# -- quantum Fisher information ------------------------------------------------


def qfi_post_first_order(cfg: SnrConfig, A_w, ps):
    """``4 P_s |A_w|^2 Var(Omega)``."""
    var_o = fock.variance(cfg.pointer, cfg.omega)
    return 4.0 * ps * np.abs(A_w) ** 2 * var_o


def max_qfi_post(pre: SystemState, A: SystemObservable, omega: PointerOperator, pointer: PointerState) -> float:
    return float(4.0 * A.second_moment(pre) * fock.variance(pointer, omega))


def qfi_std(pre: SystemState, A: SystemObservable, omega: PointerOperator, pointer: PointerState) -> float:
    return float(4.0 * A.mean(pre) ** 2 * fock.variance(pointer, omega))


def qfi_optimal_weak_value(pre: SystemState, A: SystemObservable) -> complex:
    """Weak value maximizing the postselected QFI: ``<A^2>/<A>`` (real)."""
    mean, second, _ = _system_moments(pre, A)
    if abs(mean) <= DEGENERATE_TOL:
        raise DegeneratePreselection("<A> = 0: the QFI-optimal |A_w| is at infinity")
    return complex(second / mean)


def _default_step(g0):
    return max(1e-6, abs(g0) / 100.0)


def _richardson(fisher_from_step, g0, dg, what):
    # central differences err by O(h^2); combine h and h/2 to cancel that term
    f1 = fisher_from_step(dg)
    f2 = fisher_from_step(dg / 2)
    if abs(f1 - f2) > 1e-4 * max(abs(f2), 1e-6):
        raise DerivativeUnconverged(f"{what}: step {dg:g} gives {f1:.9g}, half step {f2:.9g}")
    return max((4.0 * f2 - f1) / 3.0, 0.0)


def qfi_numeric(family: Callable[[float], PointerState], g0: float, dg: float | None = None) -> float:
    """Pure-state QFI ``4(<d psi|d psi> - |<psi|d psi>|^2)`` by central differences.

    ``family(g)`` must return the normalized state at ``g`` with a phase that
    is smooth in ``g``.
    """
    dg = dg or _default_step(g0)
    psi = family(g0).amplitudes

    def fisher(h):
        dpsi = (family(g0 + h).amplitudes - family(g0 - h).amplitudes) / (2 * h)
        return 4.0 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2)

    return float(_richardson(fisher, g0, dg, "qfi_numeric"))


def classical_fisher_p(
    density_family: Callable[[float], np.ndarray],
    g0: float,
    grid: QuadratureGrid,
    dg: float | None = None,
) -> float:
    """Fisher information of a density family sampled on ``grid``."""
    dg = dg or _default_step(g0)
    rho = density_family(g0)
    mask = rho > 1e-14

    def fisher(h):
        drho = (density_family(g0 + h) - density_family(g0 - h)) / (2 * h)
        return grid.integrate(np.where(mask, drho**2 / np.where(mask, rho, 1.0), 0.0))

    return float(_richardson(fisher, g0, dg, "classical_fisher_p"))


def postselected_family(cfg: SnrConfig, post: SystemState):
    """``g -> normalized postselected pointer`` at fixed pre/post selection."""

    def family(g):
        return postselected_pointer(cfg.pre, post, cfg.pointer, g, cfg.A, cfg.omega).pointer

    return family


def qfi_post_numeric(cfg: SnrConfig, post: SystemState, g0: float | None = None) -> float:
    """Numerical postselected QFI per trial, ``P_s`` times the pointer QFI."""
    g0 = cfg.g if g0 is None else g0
    ps = postselected_pointer(cfg.pre, post, cfg.pointer, g0, cfg.A, cfg.omega).prob
    return ps * qfi_numeric(postselected_family(cfg, post), g0)


def fisher_all_probe(cfg: SnrConfig, post: SystemState, g0: float | None = None) -> float:
    """Fisher information keeping every system outcome, measured in a basis containing ``post``.

    ``sum_j P_j F_j + sum_j (dP_j)^2 / P_j`` with ``F_j`` the numerical QFI
    of the normalized pointer in branch ``j``.  For a qubit this is
    ``P_s F_s + (1-P_s) F_f + (dP_s)^2 / (P_s (1-P_s))``.
    """
    g0 = cfg.g if g0 is None else g0
    dg = _default_step(g0)
    total = 0.0
    for b in completed_basis(post):
        def prob(g, b=b):
            return postselected_pointer(cfg.pre, b, cfg.pointer, g, cfg.A, cfg.omega).prob

        try:
            p0 = prob(g0)
        except ZeroProbability:
            p0 = 0.0
        if p0 < 1e-12:
            continue
        f_branch = qfi_numeric(postselected_family(cfg, b), g0, dg)
        dp = (prob(g0 + dg) - prob(g0 - dg)) / (2 * dg)
        total += p0 * f_branch + dp**2 / p0
    return float(total)


def qfi_report(cfg: SnrConfig, A_w: complex, post: SystemState | None = None) -> QfiReport:
    ps = max_ps_given_weak_value(cfg.pre, cfg.A, A_w)
    f_post = float(qfi_post_first_order(cfg, A_w, ps))
    f_max = max_qfi_post(cfg.pre, cfg.A, cfg.omega, cfg.pointer)
    f_std = qfi_std(cfg.pre, cfg.A, cfg.omega, cfg.pointer)
    ratio = f_max / f_std if f_std > 1e-20 * max(f_max, 1.0) else float("inf")
    post = post or optimal_postselection(cfg.pre, cfg.A, A_w)
    return QfiReport(f_post, f_max, f_std, float(ratio), fisher_all_probe(cfg, post))
