"""Monte Carlo realization of postselected and standard weak measurements.

Random numbers come in fixed blocks of ``CHUNK_TRIALS`` trials.  Block ``c``
draws from a Philox stream keyed by ``(seed, c)``, so a run is a pure
function of ``(RunConfig, seed)`` no matter how many worker threads process
the blocks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from . import fock
from .errors import GridTooNarrow, MaximumOnBoundary, ZeroProbability, ZeroSlope
from .fock import PointerState, QuadratureGrid
from .metrology import SnrConfig, classical_fisher_p, pointer_moments
from .protocol import SystemState, evolve_joint, postselected_pointer, shift_slope, weak_value

CHUNK_TRIALS = 1 << 16
MLE_GRID_POINTS = 64


@dataclass(frozen=True, eq=False)
class RunConfig:
    cfg: SnrConfig
    post: SystemState | None  # None selects standard (unpostselected) weak measurement
    trials: int
    seed: int
    grid: QuadratureGrid | None = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.grid is None:
            object.__setattr__(self, "grid", fock.default_grid(self.cfg.pointer.dim))

    @property
    def postselected(self) -> bool:
        return self.post is not None


@dataclass(frozen=True, eq=False)
class RunRecord:
    accepted: int
    outcomes: np.ndarray
    g_true: float
    trials: int
    baseline: float  # <M> on the initial pointer


@dataclass(frozen=True)
class EstimatorReport:
    g_hat: float
    std_err: float
    empirical_snr: float
    n_effective: int


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


class InverseCdf:
    """Inverse-transform sampler for a density tabulated on a quadrature grid."""

    def __init__(self, density, grid: QuadratureGrid):
        density = np.asarray(density, dtype=float)
        cells = 0.5 * (density[1:] + density[:-1]) * grid.spacing
        cdf = np.concatenate([[0.0], np.cumsum(cells)])
        if abs(cdf[-1] - 1.0) > 1e-6:
            raise GridTooNarrow(f"density integrates to {cdf[-1]:.9f}, not 1")
        self.cdf = cdf / cdf[-1]
        self.points = grid.points

    def __call__(self, u):
        return np.interp(u, self.cdf, self.points)


def sample_outcomes(state: PointerState, grid: QuadratureGrid, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. momentum readouts of ``state``."""
    sampler = InverseCdf(fock.wavefunction_p(state, grid), grid)
    return sampler(block_rng(seed, 0).random(n))


def outcome_distribution(rc: RunConfig, g: float | None = None):
    """``(P_s, momentum density)`` of the accepted pointer at coupling ``g``."""
    cfg = rc.cfg
    g = cfg.g if g is None else g
    if rc.postselected:
        out = postselected_pointer(cfg.pre, rc.post, cfg.pointer, g, cfg.A, cfg.omega)
        return out.prob, fock.wavefunction_p(out.pointer, rc.grid)
    joint = evolve_joint(cfg.pre, cfg.pointer, g, cfg.A, cfg.omega)
    return 1.0, fock.density_p(joint.amplitudes, rc.grid)


def density_family(rc: RunConfig, cache_size: int = 512):
    """``g -> p-density`` of the accepted pointer, from exact evolution."""

    @lru_cache(maxsize=cache_size)
    def family(g):
        dens = outcome_distribution(rc, g)[1]
        dens.setflags(write=False)
        return dens

    return lambda g: family(float(g))


def expected_slope(rc: RunConfig) -> float:
    """First-order calibration ``d<Delta M>/dg`` for the run's strategy."""
    cfg = rc.cfg
    if rc.postselected:
        A_w = weak_value(cfg.pre, rc.post, cfg.A)
        return float(shift_slope(A_w, cfg.pointer, cfg.omega, cfg.readout))
    m = pointer_moments(cfg.pointer, cfg.omega, cfg.readout)
    return float(cfg.A.mean(cfg.pre) * m.d)


def simulate_run(rc: RunConfig, workers: int = 1) -> RunRecord:
    """Accept each trial with the exact postselection probability and read out ``p``."""
    ps, density = outcome_distribution(rc)
    if ps < 1e-300:
        raise ZeroProbability("postselection probability is zero")
    sampler = InverseCdf(density, rc.grid)
    n_blocks = -(-rc.trials // CHUNK_TRIALS)

    def block(c):
        rng = block_rng(rc.seed, c)
        n = min(CHUNK_TRIALS, rc.trials - c * CHUNK_TRIALS)
        keep = rng.random(n) < ps
        u = rng.random(n)
        return sampler(u[keep])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, range(n_blocks)))
    else:
        parts = [block(c) for c in range(n_blocks)]
    outcomes = np.concatenate(parts)
    outcomes.setflags(write=False)
    baseline = fock.expectation(rc.cfg.pointer, rc.cfg.readout).real
    return RunRecord(outcomes.size, outcomes, rc.cfg.g, rc.trials, float(baseline))


def amr_estimate(record: RunRecord, slope: float) -> EstimatorReport:
    """Averaging-of-measurement-results estimator ``mean(m - <M>_0) / slope``."""
    if slope == 0:
        raise ZeroSlope("calibration slope is zero; the average carries no signal")
    x = np.asarray(record.outcomes) - record.baseline
    n = x.size
    if n == 0:
        raise ZeroProbability("no accepted trials")
    g_hat = float(np.mean(x) / slope)
    std_err = float(np.std(x, ddof=1) / (abs(slope) * np.sqrt(n))) if n > 1 else float("nan")
    return EstimatorReport(g_hat, std_err, _snr(record.g_true, std_err), n)


def _snr(g_true, std_err):
    if std_err == 0:
        return float("inf") if g_true else float("nan")
    return float(g_true / std_err)


class _LogLikelihood:
    def __init__(self, outcomes, grid: QuadratureGrid, family):
        # sorted outcomes keep the gathers cache friendly; the sum is order independent
        x = np.sort(np.asarray(outcomes, dtype=float))
        pos = (x - grid.lo) / grid.spacing
        idx = np.clip(np.floor(pos).astype(np.intp), 0, grid.n - 2)
        self.idx = idx
        self.frac = pos - idx
        self.family = family

    def __call__(self, g):
        dens = self.family(g)
        vals = dens.take(self.idx)
        vals += self.frac * np.diff(dens).take(self.idx)
        return float(np.sum(np.log(np.maximum(vals, 1e-300))))


def mle_estimate(record: RunRecord, family, g_window, grid: QuadratureGrid) -> EstimatorReport:
    """Maximum-likelihood estimate of ``g`` over ``g_window``.

    Coarse search on ``MLE_GRID_POINTS`` window points, bounded golden-section
    (Brent) refinement between the neighbours of the best point, and a
    standard error from the observed information.
    """
    lo, hi = g_window
    loglik = _LogLikelihood(record.outcomes, grid, family)
    gs = np.linspace(lo, hi, MLE_GRID_POINTS)
    ll = np.array([loglik(g) for g in gs])
    k = int(np.argmax(ll))
    if k in (0, MLE_GRID_POINTS - 1):
        raise MaximumOnBoundary(f"likelihood maximum at window edge g = {gs[k]:.6g}; widen the window")
    step = gs[1] - gs[0]
    res = minimize_scalar(
        lambda g: -loglik(g), bounds=(gs[k - 1], gs[k + 1]), method="bounded", options={"xatol": 1e-3 * step}
    )
    g_hat = float(res.x)
    h = 0.5 * step
    info = -(loglik(g_hat + h) - 2 * loglik(g_hat) + loglik(g_hat - h)) / h**2
    std_err = float(1.0 / np.sqrt(info)) if info > 0 else float("inf")
    return EstimatorReport(g_hat, std_err, _snr(record.g_true, std_err), int(np.size(record.outcomes)))


def fisher_per_outcome(rc: RunConfig, family=None) -> float:
    """Classical Fisher information of one accepted ``p`` readout at ``g_true``."""
    family = family or density_family(rc)
    return classical_fisher_p(family, rc.cfg.g, rc.grid)


def mle_window(rc: RunConfig, n: int, cfi: float, width: float = 8.0):
    half = width / np.sqrt(max(n, 1) * cfi)
    return rc.cfg.g - half, rc.cfg.g + half
