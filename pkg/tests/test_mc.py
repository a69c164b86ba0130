from functools import lru_cache

import numpy as np
import pytest

from factories import plus_config
from wvalab import fock, mc
from wvalab.errors import GridTooNarrow, MaximumOnBoundary, ZeroProbability, ZeroSlope
from wvalab.metrology import snr_post
from wvalab.protocol import basis_state, optimal_postselection, plus_state

DIM = 128


@pytest.fixture(scope="module")
def reference():
    """Squeezed vacuum r=1, theta=pi/2, pre |+>, post optimal for A_w=20i."""
    cfg = plus_config(fock.squeezed_coherent_state(1j, 0, 256))
    return cfg, optimal_postselection(cfg.pre, cfg.A, 20j)


def gaussian_shift_family(grid):
    x = grid.points

    @lru_cache(maxsize=None)
    def fam(g):
        out = np.exp(-((x + g) ** 2)) / np.sqrt(np.pi)
        out.setflags(write=False)
        return out

    return lambda g: fam(float(g))


def test_sample_vacuum_moments():
    n = 1_000_000
    grid = fock.default_grid(DIM)
    x = mc.sample_outcomes(fock.vacuum(DIM), grid, n, seed=7)
    assert abs(x.mean()) <= 4 / np.sqrt(2 * n)
    assert abs(x.var(ddof=1) - 0.5) <= 4 * 0.5 * np.sqrt(2 / (n - 1))
    np.testing.assert_array_equal(x, mc.sample_outcomes(fock.vacuum(DIM), grid, n, seed=7))
    assert not np.array_equal(x[:100], mc.sample_outcomes(fock.vacuum(DIM), grid, 100, seed=8))


def test_sampler_rejects_narrow_grid():
    with pytest.raises(GridTooNarrow):
        mc.sample_outcomes(fock.coherent_state(2j, DIM), fock.QuadratureGrid(-1, 1, 201), 10, 0)


def test_run_config_validation(reference):
    cfg, post = reference
    with pytest.raises(ValueError):
        mc.RunConfig(cfg, post, 0, 1)
    with pytest.raises(ValueError):
        mc.RunConfig(cfg, post, 10, -1)


def test_certain_acceptance():
    cfg = plus_config(fock.vacuum(DIM), g=0.0)
    rec = mc.simulate_run(mc.RunConfig(cfg, plus_state(), 100_000, 3))
    assert rec.accepted == 100_000 == rec.outcomes.size


def test_standard_mode_keeps_every_trial():
    cfg = plus_config(fock.vacuum(DIM))
    rec = mc.simulate_run(mc.RunConfig(cfg, None, 70_000, 3))
    assert rec.accepted == rec.trials == rec.outcomes.size == 70_000


def test_zero_probability_run():
    cfg = plus_config(fock.vacuum(DIM), g=0.0)
    cfg = type(cfg)(0.0, 1, basis_state(0), cfg.A, cfg.pointer, cfg.omega, cfg.readout)
    with pytest.raises(ZeroProbability):
        mc.simulate_run(mc.RunConfig(cfg, basis_state(1), 10, 0))


def test_acceptance_rate_reference(reference):
    cfg, post = reference
    trials = 1_000_000
    rec = mc.simulate_run(mc.RunConfig(cfg, post, trials, 11))
    ps = 1 / 401
    assert abs(rec.accepted / trials - ps) <= 4 * np.sqrt(ps * (1 - ps) / trials)


def test_acceptance_rate_calibration(reference):
    cfg, post = reference
    trials = 200_000
    rc = mc.RunConfig(cfg, post, trials, 0)
    ps = mc.outcome_distribution(rc)[0]
    gate = 4 * np.sqrt(ps * (1 - ps) / trials)
    hits = 0
    for seed in range(100):
        rec = mc.simulate_run(mc.RunConfig(cfg, post, trials, seed, rc.grid))
        hits += abs(rec.accepted / trials - ps) <= gate
    assert hits >= 95


def test_run_is_deterministic_across_workers(reference):
    cfg, post = reference
    rc = mc.RunConfig(cfg, post, 300_001, 2**63 + 5)
    a = mc.simulate_run(rc, workers=1)
    b = mc.simulate_run(rc, workers=3)
    c = mc.simulate_run(rc, workers=1)
    assert a.accepted == b.accepted == c.accepted
    assert a.outcomes.tobytes() == b.outcomes.tobytes() == c.outcomes.tobytes()


def test_amr_trivial_cases():
    out = np.full(10, 0.25 + 1e-5 * -3.0)
    rec = mc.RunRecord(10, out, 1e-5, 10, 0.25)
    rep = mc.amr_estimate(rec, -3.0)
    assert rep.g_hat == pytest.approx(1e-5, rel=1e-9)
    x = np.random.default_rng(0).normal(size=1000)
    rec = mc.RunRecord(1000, x, 1.0, 1000, 0.0)
    assert mc.amr_estimate(rec, 2.0).g_hat == pytest.approx(mc.amr_estimate(rec, 1.0).g_hat / 2)
    assert mc.amr_estimate(rec, 1.0).std_err > 0
    with pytest.raises(ZeroSlope):
        mc.amr_estimate(rec, 0.0)


def test_amr_snr_matches_analytic(reference):
    cfg, post = reference
    rc = mc.RunConfig(cfg, post, 4_000_000, 2024)
    rec = mc.simulate_run(rc)
    rep = mc.amr_estimate(rec, mc.expected_slope(rc))
    analytic = abs(snr_post(type(cfg)(cfg.g, rc.trials, cfg.pre, cfg.A, cfg.pointer, cfg.omega, cfg.readout), 20j))
    assert 0.9 <= rep.empirical_snr / analytic <= 1.1


def test_amr_null_run(reference):
    cfg, post = reference
    cfg0 = type(cfg)(0.0, 1, cfg.pre, cfg.A, cfg.pointer, cfg.omega, cfg.readout)
    rc = mc.RunConfig(cfg0, post, 2_000_000, 99)
    rep = mc.amr_estimate(mc.simulate_run(rc), mc.expected_slope(rc))
    assert abs(rep.g_hat) <= 4 * rep.std_err


def test_mle_gaussian_shift_efficiency():
    # n * MSE -> 1/CFI = 1/2 for the translated vacuum; also no super-efficiency
    grid = fock.QuadratureGrid(-12, 12, 4096)
    fam = gaussian_shift_family(grid)
    n, g, cfi, repeats = 100_000, 0.01, 2.0, 400
    half = 8 / np.sqrt(n * cfi)
    errs = []
    for seed in range(repeats):
        x = -g + np.sqrt(0.5) * mc.block_rng(seed, 0).standard_normal(n)
        rep = mc.mle_estimate(mc.RunRecord(n, x, g, n, 0.0), fam, (g - half, g + half), grid)
        errs.append(rep.g_hat - g)
    errs = np.array(errs)
    assert n * np.mean(errs**2) == pytest.approx(1 / cfi, rel=0.15)
    assert n * np.var(errs) >= (1 / cfi) * (1 - 0.15)
    assert rep.std_err * np.sqrt(n * cfi) == pytest.approx(1.0, rel=0.05)


def test_mle_single_outcome_at_peak():
    grid = fock.QuadratureGrid(-12, 12, 4096)
    fam = gaussian_shift_family(grid)
    peak_g = 0.3
    rec = mc.RunRecord(1, np.array([-peak_g]), peak_g, 1, 0.0)
    rep = mc.mle_estimate(rec, fam, (-1.0, 1.5), grid)
    assert rep.g_hat == pytest.approx(peak_g, abs=1e-3 * (2.5 / 63))


def test_mle_boundary():
    grid = fock.QuadratureGrid(-12, 12, 4096)
    fam = gaussian_shift_family(grid)
    rec = mc.RunRecord(1, np.array([-0.3]), 0.3, 1, 0.0)
    with pytest.raises(MaximumOnBoundary):
        mc.mle_estimate(rec, fam, (-1.0, 0.0), grid)


def test_mle_consistency_exact_family(reference):
    cfg, post = reference
    rc = mc.RunConfig(cfg, post, 4_000_000, 5)
    rec = mc.simulate_run(rc)
    family = mc.density_family(rc)
    cfi = mc.fisher_per_outcome(rc, family)
    rep = mc.mle_estimate(rec, family, mc.mle_window(rc, rec.accepted, cfi), rc.grid)
    assert abs(rep.g_hat - cfg.g) <= 4 * rep.std_err
    slope = mc.expected_slope(rc)
    var_p = fock.variance(cfg.pointer, cfg.readout)
    assert cfi == pytest.approx(slope**2 / var_p, rel=1e-2)


def test_standard_mode_estimators():
    rng = np.random.default_rng(3)
    from wvalab.protocol import SystemState

    pre = SystemState(rng.normal(size=2) + 1j * rng.normal(size=2))
    cfg = plus_config(fock.vacuum(DIM), g=0.05)
    cfg = type(cfg)(0.05, 1, pre, cfg.A, cfg.pointer, cfg.omega, cfg.readout)
    rc = mc.RunConfig(cfg, None, 400_000, 8)
    rec = mc.simulate_run(rc)
    rep = mc.amr_estimate(rec, mc.expected_slope(rc))
    assert abs(rep.g_hat - 0.05) <= 4 * rep.std_err
