"""Command-line front end.

Subcommands: ``validate``, ``sweep-squeeze``, ``snr``, ``qfi`` and ``sample``.
Exit codes: 0 success, 2 config error, 3 physics-domain error, 4 invariant
failure.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, fock, mc
from .config import (
    ExperimentConfig,
    SweepSpec,
    build_pointer,
    build_snr_config,
    config_hash,
    config_to_dict,
    load_config,
    resolve_post,
    resolve_qfi_weak_value,
    resolve_snr_weak_value,
    with_overrides,
)
from .errors import ConfigError, OrthogonalSelection, PhysicsDomainError, WvalabError
from .metrology import (
    csc2_phi,
    max_qfi_post,
    max_snr_post,
    max_snr_std,
    qfi_report,
    qfi_std,
    ratio_s_fixed_Aw,
    ratio_s_optimal,
    snr_post,
)
from .protocol import (
    SystemState,
    completed_basis,
    evolve_joint,
    optimal_postselection,
    postselect,
    weak_value,
)

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_INVARIANT = 0, 2, 3, 4
SWEEP_RADIUS = 2.0


class InvariantFailure(WvalabError):
    pass


# -- formatting ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _jsonable(float(x.real)), "im": _jsonable(float(x.imag))}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _preselection(cfg: ExperimentConfig):
    return [complex(z) for z in SystemState(np.array(cfg.system.pre)).amplitudes]


def _header(cfg: ExperimentConfig) -> dict:
    return {
        "wvalab_version": __version__,
        "config_hash": config_hash(cfg),
        "preselection": _preselection(cfg),
    }


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _resolve_workers(arg):
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("WVALAB_WORKERS")
        if env is None:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"WVALAB_WORKERS must be an integer, got {env!r}", "WVALAB_WORKERS") from None
    if n < 1:
        raise ConfigError("workers must be >= 1", "--workers")
    return n


def _post_weak_value(cfg, snr):
    try:
        return weak_value(snr.pre, SystemState(np.array(cfg.system.post)), snr.A)
    except OrthogonalSelection as exc:
        raise OrthogonalSelection(f"system.post: {exc}") from exc


# -- validate --------------------------------------------------------------------


def _check(name, residual, tol):
    residual = float(residual)
    return {"name": name, "passed": bool(residual <= tol), "residual": residual, "tolerance": tol}


def _skip(name, reason):
    return {"name": name, "passed": None, "residual": None, "tolerance": None, "skipped": reason}


def run_validate(cfg: ExperimentConfig) -> dict:
    """Invariant checks for the configured pointer, system and figures of merit."""
    checks = []
    pointer = build_pointer(cfg.pointer)
    dim = pointer.dim
    q, p = fock.quadrature_ops(dim)
    checks.append(_check("fock.tail_mass", pointer.tail_mass, fock.TAIL_TOL))
    checks.append(_check("fock.normalization", abs(pointer.norm2 - 1.0), 1e-10))
    k = dim - fock.TAIL_WIDTH
    comm = fock.commutator(q, p).matrix[:k, :k]
    checks.append(_check("fock.commutator_fidelity", np.max(np.abs(comm - 1j * np.eye(k))), 1e-12))
    vq, vp = fock.variance(pointer, q), fock.variance(pointer, p)
    mq, mp = fock.expectation(pointer, q).real, fock.expectation(pointer, p).real
    cov = fock.expectation(pointer, fock.anticommutator(q, p)).real - 2 * mq * mp
    rs_bound = 0.25 * (1.0 + cov**2)
    checks.append(_check("fock.robertson_schrodinger", max(rs_bound - vq * vp, 0.0), 1e-10))
    grid = fock.default_grid(dim)
    dens = fock.wavefunction_p(pointer, grid)
    x = grid.points
    mean_grid = grid.integrate(x * dens)
    var_grid = grid.integrate((x - mean_grid) ** 2 * dens)
    checks.append(_check("fock.grid_matrix_agreement", max(abs(mean_grid - mp), abs(var_grid - vp)), 1e-8))

    snr = build_snr_config(cfg)
    pre, A = snr.pre, snr.A
    g = cfg.coupling.g
    checks.append(_check("protocol.preselection_norm", abs(np.vdot(pre.amplitudes, pre.amplitudes).real - 1), 1e-12))
    joint = evolve_joint(pre, snr.pointer, g, A, snr.omega)
    checks.append(_check("protocol.unitarity", abs(joint.norm2 - 1.0), 1e-10))

    if cfg.system.post is not None:
        A_w = _post_weak_value(cfg, snr)
        post = SystemState(np.array(cfg.system.post))
    elif cfg.weak_value is None:
        A_w, post = None, None
    else:
        A_w = resolve_snr_weak_value(cfg, snr)
        post = optimal_postselection(pre, A, A_w)
        got = weak_value(pre, post, A)
        checks.append(_check("protocol.weak_value_consistency", abs(got - A_w) / max(1.0, abs(A_w)), 1e-8))
    if post is not None:
        total = sum(postselect(joint, b).prob for b in completed_basis(post))
        checks.append(_check("protocol.completeness", abs(total - 1.0), 1e-10))
    else:
        checks.append(_skip("protocol.completeness", "no postselection configured"))

    try:
        checks.append(_check("metrology.csc2_phi_at_least_one", max(1.0 - csc2_phi(snr.pointer, snr.omega, snr.readout), 0.0), 1e-12))
    except PhysicsDomainError as exc:
        checks.append(_skip("metrology.csc2_phi_at_least_one", str(exc)))
    try:
        rep = max_snr_post(snr)
        checks.append(_check("metrology.snr_upper_bound", max(rep.max_snr - rep.upper_bound, 0.0), 1e-12 * max(1.0, rep.upper_bound)))
        std = max_snr_std(snr)
        ratio = ratio_s_optimal(snr)
        checks.append(_check("metrology.ratio_consistency", abs(ratio - rep.max_snr / std) / max(1.0, ratio), 1e-10))
        if rep.optimal_Aw is not None:
            checks.append(_check("metrology.optimum_attained", abs(abs(snr_post(snr, rep.optimal_Aw)) - rep.max_snr) / rep.max_snr, 1e-10))
    except PhysicsDomainError as exc:
        checks.append(_skip("metrology.snr_optimum", str(exc)))
    f_max = max_qfi_post(pre, A, snr.omega, snr.pointer)
    f_std = qfi_std(pre, A, snr.omega, snr.pointer)
    checks.append(_check("metrology.qfi_hierarchy", max(f_std - f_max, 0.0), 1e-9 * max(1.0, f_max)))

    failed = [c["name"] for c in checks if c["passed"] is False]
    return {**_header(cfg), "command": "validate", "passed": not failed, "failed": failed, "checks": checks}


# -- sweep -------------------------------------------------------------------------


def _sweep_weak_value(cfg, snr):
    if cfg.system.post is not None:
        return _post_weak_value(cfg, snr)
    if isinstance(cfg.weak_value, complex):
        return cfg.weak_value
    raise ConfigError("sweep-squeeze needs a fixed complex weak value or system.post", "weak_value")


def sweep_values(cfg: ExperimentConfig, workers: int = 1):
    """Grid axes and the ``s`` map (NaN outside ``|xi| <= 2``), indexed ``[im, re]``."""
    sweep = cfg.sweep or SweepSpec()
    re_axis = np.linspace(*sweep.re_range, sweep.steps)
    im_axis = np.linspace(*sweep.im_range, sweep.steps)
    base = build_snr_config(cfg, xi=0j)
    A_w = _sweep_weak_value(cfg, base)

    def row(im):
        out = np.full(re_axis.size, np.nan)
        for j, re in enumerate(re_axis):
            if np.hypot(re, im) > SWEEP_RADIUS * (1 + 1e-12):
                continue
            out[j] = ratio_s_fixed_Aw(build_snr_config(cfg, xi=complex(re, im)), A_w)
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, im_axis))
    else:
        rows = [row(im) for im in im_axis]
    return re_axis, im_axis, np.array(rows), A_w


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> str:
    if cfg.pointer.kind != "squeezed_coherent":
        raise ConfigError("sweep-squeeze needs pointer.kind = squeezed_coherent", "pointer.kind")
    re_axis, im_axis, s, A_w = sweep_values(cfg, workers)
    buf = io.StringIO()
    head = _header(cfg)
    buf.write(f"# wvalab_version={head['wvalab_version']}\n")
    buf.write(f"# config_hash={head['config_hash']}\n")
    pre = ";".join(f"({_fmt(z.real)},{_fmt(z.imag)})" for z in head["preselection"])
    buf.write(f"# preselection={pre}\n")
    buf.write(f"# weak_value=({_fmt(A_w.real)},{_fmt(A_w.imag)})\n")
    buf.write("re_xi,im_xi,s\n")
    for i, im in enumerate(im_axis):
        for j, re in enumerate(re_axis):
            val = s[i, j]
            buf.write(f"{_fmt(re)},{_fmt(im)},{'' if np.isnan(val) else _fmt(val)}\n")
    return buf.getvalue()


def read_sweep_csv(text: str):
    """Parse sweep output into ``(re, im, s)`` arrays; blank ``s`` becomes NaN."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if lines[0] != "re_xi,im_xi,s":
        raise ValueError("not a sweep file")
    rows = [ln.split(",") for ln in lines[1:]]
    re = np.array([float(r[0]) for r in rows])
    im = np.array([float(r[1]) for r in rows])
    s = np.array([float(r[2]) if r[2] else np.nan for r in rows])
    return re, im, s


# -- snr / qfi ----------------------------------------------------------------------


def run_snr(cfg: ExperimentConfig) -> dict:
    snr = build_snr_config(cfg)
    rep = max_snr_post(snr)
    if cfg.system.post is not None:
        A_w = _post_weak_value(cfg, snr)
        post = SystemState(np.array(cfg.system.post))
        value = snr_post(snr, A_w, post)
    else:
        A_w = resolve_snr_weak_value(cfg, snr)
        value = snr_post(snr, A_w)
    return {
        **_header(cfg),
        "command": "snr",
        "config": config_to_dict(cfg),
        "weak_value": complex(A_w),
        "snr_post": float(value),
        "max_snr_post": rep.max_snr,
        "max_snr_std": max_snr_std(snr),
        "s": ratio_s_optimal(snr),
        "s_at_weak_value": float(ratio_s_fixed_Aw(snr, A_w)),
        "upper_bound": rep.upper_bound,
        "optimal_weak_value": rep.optimal_Aw,
    }


def run_qfi(cfg: ExperimentConfig) -> dict:
    snr = build_snr_config(cfg)
    if cfg.system.post is not None:
        A_w = _post_weak_value(cfg, snr)
    else:
        A_w = resolve_qfi_weak_value(cfg, snr)
    post = resolve_post(cfg, snr, A_w)
    rep = qfi_report(snr, A_w, post)
    return {
        **_header(cfg),
        "command": "qfi",
        "config": config_to_dict(cfg),
        "weak_value": complex(A_w),
        "f_post": rep.f_post,
        "f_post_max": rep.f_post_max,
        "f_std": rep.f_std,
        "ratio": rep.ratio,
        "f_all_probe": rep.f_all_probe,
    }


# -- sample ---------------------------------------------------------------------------


def run_sample(cfg: ExperimentConfig, workers: int = 1):
    """Monte Carlo run; returns ``(outcomes_csv_text, report_dict)``."""
    if cfg.mc is None:
        raise ConfigError("sample needs an mc block", "mc")
    snr = build_snr_config(cfg)
    if cfg.mode == "standard":
        post, A_w = None, None
    else:
        if cfg.system.post is not None:
            A_w = _post_weak_value(cfg, snr)
        elif cfg.weak_value is None:
            raise ConfigError("postselected mode needs weak_value or system.post", "weak_value")
        else:
            A_w = resolve_snr_weak_value(cfg, snr)
        post = resolve_post(cfg, snr, A_w)
    rc = mc.RunConfig(snr, post, cfg.mc.trials, cfg.mc.seed)
    record = mc.simulate_run(rc, workers=workers)
    ps = mc.outcome_distribution(rc)[0]
    slope = mc.expected_slope(rc)
    amr = mc.amr_estimate(record, slope)
    family = mc.density_family(rc)
    cfi = mc.fisher_per_outcome(rc, family)
    half = 8.0 * max(amr.std_err, 1.0 / np.sqrt(record.accepted * cfi))
    mle = mc.mle_estimate(record, family, (amr.g_hat - half, amr.g_hat + half), rc.grid)
    head = _header(cfg)
    report = {
        **head,
        "command": "sample",
        "config": config_to_dict(cfg),
        "mode": cfg.mode,
        "seed": cfg.mc.seed,
        "trials": cfg.mc.trials,
        "accepted": record.accepted,
        "acceptance_rate": record.accepted / cfg.mc.trials,
        "postselection_probability": float(ps),
        "weak_value": None if A_w is None else complex(A_w),
        "postselection": None if post is None else [complex(z) for z in post.amplitudes],
        "g_true": record.g_true,
        "slope": slope,
        "fisher_per_outcome": cfi,
        "amr": _estimator(amr),
        "mle": _estimator(mle),
    }
    buf = io.StringIO()
    buf.write(f"# wvalab_version={head['wvalab_version']}\n")
    buf.write(f"# config_hash={head['config_hash']}\n")
    buf.write(f"# seed={cfg.mc.seed}\n")
    buf.write("p\n")
    buf.write("".join(_fmt(v) + "\n" for v in record.outcomes))
    return buf.getvalue(), report


def _estimator(rep: mc.EstimatorReport) -> dict:
    return {
        "g_hat": rep.g_hat,
        "std_err": rep.std_err,
        "empirical_snr": rep.empirical_snr,
        "n_effective": rep.n_effective,
    }


def _report_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return root + ".json" if ext.lower() != ".json" else root + ".report.json"


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wvalab", description="Postselected weak-measurement calculations.")
    parser.add_argument("--version", action="version", version=f"wvalab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate": "run invariant checks on a config",
        "sweep-squeeze": "SNR-ratio map over the squeeze parameter (CSV)",
        "snr": "SNR report (JSON)",
        "qfi": "Fisher-information report (JSON)",
        "sample": "Monte Carlo run: outcomes CSV and estimator report JSON",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="JSON config (default: shipped default)")
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--truncation", type=int, metavar="N", help="override pointer.truncation")
        if name == "sweep-squeeze":
            p.add_argument("--steps", type=int, metavar="N", help="override sweep.steps")
        if name in ("sweep-squeeze", "sample"):
            p.add_argument("--workers", type=int, metavar="N", help="worker threads (env WVALAB_WORKERS)")
        if name == "sample":
            p.add_argument("--seed", type=int, metavar="U64", help="override mc.seed")
    return parser


def _error_payload(exc, code):
    return {"error": {"type": type(exc).__name__, "message": str(exc), "field": getattr(exc, "field", None), "exit_code": code}}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.truncation is not None and args.truncation < 2:
            raise ConfigError("truncation must be >= 2", "--truncation")
        if getattr(args, "steps", None) is not None and args.steps < 2:
            raise ConfigError("steps must be >= 2", "--steps")
        seed = getattr(args, "seed", None)
        if seed is not None and not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "--seed")
        cfg = with_overrides(cfg, args.truncation, seed, getattr(args, "steps", None))
        workers = _resolve_workers(getattr(args, "workers", None)) if hasattr(args, "workers") else 1
        if args.command == "validate":
            report = run_validate(cfg)
            _write(dump_json(report), args.out)
            if not report["passed"]:
                print(f"invariant failure: {', '.join(report['failed'])}", file=sys.stderr)
                return EXIT_INVARIANT
        elif args.command == "sweep-squeeze":
            _write(run_sweep(cfg, workers), args.out)
        elif args.command == "snr":
            _write(dump_json(run_snr(cfg)), args.out)
        elif args.command == "qfi":
            _write(dump_json(run_qfi(cfg)), args.out)
        elif args.command == "sample":
            outcomes, report = run_sample(cfg, workers)
            if args.out is None:
                _write(dump_json(report), None)
            else:
                _write(outcomes, args.out)
                _write(dump_json(report), _report_path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsDomainError as exc:
        if args.command in ("snr", "qfi"):
            _write(dump_json(_error_payload(exc, EXIT_PHYSICS)), args.out)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
