"""Experiment configuration: JSON schema, parsing, emission, and model building.

Complex numbers are written as ``{"re": x, "im": y}``; plain numbers are
accepted on input.  Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import fock
from .errors import ConfigError
from .metrology import SnrConfig, max_snr_post, qfi_optimal_weak_value
from .protocol import SystemObservable, SystemState, optimal_postselection, sigma_z, weak_value

SCHEMA_VERSION = 1
POINTER_KINDS = ("vacuum", "coherent", "squeezed_coherent")
QUADRATURES = ("q", "p")
MODES = ("postselected", "standard")


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    observable: str | tuple
    pre: tuple
    post: tuple | None = None


@dataclass(frozen=True)
class PointerSpec:
    kind: str
    alpha: complex = 0j
    xi: complex = 0j
    truncation: int = fock.DEFAULT_DIM


@dataclass(frozen=True)
class CouplingSpec:
    g: float
    omega: str = "q"
    readout: str = "p"
    N: int = 1


@dataclass(frozen=True)
class SweepSpec:
    parameter: str = "xi"
    re_range: tuple = (-2.0, 2.0)
    im_range: tuple = (-2.0, 2.0)
    steps: int = 101


@dataclass(frozen=True)
class McSpec:
    trials: int
    seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSpec
    pointer: PointerSpec
    coupling: CouplingSpec
    mode: str = "postselected"
    weak_value: complex | str | None = "optimal"
    sweep: SweepSpec | None = None
    mc: McSpec | None = None
    schema: int = field(default=SCHEMA_VERSION)


# -- parsing -----------------------------------------------------------------


def _expect_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", path)
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigError(f"missing key(s) {missing}", path)


def _number(val, path, kind=float):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path)
    if kind is int:
        if int(val) != val:
            raise ConfigError(f"expected an integer, got {val!r}", path)
        return int(val)
    if not np.isfinite(val):
        raise ConfigError("non-finite number", path)
    return float(val)


def _complex(val, path):
    if isinstance(val, dict):
        _expect_keys(val, path, ("re", "im"))
        return complex(_number(val["re"], f"{path}.re"), _number(val["im"], f"{path}.im"))
    return complex(_number(val, path))


def _choice(val, path, options):
    if val not in options:
        raise ConfigError(f"expected one of {list(options)}, got {val!r}", path)
    return val


def _vector(val, path, dim):
    if not isinstance(val, list) or len(val) != dim:
        raise ConfigError(f"expected a list of {dim} amplitudes", path)
    vec = tuple(_complex(v, f"{path}[{i}]") for i, v in enumerate(val))
    if not any(vec):
        raise ConfigError("state has zero norm", path)
    return vec


def _parse_system(obj):
    _expect_keys(obj, "system", ("dim", "observable", "pre"), ("post",))
    dim = _number(obj["dim"], "system.dim", int)
    if not 2 <= dim <= 16:
        raise ConfigError("system dimension must be in [2, 16]", "system.dim")
    obs = obj["observable"]
    if isinstance(obs, str):
        _choice(obs, "system.observable", ("sigma_z",))
        if dim != 2:
            raise ConfigError("sigma_z needs system.dim = 2", "system.observable")
    else:
        if not isinstance(obs, list) or len(obs) != dim:
            raise ConfigError(f"expected 'sigma_z' or a {dim}x{dim} matrix", "system.observable")
        obs = tuple(_vector(row, f"system.observable[{i}]", dim) if any(row) else tuple(0j for _ in row)
                    for i, row in enumerate(obs))
        mat = np.array(obs)
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
            raise ConfigError("observable matrix is not Hermitian", "system.observable")
    pre = _vector(obj["pre"], "system.pre", dim)
    post = _vector(obj["post"], "system.post", dim) if obj.get("post") is not None else None
    return SystemSpec(dim, obs, pre, post)


def _parse_pointer(obj):
    _expect_keys(obj, "pointer", ("kind",), ("alpha", "xi", "truncation"))
    kind = _choice(obj["kind"], "pointer.kind", POINTER_KINDS)
    alpha = _complex(obj.get("alpha", 0.0), "pointer.alpha")
    xi = _complex(obj.get("xi", 0.0), "pointer.xi")
    trunc = _number(obj.get("truncation", fock.DEFAULT_DIM), "pointer.truncation", int)
    if trunc < 2:
        raise ConfigError("truncation must be >= 2", "pointer.truncation")
    return PointerSpec(kind, alpha, xi, trunc)


def _parse_coupling(obj):
    _expect_keys(obj, "coupling", ("g",), ("omega", "readout", "N"))
    g = _number(obj["g"], "coupling.g")
    if g < 0:
        raise ConfigError("g must be >= 0", "coupling.g")
    n = _number(obj.get("N", 1), "coupling.N", int)
    if n < 1:
        raise ConfigError("N must be >= 1", "coupling.N")
    return CouplingSpec(
        g,
        _choice(obj.get("omega", "q"), "coupling.omega", QUADRATURES),
        _choice(obj.get("readout", "p"), "coupling.readout", QUADRATURES),
        n,
    )


def _range(val, path):
    if not isinstance(val, list) or len(val) != 2:
        raise ConfigError("expected [low, high]", path)
    lo, hi = _number(val[0], f"{path}[0]"), _number(val[1], f"{path}[1]")
    if not hi > lo:
        raise ConfigError("range must be increasing", path)
    return (lo, hi)


def _parse_sweep(obj):
    _expect_keys(obj, "sweep", (), ("parameter", "re_range", "im_range", "steps"))
    steps = _number(obj.get("steps", 101), "sweep.steps", int)
    if steps < 2:
        raise ConfigError("steps must be >= 2", "sweep.steps")
    return SweepSpec(
        _choice(obj.get("parameter", "xi"), "sweep.parameter", ("xi",)),
        _range(obj.get("re_range", [-2.0, 2.0]), "sweep.re_range"),
        _range(obj.get("im_range", [-2.0, 2.0]), "sweep.im_range"),
        steps,
    )


def _parse_mc(obj):
    _expect_keys(obj, "mc", ("trials", "seed"))
    trials = _number(obj["trials"], "mc.trials", int)
    seed = _number(obj["seed"], "mc.seed", int)
    if trials < 1:
        raise ConfigError("trials must be >= 1", "mc.trials")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", "mc.seed")
    return McSpec(trials, seed)


def config_from_dict(obj) -> ExperimentConfig:
    _expect_keys(obj, "<root>", ("schema", "system", "pointer", "coupling"), ("mode", "weak_value", "sweep", "mc"))
    if obj["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {obj['schema']!r}", "schema")
    wv = obj.get("weak_value", "optimal")
    if wv is not None and wv != "optimal":
        wv = _complex(wv, "weak_value")
    system = _parse_system(obj["system"])
    if system.post is not None and wv is not None:
        raise ConfigError("give either system.post or weak_value, not both (set weak_value to null)", "weak_value")
    return ExperimentConfig(
        system=system,
        pointer=_parse_pointer(obj["pointer"]),
        coupling=_parse_coupling(obj["coupling"]),
        mode=_choice(obj.get("mode", "postselected"), "mode", MODES),
        weak_value=wv,
        sweep=_parse_sweep(obj["sweep"]) if obj.get("sweep") is not None else None,
        mc=_parse_mc(obj["mc"]) if obj.get("mc") is not None else None,
    )


def parse_config(text: str) -> ExperimentConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(obj)


def load_config(path=None) -> ExperimentConfig:
    """Read a config file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("wvalab").joinpath("configs/default.json").read_text()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def shipped_config(name: str) -> ExperimentConfig:
    return parse_config(resources.files("wvalab").joinpath(f"configs/{name}.json").read_text())


# -- emission ----------------------------------------------------------------


def _c(z):
    return {"re": float(z.real), "im": float(z.imag)}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    s = cfg.system
    obs = s.observable if isinstance(s.observable, str) else [[_c(z) for z in row] for row in s.observable]
    out = {
        "schema": cfg.schema,
        "system": {"dim": s.dim, "observable": obs, "pre": [_c(z) for z in s.pre]},
        "pointer": {
            "kind": cfg.pointer.kind,
            "alpha": _c(cfg.pointer.alpha),
            "xi": _c(cfg.pointer.xi),
            "truncation": cfg.pointer.truncation,
        },
        "coupling": {
            "g": cfg.coupling.g,
            "omega": cfg.coupling.omega,
            "readout": cfg.coupling.readout,
            "N": cfg.coupling.N,
        },
        "mode": cfg.mode,
        "weak_value": cfg.weak_value if cfg.weak_value in (None, "optimal") else _c(cfg.weak_value),
    }
    if s.post is not None:
        out["system"]["post"] = [_c(z) for z in s.post]
    if cfg.sweep is not None:
        out["sweep"] = {
            "parameter": cfg.sweep.parameter,
            "re_range": list(cfg.sweep.re_range),
            "im_range": list(cfg.sweep.im_range),
            "steps": cfg.sweep.steps,
        }
    if cfg.mc is not None:
        out["mc"] = {"trials": cfg.mc.trials, "seed": cfg.mc.seed}
    return out


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()[:16]


def with_overrides(cfg: ExperimentConfig, truncation=None, seed=None, steps=None) -> ExperimentConfig:
    if truncation is not None:
        cfg = replace(cfg, pointer=replace(cfg.pointer, truncation=truncation))
    if seed is not None:
        if cfg.mc is None:
            raise ConfigError("--seed given but the config has no mc block", "mc")
        cfg = replace(cfg, mc=replace(cfg.mc, seed=seed))
    if steps is not None:
        cfg = replace(cfg, sweep=replace(cfg.sweep or SweepSpec(), steps=steps))
    return cfg


# -- building model objects ----------------------------------------------------


def build_observable(spec: SystemSpec) -> SystemObservable:
    if spec.observable == "sigma_z":
        return sigma_z()
    return SystemObservable(np.array(spec.observable))


def build_pointer(spec: PointerSpec, xi: complex | None = None):
    dim = spec.truncation
    if spec.kind == "vacuum":
        return fock.vacuum(dim)
    if spec.kind == "coherent":
        return fock.coherent_state(spec.alpha, dim)
    return fock.squeezed_coherent_state(spec.xi if xi is None else xi, spec.alpha, dim)


def build_snr_config(cfg: ExperimentConfig, xi: complex | None = None) -> SnrConfig:
    q, p = fock.quadrature_ops(cfg.pointer.truncation)
    ops = {"q": q, "p": p}
    return SnrConfig(
        g=cfg.coupling.g,
        N=cfg.coupling.N,
        pre=SystemState(np.array(cfg.system.pre)),
        A=build_observable(cfg.system),
        pointer=build_pointer(cfg.pointer, xi),
        omega=ops[cfg.coupling.omega],
        readout=ops[cfg.coupling.readout],
    )


def resolve_snr_weak_value(cfg: ExperimentConfig, snr: SnrConfig) -> complex:
    """Weak value used for SNR reports: explicit, from ``system.post``, or SNR-optimal."""
    if cfg.system.post is not None:
        return weak_value(snr.pre, SystemState(np.array(cfg.system.post)), snr.A)
    if cfg.weak_value == "optimal":
        rep = max_snr_post(snr)
        if rep.optimal_Aw is None:
            raise ConfigError("SNR optimum is not attained at a finite weak value", "weak_value")
        return rep.optimal_Aw
    return complex(cfg.weak_value)


def resolve_qfi_weak_value(cfg: ExperimentConfig, snr: SnrConfig) -> complex:
    if cfg.system.post is not None:
        return weak_value(snr.pre, SystemState(np.array(cfg.system.post)), snr.A)
    if cfg.weak_value == "optimal":
        return qfi_optimal_weak_value(snr.pre, snr.A)
    return complex(cfg.weak_value)


def resolve_post(cfg: ExperimentConfig, snr: SnrConfig, A_w: complex) -> SystemState:
    if cfg.system.post is not None:
        return SystemState(np.array(cfg.system.post))
    return optimal_postselection(snr.pre, snr.A, A_w)
