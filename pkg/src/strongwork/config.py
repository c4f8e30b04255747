"""Experiment configuration: YAML on disk, plain dataclasses in memory.

Matrices are written row-major as ``[re, im]`` pairs, e.g. a Pauli-x is
``[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]``.  Every random draw is derived from
the single ``seed`` through ``numpy.random.SeedSequence`` children keyed by
a fixed purpose label, so adding a generator never perturbs another.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from functools import reduce
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .machine import (
    MachineSpec,
    Protocol,
    Quench,
    Thermalise,
    assemble_H_SB,
)
from .operators import DensityMatrix, HermitianOperator
from .thermo import gibbs_state

SCHEMA_VERSION = "strongwork-v1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str | None = None
    seed: int = 0
    beta: float = 1.0
    machine: dict = field(default_factory=lambda: {"generator": "random", "d_S": 2, "d_B": 4})
    state: dict = field(default_factory=lambda: {"generator": "random"})
    protocol: dict = field(default_factory=lambda: {"generator": "optimal", "n": 8})
    sweep: dict | None = None
    battery: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    criteria: list | None = None
    test_mode: dict = field(default_factory=dict)
    output: str | None = None

    def with_updates(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)


_FIELDS = set(ExperimentConfig.__dataclass_fields__)


def from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping at top level")
    unknown = set(d) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**d)
    seed = cfg.seed
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    try:
        beta = float(cfg.beta)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"beta must be a number, got {cfg.beta!r}") from exc
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if cfg.sweep is not None:
        if set(cfg.sweep) != {"param", "values"} or not isinstance(cfg.sweep["values"], list):
            raise ConfigError("sweep needs exactly 'param' and a list of 'values'")
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def render(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def parse(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return from_dict(data or {})


def load(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse(p.read_text(encoding="utf-8"))


# --- seeding ----------------------------------------------------------------------


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Generator keyed by (seed, purpose); independent of call order."""
    key = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), key]))


# --- matrices -----------------------------------------------------------------------


def matrix_from_pairs(data, name: str = "matrix") -> np.ndarray:
    try:
        a = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: entries must be numeric [re, im] pairs") from exc
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"{name}: expected a square matrix of [re, im] pairs, got shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def matrix_to_pairs(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def hermitian_from_config(data, name: str, space=None) -> HermitianOperator:
    m = matrix_from_pairs(data, name)
    try:
        return HermitianOperator(m, space)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / (2 * np.sqrt(d))


def random_density(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = a @ a.conj().T
    return r / np.trace(r).real


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _kron(*ms):
    return reduce(np.kron, ms)


def heisenberg_machine(omega: float, J: float, h: float, g: float, beta: float) -> MachineSpec:
    """Qubit system coupled to a 2-site Heisenberg bath through the first bath site."""
    i2 = np.eye(2)
    h_s = np.diag([0.0, omega])
    h_b = sum(J * _kron(p, p) for p in _PAULI.values()) + h * (_kron(_PAULI["z"], i2) + _kron(i2, _PAULI["z"]))
    v = sum(g * _kron(p, p, i2) for p in _PAULI.values())
    return MachineSpec(
        HermitianOperator(h_s), HermitianOperator(h_b), HermitianOperator(v, (2, 4)), beta
    )


def _diag_z(d: int) -> np.ndarray:
    return np.diag(np.linspace(1.0, -1.0, d))


def build_machine(cfg: ExperimentConfig, coupling_scale: float | None = None) -> MachineSpec:
    m = dict(cfg.machine)
    gen = m.get("generator", "random")
    beta = float(cfg.beta)
    scale = float(m.get("coupling_scale", 1.0)) if coupling_scale is None else float(coupling_scale)
    if gen == "random":
        d_S, d_B = int(m.get("d_S", 2)), int(m.get("d_B", 4))
        rng = rng_for(cfg.seed, "machine")
        h_s = random_hermitian(rng, d_S, float(m.get("system_scale", 1.0)))
        h_b = random_hermitian(rng, d_B, float(m.get("bath_scale", 1.0)))
        v = random_hermitian(rng, d_S * d_B, float(m.get("coupling_strength", 1.0)))
        spec = MachineSpec(HermitianOperator(h_s), HermitianOperator(h_b), HermitianOperator(v, (d_S, d_B)), beta)
    elif gen == "heisenberg":
        spec = heisenberg_machine(
            float(m.get("omega", 1.0)), float(m.get("J", 0.5)), float(m.get("h", 0.2)),
            float(m.get("g", 0.5)), beta,
        )
    elif gen == "diagonal":
        es = np.asarray(m.get("system_levels", [0.0, 1.0]), dtype=float)
        eb = np.asarray(m.get("bath_levels", [0.0, 1.0]), dtype=float)
        g = float(m.get("g", 0.5))
        v = g * np.kron(_diag_z(len(es)), _diag_z(len(eb)))
        spec = MachineSpec(
            HermitianOperator.diag(es), HermitianOperator.diag(eb),
            HermitianOperator(v, (len(es), len(eb))), beta,
        )
    elif gen == "explicit":
        h_s = hermitian_from_config(m.get("H_S"), "machine.H_S")
        h_b = hermitian_from_config(m.get("H_B"), "machine.H_B")
        v = hermitian_from_config(m.get("V"), "machine.V")
        if v.dim != h_s.dim * h_b.dim:
            raise ConfigError(f"machine.V has dimension {v.dim}, expected {h_s.dim * h_b.dim}")
        spec = MachineSpec(h_s, h_b, HermitianOperator(v.entries, (h_s.dim, h_b.dim)), beta)
    else:
        raise ConfigError(f"unknown machine generator {gen!r}")
    return spec if scale == 1.0 else spec.with_coupling_scale(scale)


def build_state(cfg: ExperimentConfig, spec: MachineSpec) -> DensityMatrix:
    s = dict(cfg.state)
    gen = s.get("generator", "random")
    space = spec.space
    d = space.total_dim
    if gen == "random":
        return DensityMatrix(random_density(rng_for(cfg.seed, "state"), d), space)
    if gen == "gibbs":
        return gibbs_state(assemble_H_SB(spec, spec.H_S), spec.beta)
    if gen == "planted":
        if "H_S" in s:
            h = hermitian_from_config(s["H_S"], "state.H_S")
        else:
            h = HermitianOperator(random_hermitian(rng_for(cfg.seed, "planted"), spec.d_S, float(s.get("scale", 1.0))))
        return gibbs_state(assemble_H_SB(spec, h), spec.beta)
    if gen == "product":
        pops = np.asarray(s.get("populations"), dtype=float)
        if pops.shape != (spec.d_S,) or abs(pops.sum() - 1) > 1e-12 or (pops < 0).any():
            raise ConfigError("state.populations must be a probability vector of length d_S")
        bath = gibbs_state(spec.H_B, spec.beta)
        return DensityMatrix(np.kron(np.diag(pops), bath.entries), space)
    if gen == "explicit":
        m = matrix_from_pairs(s.get("rho"), "state.rho")
        try:
            return DensityMatrix(m, space)
        except ValueError as exc:
            raise ConfigError(f"state.rho: {exc}") from exc
    raise ConfigError(f"unknown state generator {gen!r}")


def random_protocol(rng: np.random.Generator, spec: MachineSpec, max_steps: int = 6, scale: float = 1.0) -> Protocol:
    """Cyclic protocol of at most ``max_steps`` steps with random targets and placements.

    The last step is always the quench back to the machine's H_S (or the
    protocol is empty); thermalisations only occur while the coupling is on.
    """
    n_steps = int(rng.integers(0, max_steps + 1))
    if n_steps == 0:
        return Protocol((), spec.H_S)
    body = n_steps - 1
    steps: list = []
    on = True
    for _ in range(body):
        if on and rng.random() < 0.5 and (not steps or isinstance(steps[-1], Quench)):
            steps.append(Thermalise())
        else:
            h = HermitianOperator(spec.H_S.entries + random_hermitian(rng, spec.d_S, scale))
            on = bool(rng.random() < 0.85)
            steps.append(Quench(h, on))
    steps.append(Quench(spec.H_S, True))
    return Protocol(tuple(steps), spec.H_S)


def proof_form_protocol(rng: np.random.Generator, spec: MachineSpec, n_quenches: int, scale: float = 1.0,
                        final_thermalise: bool = False) -> Protocol:
    """Q (T Q)* [T] with random intermediate targets and a final return to H_S."""
    targets = [HermitianOperator(spec.H_S.entries + random_hermitian(rng, spec.d_S, scale))
               for _ in range(n_quenches - 1)] + [spec.H_S]
    steps: list = [Quench(targets[0], True)]
    for h in targets[1:]:
        steps += [Thermalise(), Quench(h, True)]
    if final_thermalise:
        steps.append(Thermalise())
    return Protocol(tuple(steps), spec.H_S)


def build_protocol(cfg: ExperimentConfig, spec: MachineSpec, rho: DensityMatrix, n: int | None = None) -> Protocol:
    from .bounds import build_optimal_protocol

    p = dict(cfg.protocol)
    gen = p.get("generator", "optimal")
    if gen == "optimal":
        n = int(p.get("n", 8)) if n is None else int(n)
        return build_optimal_protocol(spec, rho, n, final_thermalise=bool(p.get("final_thermalise", False)))
    if gen == "random":
        return random_protocol(rng_for(cfg.seed, "protocol"), spec, int(p.get("max_steps", 6)))
    if gen == "explicit":
        steps = []
        for k, item in enumerate(p.get("steps", []) or []):
            if item == "thermalise" or (isinstance(item, dict) and "thermalise" in item):
                steps.append(Thermalise())
            elif isinstance(item, dict) and "quench" in item:
                h = hermitian_from_config(item["quench"], f"protocol.steps[{k}].quench")
                steps.append(Quench(h, bool(item.get("coupling_on", True))))
            else:
                raise ConfigError(f"protocol.steps[{k}]: expected 'thermalise' or a quench mapping")
        return Protocol(tuple(steps), spec.H_S)
    raise ConfigError(f"unknown protocol generator {gen!r}")


def sweep_values(cfg: ExperimentConfig, default_param: str, default_values: list) -> tuple[str, list]:
    if cfg.sweep is None:
        return default_param, list(default_values)
    return str(cfg.sweep["param"]), list(cfg.sweep["values"])


def option(cfg: ExperimentConfig, key: str, default: Any) -> Any:
    return cfg.options.get(key, default)
