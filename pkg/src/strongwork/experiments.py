"""Named experiments producing long-format result rows, plus the CSV writer."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import config as C
from .bounds import (
    IsothermalPath,
    build_optimal_protocol,
    log_partition_derivative_residuals,
    theorem1_bound,
    weak_coupling_bound,
)
from .embedding import (
    BatteryLadder,
    FlatBatteryState,
    apply_quench,
    build_quench_unitary,
    condition_epsilon,
    evolve_battery_and_diagnose,
    k_matrix,
    physical_protocol_run,
    snapped_quench_work,
)
from .machine import (
    ProtocolError,
    assemble_H_SB,
    exact_work_decomposition,
    heat_energy_ledger,
    reverse_protocol,
    run_protocol,
)
from .operators import DensityMatrix, HermitianOperator, partial_trace, trace_distance
from .thermo import gibbs_state

log = logging.getLogger(__name__)

CSV_HEADER = ("schema", "experiment", "sweep_param", "sweep_value", "observable", "value", "context")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_param: str
    sweep_value: object
    observable: str
    value: float
    context: str = ""


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow((C.SCHEMA_VERSION, r.experiment, r.sweep_param, fmt(r.sweep_value), r.observable, fmt(r.value), r.context))
    return buf.getvalue()


def write_csv(rows: list[ResultRow], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


# --- experiments ----------------------------------------------------------------------


def _row(exp, param, value, obs, v, ctx=""):
    return ResultRow(exp, param, value, obs, v, ctx)


def exp_bound(cfg: C.ExperimentConfig, point=None) -> list[ResultRow]:
    spec = C.build_machine(cfg, coupling_scale=point)
    rho = C.build_state(cfg, spec)
    rep = theorem1_bound(spec, rho)
    p, v = ("coupling_scale", point) if point is not None else ("", "")
    ctx = "converged" if rep.converged else "not-converged"
    return [
        _row("bound", p, v, "delta_F_rev", rep.delta_F_rev, ctx),
        _row("bound", p, v, "delta_F_irrev", rep.delta_F_irrev, ctx),
        _row("bound", p, v, "bound", rep.bound, ctx),
        _row("bound", p, v, "optimizer_iterations", len(rep.optimizer_trace) - 1, ctx),
    ]


def exp_protocol(cfg: C.ExperimentConfig, point=None) -> list[ResultRow]:
    spec = C.build_machine(cfg)
    rho = C.build_state(cfg, spec)
    proto = C.build_protocol(cfg, spec, rho)
    ledger, _ = run_protocol(spec, proto, rho)
    rows = [_row("protocol", "step", k, "step_work", w) for k, w in enumerate(ledger.per_step_work)]
    rows.append(_row("protocol", "", "", "total_work", ledger.total_work))
    rows.append(_row("protocol", "", "", "heat", ledger.heat))
    try:
        dec = exact_work_decomposition(spec, proto, rho)
    except ProtocolError as exc:
        rows.append(_row("protocol", "", "", "decomposition_total", math.nan, f"not proof form: {exc}"))
    else:
        rows.append(_row("protocol", "", "", "decomposition_total", dec.total_work))
        rows.append(_row("protocol", "", "", "decomposition_residual", abs(dec.total_work - ledger.total_work), "tol=1e-9"))
        rows.append(_row("protocol", "", "", "dissipation_sum", dec.dissipation_sum))
    return rows


def _optimal_point(cfg: C.ExperimentConfig, n) -> list[ResultRow]:
    spec = C.build_machine(cfg)
    rho = C.build_state(cfg, spec)
    rep = theorem1_bound(spec, rho)
    proto = build_optimal_protocol(spec, rho, int(n), H_S_star=rep.minimizer_H_S)
    ledger, _ = run_protocol(spec, proto, rho)
    return [
        _row("optimal-sweep", "n", int(n), "work", ledger.total_work),
        _row("optimal-sweep", "n", int(n), "deficit", rep.bound - ledger.total_work),
        _row("optimal-sweep", "n", int(n), "bound", rep.bound),
    ]


def _weak_point(cfg: C.ExperimentConfig, s) -> list[ResultRow]:
    spec = C.build_machine(cfg, coupling_scale=float(s))
    rho = C.build_state(cfg, spec)
    rep = theorem1_bound(spec, rho)
    weak = weak_coupling_bound(spec.H_S, partial_trace(rho, [0]), spec.beta)
    return [
        _row("weak-coupling-sweep", "s", float(s), "bound", rep.bound),
        _row("weak-coupling-sweep", "s", float(s), "weak_bound", weak),
        _row("weak-coupling-sweep", "s", float(s), "abs_difference", abs(rep.bound - weak)),
        _row("weak-coupling-sweep", "s", float(s), "delta_F_irrev", rep.delta_F_irrev),
    ]


def _unitary_hamiltonians(cfg: C.ExperimentConfig):
    d = int(C.option(cfg, "d_R", 2))
    rng = C.rng_for(cfg.seed, "unitary-check")
    return HermitianOperator(C.random_hermitian(rng, d, 2.0)), HermitianOperator(C.random_hermitian(rng, d, 2.0))


def _unitary_point(cfg: C.ExperimentConfig, N) -> list[ResultRow]:
    H0, H1 = _unitary_hamiltonians(cfg)
    b = cfg.battery
    lad = BatteryLadder(float(b.get("spacing", 0.75)), int(b.get("n_levels", 640)))
    U = build_quench_unitary(lad, H0, H1)
    battery = FlatBatteryState.centred(lad, int(N))
    d = H0.dim
    plus = DensityMatrix.pure(np.ones(d) / math.sqrt(d))
    out = apply_quench(U, plus, battery)
    eps = condition_epsilon(U, int(N))
    km = k_matrix(battery, H0, H1)
    return [
        _row("unitary-check", "N", int(N), "trace_distance", trace_distance(out.rho_R_after, plus)),
        _row("unitary-check", "N", int(N), "epsilon", eps),
        _row("unitary-check", "N", int(N), "work_error", abs(out.work - snapped_quench_work(U, plus))),
        _row("unitary-check", "N", int(N), "k_closed_form_error", float(np.max(np.abs(km.values - km.closed_form)))),
        _row("unitary-check", "N", int(N), "rounding_residual", U.rounding_residual),
    ]


def _coherence_setup(cfg: C.ExperimentConfig):
    rng = C.rng_for(cfg.seed, "coherence")
    d = int(C.option(cfg, "d_R", 2))
    H0, H1, H2 = (HermitianOperator(C.random_hermitian(rng, d, 2.0)) for _ in range(3))
    b = cfg.battery
    lad = BatteryLadder(float(b.get("spacing", 0.25)), int(b.get("n_levels", 512)))
    battery = FlatBatteryState.centred(lad, int(b.get("window_levels", 128)))
    rho = DensityMatrix.pure(np.ones(d) / math.sqrt(d))
    outcome = apply_quench(build_quench_unitary(lad, H0, H1), rho, battery)
    return outcome, H2, battery


def coherence_times(cfg: C.ExperimentConfig) -> np.ndarray:
    n = int(C.option(cfg, "n_times", 200))
    spacing = float(cfg.battery.get("spacing", 0.25))
    return C.rng_for(cfg.seed, "coherence-times").uniform(0.0, 100 * 2 * math.pi / spacing, n)


def _coherence_point(cfg: C.ExperimentConfig, t) -> list[ResultRow]:
    outcome, H2, battery = _coherence_setup(cfg)
    rep = evolve_battery_and_diagnose(outcome, float(t), H2, battery)
    rows = [_row("coherence-sweep", "t", float(t), "disturbance", rep.disturbance)]
    for k, ov in zip(rep.shift_differences, rep.overlaps):
        if k > 0:
            rows.append(_row("coherence-sweep", "t", float(t), f"overlap_modulus[k={int(k)}]", abs(ov)))
            rows.append(_row("coherence-sweep", "t", float(t), f"overlap_phase[k={int(k)}]", float(np.angle(ov))))
    return rows


def exp_physical(cfg: C.ExperimentConfig, point=None) -> list[ResultRow]:
    spec = C.build_machine(cfg)
    rho = C.build_state(cfg, spec)
    proto = C.build_protocol(cfg, spec, rho)
    b = cfg.battery
    n_levels = int(b.get("n_levels", 256))
    window = int(b.get("window_levels", 16))
    lad = BatteryLadder(float(b.get("spacing", 0.05)), n_levels)
    rep = physical_protocol_run(spec, proto, rho, lad, (n_levels - window) // 2, window, align=bool(b.get("align", True)))
    rows = [
        _row("physical-vs-abstract", "step", k, "step_difference", d)
        for k, d in enumerate(rep.per_step_difference)
    ]
    rows += [
        _row("physical-vs-abstract", "", "", "physical_total", rep.physical.total_work),
        _row("physical-vs-abstract", "", "", "abstract_total", rep.abstract.total_work),
        _row("physical-vs-abstract", "", "", "relative_difference", rep.relative_difference, "tol=0.01"),
        _row("physical-vs-abstract", "", "", "rounding_residual", rep.rounding_residual),
        _row("physical-vs-abstract", "", "", "epsilon", rep.epsilon),
    ]
    return rows


def exp_second_law(cfg: C.ExperimentConfig, point=None) -> list[ResultRow]:
    spec = C.build_machine(cfg)
    rho = C.build_state(cfg, spec)
    n = int(cfg.protocol.get("n", 512))
    rep = theorem1_bound(spec, rho)
    proto = build_optimal_protocol(spec, rho, n, H_S_star=rep.minimizer_H_S)
    H0 = assemble_H_SB(spec, spec.H_S)
    omega0 = gibbs_state(H0, spec.beta)
    fwd, rho_f = run_protocol(spec, proto, rho)
    rev, rho_r = run_protocol(spec, reverse_protocol(proto), omega0)
    led_f = heat_energy_ledger(spec, fwd, rho, rho_f, H0, H0)
    led_r = heat_energy_ledger(spec, rev, omega0, rho_r, H0, H0)
    e = "second-law"
    return [
        _row(e, "n", n, "work_forward", fwd.total_work),
        _row(e, "n", n, "work_reversed", rev.total_work),
        _row(e, "n", n, "delta_F_irrev", rep.delta_F_irrev),
        _row(e, "n", n, "reversed_identity_residual", fwd.total_work - rev.total_work - rep.delta_F_irrev, "tol=1e-8"),
        _row(e, "n", n, "forward_plus_reversed", fwd.total_work + rev.total_work),
        _row(e, "n", n, "clausius_slack_forward", led_f.clausius_slack, "tol=-1e-9"),
        _row(e, "n", n, "clausius_slack_reversed", led_r.clausius_slack, "tol=-1e-9"),
    ]


def exp_wilcox(cfg: C.ExperimentConfig, point=None) -> list[ResultRow]:
    spec = C.build_machine(cfg)
    rho = C.build_state(cfg, spec)
    rep = theorem1_bound(spec, rho)
    path = IsothermalPath(rep.minimizer_H_S, spec.H_S, 1)
    lams = np.linspace(0.05, 0.95, int(C.option(cfg, "n_lambda", 20)))
    res = log_partition_derivative_residuals(spec, path, lams)
    return [_row("wilcox", "lambda", float(l), "residual", float(r), "tol=1e-6") for l, r in zip(lams, res)]


def _sweep(name: str, point_fn: Callable, param: str, default_values: Callable):
    def run(cfg: C.ExperimentConfig, workers: int = 1) -> list[ResultRow]:
        p, values = C.sweep_values(cfg, param, default_values(cfg))
        if p != param:
            raise C.ConfigError(f"experiment {name!r} sweeps {param!r}, config asks for {p!r}")
        return map_points(point_fn, cfg, values, workers)

    return run


def _single(fn: Callable):
    def run(cfg: C.ExperimentConfig, workers: int = 1) -> list[ResultRow]:
        if cfg.sweep is not None and fn is exp_bound and cfg.sweep.get("param") == "coupling_scale":
            return map_points(fn, cfg, list(cfg.sweep["values"]), workers)
        return fn(cfg)

    return run


def map_points(fn: Callable, cfg: C.ExperimentConfig, values: list, workers: int = 1) -> list[ResultRow]:
    """Evaluate sweep points, possibly in parallel; rows come back in sweep order."""
    if workers <= 1 or len(values) <= 1:
        chunks = [fn(cfg, v) for v in values]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fn, [cfg] * len(values), values))
    return [r for chunk in chunks for r in chunk]


EXPERIMENTS: dict[str, Callable] = {
    "bound": _single(exp_bound),
    "protocol": _single(exp_protocol),
    "optimal-sweep": _sweep("optimal-sweep", _optimal_point, "n", lambda cfg: [4, 8, 16, 32, 64, 128, 256, 512]),
    "weak-coupling-sweep": _sweep("weak-coupling-sweep", _weak_point, "s", lambda cfg: [0.1, 0.01, 0.001]),
    "unitary-check": _sweep("unitary-check", _unitary_point, "N", lambda cfg: [8, 16, 32, 64, 128, 256, 512]),
    "coherence-sweep": _sweep("coherence-sweep", _coherence_point, "t", lambda cfg: [float(t) for t in coherence_times(cfg)]),
    "physical-vs-abstract": _single(exp_physical),
    "second-law": _single(exp_second_law),
    "wilcox": _single(exp_wilcox),
}


def run_experiment(cfg: C.ExperimentConfig, workers: int = 1) -> list[ResultRow]:
    if cfg.experiment not in EXPERIMENTS:
        raise C.ConfigError(
            f"unknown experiment {cfg.experiment!r}; known: {', '.join(sorted(EXPERIMENTS))}"
        )
    return EXPERIMENTS[cfg.experiment](cfg, workers)
