"""Work-extraction bound, the minimisation over auxiliary system Hamiltonians,
and the quasi-static protocol that approaches the bound.

Sign conventions: ``delta_F_rev = -[F(rho~, H0) - F(omega(H0), H0)]`` and
``delta_F_irrev = -min_H [F(rho~, H) - F(omega(H), H)]``, so the bound reads
``-delta_F_rev + delta_F_irrev`` and ``delta_F_irrev <= 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .machine import (
    MachineSpec,
    Protocol,
    ProtocolError,
    Quench,
    Thermalise,
    assemble_H_SB,
)
from .operators import (
    DensityMatrix,
    DimensionError,
    HermitianOperator,
    partial_trace,
)
from .thermo import (
    check_beta,
    entropy_of_spectrum,
    free_energy,
    gibbs_array,
    gibbs_state,
    relative_entropy,
)

log = logging.getLogger(__name__)

SUPPORT_PENALTY = 1e6


def gell_mann_basis(d: int) -> list[np.ndarray]:
    """Trace-orthonormal Hermitian basis: d^2 - 1 traceless elements, then I/sqrt(d)."""
    basis = []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / math.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1j / math.sqrt(2)
            a[k, j] = 1j / math.sqrt(2)
            basis += [s, a]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        basis.append(np.diag(diag / math.sqrt(l * (l + 1))).astype(complex))
    basis.append(np.eye(d, dtype=complex) / math.sqrt(d))
    return basis


@dataclass(frozen=True)
class HermitianParametrization:
    basis: tuple[np.ndarray, ...]
    coeffs: np.ndarray

    @classmethod
    def for_dim(cls, d: int, coeffs=None) -> "HermitianParametrization":
        basis = tuple(gell_mann_basis(d))
        c = np.zeros(len(basis)) if coeffs is None else np.asarray(coeffs, dtype=float)
        if c.shape != (len(basis),):
            raise DimensionError(f"expected {len(basis)} coefficients, got {c.shape}")
        return cls(basis, c)

    @classmethod
    def from_operator(cls, H: HermitianOperator) -> "HermitianParametrization":
        basis = tuple(gell_mann_basis(H.dim))
        c = np.array([np.real(np.vdot(b, H.entries)) for b in basis])
        return cls(basis, c)

    @property
    def dim(self) -> int:
        return self.basis[0].shape[0]

    def matrix(self) -> np.ndarray:
        return np.tensordot(self.coeffs, np.array(self.basis), axes=1)

    def operator(self) -> HermitianOperator:
        return HermitianOperator(self.matrix())

    def with_coeffs(self, coeffs) -> "HermitianParametrization":
        return HermitianParametrization(self.basis, np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class IsothermalPath:
    """Linear interpolation between two system Hamiltonians, lambda in [0, 1]."""

    endpoint_start: HermitianOperator
    endpoint_end: HermitianOperator
    n_steps: int

    def at(self, lam: float) -> HermitianOperator:
        if lam == 0:
            return self.endpoint_start
        if lam == 1:
            return self.endpoint_end
        a, b = self.endpoint_start.entries, self.endpoint_end.entries
        return HermitianOperator((1 - lam) * a + lam * b, self.endpoint_start.space)

    def derivative(self) -> HermitianOperator:
        return self.endpoint_end - self.endpoint_start

    def hamiltonians(self) -> list[HermitianOperator]:
        return [self.at(i / self.n_steps) for i in range(self.n_steps + 1)]


class _Objective:
    """Array-level objective with the bath part of H~_SB precomputed."""

    def __init__(self, spec: MachineSpec, rho_tilde: DensityMatrix):
        if rho_tilde.dim != spec.space.total_dim:
            raise DimensionError(
                f"state has dimension {rho_tilde.dim}, machine needs {spec.space.total_dim}"
            )
        self.beta = spec.beta
        self.d_S, self.d_B = spec.d_S, spec.d_B
        eye_B = np.eye(self.d_B)
        self.bath_part = np.kron(np.eye(self.d_S), spec.H_B.entries) + spec.V.entries
        self.eye_B = eye_B
        self.rho = np.asarray(rho_tilde.entries)
        self.rho_S = partial_trace(rho_tilde, [0]).entries
        self.entropy = entropy_of_spectrum(np.linalg.eigvalsh(self.rho))
        self.basis = np.array(gell_mann_basis(self.d_S)[:-1])
        self.n_evals = 0

    def h_sb(self, h_s: np.ndarray) -> np.ndarray:
        return np.kron(h_s, self.eye_B) + self.bath_part

    def value(self, h_s: np.ndarray) -> float:
        self.n_evals += 1
        h = self.h_sb(h_s)
        _, log_z = gibbs_array(h, self.beta)
        energy = float(np.real(np.vdot(self.rho.conj().T, h)))
        val = energy - self.entropy / self.beta + log_z / self.beta
        if not math.isfinite(val):
            return SUPPORT_PENALTY
        return val

    def value_and_grad(self, h_s: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        h = self.h_sb(h_s)
        omega, log_z = gibbs_array(h, self.beta)
        energy = float(np.real(np.vdot(self.rho.conj().T, h)))
        val = energy - self.entropy / self.beta + log_z / self.beta
        omega_S = np.einsum("ajbj->ab", omega.reshape(self.d_S, self.d_B, self.d_S, self.d_B))
        diff = self.rho_S - omega_S
        grad = np.real(np.einsum("kab,ba->k", self.basis, diff))
        return val, grad

    def coeffs_to_h(self, x: np.ndarray) -> np.ndarray:
        return np.tensordot(x, self.basis, axes=1)


def objective(spec: MachineSpec, rho_tilde_SB: DensityMatrix, H_tilde_S: HermitianOperator) -> float:
    """F(rho~, H~_SB) - F(omega(H~_SB), H~_SB), i.e. beta^-1 S(rho~ || omega(H~_SB))."""
    if H_tilde_S.dim != spec.d_S:
        raise DimensionError(f"H~_S has dimension {H_tilde_S.dim}, machine has {spec.d_S}")
    return _Objective(spec, rho_tilde_SB).value(np.asarray(H_tilde_S.entries))


def objective_gradient(
    spec: MachineSpec, rho_tilde_SB: DensityMatrix, parametrization: HermitianParametrization
) -> np.ndarray:
    """Gradient with respect to every basis coefficient (identity direction included)."""
    if parametrization.dim != spec.d_S:
        raise DimensionError("parametrization dimension does not match d_S")
    obj = _Objective(spec, rho_tilde_SB)
    h = obj.h_sb(parametrization.matrix())
    omega, _ = gibbs_array(h, spec.beta)
    diff = obj.rho - omega
    eye_B = np.eye(spec.d_B)
    return np.array(
        [np.real(np.vdot(diff.conj().T, np.kron(b, eye_B))) for b in parametrization.basis]
    )


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 8
    max_iter: int = 5000
    grad_tol: float = 1e-9
    backtrack: float = 0.5
    armijo: float = 1e-4
    seed: int = 0
    start_scale: float | None = None
    regularization: float = 1e-8
    # slack on the sufficient-decrease test; objective values carry ~1e-16 relative round-off
    value_slack: float = 1e-14
    nonmonotone_memory: int = 10


@dataclass
class StartReport:
    label: str
    converged: bool
    iterations: int
    value: float
    grad_norm: float


@dataclass
class MinimizationResult:
    H_S_star: HermitianOperator
    min_value: float
    converged: bool
    starts: list[StartReport]
    trace: list[float] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (H_S_star, min_value)
        return iter((self.H_S_star, self.min_value))


def _descend(obj: _Objective, x0: np.ndarray, cfg: OptimizerConfig):
    """Gradient descent with Barzilai-Borwein trial steps and nonmonotone Armijo backtracking."""
    x = x0.copy()
    f, g = obj.value_and_grad(obj.coeffs_to_h(x))
    trace = [f]
    recent = [f]
    step = 1.0
    x_prev = g_prev = None
    for it in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < cfg.grad_tol:
            return x, f, trace, True, it, gnorm
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = float(s @ y)
            step = float(s @ s) / sy if sy > 0 else 1.0
        gg = float(g @ g)
        f_ref = max(recent) + cfg.value_slack * max(1.0, abs(f))
        alpha = step
        while True:
            x_new = x - alpha * g
            f_new, g_new = obj.value_and_grad(obj.coeffs_to_h(x_new))
            if f_new <= f_ref - cfg.armijo * alpha * gg:
                break
            alpha *= cfg.backtrack
            if alpha < 1e-30:
                return x, f, trace, False, it, gnorm
        x_prev, g_prev = x, g
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        recent.append(f)
        if len(recent) > cfg.nonmonotone_memory:
            recent.pop(0)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return x, f, trace, gnorm < cfg.grad_tol, cfg.max_iter, gnorm


def minimize_irreversibility(
    spec: MachineSpec,
    rho_tilde_SB: DensityMatrix,
    config: OptimizerConfig | None = None,
) -> MinimizationResult:
    """Minimise F(rho~, H~_SB) - F(omega(H~_SB), H~_SB) over H~_S.

    The identity component is frozen (it drops out of the objective); the
    returned minimiser carries the trace of the machine's own H_S.
    """
    cfg = config or OptimizerConfig()
    obj = _Objective(spec, rho_tilde_SB)
    d = spec.d_S
    n_par = d * d - 1
    h_ref = np.asarray(spec.H_S.entries)
    trace_shift = np.real(np.trace(h_ref)) / d

    def coeffs(h: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("kab,ba->k", obj.basis, h))

    rho_S = obj.rho_S
    eta = cfg.regularization
    reg = (1 - eta) * rho_S + eta * np.eye(d) / d
    lam, u = np.linalg.eigh(0.5 * (reg + reg.conj().T))
    h_guess = -(u * np.log(np.maximum(lam, 1e-300))) @ u.conj().T / spec.beta
    starts = [("reduced-state", coeffs(h_guess))]
    rng = np.random.default_rng(cfg.seed)
    scale = cfg.start_scale
    if scale is None:
        scale = max(float(np.linalg.norm(h_ref)), 1.0 / spec.beta)
    for k in range(cfg.n_starts):
        starts.append((f"random-{k}", rng.normal(scale=scale / math.sqrt(max(n_par, 1)), size=n_par)))

    best = None
    reports = []
    for label, x0 in starts:
        x, f, trace, ok, iters, gnorm = _descend(obj, x0, cfg)
        reports.append(StartReport(label, ok, iters, f, gnorm))
        if not ok:
            log.debug("start %s did not converge (grad %.3g after %d iterations)", label, gnorm, iters)
        if best is None or f < best[1]:
            best = (x, f, trace, ok)
    x, f, trace, ok = best
    h_star = obj.coeffs_to_h(x) + trace_shift * np.eye(d)
    return MinimizationResult(HermitianOperator(h_star), float(f), bool(ok), reports, trace)


@dataclass
class BoundReport:
    delta_F_rev: float
    delta_F_irrev: float
    bound: float
    minimizer_H_S: HermitianOperator
    optimizer_trace: list[float]
    converged: bool = True
    min_value: float = 0.0


def theorem1_bound(
    spec: MachineSpec,
    rho_SB_initial: DensityMatrix,
    config: OptimizerConfig | None = None,
) -> BoundReport:
    beta = spec.beta
    H0 = assemble_H_SB(spec, spec.H_S, True)
    gap = free_energy(rho_SB_initial, H0, beta) - free_energy(gibbs_state(H0, beta), H0, beta)
    res = minimize_irreversibility(spec, rho_SB_initial, config)
    if not res.converged:
        log.warning("auxiliary-Hamiltonian minimisation did not converge; bound is approximate")
    d_rev = -gap
    d_irrev = -res.min_value
    return BoundReport(
        delta_F_rev=d_rev,
        delta_F_irrev=d_irrev,
        bound=-d_rev + d_irrev,
        minimizer_H_S=res.H_S_star,
        optimizer_trace=res.trace,
        converged=res.converged,
        min_value=res.min_value,
    )


def build_optimal_protocol(
    spec: MachineSpec,
    rho_SB_initial: DensityMatrix,
    n: int,
    *,
    final_thermalise: bool = False,
    H_S_star: HermitianOperator | None = None,
    config: OptimizerConfig | None = None,
) -> Protocol:
    """Quench to the minimiser, then n-1 rounds of thermalise + small quench back to H_S."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ProtocolError(f"the optimal protocol needs n >= 2, got {n!r}")
    if H_S_star is None:
        H_S_star = minimize_irreversibility(spec, rho_SB_initial, config).H_S_star
    path = IsothermalPath(H_S_star, spec.H_S, n - 1)
    hams = path.hamiltonians()
    steps = [Quench(hams[0], True)]
    for h in hams[1:]:
        steps += [Thermalise(), Quench(h, True)]
    if final_thermalise:
        steps.append(Thermalise())
    return Protocol(tuple(steps), spec.H_S)


def weak_coupling_bound(H_S: HermitianOperator, rho_S: DensityMatrix, beta: float) -> float:
    """F(rho_S, H_S) - F(omega(H_S), H_S)."""
    beta = check_beta(beta)
    return free_energy(rho_S, H_S, beta) - free_energy(gibbs_state(H_S, beta), H_S, beta)


def log_partition_derivative_residuals(
    spec: MachineSpec, path: IsothermalPath, lambdas, step: float = 1e-4
) -> np.ndarray:
    """d/dlambda ln Z (central differences) + beta Tr(dH/dlambda omega) at each lambda."""
    beta = spec.beta
    dh = np.kron(path.derivative().entries, np.eye(spec.d_B))

    def log_z(lam: float) -> float:
        _, lz = gibbs_array(assemble_H_SB(spec, path.at(lam)).entries, beta)
        return lz

    out = []
    for lam in lambdas:
        lam = float(lam)
        fd = (log_z(lam + step) - log_z(lam - step)) / (2 * step)
        omega, _ = gibbs_array(assemble_H_SB(spec, path.at(lam)).entries, beta)
        out.append(fd + beta * float(np.real(np.vdot(omega.conj().T, dh))))
    return np.array(out)


def compare_extensions(
    spec: MachineSpec, extensions: list[DensityMatrix], config: OptimizerConfig | None = None
) -> list[BoundReport]:
    """Evaluate the bound at several bath extensions of the same reduced state."""
    if not extensions:
        return []
    rho_S = partial_trace(extensions[0], [0])
    for e in extensions[1:]:
        if np.max(np.abs(partial_trace(e, [0]).entries - rho_S.entries)) > 1e-10:
            raise ValueError("extensions do not share the same system marginal")
    return [theorem1_bound(spec, e, config) for e in extensions]


def relative_entropy_objective(spec: MachineSpec, rho_tilde_SB: DensityMatrix, H_tilde_S: HermitianOperator) -> float:
    """Independent route to the objective through the relative entropy."""
    omega = gibbs_state(assemble_H_SB(spec, H_tilde_S, True), spec.beta)
    return relative_entropy(rho_tilde_SB, omega) / spec.beta
