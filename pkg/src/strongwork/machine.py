"""Abstract thermal machine: quenches, thermalisations and work bookkeeping.

Work is positive when energy is deposited in the battery.  Thermalisation
replaces the system-bath state by the global Gibbs state of the current,
interacting Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .operators import (
    CompositeSpace,
    DensityMatrix,
    DimensionError,
    HermitianOperator,
    tensor_embed,
)
from .thermo import (
    check_beta,
    free_energy,
    gibbs_state,
    gibbs_relative_entropy,
    von_neumann_entropy,
)

CYCLIC_TOL = 1e-12


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class MachineSpec:
    """System Hamiltonian H_S, bath H_B, fixed coupling V on S x B, and beta."""

    H_S: HermitianOperator
    H_B: HermitianOperator
    V: HermitianOperator
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "beta", check_beta(self.beta))
        want = self.H_S.dim * self.H_B.dim
        if self.V.dim != want:
            raise DimensionError(
                f"coupling has dimension {self.V.dim}, expected d_S*d_B = {want}"
            )
        if self.V.space.factor_dims != self.space.factor_dims:
            object.__setattr__(self, "V", HermitianOperator(self.V.entries, self.space))

    @property
    def d_S(self) -> int:
        return self.H_S.dim

    @property
    def d_B(self) -> int:
        return self.H_B.dim

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace((self.d_S, self.d_B))

    def with_coupling_scale(self, s: float) -> "MachineSpec":
        return MachineSpec(self.H_S, self.H_B, s * self.V, self.beta)


def _check_system_op(spec: MachineSpec, H_S: HermitianOperator):
    if H_S.dim != spec.d_S:
        raise DimensionError(
            f"system Hamiltonian has dimension {H_S.dim}, machine has d_S = {spec.d_S}"
        )


def assemble_H_SB(spec: MachineSpec, H_S: HermitianOperator, coupling_on: bool = True) -> HermitianOperator:
    _check_system_op(spec, H_S)
    space = spec.space
    h = tensor_embed(H_S, space, 0).entries + tensor_embed(spec.H_B, space, 1).entries
    if coupling_on:
        h = h + spec.V.entries
    return HermitianOperator(h, space)


def thermalise(spec: MachineSpec, H_S: HermitianOperator, coupling_on: bool = True) -> DensityMatrix:
    if not coupling_on:
        raise ProtocolError("thermalisation needs the system-bath coupling switched on")
    return gibbs_state(assemble_H_SB(spec, H_S, True), spec.beta)


def quench_work(rho_SB: DensityMatrix, H_before: HermitianOperator, H_after: HermitianOperator) -> float:
    if not (rho_SB.dim == H_before.dim == H_after.dim):
        raise DimensionError(
            f"dimension mismatch: state {rho_SB.dim}, H_before {H_before.dim}, "
            f"H_after {H_after.dim}"
        )
    diff = H_before.entries - H_after.entries
    return float(np.real(np.vdot(rho_SB.entries.conj().T, diff)))


@dataclass(frozen=True)
class Quench:
    new_H_S: HermitianOperator
    coupling_on: bool = True


@dataclass(frozen=True)
class Thermalise:
    pass


ProtocolStep = Union[Quench, Thermalise]


def _same_op(a: HermitianOperator, b: HermitianOperator, tol: float = CYCLIC_TOL) -> bool:
    return a.dim == b.dim and float(np.max(np.abs(a.entries - b.entries), initial=0.0)) <= tol


@dataclass(frozen=True)
class Protocol:
    """Ordered quench/thermalise steps starting (coupled) from ``initial_H_S``."""

    steps: tuple[ProtocolStep, ...]
    initial_H_S: HermitianOperator

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for s in self.steps:
            if not isinstance(s, (Quench, Thermalise)):
                raise ProtocolError(f"unknown protocol step {s!r}")

    def hamiltonian_list(self) -> list[tuple[HermitianOperator, bool]]:
        """(H_S, coupling) at positions 0..n, one entry per quench plus the start."""
        out = [(self.initial_H_S, True)]
        for s in self.steps:
            if isinstance(s, Quench):
                out.append((s.new_H_S, s.coupling_on))
        return out

    def is_cyclic(self) -> bool:
        h_final, on_final = self.hamiltonian_list()[-1]
        return on_final and _same_op(h_final, self.initial_H_S)

    @property
    def n_quenches(self) -> int:
        return sum(isinstance(s, Quench) for s in self.steps)

    def __len__(self):
        return len(self.steps)


@dataclass
class WorkLedger:
    per_step_work: list[float] = field(default_factory=list)
    per_step_energy_SB: list[float] = field(default_factory=list)
    heat: float = 0.0

    @property
    def total_work(self) -> float:
        return float(np.sum(self.per_step_work)) if self.per_step_work else 0.0


def run_protocol(spec: MachineSpec, protocol: Protocol, rho_SB_initial: DensityMatrix):
    """Fold the protocol over the initial state.

    Returns ``(ledger, final_state)``.  ``ledger.heat`` collects the SB energy
    change caused by thermalisations.
    """
    if rho_SB_initial.dim != spec.space.total_dim:
        raise DimensionError(
            f"initial state has dimension {rho_SB_initial.dim}, machine needs "
            f"{spec.space.total_dim}"
        )
    if not protocol.is_cyclic():
        raise ProtocolError("protocol must return to the initial coupled Hamiltonian")
    _check_system_op(spec, protocol.initial_H_S)

    ledger = WorkLedger()
    rho = rho_SB_initial
    h_s, on = protocol.initial_H_S, True
    H = assemble_H_SB(spec, h_s, on)
    for k, step in enumerate(protocol.steps):
        if isinstance(step, Quench):
            H_new = assemble_H_SB(spec, step.new_H_S, step.coupling_on)
            ledger.per_step_work.append(quench_work(rho, H, H_new))
            h_s, on, H = step.new_H_S, step.coupling_on, H_new
        else:
            if not on:
                raise ProtocolError(f"step {k}: thermalisation with the coupling switched off")
            e_before = H.expectation(rho)
            rho = gibbs_state(H, spec.beta)
            ledger.per_step_work.append(0.0)
            ledger.heat += H.expectation(rho) - e_before
        ledger.per_step_energy_SB.append(H.expectation(rho))
    return ledger, rho


def _proof_form_quenches(protocol: Protocol) -> list[Quench]:
    """Quenches of a protocol shaped Q (T Q)* [T]; raises otherwise."""
    steps = list(protocol.steps)
    if not steps:
        return []
    if steps and isinstance(steps[-1], Thermalise) and len(steps) > 1:
        steps = steps[:-1]
    if not isinstance(steps[0], Quench):
        raise ProtocolError("proof form needs the protocol to open with a quench")
    quenches = [steps[0]]
    rest = steps[1:]
    if len(rest) % 2:
        raise ProtocolError("proof form alternates thermalise/quench after the first quench")
    for t, q in zip(rest[::2], rest[1::2]):
        if not (isinstance(t, Thermalise) and isinstance(q, Quench)):
            raise ProtocolError(
                "proof form requires every quench after the first to follow a thermalisation"
            )
        quenches.append(q)
    return quenches


@dataclass(frozen=True)
class WorkDecomposition:
    F_initial: float  # F(rho~, H0)
    F_eq_initial: float  # F(omega(H0), H0)
    F_first: float  # F(rho~, H1)
    F_eq_first: float  # F(omega(H1), H1)
    dissipation_sum: float
    relative_entropies: tuple[float, ...]

    @property
    def free_energy_terms(self) -> tuple[float, float, float, float]:
        return (self.F_initial, self.F_eq_initial, self.F_first, self.F_eq_first)

    @property
    def total_work(self) -> float:
        return (
            (self.F_initial - self.F_eq_initial)
            - (self.F_first - self.F_eq_first)
            - self.dissipation_sum
        )


def exact_work_decomposition(spec: MachineSpec, protocol: Protocol, rho_SB_initial: DensityMatrix) -> WorkDecomposition:
    """Free-energy form of the work of a proof-form protocol.

    The dissipation is beta^-1 * sum_i S(omega_i || omega_{i+1}) over the
    Hamiltonians visited after the first quench, closing on H0.
    """
    if not protocol.is_cyclic():
        raise ProtocolError("protocol must return to the initial coupled Hamiltonian")
    quenches = _proof_form_quenches(protocol)
    beta = spec.beta
    H0 = assemble_H_SB(spec, protocol.initial_H_S, True)
    omega0 = gibbs_state(H0, beta)
    F0 = free_energy(rho_SB_initial, H0, beta)
    F0_eq = free_energy(omega0, H0, beta)
    if not quenches:
        return WorkDecomposition(F0, F0_eq, F0, F0_eq, 0.0, ())
    hams = [assemble_H_SB(spec, q.new_H_S, q.coupling_on) for q in quenches]
    for q, h in zip(quenches[:-1], hams[:-1]):
        if not q.coupling_on:
            raise ProtocolError("a thermalised Hamiltonian has the coupling switched off")
    H1 = hams[0]
    # the Gibbs sequence closes on the last quench target, which is H0
    closing = hams[:-1] + [H0]
    rel = tuple(gibbs_relative_entropy(closing[i], closing[i + 1], beta) for i in range(len(hams) - 1))
    omega1 = gibbs_state(H1, beta)
    return WorkDecomposition(
        F0,
        F0_eq,
        free_energy(rho_SB_initial, H1, beta),
        free_energy(omega1, H1, beta),
        float(np.sum(rel)) / beta if rel else 0.0,
        rel,
    )


@dataclass(frozen=True)
class EnergyLedger:
    delta_E_SB: float
    delta_S_SB: float
    heat: float
    clausius_slack: float


def heat_energy_ledger(
    spec: MachineSpec,
    ledger: WorkLedger,
    rho_initial: DensityMatrix,
    rho_final: DensityMatrix,
    H_initial: HermitianOperator,
    H_final: HermitianOperator,
) -> EnergyLedger:
    """Energy, entropy and Clausius slack beta^-1 dS - dQ with dQ = W + dE_SB."""
    dE = H_final.expectation(rho_final) - H_initial.expectation(rho_initial)
    dS = von_neumann_entropy(rho_final) - von_neumann_entropy(rho_initial)
    heat = ledger.total_work + dE
    return EnergyLedger(dE, dS, heat, dS / spec.beta - heat)


def reverse_protocol(protocol: Protocol) -> Protocol:
    """Reverse the Hamiltonian list and mirror where thermalisations sit.

    Thermalisations recorded while at position i (after the i-th quench) move
    to position n - i of the reversed list.
    """
    hams = protocol.hamiltonian_list()
    n = len(hams) - 1
    therm_at = [0] * (n + 1)
    pos = 0
    for s in protocol.steps:
        if isinstance(s, Quench):
            pos += 1
        else:
            therm_at[pos] += 1
    steps: list[ProtocolStep] = [Thermalise()] * therm_at[n]
    for p in range(1, n + 1):
        h, on = hams[n - p]
        steps.append(Quench(h, on))
        steps.extend([Thermalise()] * therm_at[n - p])
    return Protocol(tuple(steps), hams[n][0])


def protocol_from_hamiltonians(
    initial_H_S: HermitianOperator,
    targets: Sequence[HermitianOperator],
    thermalise_after: Sequence[bool] | None = None,
) -> Protocol:
    """Quench through ``targets`` (all coupled), thermalising where flagged."""
    if thermalise_after is None:
        thermalise_after = [True] * (len(targets) - 1) + [False]
    steps: list[ProtocolStep] = []
    for h, t in zip(targets, thermalise_after):
        steps.append(Quench(h, True))
        if t:
            steps.append(Thermalise())
    return Protocol(tuple(steps), initial_H_S)
