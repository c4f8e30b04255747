"""Explicit battery embedding of quenches and thermalisations.

Tensor order is R (x) W (x) Q: the work-medium R, a cyclic equally spaced
battery ladder W, and a control qubit Q.  Flat index = (r * N_W + w) * 2 + q.

Spectra are snapped to the battery grid: an eigenvalue E becomes n * delta
with n = round(E / delta).  A quench from H0 to H1 then moves the battery by
m_ij = n_i(H0) - n_j(H1) levels when R jumps from eigenvector i of H0 to
eigenvector j of H1.  All battery arithmetic is integer, so circulant
structure (and hence commutation with translations) is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .kernels import shift_accumulate, shifted_overlaps
from .machine import (
    MachineSpec,
    Protocol,
    ProtocolError,
    Quench,
    WorkLedger,
    assemble_H_SB,
    run_protocol,
)
from .operators import (
    CompositeSpace,
    DensityMatrix,
    DimensionError,
    HermitianOperator,
    UnitaryOperator,
    trace_distance,
)
from .thermo import gibbs_state

DENSE_BUDGET = 4096
GUARD_MASS = 1e-14


class GuardBandError(ValueError):
    """Battery support would cross the cyclic seam; carries an N_W estimate."""

    def __init__(self, message: str, required_levels: int):
        super().__init__(f"{message}; need roughly N_W >= {required_levels}")
        self.required_levels = required_levels


@dataclass(frozen=True)
class BatteryLadder:
    spacing: float
    n_levels: int
    w0: float = 0.0

    def __post_init__(self):
        if not self.spacing > 0 or not math.isfinite(self.spacing):
            raise ValueError(f"ladder spacing must be positive, got {self.spacing}")
        if int(self.n_levels) < 2:
            raise ValueError(f"ladder needs at least 2 levels, got {self.n_levels}")
        object.__setattr__(self, "n_levels", int(self.n_levels))

    @property
    def energies(self) -> np.ndarray:
        return self.w0 + self.spacing * np.arange(self.n_levels)

    def hamiltonian(self) -> HermitianOperator:
        return HermitianOperator.diag(self.energies)

    def grid_index(self, energy: float) -> tuple[int, float]:
        """Nearest grid multiple m (energy ~ m * spacing) and the residual."""
        m = int(round(energy / self.spacing))
        return m, abs(energy - m * self.spacing)


def translation_operator(ladder: BatteryLadder, shift_energy: float) -> tuple[UnitaryOperator, float]:
    """Cyclic permutation |w_k> -> |w_{k+m}> with m the rounded shift."""
    m, residual = ladder.grid_index(shift_energy)
    n = ladder.n_levels
    perm = np.zeros((n, n))
    perm[(np.arange(n) + m) % n, np.arange(n)] = 1.0
    return UnitaryOperator(perm), residual


@dataclass(frozen=True)
class FlatBatteryState:
    ladder: BatteryLadder
    window_start: int
    window_levels: int

    def __post_init__(self):
        n = self.ladder.n_levels
        if self.window_levels < 1 or self.window_start < 0 or self.window_start + self.window_levels > n:
            raise ValueError(
                f"window [{self.window_start}, {self.window_start + self.window_levels}) "
                f"does not fit a ladder of {n} levels"
            )

    @classmethod
    def centred(cls, ladder: BatteryLadder, window_levels: int) -> "FlatBatteryState":
        return cls(ladder, (ladder.n_levels - window_levels) // 2, window_levels)

    @property
    def width(self) -> float:
        return self.window_levels * self.ladder.spacing

    def amplitudes(self) -> np.ndarray:
        psi = np.zeros(self.ladder.n_levels, dtype=complex)
        psi[self.window_start : self.window_start + self.window_levels] = 1 / math.sqrt(self.window_levels)
        return psi

    def density(self) -> DensityMatrix:
        return DensityMatrix.pure(self.amplitudes())

    def mean_energy(self) -> float:
        return float(np.mean(self.ladder.energies[self.window_start : self.window_start + self.window_levels]))

    def check_guard(self, max_shift: int):
        n = self.ladder.n_levels
        lo, hi = self.window_start, self.window_start + self.window_levels - 1
        if lo < max_shift or hi > n - 1 - max_shift:
            raise GuardBandError(
                f"flat window [{lo}, {hi}] is within {max_shift} levels of the seam",
                self.window_levels + 2 * max_shift,
            )


def snap_spectrum(H: HermitianOperator, spacing: float, offset: float = 0.0):
    """Eigenvectors, integer grid levels and max residual |E - (n * spacing + offset)|."""
    e, v = np.linalg.eigh(H.entries)
    n = np.rint((e - offset) / spacing).astype(np.int64)
    return v, n, float(np.max(np.abs(e - offset - n * spacing)))


def grid_alignment(H: HermitianOperator, spacing: float) -> float:
    """Offset in [0, spacing) minimising the largest snapping residual of H's spectrum.

    A constant offset per Hamiltonian only re-labels where the grid sits; over
    a cyclic protocol the offsets cancel in the total work.
    """
    e = np.linalg.eigvalsh(H.entries)
    best, best_c = math.inf, 0.0
    # the optimum places some eigenvalue, or a midpoint between two, on the grid
    cands = np.concatenate([e % spacing, ((e[:, None] + e[None, :]) / 2 % spacing).ravel(),
                            ((e[:, None] + e[None, :] + spacing) / 2 % spacing).ravel()])
    for c in np.unique(np.round(cands, 15)):
        r = np.abs((e - c) / spacing - np.rint((e - c) / spacing)).max()
        if r < best - 1e-15:
            best, best_c = r, float(c)
    return best_c


@dataclass(frozen=True)
class QuenchUnitary:
    """Energy-conserving, translation-invariant unitary realising H0 -> H1 on R."""

    ladder: BatteryLadder
    H_R_before: HermitianOperator
    H_R_after: HermitianOperator
    basis_before: np.ndarray
    basis_after: np.ndarray
    levels_before: np.ndarray
    levels_after: np.ndarray
    overlaps: np.ndarray  # C[j, i] = <j(1)|i(0)>
    shifts: np.ndarray  # m[i, j] = n_i(0) - n_j(1)
    rounding_residual: float
    offsets: tuple[float, float] = (0.0, 0.0)

    @property
    def d_R(self) -> int:
        return self.H_R_before.dim

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace((self.d_R, self.ladder.n_levels, 2))

    @property
    def max_shift(self) -> int:
        """Largest |m_ij| over transitions that carry amplitude (|C_ji|^2 > GUARD_MASS)."""
        active = (np.abs(self.overlaps.T) ** 2) > GUARD_MASS
        if not active.any():
            return 0
        return int(np.max(np.abs(self.shifts[active])))

    def snapped_before(self) -> HermitianOperator:
        v = self.basis_before
        e = self.levels_before * self.ladder.spacing + self.offsets[0]
        return HermitianOperator((v * e) @ v.conj().T)

    def snapped_after(self) -> HermitianOperator:
        v = self.basis_after
        e = self.levels_after * self.ladder.spacing + self.offsets[1]
        return HermitianOperator((v * e) @ v.conj().T)

    def _on_block(self) -> np.ndarray:
        """R (x) W block mapping Q=0 to Q=1, in the computational basis."""
        d, n = self.d_R, self.ladder.n_levels
        blk = np.zeros((d, n, d, n), dtype=complex)
        w = np.arange(n)
        for i in range(d):
            for j in range(d):
                outer = np.outer(self.basis_after[:, j], self.basis_before[:, i].conj()) * self.overlaps[j, i]
                tgt = (w + self.shifts[i, j]) % n
                blk[:, tgt, :, w] += outer[None, :, :]
        return blk.reshape(d * n, d * n)

    def dense(self) -> np.ndarray:
        dim = self.space.total_dim
        if dim > DENSE_BUDGET:
            raise DimensionError(f"dense unitary of dimension {dim} exceeds budget {DENSE_BUDGET}")
        on = self._on_block()
        u = np.zeros((on.shape[0], 2, on.shape[0], 2), dtype=complex)
        u[:, 1, :, 0] = on
        u[:, 0, :, 1] = on.conj().T
        return u.reshape(dim, dim)

    def unitary(self) -> UnitaryOperator:
        return UnitaryOperator(self.dense(), self.space)

    def unitarity_error(self) -> float:
        on = self._on_block()
        return float(np.max(np.abs(on.conj().T @ on - np.eye(on.shape[0]))))

    def total_hamiltonian(self) -> np.ndarray:
        """H0~ (x) |0><0| + H1~ (x) |1><1| + H_W on R (x) W (x) Q (snapped)."""
        d, n = self.d_R, self.ladder.n_levels
        hw = np.diag(self.ladder.energies)
        p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        h = (
            np.kron(np.kron(self.snapped_before().entries, np.eye(n)), p0)
            + np.kron(np.kron(self.snapped_after().entries, np.eye(n)), p1)
            + np.kron(np.kron(np.eye(d), hw), np.eye(2))
        )
        return h

    def guard_projector_diag(self) -> np.ndarray:
        """0/1 mask over the flat index selecting battery levels at least max_shift from the seam."""
        d, n, g = self.d_R, self.ladder.n_levels, self.max_shift
        mask_w = np.zeros(n)
        mask_w[g : n - g] = 1.0
        return np.kron(np.kron(np.ones(d), mask_w), np.ones(2))

    def commutator_defect_on_guard(self) -> float:
        u, h = self.dense(), self.total_hamiltonian()
        p = self.guard_projector_diag()
        return float(np.max(np.abs((h @ u - u @ h) * p[None, :])))

    def commutes_with_translation(self, m: int) -> bool:
        """Bitwise check that U commutes with I (x) Gamma(m) (x) I."""
        d, n = self.d_R, self.ladder.n_levels
        u = self.dense().reshape(d, n, 2, d, n, 2)
        # (G U)[.., w, ..] = U[.., w - m, ..];  (U G)[.., w'] = U[.., w' + m]
        left = np.roll(u, m, axis=1)
        right = np.roll(u, -m, axis=4)
        return bool(np.array_equal(left, right))


def build_quench_unitary(
    ladder: BatteryLadder,
    H_R_before: HermitianOperator,
    H_R_after: HermitianOperator,
    offsets: tuple[float, float] = (0.0, 0.0),
) -> QuenchUnitary:
    """Controlled unitary moving the battery by the snapped gaps E_i(0) - E_j(1).

    ``offsets`` place each Hamiltonian's grid; the battery then receives
    Delta_ij - (offset_before - offset_after) per transition.
    """
    if H_R_before.dim != H_R_after.dim:
        raise DimensionError(f"Hamiltonians differ in dimension: {H_R_before.dim} vs {H_R_after.dim}")
    c0, c1 = float(offsets[0]), float(offsets[1])
    v0, n0, _ = snap_spectrum(H_R_before, ladder.spacing, c0)
    v1, n1, _ = snap_spectrum(H_R_after, ladder.spacing, c1)
    shifts = n0[:, None] - n1[None, :]
    e0 = np.linalg.eigvalsh(H_R_before.entries) - c0
    e1 = np.linalg.eigvalsh(H_R_after.entries) - c1
    gaps = e0[:, None] - e1[None, :]
    residual = float(np.max(np.abs(gaps - shifts * ladder.spacing)))
    U = QuenchUnitary(
        ladder, H_R_before, H_R_after, v0, v1, n0, n1, v1.conj().T @ v0, shifts, residual, (c0, c1)
    )
    g = U.max_shift
    if 2 * g + 1 > ladder.n_levels:
        raise GuardBandError(
            f"spectral range needs shifts of up to {g} levels on a ladder of {ladder.n_levels}",
            4 * g + 1,
        )
    return U


def condition_epsilon(U: QuenchUnitary, window_levels: int) -> float:
    """max |m_ij - m_i'j'| / N: spread of battery shifts relative to the window."""
    m = U.shifts.ravel()
    return float((m.max() - m.min()) / window_levels)


@dataclass(frozen=True)
class KMatrix:
    values: np.ndarray  # indexed (i, i', j, j')
    closed_form: np.ndarray
    epsilon: float


def k_matrix(battery: FlatBatteryState, H_R_before: HermitianOperator, H_R_after: HermitianOperator) -> KMatrix:
    """Overlaps <Psi| Gamma(m_ij - m_i'j') |Psi> for the flat window."""
    U = build_quench_unitary(battery.ladder, H_R_before, H_R_after)
    m = U.shifts
    k = m[:, None, :, None] - m[None, :, None, :]
    vals = shifted_overlaps(battery.amplitudes(), k)
    n = battery.window_levels
    closed = np.clip(n - np.abs(k), 0, None) / n
    return KMatrix(vals, closed, float(np.max(np.abs(vals - 1))))


@dataclass
class QuenchOutcome:
    rho_R_after: DensityMatrix
    work: float
    amplitudes: np.ndarray  # joint (d_R, N_W, batch) amplitudes in the H1 eigenbasis
    quench: QuenchUnitary

    @cached_property
    def rho_W_after(self) -> DensityMatrix:
        """Reduced battery state (N_W x N_W); built on first access."""
        out = self.amplitudes
        return DensityMatrix(np.einsum("jwb,jvb->wv", out, out.conj()))

    def __iter__(self):
        return iter((self.rho_R_after, self.rho_W_after, self.work))


def _purify_columns(rho: DensityMatrix) -> np.ndarray:
    """Columns sqrt(p_k) |phi_k> with rho = sum_k p_k |phi_k><phi_k|."""
    p, v = np.linalg.eigh(rho.entries)
    keep = p > 0
    return v[:, keep] * np.sqrt(p[keep])


def _battery_energy(ladder: BatteryLadder, amps: np.ndarray) -> float:
    pw = np.sum(np.abs(amps) ** 2, axis=(0, 2))
    return float(pw @ ladder.energies)


def _check_support(U: QuenchUnitary, pw: np.ndarray, remaining: int = 1):
    n, g = U.ladder.n_levels, U.max_shift
    idx = np.nonzero(pw > GUARD_MASS)[0]
    if idx.size == 0:
        return
    lo, hi = int(idx[0]), int(idx[-1])
    if lo < g or hi > n - 1 - g:
        raise GuardBandError(
            f"battery support [{lo}, {hi}] is within {g} levels of the seam",
            (hi - lo + 1) + 2 * g * max(remaining, 1),
        )


def _quench_amplitudes(U: QuenchUnitary, rho_R: DensityMatrix, psi_W: np.ndarray):
    if rho_R.dim != U.d_R:
        raise DimensionError(f"state of dimension {rho_R.dim} on R of dimension {U.d_R}")
    cols = U.basis_before.conj().T @ _purify_columns(rho_R)  # (d_R, batch) in H0 basis
    phi = cols[:, None, :] * psi_W[None, :, None]
    _check_support(U, np.abs(psi_W) ** 2)
    before = _battery_energy(U.ladder, phi)
    out = shift_accumulate(U.overlaps, U.shifts, phi)
    return out, before


def _reduce(U: QuenchUnitary, out: np.ndarray) -> DensityMatrix:
    """Reduced state of R, expressed in the computational basis."""
    rho_R_eig = np.einsum("jwb,kwb->jk", out, out.conj())
    v1 = U.basis_after
    return DensityMatrix(v1 @ rho_R_eig @ v1.conj().T)


def apply_quench(U: QuenchUnitary, rho_R: DensityMatrix, battery: FlatBatteryState) -> QuenchOutcome:
    """Evolve rho_R (x) |Psi><Psi| (x) |0><0| with U; work is the battery energy gain."""
    if battery.ladder != U.ladder:
        raise ValueError("battery and unitary use different ladders")
    battery.check_guard(U.max_shift)
    out, before = _quench_amplitudes(U, rho_R, battery.amplitudes())
    return QuenchOutcome(_reduce(U, out), _battery_energy(U.ladder, out) - before, out, U)


def classical_battery_quench(U: QuenchUnitary, rho_R: DensityMatrix, level_index: int):
    """Quench with the battery in the energy eigenstate |w_level>; returns (rho_R_after, work)."""
    psi = np.zeros(U.ladder.n_levels, dtype=complex)
    psi[int(level_index)] = 1.0
    out, before = _quench_amplitudes(U, rho_R, psi)
    rho_R_after = _reduce(U, out)
    return rho_R_after, _battery_energy(U.ladder, out) - before


def snapped_quench_work(U: QuenchUnitary, rho_R: DensityMatrix) -> float:
    """Tr((H0~ - H1~) rho) with both Hamiltonians snapped to the grid."""
    return float(np.real(np.vdot(rho_R.entries.conj().T, U.snapped_before().entries - U.snapped_after().entries)))


def dephase(rho: DensityMatrix, H_SB: HermitianOperator, H_W: HermitianOperator) -> DensityMatrix:
    """Drop every off-diagonal element in the product eigenbasis of H_SB and H_W.

    Degenerate blocks are dephased too, in the basis returned by the eigensolver.
    """
    d_r, d_w = H_SB.dim, H_W.dim
    if rho.dim != d_r * d_w:
        raise DimensionError(f"state of dimension {rho.dim} does not match {d_r} x {d_w}")
    _, v_r = np.linalg.eigh(H_SB.entries)
    _, v_w = np.linalg.eigh(H_W.entries)
    v = np.kron(v_r, v_w)
    p = np.real(np.sum(v.conj() * (rho.entries @ v), axis=0))
    return DensityMatrix((v * p) @ v.conj().T, (d_r, d_w))


@dataclass
class CoherenceReport:
    time: float
    overlaps: np.ndarray  # <Psi(t)| Gamma(k) |Psi(t)> over the second quench's relative shifts
    shift_differences: np.ndarray
    disturbance: float
    rho_R_evolved: DensityMatrix


def evolve_battery_and_diagnose(
    outcome: QuenchOutcome,
    t: float,
    H_R_second: HermitianOperator,
    battery: FlatBatteryState | None = None,
) -> CoherenceReport:
    """Free evolution under H1~ + H_W for time t, then a second quench H1 -> H2.

    The disturbance is the trace distance between R after the second quench
    and R just before it.
    """
    U1 = outcome.quench
    lad = U1.ladder
    phase_R = np.exp(-1j * U1.levels_after * lad.spacing * t)
    phase_W = np.exp(-1j * lad.energies * t)
    amps = outcome.amplitudes * phase_R[:, None, None] * phase_W[None, :, None]
    rho_t = _reduce(U1, amps)

    U2 = build_quench_unitary(lad, U1.H_R_after, H_R_second)
    # re-express the joint state in the eigenbasis U2 expects (that of H1, same as U1's output basis)
    rot = U2.basis_before.conj().T @ U1.basis_after
    phi = np.einsum("ij,jwb->iwb", rot, amps)
    _check_support(U2, np.sum(np.abs(phi) ** 2, axis=(0, 2)))
    out2 = shift_accumulate(U2.overlaps, U2.shifts, phi)
    rho_after = _reduce(U2, out2)

    k = U2.shifts[:, None, :, None] - U2.shifts[None, :, None, :]
    ks = np.unique(k.ravel())
    psi = (battery.amplitudes() if battery is not None else _dominant_battery_vector(outcome)) * phase_W
    ov = shifted_overlaps(psi, ks)
    return CoherenceReport(float(t), ov, ks, trace_distance(rho_after, rho_t), rho_t)


def _dominant_battery_vector(outcome: QuenchOutcome) -> np.ndarray:
    w, v = np.linalg.eigh(outcome.rho_W_after.entries)
    return v[:, -1]


def second_quench_disturbance_sweep(
    U1: QuenchUnitary,
    rho_R: DensityMatrix,
    battery: FlatBatteryState,
    H_R_second: HermitianOperator,
    times,
) -> list[CoherenceReport]:
    outcome = apply_quench(U1, rho_R, battery)
    return [evolve_battery_and_diagnose(outcome, t, H_R_second, battery) for t in times]


# --- end-to-end protocol on R (x) W -------------------------------------------------


class RWState:
    """Dense joint state of R = S (x) B and the battery, in the computational basis."""

    def __init__(self, matrix: np.ndarray, d_R: int, ladder: BatteryLadder):
        self.d_R = d_R
        self.ladder = ladder
        self.matrix = matrix

    @classmethod
    def product(cls, rho_R: DensityMatrix, psi_W: np.ndarray, ladder: BatteryLadder) -> "RWState":
        return cls(np.kron(rho_R.entries, np.outer(psi_W, psi_W.conj())), rho_R.dim, ladder)

    def battery_populations(self) -> np.ndarray:
        n = self.ladder.n_levels
        t = self.matrix.reshape(self.d_R, n, self.d_R, n)
        return np.real(np.einsum("awaw->w", t))

    def battery_energy(self) -> float:
        return float(self.battery_populations() @ self.ladder.energies)

    def reduced_R(self) -> DensityMatrix:
        n = self.ladder.n_levels
        t = self.matrix.reshape(self.d_R, n, self.d_R, n)
        return DensityMatrix(np.einsum("awbw->ab", t))

    def reduced_W(self) -> np.ndarray:
        n = self.ladder.n_levels
        t = self.matrix.reshape(self.d_R, n, self.d_R, n)
        return np.einsum("awav->wv", t)

    def _apply_left(self, U: QuenchUnitary, m: np.ndarray) -> np.ndarray:
        n, d = self.ladder.n_levels, self.d_R
        phi = m.reshape(d, n, -1)
        phi = np.einsum("ia,awb->iwb", U.basis_before.conj().T, phi)
        out = shift_accumulate(U.overlaps, U.shifts, phi)
        out = np.einsum("aj,jwb->awb", U.basis_after, out)
        return out.reshape(d * n, -1)

    def quench(self, U: QuenchUnitary, remaining: int = 1) -> float:
        before = self.battery_energy()
        _check_support(U, self.battery_populations(), remaining)
        left = self._apply_left(U, self.matrix)
        full = self._apply_left(U, left.conj().T)
        self.matrix = 0.5 * (full + full.conj().T)
        return self.battery_energy() - before

    def thermalise(self, spec: MachineSpec, H_S: HermitianOperator):
        """Gibbs state on R, battery marginal kept, then product-basis dephasing.

        For a product input the dephasing factorises, so it is applied to each
        factor separately (identical to ``dephase`` on the joint state).
        """
        H = assemble_H_SB(spec, H_S, True)
        omega = gibbs_state(H, spec.beta)
        _, v = np.linalg.eigh(H.entries)
        p = np.real(np.sum(v.conj() * (omega.entries @ v), axis=0))
        omega_d = (v * p) @ v.conj().T
        self.matrix = np.kron(omega_d, np.diag(np.real(np.diag(self.reduced_W()))))


@dataclass
class PhysicalRunReport:
    physical: WorkLedger
    abstract: WorkLedger
    per_step_difference: list[float]
    rounding_residual: float
    epsilon: float
    battery_support: tuple[int, int] = (0, 0)
    notes: list[str] = field(default_factory=list)

    @property
    def relative_difference(self) -> float:
        a = self.abstract.total_work
        return abs(self.physical.total_work - a) / max(abs(a), 1e-300)


def physical_protocol_run(
    spec: MachineSpec,
    protocol: Protocol,
    rho_SB_initial: DensityMatrix,
    ladder: BatteryLadder,
    window_start: int,
    window_levels: int,
    *,
    align: bool = True,
) -> PhysicalRunReport:
    """Run a protocol with an explicit battery and compare with the abstract ledger.

    The first quench acts on the flat coherent battery; thermalisations replace
    R by the Gibbs state, keep the battery marginal and dephase in the product
    energy basis, so later quenches act on diagonal states.  With ``align``
    each Hamiltonian gets its own grid offset (see ``grid_alignment``); the
    per-step comparison adds back the offset difference, which cancels over
    the cycle.
    """
    d_R = spec.space.total_dim
    if d_R * ladder.n_levels > DENSE_BUDGET // 2:
        raise DimensionError(
            f"R (x) W of dimension {d_R * ladder.n_levels} exceeds the dense budget"
        )
    if not protocol.is_cyclic():
        raise ProtocolError("protocol must return to the initial coupled Hamiltonian")
    abstract, _ = run_protocol(spec, protocol, rho_SB_initial)
    battery = FlatBatteryState(ladder, window_start, window_levels)
    state = RWState.product(rho_SB_initial, battery.amplitudes(), ladder)
    physical = WorkLedger()

    def offset(H):
        return grid_alignment(H, ladder.spacing) if align else 0.0

    h_s, on = protocol.initial_H_S, True
    H = assemble_H_SB(spec, h_s, True)
    c = offset(H)
    residual, eps = 0.0, None
    corrected = []
    n_q, done = protocol.n_quenches, 0
    for k, step in enumerate(protocol.steps):
        if isinstance(step, Quench):
            H_new = assemble_H_SB(spec, step.new_H_S, step.coupling_on)
            c_new = offset(H_new)
            U = build_quench_unitary(ladder, H, H_new, (c, c_new))
            if eps is None:
                battery.check_guard(U.max_shift)
                eps = condition_epsilon(U, window_levels)
            residual = max(residual, U.rounding_residual)
            w = state.quench(U, n_q - done)
            physical.per_step_work.append(w)
            corrected.append(w + (c - c_new))
            done += 1
            h_s, on, H, c = step.new_H_S, step.coupling_on, H_new, c_new
        else:
            if not on:
                raise ProtocolError(f"step {k}: thermalisation with the coupling switched off")
            state.thermalise(spec, h_s)
            physical.per_step_work.append(0.0)
            corrected.append(0.0)
        physical.per_step_energy_SB.append(float(np.real(np.trace(state.reduced_R().entries @ H.entries))))
    diffs = [p - a for p, a in zip(corrected, abstract.per_step_work)]
    pw = state.battery_populations()
    idx = np.nonzero(pw > GUARD_MASS)[0]
    support = (int(idx[0]), int(idx[-1])) if idx.size else (0, 0)
    return PhysicalRunReport(physical, abstract, diffs, residual, eps or 0.0, support)
