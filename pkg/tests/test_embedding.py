import numpy as np
import pytest

from strongwork import config as C
from strongwork.bounds import build_optimal_protocol
from strongwork.embedding import (
    BatteryLadder,
    FlatBatteryState,
    GuardBandError,
    RWState,
    apply_quench,
    build_quench_unitary,
    classical_battery_quench,
    condition_epsilon,
    dephase,
    evolve_battery_and_diagnose,
    grid_alignment,
    k_matrix,
    physical_protocol_run,
    snap_spectrum,
    snapped_quench_work,
    translation_operator,
)
from strongwork.machine import MachineSpec, Protocol, ProtocolError, Quench
from strongwork.operators import DensityMatrix, HermitianOperator, trace_distance
from strongwork.thermo import gibbs_state


def grid_hamiltonian(rng, d, spacing, max_level=5):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return HermitianOperator((q * (rng.integers(0, max_level + 1, size=d) * spacing)) @ q.conj().T)


def test_ladder_validation():
    with pytest.raises(ValueError):
        BatteryLadder(0.0, 8)
    with pytest.raises(ValueError):
        BatteryLadder(1.0, 1)
    with pytest.raises(ValueError):
        FlatBatteryState(BatteryLadder(1.0, 8), 4, 6)


def test_translation_operator_shifts_levels():
    lad = BatteryLadder(0.5, 6)
    gamma, residual = translation_operator(lad, 1.1)
    assert residual == pytest.approx(0.1)
    e = np.zeros(6)
    e[5] = 1
    np.testing.assert_array_equal(gamma.entries @ e, np.eye(6)[1])  # 5 + 2 wraps to 1


def test_snapping_and_alignment(rng):
    H = HermitianOperator(C.random_hermitian(rng, 4, 3.0))
    _, _, raw = snap_spectrum(H, 0.5)
    c = grid_alignment(H, 0.5)
    _, _, aligned = snap_spectrum(H, 0.5, c)
    assert raw <= 0.25 + 1e-15
    assert aligned <= raw + 1e-15


def test_dense_unitary_conditions(rng):
    lad = BatteryLadder(0.75, 32)
    H0, H1 = (HermitianOperator(C.random_hermitian(rng, 2, 2.0)) for _ in range(2))
    U = build_quench_unitary(lad, H0, H1)
    assert U.unitarity_error() < 1e-12
    assert all(U.commutes_with_translation(m) for m in range(lad.n_levels))
    assert U.commutator_defect_on_guard() < 1e-10


def test_guard_band_rejections():
    lad = BatteryLadder(1.0, 16)
    U = build_quench_unitary(lad, HermitianOperator.diag([0, 1]), HermitianOperator.diag([0, 4]))
    with pytest.raises(GuardBandError) as err:
        apply_quench(U, DensityMatrix.pure([1, 1]), FlatBatteryState(lad, 0, 8))
    assert err.value.required_levels >= 8 + 2 * U.max_shift
    with pytest.raises(GuardBandError):
        build_quench_unitary(BatteryLadder(1.0, 6), HermitianOperator.diag([0, 0]), HermitianOperator.diag([0, 5]))


def test_inactive_transitions_do_not_widen_guard():
    # commuting Hamiltonians: only diagonal transitions carry amplitude
    lad = BatteryLadder(1.0, 16)
    U = build_quench_unitary(lad, HermitianOperator.diag([0, 9]), HermitianOperator.diag([1, 9]))
    assert U.max_shift == 1
    assert int(np.max(np.abs(U.shifts))) == 9  # the 0 -> 9 jump never happens


def test_classical_battery_records_exact_work(rng):
    spacing = 0.5
    lad = BatteryLadder(spacing, 64)
    H0, H1 = grid_hamiltonian(rng, 3, spacing), grid_hamiltonian(rng, 3, spacing)
    U = build_quench_unitary(lad, H0, H1)
    p = rng.dirichlet(np.ones(3))
    rho = DensityMatrix((U.basis_before * p) @ U.basis_before.conj().T)
    _, w = classical_battery_quench(U, rho, 32)
    assert w == pytest.approx(snapped_quench_work(U, rho), abs=1e-12)
    assert w == pytest.approx(float(np.real(np.trace(rho.entries @ (H0 - H1).entries))), abs=1e-12)


def test_flat_battery_work_error_and_disturbance_shrink_with_width(rng):
    lad = BatteryLadder(0.5, 512)
    H0, H1 = (HermitianOperator(C.random_hermitian(rng, 2, 2.0)) for _ in range(2))
    U = build_quench_unitary(lad, H0, H1)
    rho = DensityMatrix.pure([1, 1j])
    exact = snapped_quench_work(U, rho)
    norm = np.linalg.norm((U.snapped_before() - U.snapped_after()).entries, 2)
    errs, tds = [], []
    for N in (16, 64, 256):
        out = apply_quench(U, rho, FlatBatteryState.centred(lad, N))
        errs.append(abs(out.work - exact))
        tds.append(trace_distance(out.rho_R_after, rho))
        assert errs[-1] <= condition_epsilon(U, N) * norm
    assert errs[2] < errs[1] < errs[0]
    assert tds[2] < tds[1] < tds[0]


def test_battery_marginal_is_normalised(rng):
    lad = BatteryLadder(0.5, 64)
    U = build_quench_unitary(lad, *(HermitianOperator(C.random_hermitian(rng, 2)) for _ in range(2)))
    out = apply_quench(U, DensityMatrix(C.random_density(rng, 2)), FlatBatteryState.centred(lad, 16))
    assert np.trace(out.rho_W_after.entries).real == pytest.approx(1.0, abs=1e-12)
    rho_R, rho_W, work = out
    assert rho_W is out.rho_W_after and work == out.work


def test_k_matrix_matches_closed_form(rng):
    lad = BatteryLadder(0.5, 128)
    H0, H1 = (HermitianOperator(C.random_hermitian(rng, 3, 2.0)) for _ in range(2))
    km = k_matrix(FlatBatteryState.centred(lad, 40), H0, H1)
    np.testing.assert_allclose(km.values, km.closed_form, atol=1e-13)


def test_rw_state_quench_agrees_with_pure_evolution(rng):
    lad = BatteryLadder(0.5, 64)
    H0, H1 = (HermitianOperator(C.random_hermitian(rng, 2, 2.0)) for _ in range(2))
    U = build_quench_unitary(lad, H0, H1)
    rho = DensityMatrix(C.random_density(rng, 2))
    battery = FlatBatteryState.centred(lad, 16)
    out = apply_quench(U, rho, battery)
    state = RWState.product(rho, battery.amplitudes(), lad)
    w = state.quench(U)
    assert w == pytest.approx(out.work, abs=1e-12)
    np.testing.assert_allclose(state.reduced_R().entries, out.rho_R_after.entries, atol=1e-12)


def test_dephase_keeps_populations(rng):
    H_R = HermitianOperator(C.random_hermitian(rng, 2))
    H_W = HermitianOperator.diag([0.0, 1.0, 2.0])
    rho = DensityMatrix(C.random_density(rng, 6))
    out = dephase(rho, H_R, H_W)
    assert out.space.factor_dims == (2, 3)
    again = dephase(out, H_R, H_W)
    np.testing.assert_allclose(again.entries, out.entries, atol=1e-14)


def test_coherence_diagnostic_baseline_and_periodicity(rng):
    lad = BatteryLadder(0.25, 256)
    H0, H1, H2 = (HermitianOperator(C.random_hermitian(rng, 2, 2.0)) for _ in range(3))
    battery = FlatBatteryState.centred(lad, 64)
    outcome = apply_quench(build_quench_unitary(lad, H0, H1), DensityMatrix.pure([1, 1]), battery)
    base = evolve_battery_and_diagnose(outcome, 0.0, H2, battery)
    later = evolve_battery_and_diagnose(outcome, 3.7, H2, battery)
    # flat battery: overlap moduli (N - |k|)/N do not depend on time
    np.testing.assert_allclose(np.abs(later.overlaps), np.abs(base.overlaps), atol=1e-12)
    assert later.disturbance > base.disturbance


def _zz_machine():
    sz = np.diag([1.0, -1.0])
    spec = MachineSpec(HermitianOperator.diag([0, 2]), HermitianOperator.diag([0, 1]),
                       HermitianOperator(0.5 * np.kron(sz, sz), (2, 2)), 1.0)
    rho = DensityMatrix(np.kron(np.diag([0.1, 0.9]), gibbs_state(spec.H_B, 1.0).entries), spec.space)
    return spec, rho


def test_physical_run_tracks_abstract_protocol():
    spec, rho = _zz_machine()
    proto = build_optimal_protocol(spec, rho, 4)
    rep = physical_protocol_run(spec, proto, rho, BatteryLadder(0.05, 256), 120, 16)
    assert rep.relative_difference < 0.02
    assert len(rep.per_step_difference) == len(proto.steps)
    assert rep.physical.total_work == pytest.approx(sum(rep.physical.per_step_work))


def test_physical_run_rejects_open_protocol():
    spec, rho = _zz_machine()
    proto = Protocol((Quench(HermitianOperator.diag([0, 3])),), spec.H_S)
    with pytest.raises(ProtocolError):
        physical_protocol_run(spec, proto, rho, BatteryLadder(0.05, 256), 120, 16)
