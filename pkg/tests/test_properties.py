import numpy as np
from hypothesis import given, settings, strategies as st

from strongwork import config as C
from strongwork.bounds import objective, theorem1_bound
from strongwork.embedding import BatteryLadder, build_quench_unitary
from strongwork.kernels import shift_accumulate
from strongwork.machine import MachineSpec, exact_work_decomposition, run_protocol
from strongwork.operators import DensityMatrix, HermitianOperator, partial_trace
from strongwork.thermo import gibbs_state, relative_entropy

from conftest import random_machine, random_state

seeds = st.integers(min_value=0, max_value=2**32 - 1)
betas = st.floats(min_value=0.1, max_value=5.0)
dims = st.integers(min_value=2, max_value=4)

fast = settings(max_examples=40, deadline=None)
slow = settings(max_examples=15, deadline=None)


@fast
@given(seeds, dims, betas)
def test_gibbs_state_is_a_state_commuting_with_h(seed, d, beta):
    H = HermitianOperator(C.random_hermitian(np.random.default_rng(seed), d, 3.0))
    omega = gibbs_state(H, beta)
    assert abs(np.trace(omega.entries) - 1) < 1e-12
    assert np.linalg.eigvalsh(omega.entries).min() > -1e-14
    np.testing.assert_allclose(H.entries @ omega.entries, omega.entries @ H.entries, atol=1e-12)


@fast
@given(seeds, dims)
def test_klein_inequality(seed, d):
    rng = np.random.default_rng(seed)
    a, b = (DensityMatrix(C.random_density(rng, d)) for _ in range(2))
    assert relative_entropy(a, b) >= 0
    assert relative_entropy(a, a) < 1e-10


@fast
@given(seeds, dims, dims)
def test_partial_trace_preserves_trace_and_expectations(seed, d1, d2):
    rng = np.random.default_rng(seed)
    rho = DensityMatrix(C.random_density(rng, d1 * d2), (d1, d2))
    a = C.random_hermitian(rng, d1)
    red = partial_trace(rho, [0])
    assert abs(np.trace(red.entries) - 1) < 1e-12
    full = np.real(np.trace(rho.entries @ np.kron(a, np.eye(d2))))
    assert abs(full - np.real(np.trace(red.entries @ a))) < 1e-12


@fast
@given(seeds, betas)
def test_objective_nonnegative(seed, beta):
    rng = np.random.default_rng(seed)
    spec = random_machine(rng, 2, 2, beta=beta)
    rho = random_state(rng, spec)
    assert objective(spec, rho, HermitianOperator(C.random_hermitian(rng, 2, 3.0))) >= -1e-12


@slow
@given(seeds, betas, st.floats(min_value=0.0, max_value=2.0))
def test_random_protocols_respect_the_bound(seed, beta, coupling):
    rng = np.random.default_rng(seed)
    spec = random_machine(rng, 2, 2, coupling, beta)
    rho = random_state(rng, spec)
    bound = theorem1_bound(spec, rho).bound
    for _ in range(5):
        w = run_protocol(spec, C.random_protocol(rng, spec, 6), rho)[0].total_work
        assert w <= bound + 1e-9


@slow
@given(seeds, st.floats(min_value=-5, max_value=5))
def test_bound_ignores_energy_reference(seed, shift):
    rng = np.random.default_rng(seed)
    spec = random_machine(rng, 2, 2)
    rho = random_state(rng, spec)
    shifted = MachineSpec(spec.H_S.shifted(shift), spec.H_B, spec.V, spec.beta)
    assert abs(theorem1_bound(spec, rho).bound - theorem1_bound(shifted, rho).bound) < 1e-8


@fast
@given(seeds, st.integers(min_value=1, max_value=6), st.booleans())
def test_decomposition_identity(seed, n_quenches, final_therm):
    rng = np.random.default_rng(seed)
    spec = random_machine(rng, 2, 2, float(rng.uniform(0, 2)), float(rng.uniform(0.2, 4)))
    rho = random_state(rng, spec)
    proto = C.proof_form_protocol(rng, spec, n_quenches, 1.5, final_therm)
    direct = run_protocol(spec, proto, rho)[0].total_work
    assert abs(exact_work_decomposition(spec, proto, rho).total_work - direct) < 1e-9


@fast
@given(seeds, dims, st.integers(min_value=40, max_value=120))
def test_quench_action_is_norm_preserving(seed, d, n_levels):
    rng = np.random.default_rng(seed)
    H0, H1 = (HermitianOperator(C.random_hermitian(rng, d, 2.0)) for _ in range(2))
    U = build_quench_unitary(BatteryLadder(0.5, n_levels), H0, H1)
    phi = rng.normal(size=(d, n_levels, 3)) + 1j * rng.normal(size=(d, n_levels, 3))
    out = shift_accumulate(U.overlaps, U.shifts, phi)
    np.testing.assert_allclose(np.linalg.norm(out, axis=(0, 1)), np.linalg.norm(phi, axis=(0, 1)), rtol=1e-12)


@fast
@given(seeds, st.integers(min_value=0, max_value=2**64 - 1), betas)
def test_config_roundtrip(seed, cfg_seed, beta):
    rng = np.random.default_rng(seed)
    cfg = C.ExperimentConfig(
        seed=cfg_seed, beta=beta,
        machine={"generator": "explicit", "H_S": C.matrix_to_pairs(C.random_hermitian(rng, 2)),
                 "H_B": C.matrix_to_pairs(C.random_hermitian(rng, 2)),
                 "V": C.matrix_to_pairs(C.random_hermitian(rng, 4))},
        sweep={"param": "s", "values": [float(x) for x in rng.uniform(size=3)]},
    )
    assert C.parse(C.render(cfg)) == cfg
