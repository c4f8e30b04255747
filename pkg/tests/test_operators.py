import numpy as np
import pytest

from strongwork import config as C
from strongwork.operators import (
    CompositeSpace,
    DensityMatrix,
    DimensionError,
    HermitianOperator,
    InvalidStateError,
    NotHermitianError,
    UnitaryOperator,
    hermitian_function,
    partial_trace,
    tensor_embed,
    trace_distance,
)


def test_hermitian_rejects_and_names_offending_entry():
    with pytest.raises(NotHermitianError, match=r"\(0,1\)"):
        HermitianOperator([[0, 1], [0, 0]])


def test_hermitian_resymmetrises_roundoff():
    a = np.array([[1.0, 2.0 + 1e-14], [2.0, 3.0]])
    h = HermitianOperator(a)
    assert np.array_equal(h.entries, h.entries.conj().T)


def test_operators_are_immutable():
    h = HermitianOperator.diag([0, 1])
    with pytest.raises(AttributeError):
        h.entries = np.eye(2)
    with pytest.raises(ValueError):
        h.entries[0, 0] = 5.0


def test_space_mismatch():
    with pytest.raises(DimensionError):
        HermitianOperator(np.eye(4), (2, 3))
    with pytest.raises(DimensionError):
        HermitianOperator.diag([0, 1]) + HermitianOperator.diag([0, 1, 2])


def test_density_matrix_validation():
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(InvalidStateError):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(InvalidStateError):
        UnitaryOperator([[1, 1], [0, 1]])


def test_partial_trace_of_product(rng):
    a = DensityMatrix(C.random_density(rng, 2))
    b = DensityMatrix(C.random_density(rng, 3))
    ab = a.tensor(b)
    assert ab.space == CompositeSpace((2, 3))
    np.testing.assert_allclose(partial_trace(ab, [0]).entries, a.entries, atol=1e-14)
    np.testing.assert_allclose(partial_trace(ab, [1]).entries, b.entries, atol=1e-14)


def test_partial_trace_keeps_order_of_three_factors(rng):
    rhos = [DensityMatrix(C.random_density(rng, d)) for d in (2, 3, 2)]
    full = rhos[0].tensor(rhos[1]).tensor(rhos[2])
    red = partial_trace(full, [2, 0])
    np.testing.assert_allclose(red.entries, np.kron(rhos[0].entries, rhos[2].entries), atol=1e-14)


def test_tensor_embed_expectation(rng):
    op = HermitianOperator(C.random_hermitian(rng, 3))
    a = DensityMatrix(C.random_density(rng, 2))
    b = DensityMatrix(C.random_density(rng, 3))
    emb = tensor_embed(op, (2, 3), 1)
    assert emb.expectation(a.tensor(b)) == pytest.approx(op.expectation(b), abs=1e-14)
    with pytest.raises(DimensionError):
        tensor_embed(op, (2, 3), 0)


def test_hermitian_function_exp_log_roundtrip(rng):
    rho = DensityMatrix(C.random_density(rng, 3))
    log_rho = hermitian_function(rho, np.log)
    back = hermitian_function(log_rho, np.exp)
    np.testing.assert_allclose(back.entries, rho.entries, atol=1e-13)


def test_trace_distance_orthogonal_pure_states():
    assert trace_distance(DensityMatrix.pure([1, 0]), DensityMatrix.pure([0, 1])) == pytest.approx(1.0)
    assert trace_distance(DensityMatrix.pure([1, 1]), DensityMatrix.pure([1, 0])) == pytest.approx(np.sqrt(0.5))
