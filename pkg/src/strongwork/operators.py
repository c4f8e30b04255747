"""Dense operator algebra on finite composite Hilbert spaces.

All values are immutable: constructors copy their input and mark the stored
array read-only.  Matrix functions go through the spectral decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
UNITARY_TOL = 1e-10
EIG_FLOOR = 1e-14


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CompositeSpace:
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims:
            raise DimensionError("a space needs at least one factor")
        if any(d < 1 for d in dims):
            raise DimensionError(f"factor dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def __mul__(self, other: "CompositeSpace") -> "CompositeSpace":
        return CompositeSpace(self.factor_dims + other.factor_dims)


def _as_space(space, dim: int) -> CompositeSpace:
    if space is None:
        return CompositeSpace((dim,))
    if not isinstance(space, CompositeSpace):
        space = CompositeSpace(tuple(space))
    if space.total_dim != dim:
        raise DimensionError(
            f"matrix of size {dim} does not fit space {space.factor_dims}"
        )
    return space


def _square(entries) -> np.ndarray:
    a = np.asarray(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermiticity_defect(a: np.ndarray) -> float:
    """Max |A - A^dagger| relative to the largest entry of A."""
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)) / scale)


class HermitianOperator:
    """Hermitian matrix tied to a composite space.

    The input is checked against ``HERMITIAN_TOL`` and then re-symmetrized,
    so round-off accumulated by the caller does not propagate.
    """

    __slots__ = ("space", "entries")

    def __init__(self, entries, space: CompositeSpace | Sequence[int] | None = None):
        a = _square(entries)
        defect = hermiticity_defect(a)
        if defect > HERMITIAN_TOL:
            i, j = np.unravel_index(np.argmax(np.abs(a - a.conj().T)), a.shape)
            raise NotHermitianError(
                f"operator is not Hermitian: entry ({i},{j})={a[i, j]} vs "
                f"conj of ({j},{i})={a[j, i]} (relative defect {defect:.3g})"
            )
        object.__setattr__(self, "space", _as_space(space, a.shape[0]))
        object.__setattr__(self, "entries", _frozen(0.5 * (a + a.conj().T)))

    def __setattr__(self, name, value):
        raise AttributeError("HermitianOperator is immutable")

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def __repr__(self):
        return f"HermitianOperator(dims={self.space.factor_dims})"

    def _check_same(self, other: "HermitianOperator"):
        if self.space != other.space:
            raise DimensionError(
                f"spaces differ: {self.space.factor_dims} vs {other.space.factor_dims}"
            )

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same(other)
        return HermitianOperator(self.entries + other.entries, self.space)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same(other)
        return HermitianOperator(self.entries - other.entries, self.space)

    def __neg__(self) -> "HermitianOperator":
        return HermitianOperator(-self.entries, self.space)

    def __mul__(self, c: float) -> "HermitianOperator":
        return HermitianOperator(float(c) * self.entries, self.space)

    __rmul__ = __mul__

    def expectation(self, rho: "DensityMatrix") -> float:
        self._check_same(rho)
        return float(np.real(np.vdot(rho.entries.conj().T, self.entries)))

    def shifted(self, c: float) -> "HermitianOperator":
        return HermitianOperator(self.entries + c * np.eye(self.dim), self.space)

    @classmethod
    def zeros(cls, space) -> "HermitianOperator":
        space = space if isinstance(space, CompositeSpace) else CompositeSpace(tuple(space))
        return cls(np.zeros((space.total_dim,) * 2), space)

    @classmethod
    def identity(cls, space) -> "HermitianOperator":
        space = space if isinstance(space, CompositeSpace) else CompositeSpace(tuple(space))
        return cls(np.eye(space.total_dim), space)

    @classmethod
    def diag(cls, values: Iterable[float], space=None) -> "HermitianOperator":
        return cls(np.diag(np.asarray(list(values), dtype=float)), space)


class DensityMatrix:
    """Positive semidefinite, unit-trace operator."""

    __slots__ = ("space", "entries")

    def __init__(self, entries, space: CompositeSpace | Sequence[int] | None = None):
        a = _square(entries)
        if hermiticity_defect(a) > HERMITIAN_TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"density matrix has trace {tr!r}, expected 1")
        lam_min = np.linalg.eigvalsh(a)[0]
        if lam_min < -POSITIVITY_TOL:
            raise InvalidStateError(f"density matrix has eigenvalue {lam_min:.3g} < 0")
        object.__setattr__(self, "space", _as_space(space, a.shape[0]))
        object.__setattr__(self, "entries", _frozen(a))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def __repr__(self):
        return f"DensityMatrix(dims={self.space.factor_dims})"

    @classmethod
    def pure(cls, psi, space=None) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), space)

    @classmethod
    def maximally_mixed(cls, space) -> "DensityMatrix":
        space = space if isinstance(space, CompositeSpace) else CompositeSpace(tuple(space))
        d = space.total_dim
        return cls(np.eye(d) / d, space)

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.entries, other.entries), self.space * other.space)

    def as_operator(self) -> HermitianOperator:
        return HermitianOperator(self.entries, self.space)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


class UnitaryOperator:
    __slots__ = ("space", "entries")

    def __init__(self, entries, space=None, tol: float = UNITARY_TOL):
        a = _square(entries)
        err = np.linalg.norm(a @ a.conj().T - np.eye(a.shape[0]))
        if err > tol:
            raise InvalidStateError(f"matrix is not unitary (Frobenius error {err:.3g})")
        object.__setattr__(self, "space", _as_space(space, a.shape[0]))
        object.__setattr__(self, "entries", _frozen(a))

    def __setattr__(self, name, value):
        raise AttributeError("UnitaryOperator is immutable")

    def conjugate(self, rho: DensityMatrix) -> DensityMatrix:
        u = self.entries
        return DensityMatrix(u @ rho.entries @ u.conj().T, rho.space)


def _as_hermitian(op) -> HermitianOperator:
    if isinstance(op, HermitianOperator):
        return op
    if isinstance(op, DensityMatrix):
        return op.as_operator()
    return HermitianOperator(op)


def tensor_embed(op, target: CompositeSpace | Sequence[int], factor_index: int) -> HermitianOperator:
    """Place ``op`` on one factor of ``target`` with identities elsewhere."""
    op = _as_hermitian(op)
    if not isinstance(target, CompositeSpace):
        target = CompositeSpace(tuple(target))
    if not 0 <= factor_index < target.n_factors:
        raise DimensionError(
            f"factor index {factor_index} out of range for {target.n_factors} factors"
        )
    want = target.factor_dims[factor_index]
    if op.dim != want:
        raise DimensionError(
            f"operator of dimension {op.dim} cannot sit on factor {factor_index} "
            f"of dimension {want}"
        )
    mats = [np.eye(d) for d in target.factor_dims]
    mats[factor_index] = op.entries
    return HermitianOperator(reduce(np.kron, mats), target)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the factors listed in ``keep`` (kept in ascending order)."""
    keep = sorted(set(int(k) for k in keep))
    dims = rho.space.factor_dims
    if not keep:
        raise DimensionError("keep set must be nonempty")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = rho.entries.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # einsum labels: row indices 0..n-1, column indices n..2n-1; traced columns reuse row labels
    row = list(range(n))
    col = [k if k in traced else n + k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    red = np.einsum(t, row + col, out)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return DensityMatrix(red.reshape(d_keep, d_keep), tuple(dims[k] for k in keep))


def eig_hermitian(op) -> SpectralDecomposition:
    op = _as_hermitian(op)
    w, v = np.linalg.eigh(op.entries)
    return SpectralDecomposition(w, v)


def hermitian_function(
    op, f: Callable[[np.ndarray], np.ndarray], *, floor: float | None = None
) -> HermitianOperator:
    """Apply a scalar function through the eigendecomposition, U f(diag) U^dagger.

    ``floor`` clamps eigenvalues from below before ``f`` is applied; it
    defaults to ``EIG_FLOOR`` when ``f`` is ``np.log``.
    """
    op = _as_hermitian(op)
    dec = eig_hermitian(op)
    lam = dec.eigenvalues
    if floor is None and f is np.log:
        floor = EIG_FLOOR
    if floor is not None:
        lam = np.maximum(lam, floor)
    with np.errstate(all="ignore"):
        fl = np.asarray(f(lam), dtype=float)
    if not np.all(np.isfinite(fl)):
        raise ValueError("function is undefined on part of the spectrum")
    v = dec.eigenvectors
    return HermitianOperator((v * fl) @ v.conj().T, op.space)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.space.total_dim != b.space.total_dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    lam = np.linalg.eigvalsh(a.entries - b.entries)
    return float(0.5 * np.sum(np.abs(lam)))
