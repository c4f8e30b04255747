"""Gibbs states, entropies and free energies (natural logarithms throughout)."""

from __future__ import annotations

import math

import numpy as np

from .operators import (
    EIG_FLOOR,
    DensityMatrix,
    DimensionError,
    HermitianOperator,
)


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0 or not math.isfinite(beta):
        raise ValueError(f"inverse temperature must be positive and finite, got {beta}")
    return beta


def gibbs_array(h: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gibbs matrix and log-partition of a Hermitian array.

    The spectrum is shifted by its ground energy before exponentiation; the
    shift cancels in the quotient and is added back to ln Z.
    """
    e, v = np.linalg.eigh(h)
    x = -beta * (e - e[0])
    p = np.exp(x)
    z_shifted = p.sum()
    p /= z_shifted
    rho = (v * p) @ v.conj().T
    return rho, float(-beta * e[0] + math.log(z_shifted))


def gibbs_state(H: HermitianOperator, beta: float) -> DensityMatrix:
    beta = check_beta(beta)
    rho, _ = gibbs_array(H.entries, beta)
    return DensityMatrix(rho, H.space)


def log_partition(H: HermitianOperator, beta: float) -> float:
    beta = check_beta(beta)
    e = np.linalg.eigvalsh(H.entries)
    x = -beta * (e - e[0])
    return float(-beta * e[0] + np.log(np.exp(x).sum()))


def entropy_of_spectrum(p: np.ndarray) -> float:
    p = p[p > EIG_FLOOR]
    return float(-np.sum(p * np.log(p)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    return entropy_of_spectrum(np.linalg.eigvalsh(rho.entries))


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """S(rho || sigma) in nats.

    Returns ``math.inf`` when the support of ``rho`` is not contained in the
    support of ``sigma`` (judged against ``EIG_FLOOR``).
    """
    if rho.space.total_dim != sigma.space.total_dim:
        raise DimensionError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    p, u = np.linalg.eigh(rho.entries)
    q, v = np.linalg.eigh(sigma.entries)
    # weight of each rho eigenvector on each sigma eigenvector
    overlap = np.abs(u.conj().T @ v) ** 2
    keep_p = p > EIG_FLOOR
    null_q = q <= EIG_FLOOR
    leak = float(np.sum(p[keep_p, None] * overlap[np.ix_(keep_p, null_q)]))
    if leak > EIG_FLOOR:
        return math.inf
    q_log = np.log(np.maximum(q, EIG_FLOOR))
    pk = p[keep_p]
    cross = float(np.sum(pk[:, None] * overlap[keep_p] * q_log[None, :]))
    return max(float(np.sum(pk * np.log(pk))) - cross, 0.0)


def gibbs_relative_entropy(H_a: HermitianOperator, H_b: HermitianOperator, beta: float) -> float:
    """S(omega(H_a) || omega(H_b)) from Hamiltonians; finite even when Gibbs weights underflow.

    Uses S = beta Tr(omega_a (H_b - H_a)) + ln Z_b - ln Z_a.
    """
    beta = check_beta(beta)
    if H_a.space.total_dim != H_b.space.total_dim:
        raise DimensionError(f"dimension mismatch: {H_a.dim} vs {H_b.dim}")
    omega_a, ln_za = gibbs_array(H_a.entries, beta)
    _, ln_zb = gibbs_array(H_b.entries, beta)
    diff = H_b.entries - H_a.entries
    return max(beta * float(np.real(np.vdot(omega_a.conj().T, diff))) + ln_zb - ln_za, 0.0)


def free_energy(rho: DensityMatrix, H: HermitianOperator, beta: float) -> float:
    beta = check_beta(beta)
    if rho.space.total_dim != H.space.total_dim:
        raise DimensionError(f"dimension mismatch: {rho.dim} vs {H.dim}")
    energy = float(np.real(np.vdot(rho.entries.conj().T, H.entries)))
    return energy - von_neumann_entropy(rho) / beta


def equilibrium_free_energy(H: HermitianOperator, beta: float) -> float:
    return -log_partition(H, beta) / check_beta(beta)
