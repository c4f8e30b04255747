"""Reference (numpy) implementation of the battery-ladder kernels."""

from __future__ import annotations

import numpy as np


def shift_accumulate(C: np.ndarray, m: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """out[j, (w + m[i, j]) mod N, b] += C[j, i] * phi[i, w, b].

    ``C`` is (d_out, d_in), ``m`` is (d_in, d_out) integer shifts, ``phi`` is
    (d_in, N, batch).  This is the action of a controlled quench unitary
    written in the eigenbases of the two Hamiltonians.
    """
    C = np.asarray(C, dtype=complex)
    m = np.asarray(m, dtype=np.int64)
    phi = np.asarray(phi, dtype=complex)
    d_out, d_in = C.shape
    out = np.zeros((d_out,) + phi.shape[1:], dtype=complex)
    for i in range(d_in):
        for j in range(d_out):
            c = C[j, i]
            if c != 0:
                out[j] += c * np.roll(phi[i], int(m[i, j]), axis=0)
    return out


def shifted_overlaps(psi: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """<psi| Gamma(m) |psi> = sum_w conj(psi[(w + m) mod N]) psi[w] for each m."""
    psi = np.asarray(psi, dtype=complex)
    shifts = np.asarray(shifts, dtype=np.int64)
    return np.array([np.vdot(psi, np.roll(psi, int(k))) for k in shifts.ravel()]).reshape(shifts.shape)
