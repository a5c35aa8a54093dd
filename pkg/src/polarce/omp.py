"""Greedy baselines on the vectorized cascaded problem.

vec(Y) = sqrt(p) * [(E^T conj(F_cas_raw)) kron F_bs] vec(Lam) + noise, with
column-major vec. The Kronecker design is never materialized: the atom for the
pair (i, j) is vec(F_bs[:, i] @ w_j^T) with w_j = conj(Psi[:, j]), Psi =
E^H F_cas, so a full correlation scan is the factored product F_bs^H R Psi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["VectorizedProblem", "OmpResult", "omp", "omp_dense",
           "cascaded_estimate"]


@dataclass
class VectorizedProblem:
    """Implicit Kronecker design for one BS dictionary / cascaded dictionary / E."""

    F_bs: np.ndarray                  # [N, N_G] unit columns
    Psi: np.ndarray                   # [tau, Gc] = E^H F_cas
    col_norms: np.ndarray             # [Gc] atom norms, = ||Psi[:, j]||

    @classmethod
    def build(cls, F_bs: np.ndarray, F_cas: np.ndarray, E: np.ndarray):
        Psi = E.conj().T @ F_cas
        return cls(F_bs=F_bs, Psi=Psi, col_norms=np.linalg.norm(Psi, axis=0))

    @property
    def shape(self):
        n, ng = self.F_bs.shape
        tau, gc = self.Psi.shape
        return (n * tau, ng * gc)

    def column(self, i: int, j: int) -> np.ndarray:
        """Explicit atom for pair (i, j), column-major vec."""
        w = np.conj(self.Psi[:, j])
        return np.outer(self.F_bs[:, i], w).reshape(-1, order="F")

    def correlate(self, R: np.ndarray) -> np.ndarray:
        """A^H vec(R) for all atoms at once, shaped [N_G, Gc]."""
        return self.F_bs.conj().T @ R @ self.Psi


@dataclass
class OmpResult:
    support: list[tuple[int, int]]    # (bs grid, cascaded col) per pick
    coeffs: np.ndarray
    residual_norm: float
    ridge_fallback: bool


def omp(Y: np.ndarray, problem: VectorizedProblem, sparsity: int,
        resid_rtol: float = 1e-8, ridge: float = 1e-10) -> OmpResult:
    """Orthogonal matching pursuit on the implicit design.

    Refits all picked atoms by least squares each iteration; falls back to a
    ridge solve when the subdesign is rank deficient. Stops early once the
    residual drops below resid_rtol times ||Y||.
    """
    y = Y.reshape(-1, order="F")
    ynorm = np.linalg.norm(y)
    R = Y.copy()
    support: list[tuple[int, int]] = []
    cols: list[np.ndarray] = []
    coeffs = np.zeros(0, dtype=np.complex128)
    ridge_used = False
    rnorm = ynorm
    for _ in range(sparsity):
        if rnorm <= resid_rtol * ynorm:
            break
        corr = np.abs(problem.correlate(R)) / problem.col_norms[None, :]
        flat = int(np.argmax(corr))   # ties resolve to the lowest (i, j) pair
        i, j = np.unravel_index(flat, corr.shape)
        pick = (int(i), int(j))
        if pick in support:
            break                     # stagnation guard; residual cannot improve
        support.append(pick)
        cols.append(problem.column(*pick))
        A = np.stack(cols, axis=1)
        coeffs, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        if rank < len(cols):
            ridge_used = True
            gram = A.conj().T @ A + ridge * np.eye(len(cols))
            coeffs = np.linalg.solve(gram, A.conj().T @ y)
        resid = y - A @ coeffs
        R = resid.reshape(Y.shape, order="F")
        rnorm = float(np.linalg.norm(resid))
    return OmpResult(support=support, coeffs=coeffs, residual_norm=rnorm,
                     ridge_fallback=ridge_used)


def cascaded_estimate(result: OmpResult, problem: VectorizedProblem,
                      F_cas: np.ndarray, power: float) -> np.ndarray:
    """Assemble G_hat from the vectorized solution.

    Atoms were built on Psi = E^H F_cas with unit cascaded columns, so a
    coefficient c on pair (i, j) contributes c f_i F_cas[:, j]^H to sqrt(p) G.
    F_cas must therefore be the same unit-column dictionary the problem was
    built from.
    """
    n = problem.F_bs.shape[0]
    m = F_cas.shape[0]
    G = np.zeros((n, m), dtype=np.complex128)
    for (i, j), c in zip(result.support, result.coeffs):
        G += c * np.outer(problem.F_bs[:, i], np.conj(F_cas[:, j]))
    return G / math.sqrt(power)


def omp_dense(y: np.ndarray, A: np.ndarray, sparsity: int,
              resid_rtol: float = 1e-8, ridge: float = 1e-10):
    """Dense-matrix OMP; returns (coeffs over all atoms, support list)."""
    norms = np.linalg.norm(A, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    r = y.copy()
    ynorm = np.linalg.norm(y)
    support: list[int] = []
    x = np.zeros(A.shape[1], dtype=np.complex128)
    for _ in range(sparsity):
        if np.linalg.norm(r) <= resid_rtol * ynorm:
            break
        corr = np.abs(A.conj().T @ r) / norms
        corr[support] = -1.0
        j = int(np.argmax(corr))
        support.append(j)
        sub = A[:, support]
        c, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            gram = sub.conj().T @ sub + ridge * np.eye(len(support))
            c = np.linalg.solve(gram, sub.conj().T @ y)
        r = y - sub @ c
    if support:
        x[support] = c
    return x, support
