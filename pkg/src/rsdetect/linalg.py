"""Complex Hermitian primitives used by the detectors.

Everything here works on small dense matrices (N up to a few tens).
Determinants are never formed directly; log-determinants are sums over
eigenvalues so that million-trial calibrations cannot overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NotPSDError, SingularMatrixError

EPS = np.finfo(float).eps
HERMITIAN_ATOL = 1e-12


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues of a PSD matrix, descending, with numerical rank."""

    values: np.ndarray
    rank: int
    tolerance_used: float

    @property
    def nonzero(self) -> np.ndarray:
        return self.values[: self.rank]

    @classmethod
    def from_values(cls, values) -> "EigenSpectrum":
        """Build a spectrum from raw nonnegative eigenvalues (e.g. for tests)."""
        vals = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
        if vals.size and vals[-1] < 0:
            raise NotPSDError(f"negative eigenvalue {vals[-1]!r}")
        tol = max(vals.size, 1) * EPS * max(vals[0] if vals.size else 0.0, 1.0)
        return cls(vals, int(np.count_nonzero(vals > tol)), tol)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def as_column(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=complex)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be a column vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def hermitian_part(M) -> np.ndarray:
    """Return (M + M^H)/2 after checking M is square and Hermitian."""
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.conj().T)) > HERMITIAN_ATOL * scale:
        raise InvalidInputError("matrix is not Hermitian")
    return 0.5 * (A + A.conj().T)


def eigvals_psd(M) -> EigenSpectrum:
    """Eigenvalues of a Hermitian PSD matrix, sorted descending.

    Values in ``[-tol, 0)`` are clamped to zero, where
    ``tol = dim * eps * max(lambda_max, 1)``; anything more negative is an
    error. ``rank`` counts eigenvalues strictly above ``tol``.
    """
    H = hermitian_part(M)
    dim = H.shape[0]
    vals = np.linalg.eigvalsh(H)[::-1].copy()
    tol = dim * EPS * max(float(vals[0]) if dim else 0.0, 1.0)
    if dim and vals[-1] < -tol:
        raise NotPSDError(f"eigenvalue {vals[-1]:.3e} below -{tol:.3e}")
    vals[vals < 0] = 0.0
    return EigenSpectrum(vals, int(np.count_nonzero(vals > tol)), tol)


def inv_sqrt(S) -> np.ndarray:
    """Hermitian positive definite inverse square root ``S^{-1/2}``."""
    H = hermitian_part(S)
    w, U = np.linalg.eigh(H)
    dim = H.shape[0]
    if w[0] <= dim * EPS * max(w[-1], 0.0):
        raise SingularMatrixError(
            f"smallest eigenvalue {w[0]:.3e} vs largest {w[-1]:.3e}")
    T = (U / np.sqrt(w)) @ U.conj().T
    return 0.5 * (T + T.conj().T)


def logdet_id_plus(M, scale: float = 1.0) -> float:
    """``log det(M/scale + I)`` for PSD ``M`` (or a precomputed spectrum)."""
    if scale <= 0:
        raise InvalidInputError(f"scale must be positive, got {scale}")
    spectrum = M if isinstance(M, EigenSpectrum) else eigvals_psd(M)
    return float(np.sum(np.log1p(spectrum.values / scale)))


def complement_projector(vt) -> np.ndarray:
    """Orthogonal projector onto the complement of span(vt)."""
    a = as_column(vt, "vt")
    nrm2 = float(np.vdot(a, a).real)
    if nrm2 == 0.0:
        raise InvalidInputError("cannot project out a zero vector")
    P = np.eye(a.size, dtype=complex) - np.outer(a, a.conj()) / nrm2
    return 0.5 * (P + P.conj().T)
