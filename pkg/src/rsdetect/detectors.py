"""Detection statistics for range-spread targets.

Five statistics are provided, all returned in the log domain:

* robust GLRT (random signal component of unknown power ``nu``),
* the parametric detector, which deflates the exponent ``m`` by ``1 + epsilon``,
* GLRT-H, the homogeneous GLRT (``nu`` pinned to zero),
* GAMF and GASD, the energy-detector competitors.

The scalar functions (``glrt_robust_statistic`` and friends) are the
reference implementation and follow the whitening/projection recipe
literally. :func:`gram_log_statistics` evaluates the same statistics for a
whole batch of trials from the Gram matrix of the whitened data and is what
the Monte Carlo engine uses.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStatisticError, InvalidInputError
from .linalg import (
    EigenSpectrum,
    as_column,
    as_matrix,
    complement_projector,
    eigvals_psd,
    hermitian_part,
    inv_sqrt,
    logdet_id_plus,
)

EPS = np.finfo(float).eps
NU_RTOL = 1e-12
NU_MAX_ITER = 200


class Kind(enum.Enum):
    ROBUST_GLRT = "glrt"
    PARAMETRIC = "parametric"
    GLRT_H = "glrt-h"
    GAMF = "gamf"
    GASD = "gasd"


@dataclass(frozen=True)
class DetectorKind:
    kind: Kind
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind is Kind.PARAMETRIC:
            if not np.isfinite(self.epsilon) or self.epsilon < 0:
                raise InvalidInputError(f"epsilon must be >= 0, got {self.epsilon}")
        elif self.epsilon != 0.0:
            raise InvalidInputError(f"{self.kind.value} takes no epsilon")

    @property
    def label(self) -> str:
        if self.kind is Kind.PARAMETRIC:
            return f"parametric:{self.epsilon:g}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "DetectorKind":
        """Parse ``glrt``, ``glrt-h``, ``gamf``, ``gasd`` or ``parametric:EPS``."""
        name, _, arg = text.strip().lower().partition(":")
        aliases = {"robust-glrt": "glrt", "glrth": "glrt-h", "glrt_h": "glrt-h"}
        name = aliases.get(name, name)
        try:
            kind = Kind(name)
        except ValueError:
            raise InvalidInputError(f"unknown detector {text!r}") from None
        if kind is Kind.PARAMETRIC:
            try:
                eps = float(arg) if arg else 0.0
            except ValueError:
                raise InvalidInputError(f"bad epsilon in {text!r}") from None
            return cls(kind, eps)
        if arg:
            raise InvalidInputError(f"{name} takes no parameter")
        return cls(kind)

    def __str__(self) -> str:
        return self.label


ROBUST_GLRT = DetectorKind(Kind.ROBUST_GLRT)
GLRT_H = DetectorKind(Kind.GLRT_H)
GAMF = DetectorKind(Kind.GAMF)
GASD = DetectorKind(Kind.GASD)


def parametric(epsilon: float) -> DetectorKind:
    return DetectorKind(Kind.PARAMETRIC, float(epsilon))


def all_detectors(epsilon: float = 0.2) -> list[DetectorKind]:
    return [ROBUST_GLRT, parametric(epsilon), GLRT_H, GAMF, GASD]


class NuBranch(enum.Enum):
    BOUNDARY_ZERO = "boundary_zero"
    INTERIOR_ROOT = "interior_root"


@dataclass(frozen=True)
class NuEstimate:
    value: float
    branch: NuBranch
    residual: float = 0.0


@dataclass(frozen=True)
class StatisticValue:
    log_value: float
    detector: DetectorKind

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


def m_exponent(n: int, k_p: int, k_s: int, epsilon: float = 0.0) -> float:
    """``N K_P / (K_P + K_S) / (1 + epsilon)``."""
    if epsilon < 0:
        raise InvalidInputError(f"epsilon must be >= 0, got {epsilon}")
    return n * k_p / (k_p + k_s) / (1.0 + epsilon)


# ---------------------------------------------------------------------------
# nu estimation


def solve_nu(lam, m_eff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised minimiser of ``(1+nu)^m prod(lambda_i/(1+nu) + 1)``.

    Parameters
    ----------
    lam : array_like, shape (..., r)
        Nonnegative eigenvalues; zeros are allowed and contribute nothing.
    m_eff : float
        Positive exponent.

    Returns
    -------
    nu, interior, residual : ndarray
        ``nu`` is 0 where ``sum(lam/(lam+1)) <= m_eff``; elsewhere it is the
        root of ``g(nu) = sum(lam/(lam+1+nu)) = m_eff``. ``residual`` is
        ``|g(nu) - m_eff|`` on interior rows and 0 on boundary rows.

    Notes
    -----
    Safeguarded Newton on ``1/g`` (exact in one step for a single eigenvalue)
    inside the bracket ``[0, sum(lam)/m_eff]``; ``g`` is strictly decreasing
    and ``g(nu) < sum(lam)/nu`` so the bracket always holds the root.
    Falls back to bisection whenever Newton leaves the bracket.
    """
    if not m_eff > 0:
        raise InvalidInputError(f"m_eff must be positive, got {m_eff}")
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    batch_shape = lam.shape[:-1]
    lam2 = lam.reshape(-1, lam.shape[-1])
    g0 = np.sum(lam2 / (lam2 + 1.0), axis=1)
    nu = np.zeros(lam2.shape[0])
    resid = np.zeros(lam2.shape[0])
    interior = g0 > m_eff

    idx = np.flatnonzero(interior)
    if idx.size:
        L = lam2[idx]
        lo = np.zeros(idx.size)
        hi = L.sum(axis=1) / m_eff
        x = np.zeros(idx.size)
        active = np.ones(idx.size, dtype=bool)
        for _ in range(NU_MAX_ITER):
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            La, xa = L[a], x[a]
            den = La + 1.0 + xa[:, None]
            g = np.sum(La / den, axis=1)
            dg = -np.sum(La / den**2, axis=1)
            above = g > m_eff
            lo[a] = np.where(above, xa, lo[a])
            hi[a] = np.where(above, hi[a], xa)
            done = (np.abs(g - m_eff) <= NU_RTOL * m_eff) | (
                hi[a] - lo[a] <= 8 * EPS * (1.0 + xa))
            resid[idx[a]] = np.abs(g - m_eff)
            active[a[done]] = False
            step = g * (1.0 - g / m_eff) / dg
            xn = xa + step
            bad = ~((xn > lo[a]) & (xn < hi[a]))
            xn[bad] = 0.5 * (lo[a][bad] + hi[a][bad])
            x[a] = np.where(done, xa, xn)
        nu[idx] = x

    return (nu.reshape(batch_shape), interior.reshape(batch_shape),
            resid.reshape(batch_shape))


def nu_hat(spectrum: EigenSpectrum | np.ndarray, m_eff: float) -> NuEstimate:
    """Closed-form minimiser of the ``nu`` objective for one spectrum.

    >>> round(nu_hat(EigenSpectrum.from_values([9.0]), 0.5).value, 12)
    8.0
    """
    vals = spectrum.nonzero if isinstance(spectrum, EigenSpectrum) else np.asarray(spectrum, float)
    if vals.size == 0:
        if not m_eff > 0:
            raise InvalidInputError(f"m_eff must be positive, got {m_eff}")
        return NuEstimate(0.0, NuBranch.BOUNDARY_ZERO, 0.0)
    nu, interior, resid = solve_nu(vals[None, :], m_eff)
    if interior[0]:
        return NuEstimate(float(nu[0]), NuBranch.INTERIOR_ROOT, float(resid[0]))
    return NuEstimate(0.0, NuBranch.BOUNDARY_ZERO, 0.0)


# ---------------------------------------------------------------------------
# scalar reference path


def _check_data(Z, S, v):
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim == 1:
        Z = Z[:, None]
    Z = as_matrix(Z, "Z")
    S = hermitian_part(S)
    v = as_column(v, "v")
    n = v.size
    if Z.shape[0] != n or S.shape != (n, n):
        raise InvalidInputError(
            f"inconsistent shapes Z{Z.shape}, S{S.shape}, v({n},)")
    if not np.any(v):
        raise InvalidInputError("steering vector is zero")
    return Z, S, v


@dataclass(frozen=True)
class _Whitened:
    Zt: np.ndarray   # S^{-1/2} Z
    vt: np.ndarray   # S^{-1/2} v
    P_perp: np.ndarray


def _whiten(Z, S, v) -> _Whitened:
    T = inv_sqrt(S)
    vt = T @ v
    return _Whitened(T @ Z, vt, complement_projector(vt))


def alpha_hat(Z, S, v) -> np.ndarray:
    """Per-cell amplitude estimates ``v^H S^-1 z_k / v^H S^-1 v``."""
    Z, S, v = _check_data(Z, S, v)
    w = _whiten(Z, S, v)
    return (w.vt.conj() @ w.Zt) / np.vdot(w.vt, w.vt).real


def _spectrum(w: _Whitened) -> EigenSpectrum:
    # K_P x K_P Gram form shares the nonzero eigenvalues of the N x N matrix
    W = w.P_perp @ w.Zt
    return eigvals_psd(W.conj().T @ W)


def projected_spectrum(Z, S, v) -> EigenSpectrum:
    """Eigenvalues of ``P_perp S^-1/2 Z Z^H S^-1/2 P_perp``."""
    Z, S, v = _check_data(Z, S, v)
    return _spectrum(_whiten(Z, S, v))


def _numerator(w: _Whitened) -> float:
    return logdet_id_plus(w.Zt @ w.Zt.conj().T, 1.0)


def _nu_statistic(Z, S, v, k_s: int, epsilon: float, detector: DetectorKind) -> StatisticValue:
    Z, S, v = _check_data(Z, S, v)
    w = _whiten(Z, S, v)
    m_eff = m_exponent(v.size, Z.shape[1], k_s, epsilon)
    spectrum = _spectrum(w)
    est = nu_hat(spectrum, m_eff)
    den = m_eff * np.log1p(est.value) + logdet_id_plus(spectrum, 1.0 + est.value)
    return StatisticValue(_numerator(w) - den, detector)


def glrt_robust_statistic(Z, S, v, k_s: int) -> StatisticValue:
    """Log of the robust GLRT statistic (the ``(K_P+K_S)``-th root form)."""
    return _nu_statistic(Z, S, v, k_s, 0.0, ROBUST_GLRT)


def parametric_statistic(Z, S, v, k_s: int, epsilon: float) -> StatisticValue:
    """Robust GLRT with ``m`` replaced by ``m / (1 + epsilon)``."""
    det = parametric(epsilon)
    return _nu_statistic(Z, S, v, k_s, det.epsilon, det)


def glrt_h_statistic(Z, S, v, k_s: int | None = None) -> StatisticValue:
    """Homogeneous GLRT; ``k_s`` is accepted for a uniform signature."""
    Z, S, v = _check_data(Z, S, v)
    w = _whiten(Z, S, v)
    return StatisticValue(_numerator(w) - logdet_id_plus(_spectrum(w), 1.0), GLRT_H)


def _matched_filter_terms(Z, S, v):
    Z, S, v = _check_data(Z, S, v)
    w = _whiten(Z, S, v)
    proj = w.vt.conj() @ w.Zt
    return float(np.sum(np.abs(proj) ** 2)), float(np.vdot(w.vt, w.vt).real), w


def _log(x: float) -> float:
    return float(np.log(x)) if x > 0 else -np.inf


def gamf_statistic(Z, S, v, k_s: int | None = None) -> StatisticValue:
    """Generalised AMF, ``sum_k |z_k^H S^-1 v|^2 / v^H S^-1 v``."""
    num, vv, _ = _matched_filter_terms(Z, S, v)
    return StatisticValue(_log(num / vv), GAMF)


def gasd_statistic(Z, S, v, k_s: int | None = None) -> StatisticValue:
    """Generalised ACE; lies in [0, 1]."""
    num, vv, w = _matched_filter_terms(Z, S, v)
    energy = float(np.sum(np.abs(w.Zt) ** 2))
    if energy == 0.0:
        raise DegenerateStatisticError("GASD is 0/0 for Z = 0")
    return StatisticValue(_log(num / (vv * energy)), GASD)


def statistic(detector: DetectorKind, Z, S, v, k_s: int) -> StatisticValue:
    """Dispatch to the scalar implementation for ``detector``."""
    kind = detector.kind
    if kind is Kind.ROBUST_GLRT:
        return glrt_robust_statistic(Z, S, v, k_s)
    if kind is Kind.PARAMETRIC:
        return parametric_statistic(Z, S, v, k_s, detector.epsilon)
    if kind is Kind.GLRT_H:
        return glrt_h_statistic(Z, S, v)
    if kind is Kind.GAMF:
        return gamf_statistic(Z, S, v)
    return gasd_statistic(Z, S, v)


# ---------------------------------------------------------------------------
# batch path


def whitened_gram(Z, S, extra) -> np.ndarray:
    """Gram matrix ``W^H S^-1 W`` with ``W = [Z, extra...]`` for a batch.

    ``Z`` has shape (b, N, K_P), ``S`` (b, N, N) and ``extra`` (N, j) columns
    shared by all trials (steering vectors). Returns (b, K_P+j, K_P+j).
    """
    Z = np.asarray(Z, dtype=complex)
    extra = np.asarray(extra, dtype=complex)
    if extra.ndim == 1:
        extra = extra[:, None]
    W = np.concatenate([Z, np.broadcast_to(extra, (Z.shape[0],) + extra.shape)], axis=2)
    G = W.conj().transpose(0, 2, 1) @ np.linalg.solve(S, W)
    return 0.5 * (G + G.conj().transpose(0, 2, 1))


def gram_log_statistics(gram, n: int, k_s: int, detectors) -> dict[DetectorKind, np.ndarray]:
    """Log statistics for a batch given the Gram matrix of ``[Z, v]``.

    ``gram`` has shape (b, K_P+1, K_P+1); the last row/column belong to the
    nominal steering vector. All statistics depend on the data only through
    this matrix, which is why they are invariant to ``Z -> Z Q`` (Q unitary)
    and to congruence ``(Z, S, v) -> (BZ, BSB^H, Bv)``.
    """
    gram = np.asarray(gram)
    k_p = gram.shape[-1] - 1
    Q = gram[:, :k_p, :k_p]
    q = gram[:, :k_p, k_p]
    vv = gram[:, k_p, k_p].real
    out: dict[DetectorKind, np.ndarray] = {}
    need_eig = any(d.kind in (Kind.ROBUST_GLRT, Kind.PARAMETRIC, Kind.GLRT_H) for d in detectors)
    if need_eig:
        mu = np.maximum(np.linalg.eigvalsh(Q), 0.0)
        num = np.sum(np.log1p(mu), axis=1)
        A = Q - q[:, :, None] * q.conj()[:, None, :] / vv[:, None, None]
        lam = np.maximum(np.linalg.eigvalsh(0.5 * (A + A.conj().transpose(0, 2, 1))), 0.0)
    mf = np.sum(np.abs(q) ** 2, axis=1) / vv
    with np.errstate(divide="ignore"):
        for det in detectors:
            kind = det.kind
            if kind is Kind.GLRT_H:
                out[det] = num - np.sum(np.log1p(lam), axis=1)
            elif kind in (Kind.ROBUST_GLRT, Kind.PARAMETRIC):
                m_eff = m_exponent(n, k_p, k_s, det.epsilon)
                nu, _, _ = solve_nu(lam, m_eff)
                out[det] = num - (m_eff * np.log1p(nu)
                                  + np.sum(np.log1p(lam / (1.0 + nu)[:, None]), axis=1))
            elif kind is Kind.GAMF:
                out[det] = np.log(mf)
            else:
                energy = np.trace(Q, axis1=1, axis2=2).real
                if np.any(energy <= 0):
                    raise DegenerateStatisticError("GASD is 0/0 for Z = 0")
                out[det] = np.log(mf / energy)
    return out


def batch_log_statistics(Z, S, v, k_s: int, detectors) -> dict[DetectorKind, np.ndarray]:
    """Convenience wrapper: Gram matrix then :func:`gram_log_statistics`."""
    Z = np.asarray(Z, dtype=complex)
    return gram_log_statistics(whitened_gram(Z, S, v), Z.shape[1], k_s, detectors)
