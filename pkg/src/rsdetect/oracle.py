"""Brute-force verifiers for the closed-form pieces of the detectors.

Nothing here calls into :mod:`rsdetect.linalg` or the closed-form
estimators it checks: determinants are dense ``numpy.linalg.det`` calls,
square roots come from ``scipy.linalg.sqrtm``, minimisation is a
derivative-free search, and roots come from ``scipy.optimize.brentq``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .errors import InvalidInputError

MAX_N = 6
MAX_KP = 3


@dataclass(frozen=True)
class OracleReport:
    check: str
    instance_seed: int
    closed_form_value: float
    brute_force_value: float
    gap: float
    tolerance: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _report(check, seed, closed, brute, gap, tol) -> OracleReport:
    return OracleReport(check, int(seed), float(closed), float(brute), float(gap), float(tol),
                        bool(gap <= tol))


def _sqrtm_inv(S: np.ndarray) -> np.ndarray:
    return np.linalg.inv(sla.sqrtm(S))


# ---------------------------------------------------------------------------
# minimisation over alpha


def det_objective(Z, S, v, nu: float, alphas) -> float:
    """``det(Z_a Z_a^H / (nu+1) + S)`` with ``Z_a = Z - v a^T``."""
    Za = Z - np.outer(v, alphas)
    return float(np.linalg.det(Za @ Za.conj().T / (nu + 1.0) + S).real)


def m_min_forms(Z, S, v, nu: float) -> tuple[float, float, float]:
    """The minimum over alpha written three ways (N x N projector, Z_alpha_hat, K_P x K_P)."""
    Z, S, v = np.asarray(Z, complex), np.asarray(S, complex), np.asarray(v, complex).ravel()
    N, kp = Z.shape
    T = _sqrtm_inv(S)
    Zt, vt = T @ Z, T @ v
    Pperp = np.eye(N) - np.outer(vt, vt.conj()) / np.vdot(vt, vt)
    detS = np.linalg.det(S).real
    proj = detS * np.linalg.det(Pperp @ Zt @ Zt.conj().T @ Pperp / (nu + 1) + np.eye(N)).real
    Sinv = np.linalg.inv(S)
    a_hat = (v.conj() @ Sinv @ Z) / (v.conj() @ Sinv @ v)
    direct = det_objective(Z, S, v, nu, a_hat)
    Zperp = Pperp @ Zt
    small = detS * np.linalg.det(Zperp.conj().T @ Zperp / (nu + 1) + np.eye(kp)).real
    return float(proj), float(direct), float(small)


def min_alpha_oracle(Z, S, v, nu: float, *, starts: int = 20, seed: int = 0):
    """Multi-start Powell search for ``argmin_alpha det(Z_a Z_a^H/(nu+1) + S)``.

    Searches the ``2 K_P`` real coordinates of alpha; returns
    ``(alphas, value)`` for the best start.
    """
    Z, S, v = np.asarray(Z, complex), np.asarray(S, complex), np.asarray(v, complex).ravel()
    N, kp = Z.shape
    if N > MAX_N or kp > MAX_KP:
        raise InvalidInputError(f"oracle limited to N <= {MAX_N}, K_P <= {MAX_KP}")
    if nu < 0:
        raise InvalidInputError(f"nu must be >= 0, got {nu}")
    rng = np.random.default_rng(seed)
    # scale of plausible amplitudes: column norms over steering norm
    spread = max(float(np.max(np.linalg.norm(Z, axis=0)) / np.linalg.norm(v)), 1.0)

    def obj(x):
        return np.log(det_objective(Z, S, v, nu, x[:kp] + 1j * x[kp:]))

    best_x, best_f = None, np.inf
    for i in range(starts):
        x0 = np.zeros(2 * kp) if i == 0 else rng.normal(scale=spread, size=2 * kp)
        res = optimize.minimize(obj, x0, method="Powell",
                                options={"xtol": 1e-7, "ftol": 1e-13, "maxfev": 20000})
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return best_x[:kp] + 1j * best_x[kp:], float(np.exp(best_f))


# ---------------------------------------------------------------------------
# minimisation over nu


def f_nu(nu, lam, m_eff: float):
    """``(1+nu)^m prod(lambda_i/(1+nu) + 1)``; ``nu`` may be an array."""
    nu = np.asarray(nu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return (1 + nu) ** m_eff * np.prod(lam / (1 + nu)[..., None] + 1, axis=-1)


def g_nu(nu, lam):
    nu = np.asarray(nu, dtype=float)
    return np.sum(np.asarray(lam, float) / (np.asarray(lam, float) + 1 + nu[..., None]), axis=-1)


def min_nu_oracle(lam, m_eff: float, *, step: float = 1e-3, upper: float = 100.0):
    """Grid search on ``[0, upper]`` refined by golden-section search.

    Returns ``(nu_star, f_min, grid_min)``.
    """
    lam = np.asarray(lam, dtype=float)
    grid = np.arange(0.0, upper + step / 2, step)
    fg = f_nu(grid, lam, m_eff)
    i = int(np.argmin(fg))
    grid_min = float(fg[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: float(f_nu(x, lam, m_eff)), bracket=None,
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun < grid_min:
            return float(res.x), float(res.fun), grid_min
    return float(grid[i]), grid_min, grid_min


def root_oracle(lam, m_eff: float) -> float:
    """Independent root of ``g(nu) = m_eff`` (0 when none on (0, inf))."""
    lam = np.asarray(lam, dtype=float)
    if g_nu(0.0, lam) <= m_eff:
        return 0.0
    hi = 1.0
    while g_nu(hi, lam) > m_eff:
        hi *= 2.0
    return float(optimize.brentq(lambda x: g_nu(x, lam) - m_eff, 0.0, hi, xtol=1e-15, rtol=1e-15))


@dataclass(frozen=True)
class DerivativeCheck:
    nu: float
    analytic: float
    finite_difference: float
    rel_error: float
    passed: bool


def derivative_check_g(lam, nu_points: Sequence[float], rtol: float = 1e-5) -> list[DerivativeCheck]:
    """Compare ``g'(nu) = -sum lambda/(lambda+1+nu)^2`` with central differences."""
    lam = np.asarray(lam, dtype=float)
    out = []
    for nu in nu_points:
        if not 0 <= nu <= 100:
            raise InvalidInputError(f"nu points must lie in [0, 100], got {nu}")
        h = 1e-5 * (1 + nu)
        fd = float((g_nu(nu + h, lam) - g_nu(nu - h, lam)) / (2 * h))
        an = float(-np.sum(lam / (lam + 1 + nu) ** 2))
        rel = abs(fd - an) / abs(an) if an != 0 else abs(fd)
        out.append(DerivativeCheck(float(nu), an, fd, rel, bool(an < 0 and fd < 0 and rel <= rtol)))
    return out


# ---------------------------------------------------------------------------
# independent statistic formulas


def kelly_statistic(z, S, v) -> float:
    """Kelly's detector for one cell, returned as ``-log(1 - t)``."""
    z, v = np.asarray(z, complex).ravel(), np.asarray(v, complex).ravel()
    Sinv = np.linalg.inv(S)
    t = abs(v.conj() @ Sinv @ z) ** 2 / ((v.conj() @ Sinv @ v).real * (1 + (z.conj() @ Sinv @ z).real))
    return float(-np.log1p(-t))


def amf_statistic(z, S, v) -> float:
    z, v = np.asarray(z, complex).ravel(), np.asarray(v, complex).ravel()
    Sinv = np.linalg.inv(S)
    return float(abs(v.conj() @ Sinv @ z) ** 2 / (v.conj() @ Sinv @ v).real)


def ace_statistic(z, S, v) -> float:
    z, v = np.asarray(z, complex).ravel(), np.asarray(v, complex).ravel()
    Sinv = np.linalg.inv(S)
    return float(abs(v.conj() @ Sinv @ z) ** 2
                 / ((v.conj() @ Sinv @ v).real * (z.conj() @ Sinv @ z).real))


def second_form_statistic(Z, S, v, k_s: int, epsilon: float = 0.0) -> float:
    """Log statistic via ``det(ZZ^H+S) / ((1+nu)^m det(Z_a Z_a^H/(1+nu) + S))``.

    ``nu`` is found by :func:`root_oracle` from the eigenvalues of
    ``S^-1/2 Z_a Z_a^H S^-1/2`` with ``Z_a`` built from the amplitude
    estimates.
    """
    Z, S, v = np.asarray(Z, complex), np.asarray(S, complex), np.asarray(v, complex).ravel()
    N, kp = Z.shape
    m_eff = N * kp / (kp + k_s) / (1 + epsilon)
    Sinv = np.linalg.inv(S)
    a_hat = (v.conj() @ Sinv @ Z) / (v.conj() @ Sinv @ v)
    Za = Z - np.outer(v, a_hat)
    T = _sqrtm_inv(S)
    W = T @ Za
    lam = np.clip(np.linalg.eigvalsh(W.conj().T @ W), 0.0, None)
    nu = root_oracle(lam, m_eff)
    _, num = np.linalg.slogdet(Z @ Z.conj().T + S)
    _, den = np.linalg.slogdet(Za @ Za.conj().T / (1 + nu) + S)
    return float(num - m_eff * np.log1p(nu) - den)


# ---------------------------------------------------------------------------
# suites


def random_instance(seed: int, N: int = 4, k_p: int = 2, k_s: int = 8):
    """Seeded complex Gaussian ``(Z, S, v)`` with white covariance."""
    rng = np.random.default_rng(seed)

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    Z = cn(N, k_p) + np.outer(cn(N), cn(k_p))
    R = cn(N, k_s)
    v = cn(N)
    return Z, R @ R.conj().T, v


def alpha_suite(n_instances: int = 200, base_seed: int = 0, nus=(0.0, 0.5, 2.0),
                starts: int = 20) -> Iterator[OracleReport]:
    """Closed-form minimum over alpha vs brute force and across forms."""
    for i in range(n_instances):
        seed = base_seed + i
        Z, S, v = random_instance(seed)
        nu = nus[i % len(nus)]
        proj, direct, small = m_min_forms(Z, S, v, nu)
        spread = max(abs(proj - direct), abs(proj - small), abs(direct - small)) / abs(proj)
        yield _report("m_min_forms", seed, proj, direct, spread, 1e-8)
        a_bf, val = min_alpha_oracle(Z, S, v, nu, starts=starts, seed=seed)
        yield _report("m_min_brute_force", seed, direct, val, abs(val - direct) / abs(direct), 1e-6)
        Sinv = np.linalg.inv(S)
        a_hat = (v.conj() @ Sinv @ Z) / (v.conj() @ Sinv @ v)
        yield _report("alpha_hat_distance", seed, 0.0, float(np.max(np.abs(a_bf - a_hat))),
                      float(np.max(np.abs(a_bf - a_hat))), 1e-4)


def random_spectrum(seed: int, max_rank: int = 4, lam_max: float = 50.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, max_rank + 1))
    return np.sort(rng.uniform(0.0, lam_max, size=r))[::-1] + 1e-9


def nu_suite(nu_hat_fn, n_instances: int = 200, base_seed: int = 0) -> Iterator[OracleReport]:
    """Check a ``nu_hat_fn(lam, m) -> (nu, residual)`` against grid, root and slope oracles."""
    for i in range(n_instances):
        seed = base_seed + i
        lam = random_spectrum(seed)
        m_eff = float(np.random.default_rng(seed + 10_000).uniform(0.2, 3.0))
        nu, resid = nu_hat_fn(lam, m_eff)
        _, _, grid_min = min_nu_oracle(lam, m_eff)
        f_hat = float(f_nu(nu, lam, m_eff))
        yield _report("nu_vs_grid", seed, f_hat, grid_min, max(f_hat - grid_min, 0.0),
                      1e-9 * (1 + abs(grid_min)))
        if nu > 0:
            yield _report("nu_residual", seed, nu, root_oracle(lam, m_eff), resid, 1e-12 * m_eff)
        for chk in derivative_check_g(lam, [0.0, nu if nu <= 100 else 100.0, 10.0]):
            yield _report("g_slope", seed, chk.analytic, chk.finite_difference, chk.rel_error, 1e-5)
