"""Simulated radar world: clutter covariance, steering vectors and data.

Random draws are keyed by ``(master_seed, stream, trial_index)`` through
:class:`numpy.random.SeedSequence` spawn keys, so a trial's data never
depends on how trials are split across workers.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError
from .linalg import as_column, hermitian_part

# RNG stream tags; H0 calibration and H1 evaluation must never share noise.
STREAM_H0 = 0
STREAM_H1 = 1
STREAM_H0_CHECK = 2


@dataclass(frozen=True)
class Scenario:
    """One experiment. Target Doppler is ``f_d + delta / N``."""

    N: int = 16
    K_P: int = 4
    K_S: int = 32
    sigma_f: float = 0.05
    noise_db_below_clutter: float = 10.0
    f_d: float = 0.08
    delta: float = 0.0
    snr_db: float = 15.0

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}")
        if self.K_P < 1:
            raise ConfigError(f"K_P must be >= 1, got {self.K_P}")
        if self.K_S < self.N:
            raise ConfigError(f"need K_S >= N, got K_S={self.K_S}, N={self.N}")
        if not self.sigma_f > 0:
            raise ConfigError(f"sigma_f must be positive, got {self.sigma_f}")

    def covariance(self) -> np.ndarray:
        return clutter_covariance(self.N, self.sigma_f, self.noise_db_below_clutter)

    def nominal_steering(self) -> np.ndarray:
        return steering_vector(self.N, self.f_d)

    def actual_steering(self) -> np.ndarray:
        return steering_vector(self.N, self.f_d + self.delta / self.N)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {k: (int(v) if types[k] in (int, "int") else float(v)) for k, v in data.items()}
        return cls(**kwargs)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def h0_digest(self) -> str:
        """Content hash of the fields that affect the H0 statistic stream."""
        keys = ("N", "K_P", "K_S", "sigma_f", "noise_db_below_clutter", "f_d")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Dataset:
    Z: np.ndarray
    S: np.ndarray
    hypothesis: str
    seed_path: tuple[int, int]


def clutter_covariance(N: int, sigma_f: float, noise_db_below_clutter: float = 10.0) -> np.ndarray:
    """Gaussian-shaped clutter plus white noise ``noise_db`` weaker.

    ``[R_c]_ij = exp(-2 pi^2 sigma_f^2 (i-j)^2)``, unit clutter power per
    element, white-noise power ``10**(-noise_db/10)``.
    """
    if N < 1 or not sigma_f > 0:
        raise InvalidInputError(f"need N >= 1 and sigma_f > 0, got {N}, {sigma_f}")
    lag = np.arange(N)
    d = lag[:, None] - lag[None, :]
    Rc = np.exp(-2.0 * np.pi**2 * sigma_f**2 * d**2)
    return (Rc + 10.0 ** (-noise_db_below_clutter / 10.0) * np.eye(N)).astype(complex)


def steering_vector(N: int, fd: float) -> np.ndarray:
    return np.exp(2j * np.pi * fd * np.arange(N))


def _quad(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.vdot(a, np.linalg.solve(C, b)))


def cos2_theta(v, p, C) -> float:
    """Squared cosine between ``v`` and ``p`` in the ``C^-1`` inner product."""
    v, p = as_column(v, "v"), as_column(p, "p")
    C = hermitian_part(C)
    try:
        cross = _quad(C, v, p)
        vv, pp = _quad(C, v, v).real, _quad(C, p, p).real
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError(f"singular covariance: {exc}") from exc
    if vv <= 0 or pp <= 0:
        raise InvalidInputError("v and p must be nonzero")
    return float(min(abs(cross) ** 2 / (vv * pp), 1.0))


def amplitudes_for_snr(scenario: Scenario, p, C, snr_db: float | None = None,
                       split: str = "equal") -> np.ndarray:
    """Real nonnegative amplitudes with ``sum|a_k|^2 p^H C^-1 p = SNR``.

    ``split="equal"`` spreads the energy evenly over the K_P cells;
    ``split="single"`` puts all of it in the first cell.
    """
    snr_db = scenario.snr_db if snr_db is None else snr_db
    p = as_column(p, "p")
    ppp = _quad(hermitian_part(C), p, p).real
    if ppp <= 0:
        raise InvalidInputError("p must be nonzero")
    energy = 10.0 ** (snr_db / 10.0) / ppp
    alphas = np.zeros(scenario.K_P)
    if split == "equal":
        alphas[:] = np.sqrt(energy / scenario.K_P)
    elif split == "single":
        alphas[0] = np.sqrt(energy)
    else:
        raise InvalidInputError(f"unknown amplitude split {split!r}")
    return alphas


def snr_of(alphas, p, C) -> float:
    """Linear SNR ``sum|a_k|^2 p^H C^-1 p``."""
    return float(np.sum(np.abs(alphas) ** 2) * _quad(hermitian_part(C), as_column(p), as_column(p)).real)


def trial_rng(master_seed: int, stream: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(trial_index)))
    return np.random.Generator(np.random.PCG64(ss))


def _white(master_seed: int, stream: int, trial_index: int, N: int, K: int) -> np.ndarray:
    x = trial_rng(master_seed, stream, trial_index).standard_normal((2, N, K))
    return (x[0] + 1j * x[1]) / np.sqrt(2.0)


def noise_block(chol: np.ndarray, K: int, master_seed: int, stream: int,
                start: int, stop: int) -> np.ndarray:
    """CN(0, C) columns for trials ``start..stop-1``; shape (b, N, K).

    ``chol`` is the lower Cholesky factor of C. Column order per trial is
    the K_P primary cells followed by the K_S secondary cells.
    """
    N = chol.shape[0]
    white = np.empty((stop - start, N, K), dtype=complex)
    for j, t in enumerate(range(start, stop)):
        white[j] = _white(master_seed, stream, t, N, K)
    return chol @ white


def draw_dataset(scenario: Scenario, hypothesis: str, actual_steering, seed_path: tuple[int, int],
                 *, stream: int | None = None, covariance=None, alphas=None) -> Dataset:
    """Draw one trial's primary matrix and secondary scatter matrix.

    Under ``"H1"`` each primary cell is ``alpha_k p + n_k``; ``alphas``
    default to the equal split for ``scenario.snr_db``.
    """
    if hypothesis not in ("H0", "H1"):
        raise InvalidInputError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    C = scenario.covariance() if covariance is None else hermitian_part(covariance)
    if stream is None:
        stream = STREAM_H0 if hypothesis == "H0" else STREAM_H1
    master_seed, trial = seed_path
    L = np.linalg.cholesky(C)
    X = noise_block(L, scenario.K_P + scenario.K_S, master_seed, stream, trial, trial + 1)[0]
    Z = X[:, : scenario.K_P].copy()
    R = X[:, scenario.K_P:]
    if hypothesis == "H1":
        p = as_column(actual_steering, "actual_steering")
        if alphas is None:
            alphas = amplitudes_for_snr(scenario, p, C)
        Z += np.outer(p, np.asarray(alphas))
    return Dataset(Z, R @ R.conj().T, hypothesis, (int(master_seed), int(trial)))
