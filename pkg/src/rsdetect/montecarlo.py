"""Monte Carlo threshold calibration, P_d curves and CFAR checks.

Trials run in fixed-size blocks. Each trial draws from its own RNG
substream, and blocks are reassembled in trial order, so results are
bit-identical for any worker count. ``RSDETECT_MAX_WORKERS`` caps the
process pool (default: all cores).
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detectors import DetectorKind, gram_log_statistics, whitened_gram
from .errors import ConfigError, InvalidComparisonError, StaleThresholdError
from .linalg import hermitian_part
from .scenario import (
    STREAM_H0,
    STREAM_H0_CHECK,
    STREAM_H1,
    Scenario,
    amplitudes_for_snr,
    cos2_theta,
    noise_block,
)

BLOCK_SIZE = 2048
WORKERS_ENV = "RSDETECT_MAX_WORKERS"
Z95 = 1.959963984540054
CSV_HEADER = ["snr_db", "detector", "pd", "ci_halfwidth", "cos2_theta", "n_trials", "seed"]


def worker_count(requested: int | None = None) -> int:
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def _blocks(n_trials: int) -> list[tuple[int, int]]:
    return [(s, min(s + BLOCK_SIZE, n_trials)) for s in range(0, n_trials, BLOCK_SIZE)]


def _run_blocks(fn, tasks: list, workers: int | None) -> list:
    workers = worker_count(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _covariance(scenario: Scenario, covariance) -> np.ndarray:
    return scenario.covariance() if covariance is None else hermitian_part(covariance)


# ---------------------------------------------------------------------------
# statistic streams


def _h0_block(task) -> dict:
    chol, v, k_p, k_s, detectors, seed, stream, start, stop = task
    X = noise_block(chol, k_p + k_s, seed, stream, start, stop)
    Z, R = X[:, :, :k_p], X[:, :, k_p:]
    S = R @ R.conj().transpose(0, 2, 1)
    gram = whitened_gram(Z, S, v)
    return gram_log_statistics(gram, chol.shape[0], k_s, detectors)


def h0_statistics(detectors: Sequence[DetectorKind], scenario: Scenario, n_trials: int,
                  master_seed: int, *, stream: int = STREAM_H0, covariance=None,
                  workers: int | None = None) -> dict[DetectorKind, np.ndarray]:
    """Log statistics of ``n_trials`` H0 trials for every detector (shared data)."""
    C = _covariance(scenario, covariance)
    chol = np.linalg.cholesky(C)
    v = scenario.nominal_steering()
    detectors = list(detectors)
    tasks = [(chol, v, scenario.K_P, scenario.K_S, detectors, master_seed, stream, a, b)
             for a, b in _blocks(n_trials)]
    parts = _run_blocks(_h0_block, tasks, workers)
    return {d: np.concatenate([p[d] for p in parts]) for d in detectors}


def _h1_block(task) -> dict:
    chol, v, p, alpha_grid, k_s, detectors, seed, start, stop = task
    k_p = alpha_grid.shape[1]
    X = noise_block(chol, k_p + k_s, seed, STREAM_H1, start, stop)
    Z, R = X[:, :, :k_p], X[:, :, k_p:]
    S = R @ R.conj().transpose(0, 2, 1)
    full = whitened_gram(Z, S, np.stack([v, p], axis=1))
    # [Z + p a^T, v] = [Z, v, p] @ T, so every SNR reuses one linear solve
    out = {d: np.empty((alpha_grid.shape[0], stop - start)) for d in detectors}
    for i, alphas in enumerate(alpha_grid):
        T = np.zeros((k_p + 2, k_p + 1), dtype=complex)
        T[:k_p, :k_p] = np.eye(k_p)
        T[k_p, k_p] = 1.0
        T[k_p + 1, :k_p] = alphas
        gram = T.conj().T @ full @ T
        for d, vals in gram_log_statistics(gram, chol.shape[0], k_s, detectors).items():
            out[d][i] = vals
    return out


def h1_statistics(detectors: Sequence[DetectorKind], scenario: Scenario, snr_grid_db: Sequence[float],
                  n_trials: int, master_seed: int, *, split: str = "equal", covariance=None,
                  workers: int | None = None) -> dict[DetectorKind, np.ndarray]:
    """H1 log statistics, shape (len(snr_grid_db), n_trials) per detector.

    Noise realisations are common to every SNR point and every detector.
    """
    C = _covariance(scenario, covariance)
    chol = np.linalg.cholesky(C)
    v, p = scenario.nominal_steering(), scenario.actual_steering()
    alpha_grid = np.array([amplitudes_for_snr(scenario, p, C, s, split) for s in snr_grid_db],
                          dtype=complex).reshape(len(snr_grid_db), scenario.K_P)
    detectors = list(detectors)
    tasks = [(chol, v, p, alpha_grid, scenario.K_S, detectors, master_seed, a, b)
             for a, b in _blocks(n_trials)]
    parts = _run_blocks(_h1_block, tasks, workers)
    return {d: np.concatenate([q[d] for q in parts], axis=1) for d in detectors}


# ---------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class ThresholdRecord:
    detector: str
    scenario_digest: str
    pfa_target: float
    threshold: float
    n_trials: int
    master_seed: int

    @property
    def detector_kind(self) -> DetectorKind:
        return DetectorKind.parse(self.detector)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.threshold):
            d["threshold"] = str(self.threshold)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRecord":
        return cls(str(d["detector"]), str(d["scenario_digest"]), float(d["pfa_target"]),
                   float(d["threshold"]), int(d["n_trials"]), int(d["master_seed"]))


def save_thresholds(records: Iterable[ThresholdRecord], path: str | Path) -> None:
    text = json.dumps([r.to_dict() for r in records], indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_thresholds(path: str | Path) -> list[ThresholdRecord]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return [ThresholdRecord.from_dict(d) for d in data]


def order_statistic_threshold(stats, pfa_target: float) -> float:
    """Midpoint between the k-th and (k+1)-th largest, ``k = round(n pfa)``.

    Exactly ``k`` of the calibration statistics lie strictly above the
    returned value (barring ties).
    """
    s = np.sort(np.asarray(stats, dtype=float))[::-1]
    if np.any(np.isnan(s)):
        raise ConfigError("NaN in calibration statistics")
    k = int(round(s.size * pfa_target))
    if not 1 <= k < s.size:
        raise ConfigError(f"need 1 <= round(n*pfa) < n, got k={k}, n={s.size}")
    return float(0.5 * (s[k - 1] + s[k]))


def _check_calibration_budget(pfa_target: float, n_trials: int, allow_short: bool) -> None:
    if not 0 < pfa_target < 0.5:
        raise ConfigError(f"pfa must lie in (0, 0.5), got {pfa_target}")
    if n_trials * pfa_target < 20 - 1e-9:
        raise ConfigError(
            f"{n_trials} trials give only {n_trials * pfa_target:g} expected exceedances; need >= 20")
    if not allow_short and n_trials * pfa_target < 100 - 1e-9:
        raise ConfigError(
            f"protocol needs >= 100/pfa = {math.ceil(100 / pfa_target)} trials "
            f"(got {n_trials}); pass allow_short=True to override")


def calibrate_thresholds(detectors: Sequence[DetectorKind], scenario: Scenario, pfa_target: float,
                         n_trials: int, master_seed: int, *, allow_short: bool = False,
                         workers: int | None = None) -> list[ThresholdRecord]:
    """Calibrate every detector on one shared H0 stream.

    Each threshold is computed from that detector's own order statistic, so
    the result equals separate :func:`calibrate_threshold` calls with the
    same seed.
    """
    _check_calibration_budget(pfa_target, n_trials, allow_short)
    stats = h0_statistics(detectors, scenario, n_trials, master_seed, workers=workers)
    digest = scenario.h0_digest()
    return [ThresholdRecord(d.label, digest, float(pfa_target),
                            order_statistic_threshold(stats[d], pfa_target), int(n_trials),
                            int(master_seed))
            for d in detectors]


def calibrate_threshold(detector: DetectorKind, scenario: Scenario, pfa_target: float,
                        n_trials: int, master_seed: int, **kwargs) -> ThresholdRecord:
    return calibrate_thresholds([detector], scenario, pfa_target, n_trials, master_seed, **kwargs)[0]


# ---------------------------------------------------------------------------
# detection probability


def binomial_halfwidth(p: np.ndarray | float, n: int) -> np.ndarray:
    """95% normal-approximation half-width, floored at one count."""
    p = np.asarray(p, dtype=float)
    return Z95 * np.maximum(np.sqrt(p * (1.0 - p) / n), 1.0 / n)


@dataclass
class PdCurve:
    detector: str
    snr_grid_db: list[float]
    pd: list[float]
    ci_halfwidth: list[float]
    n_trials: int
    cos2_theta: float
    master_seed: int = 0
    split: str = field(default="equal")

    def __post_init__(self):
        if not (len(self.snr_grid_db) == len(self.pd) == len(self.ci_halfwidth)):
            raise ValueError("PdCurve columns have different lengths")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pd, ci = np.asarray(self.pd), np.asarray(self.ci_halfwidth)
        return np.clip(pd - ci, 0.0, 1.0), np.clip(pd + ci, 0.0, 1.0)

    def pd_at(self, snr_db: float) -> float:
        i = int(np.argmin(np.abs(np.asarray(self.snr_grid_db) - snr_db)))
        return self.pd[i]

    def rows(self) -> list[dict]:
        return [{"snr_db": s, "detector": self.detector, "pd": p, "ci_halfwidth": c,
                 "cos2_theta": self.cos2_theta, "n_trials": self.n_trials, "seed": self.master_seed}
                for s, p, c in zip(self.snr_grid_db, self.pd, self.ci_halfwidth)]


def write_pd_csv(curves: Iterable[PdCurve], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        w.writeheader()
        for c in curves:
            for row in c.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_pd_csv(path: str | Path) -> list[PdCurve]:
    """Inverse of :func:`write_pd_csv` (curves in first-seen detector order)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        grouped: dict[str, list[dict]] = {}
        for row in reader:
            grouped.setdefault(row["detector"], []).append(row)
    curves = []
    for det, rows in grouped.items():
        curves.append(PdCurve(det, [float(r["snr_db"]) for r in rows], [float(r["pd"]) for r in rows],
                              [float(r["ci_halfwidth"]) for r in rows], int(rows[0]["n_trials"]),
                              float(rows[0]["cos2_theta"]), int(rows[0]["seed"])))
    return curves


def _check_record(record: ThresholdRecord, scenario: Scenario) -> None:
    if record.scenario_digest != scenario.h0_digest():
        raise StaleThresholdError(
            f"threshold for {record.detector} was calibrated on scenario "
            f"{record.scenario_digest}, not {scenario.h0_digest()}")


def estimate_pd_many(records: Sequence[ThresholdRecord], scenario: Scenario,
                     snr_grid_db: Sequence[float], n_trials: int, master_seed: int, *,
                     split: str = "equal", covariance=None,
                     workers: int | None = None) -> list[PdCurve]:
    """P_d curves for several detectors on common random numbers."""
    for r in records:
        _check_record(r, scenario)
    detectors = [r.detector_kind for r in records]
    snr_grid_db = [float(s) for s in snr_grid_db]
    stats = h1_statistics(detectors, scenario, snr_grid_db, n_trials, master_seed, split=split,
                          covariance=covariance, workers=workers)
    C = _covariance(scenario, covariance)
    c2 = cos2_theta(scenario.nominal_steering(), scenario.actual_steering(), C)
    curves = []
    for r, d in zip(records, detectors):
        pd = np.mean(stats[d] > r.threshold, axis=1)
        curves.append(PdCurve(r.detector, snr_grid_db, pd.tolist(),
                              binomial_halfwidth(pd, n_trials).tolist(), int(n_trials), c2,
                              int(master_seed), split))
    return curves


def estimate_pd(detector: DetectorKind, scenario: Scenario, threshold: ThresholdRecord,
                snr_grid_db: Sequence[float], n_trials: int, master_seed: int,
                **kwargs) -> PdCurve:
    if threshold.detector_kind != detector:
        raise StaleThresholdError(
            f"threshold belongs to {threshold.detector}, not {detector.label}")
    return estimate_pd_many([threshold], scenario, snr_grid_db, n_trials, master_seed, **kwargs)[0]


# ---------------------------------------------------------------------------
# CFAR


@dataclass(frozen=True)
class CfarReport:
    detector: str
    pfa_target: float
    pfa_empirical: float
    n_trials: int
    std_error: float
    n_sigma: float
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.detector}: pfa={self.pfa_empirical:.5g} target={self.pfa_target:g} "
                f"+/- {self.n_sigma:g}*{self.std_error:.3g} (n={self.n_trials})")


def cfar_check_many(records: Sequence[ThresholdRecord], scenario_a: Scenario, scenario_b: Scenario,
                    n_trials: int, master_seed: int, *, covariance_b=None, n_sigma: float = 3.0,
                    workers: int | None = None) -> list[CfarReport]:
    """Apply thresholds calibrated under A to fresh H0 data drawn under B."""
    if (scenario_a.N, scenario_a.K_P, scenario_a.K_S) != (scenario_b.N, scenario_b.K_P, scenario_b.K_S):
        raise InvalidComparisonError("scenarios must share N, K_P and K_S")
    for r in records:
        _check_record(r, scenario_a)
    detectors = [r.detector_kind for r in records]
    # nominal steering of A: the covariance is the only thing allowed to change
    probe = scenario_b.replace(f_d=scenario_a.f_d)
    stats = h0_statistics(detectors, probe, n_trials, master_seed, stream=STREAM_H0_CHECK,
                          covariance=covariance_b, workers=workers)
    reports = []
    for r, d in zip(records, detectors):
        pfa = float(np.mean(stats[d] > r.threshold))
        se = math.sqrt(r.pfa_target * (1 - r.pfa_target) / n_trials)
        reports.append(CfarReport(r.detector, r.pfa_target, pfa, int(n_trials), se, n_sigma,
                                  abs(pfa - r.pfa_target) <= n_sigma * se))
    return reports


def cfar_check(detector: DetectorKind, scenario_a: Scenario, scenario_b: Scenario,
               threshold_from_a: ThresholdRecord, n_trials: int, master_seed: int,
               **kwargs) -> CfarReport:
    if threshold_from_a.detector_kind != detector:
        raise StaleThresholdError(
            f"threshold belongs to {threshold_from_a.detector}, not {detector.label}")
    return cfar_check_many([threshold_from_a], scenario_a, scenario_b, n_trials, master_seed,
                           **kwargs)[0]


def empirical_pfa(record: ThresholdRecord, scenario: Scenario, n_trials: int, master_seed: int,
                  **kwargs) -> float:
    """Re-measure P_fa on a stream disjoint from calibration."""
    return cfar_check_many([record], scenario, scenario, n_trials, master_seed, **kwargs)[0].pfa_empirical
