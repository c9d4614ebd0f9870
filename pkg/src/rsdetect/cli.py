"""Command-line entry point: ``rsdetect <command> [flags]``.

Precedence is built-in defaults, then ``--config`` JSON, then flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from . import oracle
from .detectors import DetectorKind, all_detectors, nu_hat
from .errors import ConfigError, DetectionError, InvalidInputError, StaleThresholdError
from .linalg import EigenSpectrum
from .scenario import Scenario

log = logging.getLogger("rsdetect")

COMMANDS = ("calibrate", "pd-curve", "cfar-check", "compare", "verify-oracles")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_STALE = 3
EXIT_ORACLE = 4
EXIT_CFAR = 5

DEFAULT_OUT = {
    "calibrate": "thresholds.json",
    "pd-curve": "pd_curve.csv",
    "compare": "compare.csv",
    "cfar-check": "cfar_report.txt",
    "verify-oracles": "oracles.jsonl",
}


@dataclass
class RunConfig:
    command: str
    scenario: Scenario = field(default_factory=Scenario)
    detectors: list[DetectorKind] = field(default_factory=list)
    epsilon: float = 0.2
    pfa: float = 1e-3
    trials_h0: int = 100_000
    trials_h1: int = 1000
    snr_grid: tuple[float, float, float] | None = None
    seed: int = 0
    out_path: str | None = None
    threshold_path: str | None = None
    against: str = "identity"
    oracle_instances: int = 200
    allow_short: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0 < self.pfa < 0.5:
            raise ConfigError(f"pfa must lie in (0, 0.5), got {self.pfa}")
        if self.snr_grid is not None and not self.snr_grid[2] > 0:
            raise ConfigError("SNR grid step must be positive")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.against not in ("identity", "random"):
            raise ConfigError(f"--against must be identity or random, got {self.against!r}")

    def grid(self) -> np.ndarray:
        start, stop, step = self.snr_grid or (
            (5.0, 30.0, 1.0) if self.scenario.delta == 0 else (10.0, 35.0, 1.0))
        return np.round(np.arange(start, stop + step / 2, step), 10)

    def detector_list(self) -> list[DetectorKind]:
        return list(self.detectors) or all_detectors(self.epsilon)

    def output(self) -> Path:
        return Path(self.out_path or DEFAULT_OUT[self.command])


def parse_snr(text) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        parts = [float(x) for x in text]
    else:
        parts = [float(x) for x in str(text).split(":")]
    if len(parts) == 1:
        parts = [parts[0], parts[0], 1.0]
    if len(parts) != 3:
        raise ConfigError(f"SNR grid must be start:stop:step, got {text!r}")
    return parts[0], parts[1], parts[2]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsdetect", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file mirroring RunConfig")
    g = p.add_argument_group("scenario")
    g.add_argument("--n", type=int, dest="N")
    g.add_argument("--kp", type=int, dest="K_P")
    g.add_argument("--ks", type=int, dest="K_S")
    g.add_argument("--sigma-f", type=float, dest="sigma_f")
    g.add_argument("--noise-db", type=float, dest="noise_db_below_clutter")
    g.add_argument("--fd", type=float, dest="f_d")
    g.add_argument("--delta", type=float)
    r = p.add_argument_group("run")
    r.add_argument("--detector", action="append", dest="detectors",
                   help="glrt, parametric:EPS, glrt-h, gamf or gasd (repeatable)")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--pfa", type=float)
    r.add_argument("--trials-h0", type=int)
    r.add_argument("--trials-h1", type=int)
    r.add_argument("--snr", help="start:stop:step in dB (stop inclusive)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", dest="out_path")
    r.add_argument("--thresholds", dest="threshold_path")
    r.add_argument("--against", choices=("identity", "random"),
                   help="cfar-check: covariance B used against the clutter covariance")
    r.add_argument("--oracle-instances", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--allow-short", action="store_true", default=None,
                   help="allow fewer than 100/pfa calibration trials")
    r.add_argument("--full-scale", action="store_true",
                   help="pfa 1e-4 with 1e6 calibration trials")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


SCENARIO_FLAGS = ("N", "K_P", "K_S", "sigma_f", "noise_db_below_clutter", "f_d", "delta")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if args.config:
        try:
            merged = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        merged.pop("command", None)
    scen = dict(merged.pop("scenario", {}) or {})
    for key in SCENARIO_FLAGS:
        val = getattr(args, key)
        if val is not None:
            scen[key] = val
    if args.full_scale:
        merged.update(pfa=1e-4, trials_h0=1_000_000)
    for key in ("epsilon", "pfa", "trials_h0", "trials_h1", "seed", "out_path", "threshold_path",
                "against", "oracle_instances", "allow_short", "workers"):
        val = getattr(args, key)
        if val is not None:
            merged[key] = val
    if args.snr is not None:
        merged["snr_grid"] = args.snr
    if args.detectors is not None:
        merged["detectors"] = args.detectors

    unknown = set(merged) - {f for f in RunConfig.__dataclass_fields__}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "snr_grid" in merged and merged["snr_grid"] is not None:
        merged["snr_grid"] = parse_snr(merged["snr_grid"])
    try:
        merged["detectors"] = [DetectorKind.parse(d) if isinstance(d, str) else d
                               for d in merged.get("detectors", [])]
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(command=args.command, scenario=Scenario.from_dict(scen), **merged)


# ---------------------------------------------------------------------------
# commands


def _thresholds(cfg: RunConfig, detectors, scenario: Scenario) -> list[mc.ThresholdRecord]:
    if cfg.threshold_path:
        by_label = {r.detector: r for r in mc.load_thresholds(cfg.threshold_path)}
        missing = [d.label for d in detectors if d.label not in by_label]
        if missing:
            raise StaleThresholdError(f"{cfg.threshold_path} has no threshold for {missing}")
        records = [by_label[d.label] for d in detectors]
        digest = scenario.h0_digest()
        for r in records:
            if r.scenario_digest != digest:
                raise StaleThresholdError(
                    f"threshold for {r.detector} is for scenario {r.scenario_digest}, "
                    f"current scenario is {digest}")
        return records
    log.info("calibrating %d detectors with %d H0 trials", len(detectors), cfg.trials_h0)
    return mc.calibrate_thresholds(detectors, scenario, cfg.pfa, cfg.trials_h0, cfg.seed,
                                   allow_short=cfg.allow_short, workers=cfg.workers)


def _cmd_calibrate(cfg: RunConfig) -> int:
    records = mc.calibrate_thresholds(cfg.detector_list(), cfg.scenario, cfg.pfa, cfg.trials_h0,
                                      cfg.seed, allow_short=cfg.allow_short, workers=cfg.workers)
    mc.save_thresholds(records, cfg.output())
    for r in records:
        print(f"{r.detector:>16}  threshold={r.threshold:.6g}  (log domain)")
    return EXIT_OK


def _pd_curves(cfg: RunConfig, detectors) -> list[mc.PdCurve]:
    records = _thresholds(cfg, detectors, cfg.scenario)
    return mc.estimate_pd_many(records, cfg.scenario, cfg.grid(), cfg.trials_h1, cfg.seed + 1,
                               workers=cfg.workers)


def _cmd_pd_curve(cfg: RunConfig) -> int:
    curves = _pd_curves(cfg, cfg.detector_list())
    mc.write_pd_csv(curves, cfg.output())
    print(f"wrote {cfg.output()}")
    return EXIT_OK


def ordering_summary(curves: list[mc.PdCurve], level: float = 0.9) -> str:
    """Pairwise P_d orderings at the first SNR where any detector exceeds ``level``."""
    pd = np.array([c.pd for c in curves])
    snr = curves[0].snr_grid_db
    hits = np.flatnonzero(pd.max(axis=0) > level)
    if hits.size == 0:
        return f"no detector exceeds P_d = {level} on the grid\n"
    j = int(hits[0])
    lines = [f"reference SNR {snr[j]:g} dB (first point where the best detector exceeds P_d = {level})",
             f"cos2_theta = {curves[0].cos2_theta:.4f}"]
    order = sorted(range(len(curves)), key=lambda i: -pd[i, j])
    for i in order:
        lines.append(f"  {curves[i].detector:>16}  P_d = {pd[i, j]:.4f}")
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            i, k = order[a], order[b]
            rel = ">" if pd[i, j] > pd[k, j] else "="
            lines.append(f"  {curves[i].detector} {rel} {curves[k].detector}  "
                         f"(delta P_d = {pd[i, j] - pd[k, j]:+.4f})")
    return "\n".join(lines) + "\n"


def _cmd_compare(cfg: RunConfig) -> int:
    curves = _pd_curves(cfg, all_detectors(cfg.epsilon))
    out = cfg.output()
    mc.write_pd_csv(curves, out)
    summary = ordering_summary(curves)
    out.with_suffix(".txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


def _cmd_cfar_check(cfg: RunConfig) -> int:
    scen = cfg.scenario
    detectors = cfg.detector_list()
    records = _thresholds(cfg, detectors, scen)
    if cfg.against == "identity":
        cov_b = np.eye(scen.N, dtype=complex)
    else:
        rng = np.random.default_rng(cfg.seed + 7)
        B = rng.standard_normal((scen.N, scen.N)) + 1j * rng.standard_normal((scen.N, scen.N))
        B += 2 * np.sqrt(scen.N) * np.eye(scen.N)
        cov_b = B @ scen.covariance() @ B.conj().T
    reports = mc.cfar_check_many(records, scen, scen, cfg.trials_h0, cfg.seed + 2,
                                 covariance_b=cov_b, workers=cfg.workers)
    text = f"covariance B: {cfg.against}\n" + "\n".join(r.line() for r in reports) + "\n"
    cfg.output().write_text(text)
    print(text, end="")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CFAR


def _nu_fn(lam, m_eff):
    est = nu_hat(EigenSpectrum.from_values(lam), m_eff)
    return est.value, est.residual


def _cmd_verify_oracles(cfg: RunConfig) -> int:
    n = cfg.oracle_instances
    failed = 0
    with open(cfg.output(), "w") as fh:
        for suite in (oracle.alpha_suite(n, cfg.seed), oracle.nu_suite(_nu_fn, n, cfg.seed)):
            for rep in suite:
                fh.write(rep.to_json() + "\n")
                failed += not rep.passed
    print(f"oracle reports written to {cfg.output()}; {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_ORACLE


HANDLERS = {
    "calibrate": _cmd_calibrate,
    "pd-curve": _cmd_pd_curve,
    "compare": _cmd_compare,
    "cfar-check": _cmd_cfar_check,
    "verify-oracles": _cmd_verify_oracles,
}


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        return HANDLERS[config.command](config)
    except StaleThresholdError as exc:
        print(f"stale threshold: {exc}", file=sys.stderr)
        return EXIT_STALE
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DetectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, InvalidInputError, TypeError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
