import json
import subprocess
import sys

import pytest

from rsdetect import cli
from rsdetect.cli import EXIT_CONFIG, EXIT_OK, EXIT_STALE, RunConfig, build_parser, config_from_args, main
from rsdetect.detectors import GAMF, GLRT_H, all_detectors
from rsdetect.errors import ConfigError
from rsdetect.montecarlo import load_thresholds, read_pd_csv

SMALL = ["--n", "4", "--kp", "2", "--ks", "8"]


def _cfg(argv):
    return config_from_args(build_parser().parse_args(argv))


class TestConfig:
    def test_defaults(self):
        cfg = _cfg(["compare"])
        assert cfg.scenario.N == 16 and cfg.scenario.K_P == 4 and cfg.scenario.K_S == 32
        assert cfg.pfa == 1e-3 and cfg.trials_h0 == 100_000 and cfg.trials_h1 == 1000
        assert cfg.grid()[0] == 5 and cfg.grid()[-1] == 30
        assert [d.label for d in cfg.detector_list()] == [d.label for d in all_detectors(0.2)]

    def test_mismatched_default_grid(self):
        cfg = _cfg(["pd-curve", "--delta", "0.4"])
        assert cfg.grid()[0] == 10 and cfg.grid()[-1] == 35 and len(cfg.grid()) == 26

    def test_precedence(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"pfa": 0.01, "seed": 5, "scenario": {"N": 8, "K_S": 20},
                                    "snr_grid": [0, 10, 5], "detectors": ["gamf"]}))
        cfg = _cfg(["pd-curve", "--config", str(path), "--seed", "9", "--ks", "24"])
        assert cfg.pfa == 0.01            # config over default
        assert cfg.seed == 9              # flag over config
        assert cfg.scenario.N == 8 and cfg.scenario.K_S == 24
        assert list(cfg.grid()) == [0, 5, 10]
        assert cfg.detectors == [GAMF]

    def test_full_scale(self):
        cfg = _cfg(["calibrate", "--full-scale"])
        assert cfg.pfa == 1e-4 and cfg.trials_h0 == 1_000_000
        assert _cfg(["calibrate", "--full-scale", "--pfa", "1e-3"]).pfa == 1e-3

    def test_repeatable_detector(self):
        cfg = _cfg(["calibrate", "--detector", "glrt-h", "--detector", "parametric:0.5"])
        assert [d.label for d in cfg.detectors] == ["glrt-h", "parametric:0.5"]

    @pytest.mark.parametrize("kw", [dict(pfa=0.7), dict(snr_grid=(0, 1, 0)), dict(epsilon=-1),
                                    dict(against="other")])
    def test_invalid_runconfig(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(command="calibrate", **kw)

    @pytest.mark.parametrize("argv", [
        ["calibrate", "--pfa", "0.7"],
        ["calibrate", "--ks", "3"],
        ["calibrate", "--detector", "kelly"],
        ["calibrate", "--snr", "1:2"],
    ])
    def test_invalid_exit_code(self, argv, tmp_path):
        assert main(argv + ["--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"bogus": 1}))
        assert main(["calibrate", "--config", str(path)]) == EXIT_CONFIG


class TestCommands:
    def test_calibrate_byte_identical(self, tmp_path):
        args = ["calibrate", *SMALL, "--pfa", "0.05", "--trials-h0", "2000", "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a.json")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "b.json")]) == EXIT_OK
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert len(load_thresholds(tmp_path / "a.json")) == 5

    def test_budget_needs_allow_short(self, tmp_path):
        args = ["calibrate", *SMALL, "--pfa", "0.05", "--trials-h0", "1000", "--out", str(tmp_path / "t.json")]
        assert main(args) == EXIT_CONFIG
        assert main(args + ["--allow-short"]) == EXIT_OK

    def test_stale_threshold(self, tmp_path):
        thr = tmp_path / "t.json"
        main(["calibrate", *SMALL, "--pfa", "0.05", "--trials-h0", "2000", "--out", str(thr)])
        code = main(["pd-curve", "--n", "4", "--kp", "2", "--ks", "9", "--thresholds", str(thr),
                     "--snr", "10", "--trials-h1", "50", "--out", str(tmp_path / "pd.csv")])
        assert code == EXIT_STALE

    def test_missing_detector_is_stale(self, tmp_path):
        thr = tmp_path / "t.json"
        main(["calibrate", *SMALL, "--pfa", "0.05", "--trials-h0", "2000", "--detector", "gamf",
              "--out", str(thr)])
        code = main(["pd-curve", *SMALL, "--thresholds", str(thr), "--detector", "glrt",
                     "--snr", "10", "--trials-h1", "50", "--out", str(tmp_path / "pd.csv")])
        assert code == EXIT_STALE

    def test_pd_curve_reuses_thresholds(self, tmp_path):
        thr, out = tmp_path / "t.json", tmp_path / "pd.csv"
        main(["calibrate", *SMALL, "--pfa", "0.05", "--trials-h0", "2000", "--out", str(thr)])
        code = main(["pd-curve", *SMALL, "--delta", "0.3", "--thresholds", str(thr), "--snr", "0:10:5",
                     "--trials-h1", "100", "--out", str(out)])
        assert code == EXIT_OK
        curves = read_pd_csv(out)
        assert len(curves) == 5 and all(c.snr_grid_db == [0.0, 5.0, 10.0] for c in curves)

    def test_pd_curve_saturates(self, tmp_path):
        out = tmp_path / "pd.csv"
        code = main(["pd-curve", "--pfa", "0.01", "--trials-h0", "10000", "--snr", "40",
                     "--trials-h1", "500", "--out", str(out)])
        assert code == EXIT_OK
        assert all(c.pd[0] >= 1 - 1 / 500 for c in read_pd_csv(out))

    def test_compare(self, tmp_path):
        out = tmp_path / "cmp.csv"
        code = main(["compare", *SMALL, "--pfa", "0.05", "--trials-h0", "2000", "--snr", "0:20:5",
                     "--trials-h1", "200", "--out", str(out)])
        assert code == EXIT_OK
        assert {c.detector for c in read_pd_csv(out)} == {d.label for d in all_detectors(0.2)}
        summary = out.with_suffix(".txt").read_text()
        assert "reference SNR" in summary and "cos2_theta" in summary

    @pytest.mark.parametrize("against", ["identity", "random"])
    def test_cfar_check(self, tmp_path, against):
        out = tmp_path / "cfar.txt"
        code = main(["cfar-check", *SMALL, "--pfa", "0.05", "--trials-h0", "20000",
                     "--detector", "glrt", "--detector", "glrt-h", "--against", against,
                     "--seed", "1", "--out", str(out)])
        text = out.read_text()
        assert code == EXIT_OK, text
        assert text.count("PASS") == 2

    def test_verify_oracles(self, tmp_path):
        out = tmp_path / "o.jsonl"
        assert main(["verify-oracles", "--oracle-instances", "3", "--out", str(out)]) == EXIT_OK
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert {r["check"] for r in rows} >= {"m_min_forms", "m_min_brute_force", "alpha_hat_distance",
                                             "nu_vs_grid", "g_slope"}
        assert all(r["passed"] for r in rows)

    def test_ordering_summary_no_crossing(self):
        from rsdetect.montecarlo import PdCurve
        curves = [PdCurve("glrt", [0.0], [0.1], [0.01], 10, 1.0)]
        assert "no detector" in cli.ordering_summary(curves)


def test_module_entry_point(tmp_path):
    out = tmp_path / "t.json"
    res = subprocess.run([sys.executable, "-m", "rsdetect", "calibrate", *SMALL, "--pfa", "0.05",
                          "--trials-h0", "2000", "--detector", GLRT_H.label, "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert load_thresholds(out)[0].detector == "glrt-h"
