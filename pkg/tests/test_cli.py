"""Harness: parameter files, renders, caching, determinism, exit codes."""

import json
import os

import numpy as np
import pytest

from siegelab.cli import (
    EXIT_INCONCLUSIVE,
    EXIT_PASS,
    EXIT_USAGE,
    ResultCache,
    canonical_json,
    main,
    parse_params_text,
    params_digest,
    report_payload,
    run_cache,
    run_experiment,
    run_render,
    xn_star_like_check,
)


class TestParams:
    def test_parse(self):
        p = parse_params_text("a=1\nb=2.5\nc=hello # comment\n\nflag=true\n")
        assert p == {"a": 1, "b": 2.5, "c": "hello", "flag": True}

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_params_text("not a pair\n")

    def test_digest_stable(self):
        d1 = params_digest("op", {"a": 1, "b": 2.0})
        d2 = params_digest("op", {"b": 2.0, "a": 1})
        assert d1 == d2

    def test_canonical_float_format(self):
        s = canonical_json({"x": 0.1 + 0.2})
        assert "0.30000000000000004" in s


class TestRenderDeterminism:
    def test_byte_identical_rerun(self, tmp_path):
        params = {"resolution": 64, "m_max": 300}
        rep1, p5a = run_render("filled-julia", params, tmp_path / "a")
        rep2, p5b = run_render("filled-julia", params, tmp_path / "b")
        assert p5a == p5b
        assert report_payload(rep1) == report_payload(rep2)

    def test_workers_do_not_change_bytes(self, tmp_path):
        params = {"resolution": 64, "m_max": 300}
        _, p5a = run_render("filled-julia", params, tmp_path / "a", workers=1)
        _, p5b = run_render("filled-julia", params, tmp_path / "b", workers=3)
        assert p5a == p5b

    def test_filled_julia_bracket(self, tmp_path):
        # parabolic cauliflower: the budget-sensitive band stays under 5%
        rep, _ = run_render(
            "filled-julia", {"alpha": "0;[]|()", "resolution": 512, "m_max": 1500}, tmp_path
        )
        s = rep["summary"]
        assert s["area_undecided"] < 0.05 * s["area_in"]

    def test_xn_star_like(self, tmp_path):
        rep, _ = run_render("xn", {"resolution": 256, "n": 7, "A_n": 10**10, "rho": 0.9}, tmp_path)
        assert rep["summary"]["star_like"] is True

    def test_k_delta_counts(self, tmp_path):
        rep, _ = run_render(
            "k-delta", {"resolution": 64, "delta": 0.1, "m_max": 200}, tmp_path
        )
        c = rep["summary"]["counts"]
        assert c["in"] + c["out"] + c["undecided"] == 64 * 64

    def test_report_embeds_manifest(self, tmp_path):
        rep, _ = run_render("filled-julia", {"resolution": 64, "m_max": 200}, tmp_path)
        assert rep["manifest"]["experiment"] == "render-filled-julia"
        assert "params_digest" in rep["manifest"]


class TestCache:
    def test_clear_then_stats(self, tmp_path):
        run_render("filled-julia", {"resolution": 64, "m_max": 200}, tmp_path)
        stats = run_cache("stats", tmp_path)
        assert stats["entries"] >= 1
        cleared = run_cache("clear", tmp_path)
        assert cleared["entries"] == 0

    def test_verify_fresh_cache(self, tmp_path):
        run_experiment("xn-density", {"resolution": 128}, tmp_path)
        out = run_cache("verify", tmp_path, sample_frac=1.0)
        assert out["ok"] and out["checked"] >= 1

    def test_entry_keyed_by_digest(self, tmp_path):
        params = {"resolution": 64, "m_max": 200}
        run_render("filled-julia", params, tmp_path)
        key = params_digest("render-filled-julia", params)
        cache = ResultCache(tmp_path / "cache")
        assert cache.get(key) is not None
        assert cache.get(key, ".p5") is not None

    def test_env_cache_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SIEGELAB_CACHE", str(tmp_path / "elsewhere"))
        run_render("filled-julia", {"resolution": 64, "m_max": 200}, tmp_path)
        assert (tmp_path / "elsewhere").exists()


class TestMainEntry:
    def test_experiment_exit_pass(self, tmp_path, capsys):
        rc = main(
            ["experiment", "xn-density", "--out", str(tmp_path), "--set", "resolution=128"]
        )
        assert rc == EXIT_PASS
        out = capsys.readouterr().out
        rep = json.loads(out)
        assert rep["report"]["verdict"] == "pass"

    def test_experiment_exit_fail(self, tmp_path):
        rc = main(
            [
                "experiment",
                "xn-density",
                "--out",
                str(tmp_path),
                "--set",
                "resolution=128",
                "--set",
                "threshold=0.99",
            ]
        )
        assert rc == 1

    def test_usage_errors(self):
        assert main([]) == EXIT_USAGE
        assert main(["experiment", "no-such-thing"]) == EXIT_USAGE

    def test_params_file(self, tmp_path, capsys):
        f = tmp_path / "p.cfg"
        f.write_text("resolution=128\nrho=0.9\n")
        rc = main(["experiment", "xn-density", "--params", str(f), "--out", str(tmp_path)])
        assert rc == EXIT_PASS

    def test_cache_command(self, tmp_path, capsys):
        assert main(["cache", "stats", "--out", str(tmp_path)]) == EXIT_PASS

    def test_render_command(self, tmp_path):
        rc = main(
            ["render", "filled-julia", "--out", str(tmp_path), "--set", "resolution=64", "--set", "m_max=200"]
        )
        assert rc == EXIT_PASS
        assert (tmp_path / "filled-julia.p5").exists()
        assert (tmp_path / "filled-julia.json").exists()


class TestSemicontinuityExperiment:
    def test_identical_angle_trivially_passes(self, tmp_path):
        # identity perturbation: A_n equals the base entry, same angle
        rep = run_experiment(
            "semicontinuity",
            {"ns": "4", "A_n": 1, "resolution": 128, "m_max": 400},
            tmp_path,
        )
        assert rep["report"]["verdict"] == "pass"
        assert rep["report"]["runs"][0]["area"] <= rep["report"]["runs"][0]["bound"]
